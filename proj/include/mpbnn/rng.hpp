#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <random>
#include <string_view>

namespace mpbnn {

/// Seedable random stream with explicit splitting.
///
/// Streams form a tree: child(label) derives an independent stream whose
/// key depends only on the root seed and the path of labels, so any
/// consumer can reconstruct its stream from (seed, path) alone. Draws are
/// bit-reproducible across runs.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  RngStream child(std::string_view label) const;
  RngStream child(std::uint64_t index) const;

  std::uint64_t key() const { return key_; }

  /// Uniform double in [0, 1).
  double uniform01();
  double uniform(double lo, double hi);

  /// Standard normal draw (Box-Muller, cached pair).
  double normal();
  Eigen::ArrayXd normal_array(Eigen::Index n);

 private:
  RngStream(std::uint64_t key, int);  // from derived key

  std::uint64_t key_;
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace mpbnn
