#include "mpbnn/rng.hpp"

#include <cmath>
#include <numbers>

namespace mpbnn {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed)
    : key_(splitmix64(seed)), gen_(key_) {}

RngStream::RngStream(std::uint64_t key, int) : key_(key), gen_(key) {}

RngStream RngStream::child(std::string_view label) const {
  return RngStream(splitmix64(key_ ^ fnv1a(label)), 0);
}

RngStream RngStream::child(std::uint64_t index) const {
  return RngStream(splitmix64(key_ ^ splitmix64(index + 1)), 0);
}

double RngStream::uniform01() {
  // 53-bit mantissa, uniform in [0, 1)
  return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) {
  return lo + (hi - lo) * uniform01();
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1 = uniform01();
  while (u1 <= 0.0) u1 = uniform01();
  const double u2 = uniform01();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double t = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(t);
  has_spare_ = true;
  return r * std::cos(t);
}

Eigen::ArrayXd RngStream::normal_array(Eigen::Index n) {
  Eigen::ArrayXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) out[i] = normal();
  return out;
}

}  // namespace mpbnn
