#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

namespace mpbnn {

/// Per-element mean/variance pair flowing between layers.
///
/// Elements are treated as mutually independent; no covariance is tracked.
/// The leading dimension of `shape` is the batch axis.
struct MomentTensor {
  std::vector<Eigen::Index> shape;
  Eigen::ArrayXd mean;  // flat, row-major over `shape`
  Eigen::ArrayXd var;   // same layout, elementwise >= 0

  static MomentTensor zeros(std::vector<Eigen::Index> shape);
  /// Deterministic input: given means, zero variance.
  static MomentTensor deterministic(std::vector<Eigen::Index> shape,
                                    Eigen::ArrayXd mean);

  Eigen::Index size() const;
  /// Throws ShapeError / DomainError on malformed shape, negative variance,
  /// or non-finite entries.
  void validate() const;
};

/// Conditional statistics of a normal split at zero.
///
/// alpha = -mean/sqrt(var), clamped to [-3, 3] before every downstream
/// evaluation. prob_below = P(a < 0) at the clamped alpha.
struct TruncatedNormalStats {
  double alpha;
  double prob_below;
  double prob_above;
  double mean_below;
  double mean_above;
  double var_below;
  double var_above;
};

/// Moments of a product of two independent random variables.
/// mean = E[X]E[Y]; var = V[X]V[Y] + V[X]E[Y]^2 + E[X]^2 V[Y].
std::pair<double, double> product_moments(double mean_x, double var_x,
                                          double mean_y, double var_y);

/// Truncated-normal statistics for N(mean, var) split at zero. var must be
/// strictly positive; callers handle the degenerate case.
TruncatedNormalStats truncated_stats(double mean, double var);

}  // namespace mpbnn
