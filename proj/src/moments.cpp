#include "mpbnn/moments.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "mpbnn/errors.hpp"

namespace mpbnn {

namespace {

Eigen::Index shape_size(const std::vector<Eigen::Index>& shape) {
  if (shape.empty()) return 0;
  Eigen::Index n = 1;
  for (Eigen::Index d : shape) n *= d;
  return n;
}

}  // namespace

MomentTensor MomentTensor::zeros(std::vector<Eigen::Index> shape) {
  const Eigen::Index n = shape_size(shape);
  return MomentTensor{std::move(shape), Eigen::ArrayXd::Zero(n),
                      Eigen::ArrayXd::Zero(n)};
}

MomentTensor MomentTensor::deterministic(std::vector<Eigen::Index> shape,
                                         Eigen::ArrayXd mean) {
  const Eigen::Index n = shape_size(shape);
  if (mean.size() != n)
    throw ShapeError("MomentTensor: mean size does not match shape");
  return MomentTensor{std::move(shape), std::move(mean),
                      Eigen::ArrayXd::Zero(n)};
}

Eigen::Index MomentTensor::size() const { return shape_size(shape); }

void MomentTensor::validate() const {
  const Eigen::Index n = size();
  if (mean.size() != n || var.size() != n)
    throw ShapeError("MomentTensor: array sizes do not match shape");
  if (!mean.isFinite().all() || !var.isFinite().all())
    throw DomainError("MomentTensor: non-finite element");
  if ((var < 0.0).any())
    throw DomainError("MomentTensor: negative variance element");
}

std::pair<double, double> product_moments(double mean_x, double var_x,
                                          double mean_y, double var_y) {
  if (var_x < 0.0) throw DomainError("product_moments: var_x is negative");
  if (var_y < 0.0) throw DomainError("product_moments: var_y is negative");
  const double mean = mean_x * mean_y;
  // grouped so the result is bit-identical under argument swap
  const double var =
      var_x * var_y + (var_x * (mean_y * mean_y) + var_y * (mean_x * mean_x));
  return {mean, var};
}

TruncatedNormalStats truncated_stats(double mean, double var) {
  if (!(var > 0.0)) throw DomainError("truncated_stats: var must be > 0");

  const double sd = std::sqrt(var);
  const double alpha = std::clamp(-mean / sd, -3.0, 3.0);

  // Standard normal CDF/pdf at the clamped point.
  const double phi_cdf = 0.5 * std::erfc(-alpha * std::numbers::sqrt2 / 2.0);
  const double phi_pdf =
      std::exp(-0.5 * alpha * alpha) * std::numbers::inv_sqrtpi / std::numbers::sqrt2;

  const double p_below = phi_cdf;
  const double p_above = 1.0 - phi_cdf;

  // Hazard ratios for the two one-sided truncations. The clamp keeps both
  // denominators bounded away from zero (>= Phi(-3) ~ 1.35e-3).
  const double r_below = phi_pdf / p_below;
  const double r_above = phi_pdf / p_above;

  TruncatedNormalStats s;
  s.alpha = alpha;
  s.prob_below = p_below;
  s.prob_above = p_above;
  s.mean_below = mean - sd * r_below;
  s.mean_above = mean + sd * r_above;
  s.var_below = var * (1.0 - alpha * r_below - r_below * r_below);
  s.var_above = var * (1.0 + alpha * r_above - r_above * r_above);
  s.var_below = std::max(s.var_below, 0.0);
  s.var_above = std::max(s.var_above, 0.0);
  return s;
}

}  // namespace mpbnn
