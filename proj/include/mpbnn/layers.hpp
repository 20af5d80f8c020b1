#pragma once

#include <Eigen/Dense>
#include <vector>

#include "mpbnn/moments.hpp"

namespace mpbnn {

/// One variational weight: posterior N(mu, sigma^2) with
/// sigma = softplus(rho), so sigma > 0 for every finite rho.
struct GaussianParameter {
  double mu = 0.0;
  double rho = -5.0;

  double sigma() const;
  double variance() const;
};

double softplus(double x);
/// d softplus / dx = logistic(x).
double logistic(double x);

/// Fully connected layer over [batch, in_features] moment tensors.
/// Weights are row-major [out_features, in_features].
struct LinearLayer {
  Eigen::Index in_features = 0;
  Eigen::Index out_features = 0;
  std::vector<GaussianParameter> weights;
  std::vector<GaussianParameter> biases;

  static LinearLayer make(Eigen::Index in_features, Eigen::Index out_features);
  void validate() const;

  /// Posterior means / variances of the weight matrix as dense Eigen
  /// matrices [out, in]; biases as vectors [out].
  Eigen::MatrixXd weight_mean() const;
  Eigen::MatrixXd weight_var() const;
  Eigen::VectorXd bias_mean() const;
  Eigen::VectorXd bias_var() const;
};

/// 2-D convolution over [batch, in_channels, H, W]. Zero padding,
/// cross-correlation orientation by default (flip_kernel for the
/// flipped convention). Weights row-major [out_c, in_c, kh, kw].
struct Conv2dLayer {
  Eigen::Index in_channels = 0;
  Eigen::Index out_channels = 0;
  Eigen::Index kernel_height = 0;
  Eigen::Index kernel_width = 0;
  Eigen::Index stride = 1;
  Eigen::Index padding = 0;
  bool flip_kernel = false;
  std::vector<GaussianParameter> weights;
  std::vector<GaussianParameter> biases;

  static Conv2dLayer make(Eigen::Index in_channels, Eigen::Index out_channels,
                          Eigen::Index kernel_height, Eigen::Index kernel_width,
                          Eigen::Index stride = 1, Eigen::Index padding = 0);
  void validate() const;
};

struct LeakyReluLayer {
  double slope = 0.1;
};

/// Padding-free average pooling; spatial dims must divide evenly.
struct AvgPool2dLayer {
  Eigen::Index pool_height = 0;
  Eigen::Index pool_width = 0;
};

MomentTensor linear_forward(const LinearLayer& layer,
                            const MomentTensor& input);
MomentTensor conv2d_forward(const Conv2dLayer& layer,
                            const MomentTensor& input);
MomentTensor avgpool2d_forward(const AvgPool2dLayer& layer,
                               const MomentTensor& input);
MomentTensor leaky_relu_forward(const LeakyReluLayer& layer,
                                const MomentTensor& input);

/// Input variances below this threshold take the deterministic scalar
/// branch of the leaky-ReLU (the truncated-normal rule divides by sqrt(V)).
inline constexpr double kDegenerateVariance = 1e-12;

/// Scalar leaky-ReLU moment rule (law of total expectation / variance
/// over the two branches, truncated-normal conditionals).
std::pair<double, double> leaky_relu_moments(double mean, double var,
                                             double slope);

}  // namespace mpbnn
