#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "mpbnn/layers.hpp"
#include "mpbnn/objective.hpp"
#include "mpbnn/rng.hpp"
#include "mpbnn/variational.hpp"

namespace mpbnn {

enum class HeadMode { Embedded, SplitHead };

std::string to_string(HeadMode mode);
HeadMode head_mode_from_string(const std::string& name);

/// Layer sequence for the regression networks: input -> hidden sizes with
/// leaky-ReLU between -> output head. Embedded emits one node whose
/// propagated variance is the total predictive variance; SplitHead emits
/// two nodes (mean head and aleatoric-variance head).
struct Architecture {
  std::vector<int> hidden_sizes;
  double slope = 0.1;
  HeadMode head_mode = HeadMode::Embedded;
  int input_dim = 1;
  int output_dim = 1;

  void validate() const;
  /// Output nodes of the final linear layer (2x output_dim for SplitHead).
  int head_width() const;
};

/// Heteroscedastic polynomial data y = x + eps(x) + 1,
/// eps(x) ~ N(0, [0.1 + 0.2 sin(2 pi x - pi/2)]^2 * noise_scale^2).
struct PolyDataConfig {
  double x_low = -0.5;
  double x_high = 0.5;
  double noise_scale = 1.0;  // test hook; 1 reproduces the data model

  void validate() const;
};

double noise_sigma_squared(double x);

std::pair<Eigen::VectorXd, Eigen::VectorXd> generate_batch(
    const PolyDataConfig& config, int n, RngStream& rng);

/// A built network: owning layers plus the architecture that produced
/// them. Copyable; the parameter store is a view constructed on demand.
struct Network {
  Architecture arch;
  std::vector<LinearLayer> linears;
  LeakyReluLayer activation;
};

/// Stable flat view over all parameters of `net` (layer order, weights
/// row-major then biases).
ParameterStore parameter_store(Network& net);

Network build_network(const Architecture& arch);
Network build_network(const Architecture& arch, const InitConfig& init,
                      RngStream& rng);

/// Learnable real count: 2 (mu, rho) per Gaussian parameter.
long count_parameters(const Architecture& arch);

/// Moment propagation through all layers; result is [batch, head_width].
MomentTensor forward_moments(const Network& net, const Eigen::VectorXd& x);

/// Head reduction on top of forward_moments. Embedded: total variance is
/// the propagated output variance plus the floor. SplitHead: aleatoric
/// variance is softplus of the variance head's mean (plus the floor, so
/// the exact-sum invariant and the floor bound both hold); the variance
/// head's own propagated variance is discarded.
PredictiveDistribution predict(const Network& net, const Eigen::VectorXd& x);

}  // namespace mpbnn
