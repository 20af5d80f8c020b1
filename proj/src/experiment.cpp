#include "mpbnn/experiment.hpp"

#include <cmath>
#include <numbers>

#include "mpbnn/errors.hpp"

namespace mpbnn {

std::string to_string(HeadMode mode) {
  return mode == HeadMode::Embedded ? "embedded" : "split_head";
}

HeadMode head_mode_from_string(const std::string& name) {
  if (name == "embedded") return HeadMode::Embedded;
  if (name == "split_head") return HeadMode::SplitHead;
  throw ConfigError("unknown head mode: '" + name +
                    "' (expected 'embedded' or 'split_head')");
}

void Architecture::validate() const {
  if (input_dim <= 0 || output_dim <= 0)
    throw ConfigError("Architecture: input/output dims must be positive");
  for (int h : hidden_sizes)
    if (h <= 0) throw ConfigError("Architecture: hidden sizes must be positive");
  if (slope < 0.0 || slope > 1.0)
    throw ConfigError("Architecture: slope must lie in [0, 1]");
}

int Architecture::head_width() const {
  return head_mode == HeadMode::SplitHead ? 2 * output_dim : output_dim;
}

void PolyDataConfig::validate() const {
  if (!(x_low < x_high)) throw ConfigError("PolyDataConfig: x_low >= x_high");
  if (noise_scale < 0.0)
    throw ConfigError("PolyDataConfig: noise_scale must be non-negative");
}

double noise_sigma_squared(double x) {
  const double s =
      0.1 + 0.2 * std::sin(2.0 * std::numbers::pi * x - std::numbers::pi / 2.0);
  return s * s;
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> generate_batch(
    const PolyDataConfig& config, int n, RngStream& rng) {
  config.validate();
  if (n < 0) throw DomainError("generate_batch: n must be non-negative");
  Eigen::VectorXd x(n), y(n);
  for (int i = 0; i < n; ++i) {
    x[i] = rng.uniform(config.x_low, config.x_high);
    const double sd = config.noise_scale * std::sqrt(noise_sigma_squared(x[i]));
    y[i] = x[i] + 1.0 + sd * rng.normal();
  }
  return {x, y};
}

ParameterStore parameter_store(Network& net) {
  std::vector<GaussianParameter*> slots;
  for (LinearLayer& layer : net.linears) {
    for (GaussianParameter& p : layer.weights) slots.push_back(&p);
    for (GaussianParameter& p : layer.biases) slots.push_back(&p);
  }
  return ParameterStore(std::move(slots));
}

Network build_network(const Architecture& arch) {
  arch.validate();
  Network net;
  net.arch = arch;
  net.activation.slope = arch.slope;
  Eigen::Index in = arch.input_dim;
  for (int h : arch.hidden_sizes) {
    net.linears.push_back(LinearLayer::make(in, h));
    in = h;
  }
  net.linears.push_back(LinearLayer::make(in, arch.head_width()));
  return net;
}

Network build_network(const Architecture& arch, const InitConfig& init,
                      RngStream& rng) {
  Network net = build_network(arch);
  ParameterStore store = parameter_store(net);
  initialize(store, init, rng);
  return net;
}

long count_parameters(const Architecture& arch) {
  arch.validate();
  long gaussians = 0;
  long in = arch.input_dim;
  for (int h : arch.hidden_sizes) {
    gaussians += in * h + h;
    in = h;
  }
  gaussians += in * arch.head_width() + arch.head_width();
  return 2 * gaussians;  // mu and rho per Gaussian parameter
}

MomentTensor forward_moments(const Network& net, const Eigen::VectorXd& x) {
  const Eigen::Index batch = x.size();
  MomentTensor a = MomentTensor::deterministic(
      {batch, net.arch.input_dim},
      Eigen::Map<const Eigen::ArrayXd>(x.data(), x.size()));
  for (std::size_t i = 0; i < net.linears.size(); ++i) {
    a = linear_forward(net.linears[i], a);
    if (i + 1 < net.linears.size())
      a = leaky_relu_forward(net.activation, a);
  }
  return a;
}

PredictiveDistribution predict(const Network& net, const Eigen::VectorXd& x) {
  if (net.arch.output_dim != 1)
    throw ConfigError("predict: scalar regression heads only (output_dim = 1)");
  const MomentTensor out = forward_moments(net, x);
  const Eigen::Index batch = x.size();
  PredictiveDistribution pred;
  if (net.arch.head_mode == HeadMode::Embedded) {
    pred.mean.resize(batch);
    pred.var_total.resize(batch);
    const Eigen::Index width = net.arch.output_dim;
    for (Eigen::Index b = 0; b < batch; ++b) {
      pred.mean[b] = out.mean[b * width];
      pred.var_total[b] = out.var[b * width] + kVarianceFloor;
    }
  } else {
    const Eigen::Index width = 2 * net.arch.output_dim;
    pred.mean.resize(batch);
    pred.var_total.resize(batch);
    pred.var_aleatoric = Eigen::VectorXd(batch);
    pred.var_epistemic = Eigen::VectorXd(batch);
    for (Eigen::Index b = 0; b < batch; ++b) {
      const double mean_head = out.mean[b * width];
      const double epi = out.var[b * width];
      const double alea = softplus(out.mean[b * width + 1]) + kVarianceFloor;
      pred.mean[b] = mean_head;
      (*pred.var_aleatoric)[b] = alea;
      (*pred.var_epistemic)[b] = epi;
      pred.var_total[b] = alea + epi;
    }
  }
  return pred;
}

}  // namespace mpbnn
