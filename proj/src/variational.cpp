#include "mpbnn/variational.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "mpbnn/errors.hpp"

namespace mpbnn {

namespace {
constexpr double kLogTwoPi = 1.8378770664093453;  // log(2*pi)
}

void SpikeSlabPrior::validate() const {
  if (!(var_slab > 0.0) || !(var_spike > 0.0))
    throw DomainError("SpikeSlabPrior: variances must be positive");
  if (!(mix > 0.0) || !(mix < 1.0))
    throw DomainError("SpikeSlabPrior: mix must lie in (0, 1)");
}

Eigen::VectorXd ParameterStore::learnables() const {
  Eigen::VectorXd v(learnable_count());
  for (Eigen::Index j = 0; j < size(); ++j) {
    v[2 * j] = mu(j);
    v[2 * j + 1] = rho(j);
  }
  return v;
}

void ParameterStore::set_learnables(const Eigen::VectorXd& values) {
  if (values.size() != learnable_count())
    throw ShapeError("ParameterStore: learnable vector length mismatch");
  for (Eigen::Index j = 0; j < size(); ++j) {
    set_mu(j, values[2 * j]);
    set_rho(j, values[2 * j + 1]);
  }
}

Eigen::VectorXd sample_weights_with_eps(const ParameterStore& store,
                                        const Eigen::VectorXd& eps) {
  if (eps.size() != store.size())
    throw ShapeError("sample_weights: eps length does not match store size");
  Eigen::VectorXd w(store.size());
  for (Eigen::Index j = 0; j < store.size(); ++j)
    w[j] = store.mu(j) + store.sigma(j) * eps[j];
  return w;
}

Eigen::VectorXd sample_weights(const ParameterStore& store, RngStream& rng) {
  if (store.size() == 0) throw DomainError("sample_weights: empty store");
  return sample_weights_with_eps(store, rng.normal_array(store.size()));
}

double log_posterior(const ParameterStore& store, const Eigen::VectorXd& w) {
  if (w.size() != store.size())
    throw ShapeError("log_posterior: weight vector length mismatch");
  double total = 0.0;
  for (Eigen::Index j = 0; j < store.size(); ++j) {
    const double s = store.sigma(j);
    const double z = (w[j] - store.mu(j)) / s;
    total += -0.5 * kLogTwoPi - std::log(s) - 0.5 * z * z;
  }
  return total;
}

namespace {

// log of mix*N(w|0,v1) + (1-mix)*N(w|0,v2) via log-sum-exp.
double log_mixture_density(const SpikeSlabPrior& prior, double w) {
  const double a = std::log(prior.mix) - 0.5 * kLogTwoPi -
                   0.5 * std::log(prior.var_slab) -
                   0.5 * w * w / prior.var_slab;
  const double b = std::log1p(-prior.mix) - 0.5 * kLogTwoPi -
                   0.5 * std::log(prior.var_spike) -
                   0.5 * w * w / prior.var_spike;
  const double hi = std::max(a, b);
  const double lo = std::min(a, b);
  return hi + std::log1p(std::exp(lo - hi));
}

}  // namespace

double log_prior(const SpikeSlabPrior& prior, const Eigen::VectorXd& w) {
  prior.validate();
  double total = 0.0;
  for (Eigen::Index j = 0; j < w.size(); ++j)
    total += log_mixture_density(prior, w[j]);
  return total;
}

double log_prior_score(const SpikeSlabPrior& prior, double w) {
  // Responsibilities in log space, then d/dw log p = sum_c gamma_c (-w/v_c).
  const double a = std::log(prior.mix) - 0.5 * std::log(prior.var_slab) -
                   0.5 * w * w / prior.var_slab;
  const double b = std::log1p(-prior.mix) - 0.5 * std::log(prior.var_spike) -
                   0.5 * w * w / prior.var_spike;
  const double hi = std::max(a, b);
  const double za = std::exp(a - hi), zb = std::exp(b - hi);
  const double norm = za + zb;
  return (za * (-w / prior.var_slab) + zb * (-w / prior.var_spike)) / norm;
}

double kl_monte_carlo(const ParameterStore& store, const SpikeSlabPrior& prior,
                      int n_samples, RngStream& rng) {
  if (n_samples < 1)
    throw DomainError("kl_monte_carlo: n_samples must be >= 1");
  double acc = 0.0;
  for (int i = 0; i < n_samples; ++i) {
    const Eigen::VectorXd w = sample_weights(store, rng);
    acc += log_posterior(store, w) - log_prior(prior, w);
  }
  return acc / n_samples;
}

void initialize(ParameterStore& store, const InitConfig& init, RngStream& rng) {
  for (Eigen::Index j = 0; j < store.size(); ++j) {
    store.set_mu(j, init.init_mu_std * rng.normal());
    store.set_rho(j, init.init_rho);
  }
}

}  // namespace mpbnn
