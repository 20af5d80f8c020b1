#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "mpbnn/layers.hpp"
#include "mpbnn/rng.hpp"

namespace mpbnn {

/// Zero-mean two-component Gaussian mixture prior shared by all weights
/// and biases: mix*N(0, var_slab) + (1-mix)*N(0, var_spike).
struct SpikeSlabPrior {
  double var_slab = 1.0;
  double var_spike = std::exp(-12.0);
  double mix = 0.5;

  void validate() const;
};

/// Flat, stably ordered view over every GaussianParameter of a network.
///
/// The order is fixed by construction (layer by layer, weights row-major
/// then biases), giving deterministic indexing for gradients, the
/// optimizer, and serialization. Reads are safe concurrently; mutation is
/// the trainer's exclusive job.
class ParameterStore {
 public:
  ParameterStore() = default;
  explicit ParameterStore(std::vector<GaussianParameter*> slots)
      : slots_(std::move(slots)) {}

  Eigen::Index size() const { return static_cast<Eigen::Index>(slots_.size()); }
  /// Number of learnable reals (mu and rho per parameter).
  Eigen::Index learnable_count() const { return 2 * size(); }

  GaussianParameter& param(Eigen::Index j) { return *slots_[static_cast<std::size_t>(j)]; }
  const GaussianParameter& param(Eigen::Index j) const {
    return *slots_[static_cast<std::size_t>(j)];
  }

  double mu(Eigen::Index j) const { return param(j).mu; }
  double rho(Eigen::Index j) const { return param(j).rho; }
  double sigma(Eigen::Index j) const { return param(j).sigma(); }
  void set_mu(Eigen::Index j, double v) { param(j).mu = v; }
  void set_rho(Eigen::Index j, double v) { param(j).rho = v; }

  /// Flat interleaved learnables (mu_0, rho_0, mu_1, rho_1, ...).
  Eigen::VectorXd learnables() const;
  void set_learnables(const Eigen::VectorXd& values);

 private:
  std::vector<GaussianParameter*> slots_;
};

/// One joint reparameterized draw w_j = mu_j + sigma_j * eps_j with
/// eps provided explicitly (deterministic given the stream).
Eigen::VectorXd sample_weights(const ParameterStore& store, RngStream& rng);
Eigen::VectorXd sample_weights_with_eps(const ParameterStore& store,
                                        const Eigen::VectorXd& eps);

/// log q(w | theta): sum of factorized normal log densities.
double log_posterior(const ParameterStore& store, const Eigen::VectorXd& w);

/// log p(w) under the spike-slab prior, log-sum-exp formulation.
double log_prior(const SpikeSlabPrior& prior, const Eigen::VectorXd& w);

/// d/dw_j log p(w) (responsibility-weighted component scores).
double log_prior_score(const SpikeSlabPrior& prior, double w);

/// Monte Carlo KL[q || p] over n_samples fresh joint draws.
double kl_monte_carlo(const ParameterStore& store, const SpikeSlabPrior& prior,
                      int n_samples, RngStream& rng);

/// Initialize parameters: mu ~ N(0, init_mu_std^2), rho = init_rho.
/// The default rho is softplus^{-1}(1) = ln(e - 1), starting every
/// posterior spread at the slab prior's unit sigma; a tighter start
/// (large negative rho) leaves the propagated output variance near the
/// floor and badly miscalibrated early in training.
struct InitConfig {
  double init_mu_std = 0.05;
  double init_rho = 0.5413248546129181;
};
void initialize(ParameterStore& store, const InitConfig& init, RngStream& rng);

}  // namespace mpbnn
