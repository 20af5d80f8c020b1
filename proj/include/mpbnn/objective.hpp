#pragma once

#include <Eigen/Dense>
#include <optional>

namespace mpbnn {

/// Additive guard on predictive variances before log/division.
inline constexpr double kVarianceFloor = 1e-6;

/// Per-input predictive mean and variance components.
///
/// Embedded mode carries only the total; split-head mode also reports the
/// aleatoric/epistemic decomposition with var_total equal to their sum.
struct PredictiveDistribution {
  Eigen::VectorXd mean;
  Eigen::VectorXd var_total;
  std::optional<Eigen::VectorXd> var_aleatoric;
  std::optional<Eigen::VectorXd> var_epistemic;
};

struct LossBreakdown {
  double nll = 0.0;
  double kl = 0.0;
  double alpha = 1.0;
  double total = 0.0;  // alpha*kl + nll, exactly as computed
};

/// Gaussian expected negative log-likelihood over predictive moments:
/// 1/2 sum_k [log(2*pi) + log(var_k) + (y_k - mean_k)^2 / var_k].
double expected_nll(const PredictiveDistribution& pred,
                    const Eigen::VectorXd& targets);

/// Reconstruction loss -E_q[log p(y | x, w)] for a prediction, in the
/// moment-matched normal approximation appropriate to the head.
///
/// Embedded head: the likelihood variance is the propagated total
/// variance, giving expected_nll with var_total.
///
/// Split head: the likelihood is N(mean-head output, aleatoric variance);
/// taking the expectation over the weight posterior leaves the aleatoric
/// variance in the log term and adds the epistemic spread of the mean
/// head to the squared residual:
/// 1/2 sum_k [log(2*pi) + log(alea_k) + ((y_k - mean_k)^2 + epi_k)/alea_k].
double reconstruction_nll(const PredictiveDistribution& pred,
                          const Eigen::VectorXd& targets);

/// Per-epoch KL weight 2^(M-i)/(2^M - 1), evaluated as
/// 2^-i / (1 - 2^-M). Strictly halving in i; sums to 1 over i = 1..M.
double kl_decay_weight(int epoch_index, int total_epochs);

LossBreakdown negative_elbo(const PredictiveDistribution& pred,
                            const Eigen::VectorXd& targets, double kl,
                            double alpha);

}  // namespace mpbnn
