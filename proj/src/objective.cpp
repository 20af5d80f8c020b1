#include "mpbnn/objective.hpp"

#include <cmath>

#include "mpbnn/errors.hpp"

namespace mpbnn {

namespace {
constexpr double kLogTwoPi = 1.8378770664093453;
}

double expected_nll(const PredictiveDistribution& pred,
                    const Eigen::VectorXd& targets) {
  if (pred.mean.size() != targets.size() ||
      pred.var_total.size() != targets.size())
    throw ShapeError("expected_nll: prediction/target length mismatch");
  double total = 0.0;
  for (Eigen::Index k = 0; k < targets.size(); ++k) {
    const double v = pred.var_total[k];
    if (!(v > 0.0))
      throw NumericError("expected_nll: nonpositive predictive variance");
    const double r = targets[k] - pred.mean[k];
    total += 0.5 * (kLogTwoPi + std::log(v) + r * r / v);
  }
  return total;
}

double reconstruction_nll(const PredictiveDistribution& pred,
                          const Eigen::VectorXd& targets) {
  if (!pred.var_aleatoric.has_value() || !pred.var_epistemic.has_value())
    return expected_nll(pred, targets);
  if (pred.mean.size() != targets.size() ||
      pred.var_aleatoric->size() != targets.size() ||
      pred.var_epistemic->size() != targets.size())
    throw ShapeError("reconstruction_nll: prediction/target length mismatch");
  double total = 0.0;
  for (Eigen::Index k = 0; k < targets.size(); ++k) {
    const double alea = (*pred.var_aleatoric)[k];
    if (!(alea > 0.0))
      throw NumericError("reconstruction_nll: nonpositive aleatoric variance");
    const double epi = (*pred.var_epistemic)[k];
    const double r = targets[k] - pred.mean[k];
    total += 0.5 * (kLogTwoPi + std::log(alea) + (r * r + epi) / alea);
  }
  return total;
}

double kl_decay_weight(int epoch_index, int total_epochs) {
  if (total_epochs < 1)
    throw DomainError("kl_decay_weight: total_epochs must be >= 1");
  if (epoch_index < 1 || epoch_index > total_epochs)
    throw DomainError("kl_decay_weight: epoch_index out of [1, total_epochs]");
  return std::exp2(-static_cast<double>(epoch_index)) /
         (1.0 - std::exp2(-static_cast<double>(total_epochs)));
}

LossBreakdown negative_elbo(const PredictiveDistribution& pred,
                            const Eigen::VectorXd& targets, double kl,
                            double alpha) {
  // alpha = 0 is admitted: the decay weight underflows to 0 late in long
  // runs, which is the correct limit.
  if (!(alpha >= 0.0) || !(alpha <= 1.0))
    throw DomainError("negative_elbo: alpha must lie in [0, 1]");
  LossBreakdown loss;
  loss.nll = reconstruction_nll(pred, targets);
  loss.kl = kl;
  loss.alpha = alpha;
  loss.total = alpha * kl + loss.nll;
  return loss;
}

}  // namespace mpbnn
