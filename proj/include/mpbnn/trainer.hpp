#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "mpbnn/autograd.hpp"
#include "mpbnn/experiment.hpp"
#include "mpbnn/objective.hpp"
#include "mpbnn/variational.hpp"

namespace mpbnn {

/// Full training protocol; defaults follow the polynomial experiment.
struct TrainConfig {
  int total_epochs = 10000;
  int batch_size = 64;
  double learning_rate = 0.01;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_epsilon = 1e-8;
  double weight_decay = 0.01;
  int kl_samples = 1;
  std::uint64_t seed = 0;
  int validation_size = 256;
  SpikeSlabPrior prior;
  InitConfig init;

  void validate() const;
};

/// AdamW accumulators, one pair per learnable coordinate.
struct OptimizerState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  long step = 0;

  static OptimizerState zeros(Eigen::Index n);
};

/// One decoupled-weight-decay update:
/// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps) - lr * lambda * theta.
void adamw_step(OptimizerState& state, ParameterStore& params,
                const Gradient& grad, const TrainConfig& config);

struct EpochMetrics {
  int epoch = 0;
  double alpha = 0.0;
  double kl = 0.0;
  double train_nll = 0.0;  // per-point mean
  double val_nll = 0.0;    // per-point mean
  double total = 0.0;      // alpha*kl + train_nll
};

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  Architecture arch;
  Eigen::VectorXd learnables;  // interleaved mu, rho at full precision
  TrainConfig config;
  int epoch = 0;
  double best_val_nll = 0.0;
};

std::string checkpoint_to_json(const Checkpoint& cp);
Checkpoint checkpoint_from_json(const std::string& text);
void save_checkpoint(const Checkpoint& cp, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);
Network network_from_checkpoint(const Checkpoint& cp);

/// Produces one fresh (x, y) batch; `purpose` is "train" or "val" and the
/// epoch index makes the draw reproducible and shareable across runs.
using DataSource = std::function<std::pair<Eigen::VectorXd, Eigen::VectorXd>(
    int epoch, const std::string& purpose, int n)>;

/// Data source drawing from the polynomial model with a labeled stream
/// per (epoch, purpose), so sweeps seeded identically share batches.
DataSource poly_data_source(const PolyDataConfig& data, std::uint64_t seed);

struct FitResult {
  Checkpoint best;
  std::vector<EpochMetrics> history;
};

/// Runs the epoch loop: one fresh training batch and one AdamW step per
/// epoch with alpha = kl_decay_weight(epoch, M), then validation on a
/// fresh batch; keeps the parameters with the lowest validation NLL.
FitResult fit(const Architecture& arch, const TrainConfig& config,
              const DataSource& data);

}  // namespace mpbnn
