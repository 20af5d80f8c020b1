#pragma once

#include <string>
#include <vector>

#include "mpbnn/trainer.hpp"

namespace mpbnn {

struct GridSpec {
  double lo = -1.5;
  double hi = 1.5;
  int points = 201;

  void validate() const;
  Eigen::VectorXd linspace() const;
};

struct SweepConfig {
  TrainConfig train;
  PolyDataConfig data;
  GridSpec grid;
  int workers = 1;
};

/// One (width, mode) training cell. Failures are recorded, not thrown, so
/// a bad cell never aborts its siblings.
struct SweepCellResult {
  int width = 0;
  HeadMode mode = HeadMode::Embedded;
  long param_count = 0;
  double best_val_nll = 0.0;
  double in_dist_nll = 0.0;
  double out_dist_nll = 0.0;
  Checkpoint checkpoint;
  Eigen::VectorXd grid_x;
  PredictiveDistribution grid_pred;
  bool failed = false;
  std::string error;
};

struct SweepReport {
  std::vector<SweepCellResult> cells;

  bool all_failed() const;
};

/// Trains every (width, mode) pair. Data batches are drawn from streams
/// keyed only by (seed, epoch, purpose), so every cell sees identical
/// per-epoch data. Each best model is then scored on the evaluation grid,
/// split into the training support and everything outside it.
SweepReport run_sweep(const std::vector<int>& widths,
                      const std::vector<HeadMode>& modes,
                      const SweepConfig& config);

}  // namespace mpbnn
