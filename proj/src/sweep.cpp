#include "mpbnn/sweep.hpp"

#include <atomic>
#include <cmath>
#include <limits>
#include <thread>

#include "mpbnn/errors.hpp"

namespace mpbnn {

void GridSpec::validate() const {
  if (!(lo < hi)) throw ConfigError("GridSpec: lo must be < hi");
  if (points < 2) throw ConfigError("GridSpec: need at least 2 points");
}

Eigen::VectorXd GridSpec::linspace() const {
  validate();
  return Eigen::VectorXd::LinSpaced(points, lo, hi);
}

bool SweepReport::all_failed() const {
  for (const SweepCellResult& c : cells)
    if (!c.failed) return false;
  return !cells.empty();
}

namespace {

void evaluate_cell_on_grid(SweepCellResult& cell, const SweepConfig& config,
                           const Network& net) {
  cell.grid_x = config.grid.linspace();
  cell.grid_pred = predict(net, cell.grid_x);

  // Fresh targets from the data model at the grid points; the stream is
  // keyed by seed only, so every cell scores the same realization.
  RngStream rng = RngStream(config.train.seed).child("grid_eval");
  const Eigen::Index n = cell.grid_x.size();
  Eigen::VectorXd y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double sd = config.data.noise_scale *
                      std::sqrt(noise_sigma_squared(cell.grid_x[i]));
    y[i] = cell.grid_x[i] + 1.0 + sd * rng.normal();
  }

  double in_sum = 0.0, out_sum = 0.0;
  Eigen::Index in_n = 0, out_n = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    PredictiveDistribution point;
    point.mean = cell.grid_pred.mean.segment(i, 1);
    point.var_total = cell.grid_pred.var_total.segment(i, 1);
    if (cell.grid_pred.var_aleatoric.has_value()) {
      point.var_aleatoric = cell.grid_pred.var_aleatoric->segment(i, 1);
      point.var_epistemic = cell.grid_pred.var_epistemic->segment(i, 1);
    }
    const double nll = reconstruction_nll(point, y.segment(i, 1));
    const bool in_support = cell.grid_x[i] >= config.data.x_low &&
                            cell.grid_x[i] <= config.data.x_high;
    (in_support ? in_sum : out_sum) += nll;
    (in_support ? in_n : out_n) += 1;
  }
  cell.in_dist_nll = in_n > 0 ? in_sum / static_cast<double>(in_n)
                              : std::numeric_limits<double>::quiet_NaN();
  cell.out_dist_nll = out_n > 0 ? out_sum / static_cast<double>(out_n)
                                : std::numeric_limits<double>::quiet_NaN();
}

void run_cell(SweepCellResult& cell, const SweepConfig& config) {
  try {
    Architecture arch;
    arch.hidden_sizes = {cell.width};
    arch.head_mode = cell.mode;
    cell.param_count = count_parameters(arch);

    const DataSource data =
        poly_data_source(config.data, config.train.seed);
    FitResult fitted = fit(arch, config.train, data);
    cell.best_val_nll = fitted.best.best_val_nll;
    cell.checkpoint = fitted.best;

    const Network net = network_from_checkpoint(fitted.best);
    evaluate_cell_on_grid(cell, config, net);
  } catch (const std::exception& e) {
    cell.failed = true;
    cell.error = e.what();
  }
}

}  // namespace

SweepReport run_sweep(const std::vector<int>& widths,
                      const std::vector<HeadMode>& modes,
                      const SweepConfig& config) {
  if (widths.empty() || modes.empty())
    throw ConfigError("run_sweep: widths and modes must be non-empty");
  config.train.validate();
  config.data.validate();
  config.grid.validate();

  SweepReport report;
  for (int w : widths)
    for (HeadMode m : modes) {
      SweepCellResult cell;
      cell.width = w;
      cell.mode = m;
      report.cells.push_back(std::move(cell));
    }

  const int workers =
      std::max(1, std::min<int>(config.workers,
                                static_cast<int>(report.cells.size())));
  if (workers == 1) {
    for (SweepCellResult& cell : report.cells) run_cell(cell, config);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int t = 0; t < workers; ++t)
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < report.cells.size();
             i = next.fetch_add(1))
          run_cell(report.cells[i], config);
      });
    for (std::thread& t : pool) t.join();
  }
  return report;
}

}  // namespace mpbnn
