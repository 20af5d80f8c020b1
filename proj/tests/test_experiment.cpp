#include <doctest.h>

#include <cmath>

#include "mc_stats.hpp"
#include "mpbnn/errors.hpp"
#include "mpbnn/serialize.hpp"
#include "mpbnn/sweep.hpp"

using namespace mpbnn;

TEST_CASE("noise_sigma_squared: pinned values and range") {
  CHECK(noise_sigma_squared(0.25) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(noise_sigma_squared(0.0) == doctest::Approx(0.01).epsilon(1e-12));
  CHECK(noise_sigma_squared(0.5) == doctest::Approx(0.09).epsilon(1e-12));
  // the bracket 0.1 + 0.2 sin(.) sweeps [-0.1, 0.3], so the square sweeps
  // [0, 0.09]: it touches zero where sin = -1/2 (e.g. x = 1/6)
  CHECK(noise_sigma_squared(1.0 / 6.0) == doctest::Approx(0.0).scale(1).epsilon(1e-12));
  double lo = 1e300, hi = -1e300;
  for (double x = -3.0; x <= 3.0; x += 1e-4) {
    const double v = noise_sigma_squared(x);
    lo = std::min(lo, v);
    hi = std::max(hi, v);
    CHECK(v >= 0.0);
  }
  CHECK(lo <= 1e-6);
  CHECK(hi == doctest::Approx(0.09).epsilon(1e-6));
}

TEST_CASE("generate_batch: noiseless hook, determinism, statistics") {
  PolyDataConfig noiseless;
  noiseless.noise_scale = 0.0;
  RngStream rng(3);
  const auto [x, y] = generate_batch(noiseless, 100, rng);
  for (int i = 0; i < 100; ++i) {
    CHECK(x[i] >= -0.5);
    CHECK(x[i] < 0.5);
    CHECK(y[i] == x[i] + 1.0);
  }

  RngStream a(5), b(5);
  const auto batch_a = generate_batch({}, 64, a);
  const auto batch_b = generate_batch({}, 64, b);
  CHECK(batch_a.first == batch_b.first);
  CHECK(batch_a.second == batch_b.second);

  // residual statistics at pinned x = 0.5 (degenerate support)
  PolyDataConfig at_half;
  at_half.x_low = 0.5 - 1e-12;
  at_half.x_high = 0.5 + 1e-12;
  RngStream mc(7);
  const auto est = mctest::estimate(
      [&](RngStream& r) {
        const auto [bx, by] = generate_batch(at_half, 1, r);
        return by[0] - bx[0] - 1.0;
      },
      1'000'000, mc);
  CHECK(est.mean_within(0.0));
  CHECK(est.var_within(0.09));
}

TEST_CASE("count_parameters: benchmark widths and formulas") {
  Architecture emb;
  emb.hidden_sizes = {128};
  Architecture split = emb;
  split.head_mode = HeadMode::SplitHead;
  CHECK(count_parameters(emb) == 770);
  CHECK(count_parameters(split) == 1028);

  emb.hidden_sizes = {1};
  CHECK(count_parameters(emb) == 8);
  split.hidden_sizes = {4};
  CHECK(count_parameters(split) == 36);
  for (int h : {1, 4, 16, 64, 256}) {
    emb.hidden_sizes = {h};
    split.hidden_sizes = {h};
    CHECK(count_parameters(emb) == 6 * h + 2);
    CHECK(count_parameters(split) == 8 * h + 4);
    CHECK(count_parameters(split) - count_parameters(emb) == 2 * h + 2);
  }
}

TEST_CASE("build_network: shapes and store layout") {
  Architecture a;
  a.hidden_sizes = {4};
  a.head_mode = HeadMode::SplitHead;
  Network net = build_network(a);
  REQUIRE(net.linears.size() == 2);
  CHECK(net.linears[0].in_features == 1);
  CHECK(net.linears[0].out_features == 4);
  CHECK(net.linears[1].out_features == 2);
  ParameterStore store = parameter_store(net);
  CHECK(store.learnable_count() == count_parameters(a));

  // the store aliases the layer parameters
  store.set_mu(0, 42.0);
  CHECK(net.linears[0].weights[0].mu == 42.0);

  a.hidden_sizes = {0};
  CHECK_THROWS_AS(build_network(a), ConfigError);
}

TEST_CASE("predict: zero-spread embedded network is deterministic") {
  Architecture a;
  a.hidden_sizes = {4};
  Network net = build_network(a);
  ParameterStore store = parameter_store(net);
  RngStream rng(9);
  for (Eigen::Index j = 0; j < store.size(); ++j) {
    store.set_mu(j, rng.uniform(-1, 1));
    store.set_rho(j, -40.0);
  }
  Eigen::VectorXd x(3);
  x << -0.4, 0.0, 0.3;
  const PredictiveDistribution pred = predict(net, x);
  for (int i = 0; i < 3; ++i)
    CHECK(pred.var_total[i] == doctest::Approx(kVarianceFloor).epsilon(1e-6));

  const MomentTensor raw = forward_moments(net, x);
  for (int i = 0; i < 3; ++i)
    CHECK(pred.mean[i] == raw.mean[i]);
}

TEST_CASE("predict: split-head variance decomposition is an exact sum") {
  Architecture a;
  a.hidden_sizes = {8};
  a.head_mode = HeadMode::SplitHead;
  RngStream rng(11);
  Network net = build_network(a, InitConfig{0.3, -1.0}, rng);
  Eigen::VectorXd x = Eigen::VectorXd::LinSpaced(21, -1.0, 1.0);
  const PredictiveDistribution pred = predict(net, x);
  REQUIRE(pred.var_aleatoric.has_value());
  REQUIRE(pred.var_epistemic.has_value());
  for (int i = 0; i < 21; ++i) {
    CHECK(pred.var_total[i] ==
          (*pred.var_aleatoric)[i] + (*pred.var_epistemic)[i]);
    CHECK(pred.var_total[i] >= kVarianceFloor);
    CHECK((*pred.var_aleatoric)[i] > 0.0);
    CHECK((*pred.var_epistemic)[i] >= 0.0);
  }
}

TEST_CASE("predict: embedded variance matches Monte-Carlo forward passes") {
  Architecture a;
  a.hidden_sizes = {64};
  RngStream init_rng(13);
  Network net = build_network(a, InitConfig{0.4, -2.0}, init_rng);
  ParameterStore store = parameter_store(net);
  Eigen::VectorXd x(1);
  x << 0.2;
  const PredictiveDistribution pred = predict(net, x);

  // deterministic forward pass per joint weight sample
  const Eigen::VectorXd keep = store.learnables();
  RngStream mc(17);
  const auto est = mctest::estimate(
      [&](RngStream& r) {
        const Eigen::VectorXd w = sample_weights(store, r);
        Eigen::VectorXd theta = keep;
        for (Eigen::Index j = 0; j < store.size(); ++j) {
          theta[2 * j] = w[j];
          theta[2 * j + 1] = -40.0;
        }
        store.set_learnables(theta);
        const double out = forward_moments(net, x).mean[0];
        store.set_learnables(keep);
        return out;
      },
      100'000, mc);
  CHECK(est.mean_within(pred.mean[0]));
  // allow the leaky-ReLU normality approximation a little slack on top of
  // the MC standard error
  CHECK(std::abs(est.var - (pred.var_total[0] - kVarianceFloor)) <=
        3 * est.se_var + 0.02 * est.var);
}

TEST_CASE("run_sweep: single-cell report shape and bookkeeping") {
  SweepConfig cfg;
  cfg.train.total_epochs = 30;
  cfg.train.seed = 19;
  cfg.grid.points = 41;
  const SweepReport report = run_sweep({4}, {HeadMode::Embedded}, cfg);
  REQUIRE(report.cells.size() == 1);
  const SweepCellResult& cell = report.cells[0];
  CHECK_FALSE(cell.failed);
  CHECK_FALSE(report.all_failed());
  CHECK(cell.width == 4);
  CHECK(std::isfinite(cell.best_val_nll));
  CHECK(std::isfinite(cell.in_dist_nll));
  CHECK(std::isfinite(cell.out_dist_nll));
  Architecture a;
  a.hidden_sizes = {4};
  CHECK(cell.param_count == count_parameters(a));
  CHECK(cell.grid_x.size() == 41);
}

TEST_CASE("run_sweep: parallel cells match sequential cells") {
  SweepConfig cfg;
  cfg.train.total_epochs = 25;
  cfg.train.seed = 23;
  cfg.grid.points = 11;
  const std::vector<int> widths = {2, 4};
  const std::vector<HeadMode> modes = {HeadMode::Embedded, HeadMode::SplitHead};
  cfg.workers = 1;
  const SweepReport seq = run_sweep(widths, modes, cfg);
  cfg.workers = 4;
  const SweepReport par = run_sweep(widths, modes, cfg);
  REQUIRE(seq.cells.size() == par.cells.size());
  for (std::size_t i = 0; i < seq.cells.size(); ++i) {
    CHECK(seq.cells[i].width == par.cells[i].width);
    CHECK(seq.cells[i].mode == par.cells[i].mode);
    CHECK(seq.cells[i].best_val_nll == par.cells[i].best_val_nll);
    CHECK(seq.cells[i].in_dist_nll == par.cells[i].in_dist_nll);
    CHECK(seq.cells[i].checkpoint.learnables == par.cells[i].checkpoint.learnables);
  }
}

TEST_CASE("run_sweep: cell failures are contained") {
  SweepConfig cfg;
  cfg.train.total_epochs = 40;
  cfg.train.seed = 29;
  cfg.train.learning_rate = 1e6;  // every cell diverges
  cfg.grid.points = 11;
  const SweepReport report =
      run_sweep({2}, {HeadMode::Embedded, HeadMode::SplitHead}, cfg);
  REQUIRE(report.cells.size() == 2);
  CHECK(report.cells[0].failed);
  CHECK(report.cells[1].failed);
  CHECK(report.all_failed());
  CHECK(!report.cells[0].error.empty());
}

TEST_CASE("GridSpec: linspace endpoints and validation") {
  GridSpec g;
  const Eigen::VectorXd x = g.linspace();
  REQUIRE(x.size() == 201);
  CHECK(x[0] == -1.5);
  CHECK(x[200] == 1.5);
  GridSpec bad;
  bad.points = 1;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad.points = 11;
  bad.lo = 2.0;
  bad.hi = -2.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("serialize: config round-trips and unknown keys") {
  Architecture a;
  a.hidden_sizes = {16};
  a.head_mode = HeadMode::SplitHead;
  a.slope = 0.2;
  const Architecture a2 = architecture_from_json(architecture_to_json(a));
  CHECK(a2.hidden_sizes == a.hidden_sizes);
  CHECK(a2.head_mode == a.head_mode);
  CHECK(a2.slope == a.slope);

  TrainConfig t;
  t.total_epochs = 123;
  t.seed = 99;
  t.prior.var_spike = 1e-4;
  const TrainConfig t2 = train_config_from_json(train_config_to_json(t));
  CHECK(t2.total_epochs == 123);
  CHECK(t2.seed == 99);
  CHECK(t2.prior.var_spike == 1e-4);

  Json bad = train_config_to_json(t);
  bad["learning_rte"] = 0.1;
  CHECK_THROWS_AS(train_config_from_json(bad), ConfigError);
  Json bad_arch = architecture_to_json(a);
  bad_arch["hiden_sizes"] = std::vector<int>{4};
  CHECK_THROWS_AS(architecture_from_json(bad_arch), ConfigError);
}

TEST_CASE("format_double: round-trip exactness") {
  RngStream rng(31);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-12, 12));
    CHECK(std::stod(format_double(v)) == v);
  }
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(1.0) == "1");
}
