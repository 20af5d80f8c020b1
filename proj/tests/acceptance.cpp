// Acceptance harness: one pass/fail line per criterion, exit code = number
// of failing criteria. Heavier than the unit suite (Monte Carlo oracles and
// seeded desk-scale training runs), so it is registered as its own test.

#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <sys/wait.h>

#include "mc_stats.hpp"
#include "mpbnn/autograd.hpp"
#include "mpbnn/sweep.hpp"
#include "mpbnn/trainer.hpp"

namespace fs = std::filesystem;
using namespace mpbnn;

namespace {

int g_failures = 0;

void report(int criterion, bool pass, const std::string& what) {
  std::cout << "criterion " << criterion << ": " << (pass ? "PASS" : "FAIL")
            << " - " << what << std::endl;
  if (!pass) ++g_failures;
}

// --- criterion 1: layer moment rules vs Monte Carlo ------------------

bool linear_oracle(RngStream& rng) {
  const int in = 1 + static_cast<int>(rng.uniform(0, 4));
  LinearLayer layer = LinearLayer::make(in, 1);
  for (GaussianParameter& p : layer.weights) {
    p.mu = rng.uniform(-1.5, 1.5);
    p.rho = rng.uniform(-2.0, 0.5);
  }
  layer.biases[0].mu = rng.uniform(-1.0, 1.0);
  layer.biases[0].rho = rng.uniform(-2.0, 0.5);
  MomentTensor x = MomentTensor::zeros({1, in});
  for (int i = 0; i < in; ++i) {
    x.mean[i] = rng.uniform(-1.5, 1.5);
    x.var[i] = rng.uniform(0.05, 1.5);
  }
  const MomentTensor out = linear_forward(layer, x);
  const auto est = mctest::estimate(
      [&](RngStream& r) {
        double acc = layer.biases[0].mu + layer.biases[0].sigma() * r.normal();
        for (int i = 0; i < in; ++i)
          acc += (x.mean[i] + std::sqrt(x.var[i]) * r.normal()) *
                 (layer.weights[i].mu + layer.weights[i].sigma() * r.normal());
        return acc;
      },
      1'000'000, rng);
  return est.mean_within(out.mean[0]) && est.var_within(out.var[0]);
}

bool conv_oracle(RngStream& rng) {
  const int in_c = 1 + static_cast<int>(rng.uniform(0, 2));
  Conv2dLayer conv = Conv2dLayer::make(in_c, 1, 2, 2);
  for (GaussianParameter& p : conv.weights) {
    p.mu = rng.uniform(-1.0, 1.0);
    p.rho = rng.uniform(-2.0, 0.0);
  }
  conv.biases[0].mu = rng.uniform(-1.0, 1.0);
  conv.biases[0].rho = rng.uniform(-2.0, 0.0);
  MomentTensor img = MomentTensor::zeros({1, in_c, 3, 3});
  for (Eigen::Index i = 0; i < img.size(); ++i) {
    img.mean[i] = rng.uniform(-1.0, 1.0);
    img.var[i] = rng.uniform(0.05, 1.0);
  }
  const MomentTensor out = conv2d_forward(conv, img);
  // output element (0,0): receptive field = rows/cols {0,1} of each channel
  const auto est = mctest::estimate(
      [&](RngStream& r) {
        double acc = conv.biases[0].mu + conv.biases[0].sigma() * r.normal();
        for (int c = 0; c < in_c; ++c)
          for (int ky = 0; ky < 2; ++ky)
            for (int kx = 0; kx < 2; ++kx) {
              const Eigen::Index pix = c * 9 + ky * 3 + kx;
              const GaussianParameter& w = conv.weights[c * 4 + ky * 2 + kx];
              acc += (img.mean[pix] + std::sqrt(img.var[pix]) * r.normal()) *
                     (w.mu + w.sigma() * r.normal());
            }
        return acc;
      },
      1'000'000, rng);
  return est.mean_within(out.mean[0]) && est.var_within(out.var[0]);
}

bool avgpool_oracle(RngStream& rng) {
  MomentTensor img = MomentTensor::zeros({1, 1, 2, 2});
  for (int i = 0; i < 4; ++i) {
    img.mean[i] = rng.uniform(-2.0, 2.0);
    img.var[i] = rng.uniform(0.05, 2.0);
  }
  const MomentTensor out = avgpool2d_forward(AvgPool2dLayer{2, 2}, img);
  const auto est = mctest::estimate(
      [&](RngStream& r) {
        double acc = 0;
        for (int i = 0; i < 4; ++i)
          acc += img.mean[i] + std::sqrt(img.var[i]) * r.normal();
        return acc / 4.0;
      },
      1'000'000, rng);
  return est.mean_within(out.mean[0]) && est.var_within(out.var[0]);
}

bool leaky_relu_oracle(RngStream& rng) {
  // keep alpha = -mean/sd unclamped: the closed form is exact only there
  // (the clamped regime is a documented approximation)
  double mean = rng.uniform(-2.0, 2.0);
  double var = rng.uniform(0.1, 2.0);
  while (std::abs(mean) / std::sqrt(var) > 2.8) {
    mean = rng.uniform(-2.0, 2.0);
    var = rng.uniform(0.1, 2.0);
  }
  const double slope = rng.uniform(0.0, 0.5);
  const auto [m, v] = leaky_relu_moments(mean, var, slope);
  const double sd = std::sqrt(var);
  const auto est = mctest::estimate(
      [&](RngStream& r) {
        const double x = mean + sd * r.normal();
        return x >= 0 ? x : slope * x;
      },
      1'000'000, rng);
  return est.mean_within(m) && est.var_within(v);
}

void criterion_1() {
  RngStream rng(1006);
  int failures = 0;
  for (int i = 0; i < 20; ++i) {
    RngStream r1 = rng.child("linear").child(static_cast<std::uint64_t>(i));
    RngStream r2 = rng.child("conv").child(static_cast<std::uint64_t>(i));
    RngStream r3 = rng.child("pool").child(static_cast<std::uint64_t>(i));
    RngStream r4 = rng.child("lrelu").child(static_cast<std::uint64_t>(i));
    failures += !linear_oracle(r1);
    failures += !conv_oracle(r2);
    failures += !avgpool_oracle(r3);
    failures += !leaky_relu_oracle(r4);
  }
  std::ostringstream msg;
  msg << "moment rules vs 1e6-sample Monte Carlo, 20 configs per layer ("
      << failures << " of 80 outside 3 SE)";
  report(1, failures == 0, msg.str());
}

// --- criterion 2: truncated-normal identities -------------------------

void criterion_2() {
  double worst = 0.0;
  for (int ia = 0; ia < 40; ++ia) {
    const double alpha = -2.95 + 5.9 * ia / 39.0;
    for (int iv = 0; iv < 25; ++iv) {
      const double var = std::pow(10.0, -3.0 + 4.0 * iv / 24.0);
      const double mean = -alpha * std::sqrt(var);
      const auto s = truncated_stats(mean, var);
      const double tot_mean =
          s.prob_below * s.mean_below + s.prob_above * s.mean_above;
      const double tot_var =
          s.prob_below * s.var_below + s.prob_above * s.var_above +
          s.prob_below * (s.mean_below - mean) * (s.mean_below - mean) +
          s.prob_above * (s.mean_above - mean) * (s.mean_above - mean);
      worst = std::max(worst, std::abs(tot_mean - mean));
      worst = std::max(worst, std::abs(tot_var - var));
    }
  }
  std::ostringstream msg;
  msg << "total expectation/variance identities on 1000 unclamped pairs "
         "(max deviation "
      << worst << ")";
  report(2, worst <= 1e-10, msg.str());
}

// --- criterion 3: gradient checks --------------------------------------

void criterion_3() {
  bool pass = true;
  double worst = 0.0;
  std::uint64_t seed = 300;
  for (HeadMode mode : {HeadMode::Embedded, HeadMode::SplitHead}) {
    for (int width : {1, 4, 16}) {
      Architecture arch;
      arch.hidden_sizes = {width};
      arch.head_mode = mode;
      Network net = build_network(arch);
      const LossContext ctx = make_gradcheck_context(net, 8, seed++);
      const GradCheckReport r = grad_check(net, ctx, 1e-4);
      pass = pass && r.pass;
      worst = std::max(worst, r.max_rel_error);
    }
  }
  std::ostringstream msg;
  msg << "finite-difference gradient check, both heads, H in {1,4,16} "
         "(max rel error "
      << worst << ")";
  report(3, pass, msg.str());
}

// --- criterion 4: KL machinery -----------------------------------------

void criterion_4() {
  // (a) MC-KL vs closed-form 0.5 for q = N(1,1), p = N(0,1)
  GaussianParameter param{1.0, std::log(std::exp(1.0) - 1.0)};
  ParameterStore store({&param});
  SpikeSlabPrior standard_normal{1.0, 1.0, 0.5};
  RngStream rng(401);
  double sum = 0, sum2 = 0;
  const int n = 100'000;
  for (int i = 0; i < n; ++i) {
    RngStream child = rng.child(static_cast<std::uint64_t>(i));
    const double kl = kl_monte_carlo(store, standard_normal, 1, child);
    sum += kl;
    sum2 += kl * kl;
  }
  const double mean = sum / n;
  const double se = std::sqrt((sum2 / n - mean * mean) / n);
  const bool kl_ok = std::abs(mean - 0.5) <= 3 * se;

  // (b) decay weights sum to one
  double worst = 0.0;
  for (int M : {1, 10, 50, 1000}) {
    double s = 0.0;
    for (int i = 1; i <= M; ++i) s += kl_decay_weight(i, M);
    worst = std::max(worst, std::abs(s - 1.0));
  }
  const bool sum_ok = worst <= 1e-12;

  std::ostringstream msg;
  msg << "MC-KL estimate " << mean << " vs 0.5 (3 SE = " << 3 * se
      << "); decay-weight sums off by at most " << worst;
  report(4, kl_ok && sum_ok, msg.str());
}

// --- criterion 5: parameter counts -------------------------------------

void criterion_5() {
  Architecture emb;
  emb.hidden_sizes = {128};
  Architecture split = emb;
  split.head_mode = HeadMode::SplitHead;
  const long ce = count_parameters(emb);
  const long cs = count_parameters(split);
  const double ratio = static_cast<double>(cs) / static_cast<double>(ce);
  const bool pass = ce == 770 && cs == 1028 && std::abs(ratio - 1.335) < 0.005;
  std::ostringstream msg;
  msg << "H=128 parameter counts " << cs << " vs " << ce << " (ratio " << ratio
      << ", ~34% more)";
  report(5, pass, msg.str());
}

// --- criteria 6-8: desk-scale training reproductions --------------------

FitResult train_one(int width, HeadMode mode, std::uint64_t seed, int epochs) {
  Architecture arch;
  arch.hidden_sizes = {width};
  arch.head_mode = mode;
  TrainConfig cfg;
  cfg.total_epochs = epochs;
  cfg.seed = seed;
  return fit(arch, cfg, poly_data_source({}, seed));
}

void criterion_6() {
  int embedded_wins = 0;
  std::ostringstream detail;
  for (std::uint64_t seed : {1, 2, 3}) {
    const FitResult emb = train_one(4, HeadMode::Embedded, seed, 2000);
    const FitResult split = train_one(4, HeadMode::SplitHead, seed, 2000);
    const bool win = emb.best.best_val_nll < split.best.best_val_nll;
    embedded_wins += win;
    detail << " seed " << seed << ": " << emb.best.best_val_nll
           << (win ? " < " : " >= ") << split.best.best_val_nll << ";";
  }
  std::ostringstream msg;
  msg << "H=4 embedded vs split-head best validation nll over 3 seeds ("
      << embedded_wins << "/3 embedded wins):" << detail.str();
  report(6, embedded_wins >= 2, msg.str());
}

void criteria_7_8() {
  const FitResult r = train_one(128, HeadMode::Embedded, 1, 2000);
  const Network net = network_from_checkpoint(r.best);

  // criterion 7: in-distribution heteroscedasticity recovery
  const Eigen::VectorXd x_in = Eigen::VectorXd::LinSpaced(101, -0.5, 0.5);
  const PredictiveDistribution pred_in = predict(net, x_in);
  Eigen::VectorXd predicted_sd(101), true_sd(101);
  for (int i = 0; i < 101; ++i) {
    predicted_sd[i] = std::sqrt(pred_in.var_total[i]);
    true_sd[i] = std::sqrt(noise_sigma_squared(x_in[i]));
  }
  const auto centered = [](Eigen::VectorXd v) {
    return (v.array() - v.mean()).matrix().eval();
  };
  const Eigen::VectorXd a = centered(predicted_sd), b = centered(true_sd);
  const double corr = a.dot(b) / std::sqrt(a.squaredNorm() * b.squaredNorm());

  const double var_at_half = predict(net, Eigen::VectorXd::Constant(1, 0.5)).var_total[0];
  const double var_at_quarter =
      predict(net, Eigen::VectorXd::Constant(1, 0.25)).var_total[0];
  std::ostringstream msg7;
  msg7 << "H=128 embedded: corr(predicted sd, true sd) = " << corr
       << "; var(0.5) = " << var_at_half << " vs var(0.25) = " << var_at_quarter;
  report(7, corr >= 0.8 && var_at_half > var_at_quarter, msg7.str());

  // criterion 8: off-support variance growth
  const Eigen::VectorXd x_all = Eigen::VectorXd::LinSpaced(301, -1.5, 1.5);
  const PredictiveDistribution pred_all = predict(net, x_all);
  double ood_sum = 0, in_sum = 0;
  int ood_n = 0, in_n = 0;
  for (int i = 0; i < 301; ++i) {
    const double ax = std::abs(x_all[i]);
    if (ax >= 1.0) {
      ood_sum += pred_all.var_total[i];
      ++ood_n;
    } else if (ax <= 0.5) {
      in_sum += pred_all.var_total[i];
      ++in_n;
    }
  }
  const double ratio = (ood_sum / ood_n) / (in_sum / in_n);
  std::ostringstream msg8;
  msg8 << "H=128 embedded: mean var_total off-support / in-support = " << ratio
       << " (need >= 2)";
  report(8, ratio >= 2.0, msg8.str());
}

// --- criterion 9: CLI determinism ---------------------------------------

int run_cli(const std::string& args) {
  const char* cli = std::getenv("BNN_CLI");
  if (!cli) return -1;
  const std::string cmd = std::string(cli) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return status != -1 && WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) return "<missing:" + p.string() + ">";
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

bool dirs_equal(const fs::path& a, const fs::path& b) {
  int n = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    if (slurp(entry.path()) != slurp(b / entry.path().filename())) return false;
    ++n;
  }
  return n > 0;
}

void criterion_9() {
  if (!std::getenv("BNN_CLI")) {
    report(9, false, "BNN_CLI is not set; cannot exercise the CLI");
    return;
  }
  const fs::path root = fs::temp_directory_path() / "bnn_acceptance";
  fs::remove_all(root);
  fs::create_directories(root);

  struct Step {
    std::string name;
    std::string args;
  };
  const fs::path gen = root / "generate";
  const fs::path train = root / "train";
  const std::vector<Step> steps = {
      {"generate", "generate --seed 5 -n 200 --out " + gen.string()},
      {"train", "train --seed 5 --epochs 40 --out " + train.string()},
      {"eval", "eval " + (train / "checkpoint.json").string() +
                   " --grid -1.5:1.5:51 --out " + (root / "eval").string()},
      {"sweep",
       "sweep --seed 5 --epochs 15 --widths 2,4 --modes embedded,split_head "
       "--grid -1:1:21 --workers 2 --out " + (root / "sweep").string()},
  };

  bool pass = true;
  std::ostringstream detail;
  for (const Step& step : steps) {
    const fs::path out = root / step.name;
    const fs::path redo = root / (step.name + "_replay");
    if (run_cli(step.args) != 0) {
      pass = false;
      detail << " " << step.name << ": command failed;";
      continue;
    }
    if (run_cli("replay " + (out / "manifest.json").string() + " --out " +
                redo.string()) != 0) {
      pass = false;
      detail << " " << step.name << ": replay failed;";
      continue;
    }
    if (!dirs_equal(out, redo)) {
      pass = false;
      detail << " " << step.name << ": outputs differ;";
    }
  }
  fs::remove_all(root);
  std::string msg = "every CLI command replays byte-identically from its "
                    "manifest (generate, train, eval, sweep)";
  if (!pass) msg += " --" + detail.str();
  report(9, pass, msg);
}

}  // namespace

int main(int argc, char** argv) {
  // optional arguments select individual criteria, e.g. `acceptance 1 9`
  std::vector<bool> wanted(10, argc <= 1);
  for (int i = 1; i < argc; ++i) {
    const int c = std::atoi(argv[i]);
    if (c >= 1 && c <= 9) wanted[static_cast<std::size_t>(c)] = true;
  }
  if (wanted[1]) criterion_1();
  if (wanted[2]) criterion_2();
  if (wanted[3]) criterion_3();
  if (wanted[4]) criterion_4();
  if (wanted[5]) criterion_5();
  if (wanted[6]) criterion_6();
  if (wanted[7] || wanted[8]) criteria_7_8();
  if (wanted[9]) criterion_9();
  std::cout << (g_failures == 0 ? "ALL CRITERIA PASS"
                                : "FAILURES: " + std::to_string(g_failures))
            << std::endl;
  return g_failures;
}
