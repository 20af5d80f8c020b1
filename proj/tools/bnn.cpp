// bnn: command-line front end for the moment-propagation BNN library.
//
// Subcommands: generate, train, eval, sweep, gradcheck, replay. Every
// command writes a run manifest next to its outputs; `bnn replay
// <manifest> --out <dir>` reproduces the outputs byte for byte.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "mpbnn/autograd.hpp"
#include "mpbnn/errors.hpp"
#include "mpbnn/serialize.hpp"
#include "mpbnn/sweep.hpp"
#include "mpbnn/trainer.hpp"

namespace fs = std::filesystem;
using namespace mpbnn;

namespace {

constexpr const char* kLibraryVersion = "0.1.0";

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumeric = 2;
constexpr int kExitIo = 3;

struct FullConfig {
  TrainConfig train;
  Architecture arch;
  PolyDataConfig data;
};

Json full_config_to_json(const FullConfig& cfg) {
  Json j;
  j["train"] = train_config_to_json(cfg.train);
  j["architecture"] = architecture_to_json(cfg.arch);
  j["data"] = data_config_to_json(cfg.data);
  return j;
}

FullConfig full_config_from_json(const Json& j) {
  reject_unknown_keys(j, "<root>", {"train", "architecture", "data"});
  FullConfig cfg;
  cfg.arch.hidden_sizes = {4};
  if (j.contains("train")) cfg.train = train_config_from_json(j.at("train"));
  if (j.contains("architecture"))
    cfg.arch = architecture_from_json(j.at("architecture"));
  if (j.contains("data")) cfg.data = data_config_from_json(j.at("data"));
  return cfg;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  try {
    return Json::parse(buf.str());
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("parse error in " + path + ": " + e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out << text;
  if (!out) throw IoError("failed writing: " + path.string());
}

GridSpec parse_grid(const std::string& spec) {
  GridSpec g;
  if (spec.empty()) return g;
  double lo, hi;
  int n;
  char c1, c2;
  std::istringstream in(spec);
  if (!(in >> lo >> c1 >> hi >> c2 >> n) || c1 != ':' || c2 != ':')
    throw ConfigError("bad grid spec '" + spec + "' (expected lo:hi:n)");
  g.lo = lo;
  g.hi = hi;
  g.points = n;
  g.validate();
  return g;
}

std::string grid_to_string(const GridSpec& g) {
  return format_double(g.lo) + ":" + format_double(g.hi) + ":" +
         std::to_string(g.points);
}

void write_manifest(const fs::path& out_dir, const std::string& command,
                    const FullConfig& cfg, const Json& args,
                    const std::vector<std::string>& outputs) {
  Json m;
  m["command"] = command;
  m["library_version"] = kLibraryVersion;
  m["seed"] = cfg.train.seed;
  m["config"] = full_config_to_json(cfg);
  m["args"] = args;
  m["outputs"] = outputs;
  write_text(out_dir / "manifest.json", m.dump(2) + "\n");
}

// --- generate ---------------------------------------------------------

void run_generate(const FullConfig& cfg, int n, const fs::path& out_dir) {
  RngStream rng = RngStream(cfg.train.seed).child("generate");
  const auto [x, y] = generate_batch(cfg.data, n, rng);
  std::ostringstream csv;
  csv << "x,y\n";
  for (Eigen::Index i = 0; i < x.size(); ++i)
    csv << format_double(x[i]) << "," << format_double(y[i]) << "\n";
  write_text(out_dir / "data.csv", csv.str());

  Json args;
  args["n"] = n;
  write_manifest(out_dir, "generate", cfg, args, {"data.csv"});
}

// --- train ------------------------------------------------------------

void run_train(const FullConfig& cfg, const fs::path& out_dir) {
  const FitResult result =
      fit(cfg.arch, cfg.train, poly_data_source(cfg.data, cfg.train.seed));

  write_text(out_dir / "checkpoint.json", checkpoint_to_json(result.best));

  std::ostringstream lines;
  for (const EpochMetrics& m : result.history) {
    Json line;
    line["epoch"] = m.epoch;
    line["alpha"] = m.alpha;
    line["kl"] = m.kl;
    line["train_nll"] = m.train_nll;
    line["val_nll"] = m.val_nll;
    line["total"] = m.total;
    lines << line.dump() << "\n";
  }
  write_text(out_dir / "metrics.jsonl", lines.str());

  Json summary;
  summary["best_epoch"] = result.best.epoch;
  summary["best_val_nll"] = result.best.best_val_nll;
  summary["param_count"] = count_parameters(cfg.arch);
  summary["epochs_run"] = static_cast<int>(result.history.size());
  write_text(out_dir / "summary.json", summary.dump(2) + "\n");

  write_manifest(out_dir, "train", cfg, Json::object(),
                 {"checkpoint.json", "metrics.jsonl", "summary.json"});
}

// --- eval -------------------------------------------------------------

std::string predictions_csv(const Eigen::VectorXd& x,
                            const PredictiveDistribution& pred) {
  std::ostringstream csv;
  csv << "x,pred_mean,pred_var_total,pred_var_aleatoric,pred_var_epistemic\n";
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    csv << format_double(x[i]) << "," << format_double(pred.mean[i]) << ","
        << format_double(pred.var_total[i]) << ",";
    if (pred.var_aleatoric) csv << format_double((*pred.var_aleatoric)[i]);
    csv << ",";
    if (pred.var_epistemic) csv << format_double((*pred.var_epistemic)[i]);
    csv << "\n";
  }
  return csv.str();
}

void run_eval(const std::string& checkpoint_path, const GridSpec& grid,
              const fs::path& out_dir) {
  const Checkpoint cp = load_checkpoint(checkpoint_path);
  const Network net = network_from_checkpoint(cp);
  const Eigen::VectorXd x = grid.linspace();
  const PredictiveDistribution pred = predict(net, x);
  write_text(out_dir / "predictions.csv", predictions_csv(x, pred));

  FullConfig cfg;
  cfg.train = cp.config;
  cfg.arch = cp.arch;
  Json args;
  args["checkpoint"] = checkpoint_path;
  args["grid"] = grid_to_string(grid);
  write_manifest(out_dir, "eval", cfg, args, {"predictions.csv"});
}

// --- sweep ------------------------------------------------------------

std::string cell_file_name(const SweepCellResult& cell) {
  return "predictions_w" + std::to_string(cell.width) + "_" +
         to_string(cell.mode) + ".csv";
}

int run_sweep_cmd(const FullConfig& cfg, const std::vector<int>& widths,
                  const std::vector<std::string>& mode_names,
                  const GridSpec& grid, int workers, const fs::path& out_dir) {
  std::vector<HeadMode> modes;
  for (const std::string& name : mode_names)
    modes.push_back(head_mode_from_string(name));

  SweepConfig sweep_cfg;
  sweep_cfg.train = cfg.train;
  sweep_cfg.data = cfg.data;
  sweep_cfg.grid = grid;
  sweep_cfg.workers = workers;
  const SweepReport report = run_sweep(widths, modes, sweep_cfg);

  std::vector<std::string> outputs;
  std::ostringstream csv;
  csv << "width,mode,param_count,best_val_nll,in_dist_nll,out_dist_nll\n";
  for (const SweepCellResult& cell : report.cells) {
    csv << cell.width << "," << to_string(cell.mode) << ","
        << cell.param_count << ",";
    if (cell.failed) {
      csv << "FAILED,FAILED,FAILED\n";
      continue;
    }
    csv << format_double(cell.best_val_nll) << ","
        << format_double(cell.in_dist_nll) << ","
        << format_double(cell.out_dist_nll) << "\n";
    write_text(out_dir / cell_file_name(cell),
               predictions_csv(cell.grid_x, cell.grid_pred));
    outputs.push_back(cell_file_name(cell));
  }
  write_text(out_dir / "sweep.csv", csv.str());
  outputs.insert(outputs.begin(), "sweep.csv");

  // Summary: does the embedded head beat the split head at each width?
  Json summary;
  Json per_width = Json::object();
  for (int w : widths) {
    const SweepCellResult* emb = nullptr;
    const SweepCellResult* split = nullptr;
    for (const SweepCellResult& cell : report.cells) {
      if (cell.width != w || cell.failed) continue;
      (cell.mode == HeadMode::Embedded ? emb : split) = &cell;
    }
    if (emb && split) {
      const bool wins = emb->in_dist_nll < split->in_dist_nll;
      per_width[std::to_string(w)] = wins;
      std::cout << "width " << w << ": embedded "
                << (wins ? "beats" : "does not beat") << " split_head ("
                << format_double(emb->in_dist_nll) << " vs "
                << format_double(split->in_dist_nll) << ")\n";
    }
  }
  summary["embedded_beats_split_by_width"] = per_width;
  int failed = 0;
  for (const SweepCellResult& cell : report.cells) failed += cell.failed;
  summary["failed_cells"] = failed;
  write_text(out_dir / "summary.json", summary.dump(2) + "\n");
  outputs.push_back("summary.json");

  Json args;
  args["widths"] = widths;
  args["modes"] = mode_names;
  args["grid"] = grid_to_string(grid);
  args["workers"] = workers;
  write_manifest(out_dir, "sweep", cfg, args, outputs);

  for (const SweepCellResult& cell : report.cells)
    if (cell.failed)
      std::cerr << "cell width=" << cell.width << " mode="
                << to_string(cell.mode) << " failed: " << cell.error << "\n";
  return report.all_failed() ? kExitNumeric : kExitOk;
}

// --- gradcheck --------------------------------------------------------

int run_gradcheck(const FullConfig& cfg, double tolerance, int batch,
                  bool corrupt_adjoint) {
  Network net = build_network(cfg.arch);
  const LossContext ctx =
      make_gradcheck_context(net, batch, cfg.train.seed);
  Gradient analytic = backward(net, record_loss(net, ctx));
  if (corrupt_adjoint && analytic.values.size() > 0)
    analytic.values[0] += 1.0;
  const GradCheckReport report =
      grad_check_against(net, ctx, tolerance, analytic);

  std::cout << "parameters checked: " << analytic.values.size() << "\n";
  std::cout << "max relative error: " << format_double(report.max_rel_error)
            << "\n";
  if (!report.failing.empty()) {
    std::cout << "failing indices:";
    for (Eigen::Index i : report.failing) std::cout << " " << i;
    std::cout << "\n";
  }
  std::cout << (report.pass ? "PASS" : "FAIL") << " at tolerance "
            << format_double(tolerance) << "\n";
  return report.pass ? kExitOk : kExitNumeric;
}

// --- replay -----------------------------------------------------------

int run_replay(const std::string& manifest_path, const fs::path& out_dir);

int dispatch(const std::string& command, const FullConfig& cfg,
             const Json& args, const fs::path& out_dir) {
  if (command == "generate") {
    run_generate(cfg, args.at("n").get<int>(), out_dir);
    return kExitOk;
  }
  if (command == "train") {
    run_train(cfg, out_dir);
    return kExitOk;
  }
  if (command == "eval") {
    run_eval(args.at("checkpoint").get<std::string>(),
             parse_grid(args.at("grid").get<std::string>()), out_dir);
    return kExitOk;
  }
  if (command == "sweep") {
    return run_sweep_cmd(cfg, args.at("widths").get<std::vector<int>>(),
                         args.at("modes").get<std::vector<std::string>>(),
                         parse_grid(args.at("grid").get<std::string>()),
                         args.at("workers").get<int>(), out_dir);
  }
  throw ConfigError("manifest: unsupported command '" + command + "'");
}

int run_replay(const std::string& manifest_path, const fs::path& out_dir) {
  const Json m = read_json_file(manifest_path);
  reject_unknown_keys(m, "manifest",
                      {"command", "library_version", "seed", "config", "args",
                       "outputs"});
  const FullConfig cfg = full_config_from_json(m.at("config"));
  return dispatch(m.at("command").get<std::string>(), cfg, m.at("args"),
                  out_dir);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sampling-free variational BNN trainer and experiment runner"};
  app.require_subcommand(1);

  std::string config_path, out_dir = ".", grid_spec = "-1.5:1.5:201";
  std::string checkpoint_path, manifest_path, mode_flag;
  std::vector<int> widths = {4, 8, 16, 32, 64, 128, 256};
  std::vector<std::string> modes = {"embedded", "split_head"};
  int n_rows = 1000, workers = 1, epochs = -1, batch = 8;
  std::uint64_t seed = 0;
  bool seed_set = false, corrupt_adjoint = false;
  double tolerance = 1e-4;

  const auto add_common = [&](CLI::App* cmd, bool with_out = true) {
    cmd->add_option("--config", config_path, "JSON config file");
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&](std::uint64_t s) { seed = s; seed_set = true; },
        "override the config seed");
    if (with_out) cmd->add_option("--out", out_dir, "output directory");
  };

  CLI::App* gen = app.add_subcommand("generate", "write a data CSV");
  add_common(gen);
  gen->add_option("-n,--n", n_rows, "number of rows");

  CLI::App* train = app.add_subcommand("train", "train one network");
  add_common(train);
  train->add_option("--epochs", epochs, "override total_epochs");

  CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a grid");
  eval->add_option("checkpoint", checkpoint_path, "checkpoint file")
      ->required();
  eval->add_option("--grid", grid_spec, "lo:hi:n evaluation grid");
  eval->add_option("--out", out_dir, "output directory");

  CLI::App* sweep = app.add_subcommand("sweep", "width/mode training sweep");
  add_common(sweep);
  sweep->add_option("--widths", widths, "hidden widths")->delimiter(',');
  sweep->add_option("--modes", modes, "head modes")->delimiter(',');
  sweep->add_option("--epochs", epochs, "override total_epochs");
  sweep->add_option("--grid", grid_spec, "lo:hi:n evaluation grid");
  sweep->add_option("--workers", workers, "parallel cell workers");

  CLI::App* gradcheck =
      app.add_subcommand("gradcheck", "finite-difference gradient check");
  add_common(gradcheck, false);
  gradcheck->add_option("--width", widths, "hidden widths")->delimiter(',');
  gradcheck->add_option("--mode", mode_flag, "head mode");
  gradcheck->add_option("--tolerance", tolerance, "relative tolerance");
  gradcheck->add_option("--batch", batch, "batch size");
  gradcheck->add_flag("--corrupt-adjoint", corrupt_adjoint,
                      "test hook: corrupt the analytic gradient");

  CLI::App* replay =
      app.add_subcommand("replay", "re-run a command from its manifest");
  replay->add_option("manifest", manifest_path, "manifest.json path")
      ->required();
  replay->add_option("--out", out_dir, "output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    FullConfig cfg;
    cfg.arch.hidden_sizes = {4};
    if (!config_path.empty())
      cfg = full_config_from_json(read_json_file(config_path));
    if (seed_set) cfg.train.seed = seed;
    if (epochs > 0) cfg.train.total_epochs = epochs;

    if (gen->parsed()) {
      run_generate(cfg, n_rows, out_dir);
      return kExitOk;
    }
    if (train->parsed()) {
      run_train(cfg, out_dir);
      return kExitOk;
    }
    if (eval->parsed()) {
      run_eval(checkpoint_path, parse_grid(grid_spec), out_dir);
      return kExitOk;
    }
    if (sweep->parsed())
      return run_sweep_cmd(cfg, widths, modes, parse_grid(grid_spec), workers,
                           out_dir);
    if (gradcheck->parsed()) {
      if (gradcheck->count("--width")) cfg.arch.hidden_sizes = widths;
      if (!mode_flag.empty())
        cfg.arch.head_mode = head_mode_from_string(mode_flag);
      return run_gradcheck(cfg, tolerance, batch, corrupt_adjoint);
    }
    if (replay->parsed()) return run_replay(manifest_path, out_dir);
    return kExitUsage;
  } catch (const NumericError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  }
}
