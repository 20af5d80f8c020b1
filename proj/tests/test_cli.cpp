#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

namespace fs = std::filesystem;

namespace {

std::string cli_path() {
  const char* p = std::getenv("BNN_CLI");
  REQUIRE_MESSAGE(p != nullptr, "BNN_CLI must point at the bnn binary");
  return p;
}

int run(const std::string& args) {
  const std::string cmd = cli_path() + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  REQUIRE(status != -1);
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  REQUIRE_MESSAGE(in.good(), "missing file: ", p.string());
  std::stringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name)
      : path(fs::temp_directory_path() / ("bnn_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

void check_dirs_equal(const fs::path& a, const fs::path& b) {
  int compared = 0;
  for (const auto& entry : fs::directory_iterator(a)) {
    const fs::path other = b / entry.path().filename();
    CHECK_MESSAGE(slurp(entry.path()) == slurp(other),
                  "byte mismatch: ", entry.path().filename().string());
    ++compared;
  }
  CHECK(compared > 0);
}

}  // namespace

TEST_CASE("cli: generate writes csv and replays byte-identically") {
  TempDir a("gen_a"), b("gen_b");
  CHECK(run("generate --seed 42 -n 50 --out " + a.path.string()) == 0);
  const std::string csv = slurp(a.path / "data.csv");
  CHECK(csv.rfind("x,y\n", 0) == 0);
  CHECK(run("replay " + (a.path / "manifest.json").string() + " --out " +
            b.path.string()) == 0);
  check_dirs_equal(a.path, b.path);
}

TEST_CASE("cli: generate with n=0 emits only the header") {
  TempDir d("gen_zero");
  CHECK(run("generate --seed 1 -n 0 --out " + d.path.string()) == 0);
  CHECK(slurp(d.path / "data.csv") == "x,y\n");
}

TEST_CASE("cli: train, eval, and their replays") {
  TempDir tr("train_a"), tr2("train_b"), ev("eval_a"), ev2("eval_b");
  CHECK(run("train --seed 7 --epochs 25 --out " + tr.path.string()) == 0);
  CHECK(fs::exists(tr.path / "checkpoint.json"));
  // one metrics line per epoch
  std::istringstream lines(slurp(tr.path / "metrics.jsonl"));
  int n = 0;
  std::string line;
  while (std::getline(lines, line)) ++n;
  CHECK(n == 25);

  CHECK(run("replay " + (tr.path / "manifest.json").string() + " --out " +
            tr2.path.string()) == 0);
  check_dirs_equal(tr.path, tr2.path);

  CHECK(run("eval " + (tr.path / "checkpoint.json").string() +
            " --grid -1:1:31 --out " + ev.path.string()) == 0);
  const std::string csv = slurp(ev.path / "predictions.csv");
  CHECK(csv.rfind("x,pred_mean,pred_var_total,pred_var_aleatoric,"
                  "pred_var_epistemic\n",
                  0) == 0);
  // embedded mode leaves the decomposition columns empty
  CHECK(csv.find(",,\n") != std::string::npos);
  CHECK(run("replay " + (ev.path / "manifest.json").string() + " --out " +
            ev2.path.string()) == 0);
  check_dirs_equal(ev.path, ev2.path);
}

TEST_CASE("cli: split-head eval rows decompose the total variance") {
  TempDir tr("train_split"), ev("eval_split");
  std::ofstream cfg(tr.path / "config.json");
  cfg << R"({"architecture": {"hidden_sizes": [4], "head_mode": "split_head"},
             "train": {"total_epochs": 15, "seed": 3}})";
  cfg.close();
  CHECK(run("train --config " + (tr.path / "config.json").string() +
            " --out " + tr.path.string()) == 0);
  CHECK(run("eval " + (tr.path / "checkpoint.json").string() +
            " --grid -1:1:11 --out " + ev.path.string()) == 0);
  std::istringstream lines(slurp(ev.path / "predictions.csv"));
  std::string line;
  std::getline(lines, line);  // header
  int rows = 0;
  while (std::getline(lines, line)) {
    std::istringstream cells(line);
    std::string cell;
    double vals[5];
    for (int i = 0; i < 5; ++i) {
      std::getline(cells, cell, ',');
      vals[i] = std::stod(cell);
    }
    CHECK(std::abs(vals[2] - vals[3] - vals[4]) <= 1e-12);
    ++rows;
  }
  CHECK(rows == 11);
}

TEST_CASE("cli: sweep table, per-cell artifacts, and replay") {
  TempDir sw("sweep_a"), sw2("sweep_b");
  CHECK(run("sweep --seed 11 --epochs 12 --widths 2,4 --modes "
            "embedded,split_head --grid -1:1:11 --workers 2 --out " +
            sw.path.string()) == 0);
  const std::string table = slurp(sw.path / "sweep.csv");
  CHECK(table.rfind("width,mode,param_count,best_val_nll,in_dist_nll,"
                    "out_dist_nll\n",
                    0) == 0);
  std::istringstream lines(table);
  std::string line;
  std::getline(lines, line);
  int rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 4);
  CHECK(fs::exists(sw.path / "predictions_w2_embedded.csv"));
  CHECK(fs::exists(sw.path / "predictions_w4_split_head.csv"));

  CHECK(run("replay " + (sw.path / "manifest.json").string() + " --out " +
            sw2.path.string()) == 0);
  check_dirs_equal(sw.path, sw2.path);
}

TEST_CASE("cli: gradcheck passes and the corruption hook fails") {
  CHECK(run("gradcheck --seed 5 --width 4 --mode embedded") == 0);
  CHECK(run("gradcheck --seed 5 --width 4 --mode split_head") == 0);
  CHECK(run("gradcheck --seed 5 --width 4 --corrupt-adjoint") == 2);
}

TEST_CASE("cli: exit codes for usage, config, and io errors") {
  TempDir d("errs");
  CHECK(run("definitely-not-a-command") == 1);
  CHECK(run("train --config /no/such/config.json --out " + d.path.string()) ==
        3);
  std::ofstream bad(d.path / "bad.json");
  bad << R"({"train": {"learning_rte": 0.1}})";
  bad.close();
  CHECK(run("train --config " + (d.path / "bad.json").string() + " --out " +
            d.path.string()) == 1);
  std::ofstream mangled(d.path / "mangled.json");
  mangled << "{not json";
  mangled.close();
  CHECK(run("train --config " + (d.path / "mangled.json").string() +
            " --out " + d.path.string()) == 1);
  CHECK(run("eval /no/such/checkpoint.json --out " + d.path.string()) == 3);
}

TEST_CASE("cli: numerical failure surfaces exit code 2") {
  TempDir d("numfail");
  std::ofstream cfg(d.path / "config.json");
  cfg << R"({"train": {"total_epochs": 40, "seed": 2, "learning_rate": 1e6}})";
  cfg.close();
  CHECK(run("train --config " + (d.path / "config.json").string() + " --out " +
            d.path.string()) == 2);
}
