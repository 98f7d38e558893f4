// Drives the installed brm binary end to end. Each command runs in a child
// process; exit codes follow the documented taxonomy.

#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "core/io.hpp"

namespace fs = std::filesystem;

namespace {

const char* kCli = BRM_CLI_PATH;

int run(const std::string& args, const fs::path& log) {
  const std::string cmd =
      std::string(kCli) + " " + args + " > " + log.string() + " 2>&1";
  const int raw = std::system(cmd.c_str());
  REQUIRE(raw != -1);
  return WEXITSTATUS(raw);
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path);
  REQUIRE(in.good());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

fs::path temp_dir(const std::string& tag) {
  const fs::path dir = fs::temp_directory_path() / ("brm_cli_" + tag);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_tiny_config(const fs::path& path, int seed = 777) {
  std::ofstream out(path);
  out << R"({
  "format": "brm-config",
  "format_version": 1,
  "d_in": 4,
  "train_prompts": 10,
  "val_prompts": 4,
  "responses_per_prompt": 16,
  "pairs_per_prompt": 2,
  "policy_spread": 1.5,
  "label_mode": "sample",
  "seed": )"
      << seed << R"(,
  "gold": {"widths": [12, 12], "head_scale": 0.3, "bias_scale": 0.5},
  "proxy": {"widths": [6, 6], "rank": 2, "head_scale": 0.1, "bias_scale": 0.5},
  "train": {"learning_rate": 0.05, "steps": 80, "batch_size": 8, "prior_precision": 1.0},
  "ensemble_size": 2,
  "penalty_ks": [0, 1],
  "n_grid": [1, 2, 16]
}
)";
}

}  // namespace

TEST_CASE("usage errors exit with code 2") {
  const fs::path dir = temp_dir("usage");
  CHECK(run("gen-data --config " + (dir / "absent.json").string() + " --out " +
                (dir / "out").string(),
            dir / "log.txt") == 2);
  CHECK(slurp(dir / "log.txt").find("error") != std::string::npos);
  CHECK(run("definitely-not-a-command", dir / "log2.txt") == 2);
  CHECK(run("gen-data", dir / "log3.txt") == 2);
}

TEST_CASE("schema errors exit with code 3") {
  const fs::path dir = temp_dir("schema");
  {
    std::ofstream bad(dir / "bad.json");
    bad << R"({"format":"brm-config","format_version":99})";
  }
  CHECK(run("gen-data --config " + (dir / "bad.json").string() + " --out " +
                (dir / "out").string(),
            dir / "log.txt") == 3);
}

TEST_CASE("gen-data is idempotent and manifests carry the config hash") {
  const fs::path dir = temp_dir("gendata");
  write_tiny_config(dir / "config.json");
  const std::string base = "gen-data --config " + (dir / "config.json").string();
  CHECK(run(base + " --out " + (dir / "a").string(), dir / "log_a.txt") == 0);
  CHECK(run(base + " --out " + (dir / "b").string(), dir / "log_b.txt") == 0);
  for (const char* name : {"preferences.csv", "val_responses.csv", "manifest.json"}) {
    CHECK(slurp(dir / "a" / name) == slurp(dir / "b" / name));
  }
  const std::string manifest = slurp(dir / "a" / "manifest.json");
  CHECK(manifest.find("config_hash") != std::string::npos);
  CHECK(manifest.find("0x") != std::string::npos);

  // A different seed changes the data.
  CHECK(run(base + " --seed 31337 --out " + (dir / "c").string(), dir / "log_c.txt") == 0);
  CHECK(slurp(dir / "a" / "preferences.csv") != slurp(dir / "c" / "preferences.csv"));
}

TEST_CASE("train, fit, score, curve pipeline") {
  const fs::path dir = temp_dir("pipeline");
  write_tiny_config(dir / "config.json");
  const std::string config = (dir / "config.json").string();

  REQUIRE(run("gen-data --config " + config + " --out " + (dir / "data").string(),
              dir / "log1.txt") == 0);
  const std::string prefs = (dir / "data" / "preferences.csv").string();
  const std::string net = (dir / "net.json").string();
  const std::string post = (dir / "posterior.json").string();

  REQUIRE(run("train-reward --config " + config + " --data " + prefs + " --out " + net +
                  " --trace " + (dir / "trace.csv").string(),
              dir / "log2.txt") == 0);
  CHECK(slurp(dir / "trace.csv").substr(0, 9) == "step,loss");

  REQUIRE(run("fit-laplace --net " + net + " --data " + prefs + " --out " + post,
              dir / "log3.txt") == 0);

  // Single-point scoring: k = 0 keeps the penalized value at the mean.
  REQUIRE(run("score --net " + net + " --posterior " + post +
                  " --x 0.1 --x -0.2 --x 0.3 --x 0.4 --penalty var --k 0,2",
              dir / "score.txt") == 0);
  const std::string score_out = slurp(dir / "score.txt");
  double mean = 0.0, lambda = -1.0, pen_k0 = 0.0, pen_k2 = 0.0;
  {
    std::istringstream in(score_out);
    std::string word;
    while (in >> word) {
      if (word == "mean") in >> mean;
      if (word == "lambda") in >> lambda;
      if (word == "penalized") {
        std::string kind, kspec;
        double value;
        in >> kind >> kspec >> value;
        if (kspec == "k=0") pen_k0 = value;
        if (kspec == "k=2") pen_k2 = value;
      }
    }
  }
  CHECK(lambda >= 0.0);
  CHECK(pen_k0 == mean);
  CHECK(pen_k2 == doctest::Approx(mean - 2.0 * lambda).epsilon(1e-12));

  // File scoring + curve.
  const std::string responses = (dir / "data" / "val_responses.csv").string();
  const std::string pool = (dir / "pool.csv").string();
  REQUIRE(run("score --net " + net + " --posterior " + post + " --responses " + responses +
                  " --out " + pool + " --penalty var --k 1",
              dir / "log4.txt") == 0);

  const brm::ResponsePool loaded = brm::load_pool(pool);
  CHECK(loaded.prompts.size() == 4);
  REQUIRE(loaded.evaluators ==
          std::vector<std::string>{"gold", "lambda", "la_var_k1"});

  const std::string curve = (dir / "curve.csv").string();
  REQUIRE(run("bon-curve --pool " + pool + " --n 1 --evaluator gold --out " + curve,
              dir / "log5.txt") == 0);
  // n = 1 point equals the grand mean of the gold column.
  double total = 0.0;
  std::size_t count = 0;
  for (const auto& prompt : loaded.prompts) {
    for (double v : prompt.evals.at("gold")) {
      total += v;
      ++count;
    }
  }
  const std::string curve_text = slurp(curve);
  std::istringstream lines(curve_text);
  std::string header, row;
  std::getline(lines, header);
  std::getline(lines, row);
  const double value = std::stod(row.substr(row.rfind(',') + 1));
  CHECK(value == doctest::Approx(total / count).epsilon(1e-12));

  // n beyond the pool size is a usage error.
  CHECK(run("bon-curve --pool " + pool + " --n 17 --evaluator gold --out " + curve,
            dir / "log6.txt") == 2);
  // Unknown evaluator is a usage error.
  CHECK(run("bon-curve --pool " + pool + " --n 1 --evaluator silver --out " + curve,
            dir / "log7.txt") == 2);
}

TEST_CASE("experiment command writes the full table") {
  const fs::path dir = temp_dir("experiment");
  write_tiny_config(dir / "config.json");
  const std::string config = (dir / "config.json").string();
  REQUIRE(run("experiment --config " + config + " --out " + (dir / "run").string(),
              dir / "log.txt") == 0);

  // Row count: (map, ens, 4 penalized families x |ks|) x |n| x 2 evaluators.
  const std::string curve = slurp(dir / "run" / "curve.csv");
  std::size_t rows = 0;
  for (char c : curve) rows += c == '\n' ? 1 : 0;
  const std::size_t methods = 2 + 4 * 2;
  CHECK(rows == 1 + methods * 3 * 2);

  for (const char* name :
       {"preferences.csv", "val_responses.csv", "pool.csv", "curve.csv", "manifest.json"}) {
    CHECK(fs::exists(dir / "run" / name));
  }
}

TEST_CASE("verify command and its negative control") {
  const fs::path dir = temp_dir("verify");
  CHECK(run("verify", dir / "ok.txt") == 0);
  const std::string report = slurp(dir / "ok.txt");
  CHECK(report.find("PASS gradient-fd") != std::string::npos);
  CHECK(report.find("PASS bon-enumeration") != std::string::npos);
  CHECK(report.find("FAIL") == std::string::npos);
  // At least four oracle families in the report.
  std::size_t passes = 0;
  for (std::size_t pos = report.find("PASS"); pos != std::string::npos;
       pos = report.find("PASS", pos + 1)) {
    ++passes;
  }
  CHECK(passes >= 4);

  CHECK(run("verify --fault-bon-weights", dir / "fault.txt") == 4);
  CHECK(slurp(dir / "fault.txt").find("FAIL bon-weight-identity") != std::string::npos);
}
