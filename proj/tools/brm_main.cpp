// brm command-line tool. Links the C API only; all computation lives in the
// shared library. Exit codes: 0 success, 2 usage, 3 schema/version,
// 4 numerical failure.

#include <brm.h>

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

namespace {

int report(brm_status status) {
  if (status != BRM_OK) {
    std::fprintf(stderr, "error: %s\n", brm_last_error());
  }
  return static_cast<int>(status);
}

std::vector<double> parse_double_list(const std::vector<std::string>& raw) {
  std::vector<double> out;
  for (const std::string& s : raw) out.push_back(std::stod(s));
  return out;
}

struct Handles {
  std::vector<brm_net*> nets;
  std::vector<brm_posterior*> posteriors;
  ~Handles() {
    for (brm_net* n : nets) brm_net_free(n);
    for (brm_posterior* p : posteriors) brm_posterior_free(p);
  }
};

// score with --x: print mean, lambda, and each penalized value.
int score_point(const std::vector<std::string>& net_paths,
                const std::vector<std::string>& posterior_paths,
                const std::vector<double>& x, const std::string& penalty,
                const std::vector<double>& ks) {
  Handles h;
  for (const std::string& path : net_paths) {
    brm_net* net = nullptr;
    if (brm_status s = brm_net_load(path.c_str(), &net); s != BRM_OK) return report(s);
    h.nets.push_back(net);
  }
  for (const std::string& path : posterior_paths) {
    brm_posterior* post = nullptr;
    if (brm_status s = brm_posterior_load(path.c_str(), &post); s != BRM_OK) {
      return report(s);
    }
    h.posteriors.push_back(post);
  }

  std::vector<double> means(h.nets.size()), variances(h.nets.size(), 0.0);
  for (std::size_t m = 0; m < h.nets.size(); ++m) {
    brm_status s;
    if (!h.posteriors.empty()) {
      s = brm_predictive_reward(h.posteriors[m], h.nets[m], x.data(), x.size(), &means[m],
                                &variances[m]);
    } else {
      s = brm_net_forward(h.nets[m], x.data(), x.size(), &means[m]);
    }
    if (s != BRM_OK) return report(s);
  }

  double mean = 0.0;
  if (brm_status s = brm_mean_ensemble_reward(means.data(), means.size(), &mean);
      s != BRM_OK) {
    return report(s);
  }
  std::printf("mean %.17g\n", mean);
  if (!h.posteriors.empty()) {
    if (h.nets.size() == 1) {
      std::printf("lambda %.17g\n", variances[0]);
    } else {
      double var_sum = 0.0;
      for (double v : variances) var_sum += v;
      std::printf("lambda %.17g\n", var_sum / (double(h.nets.size()) * h.nets.size()));
    }
  }
  if (penalty != "none") {
    const brm_penalty_kind kind = penalty == "std" ? BRM_PENALTY_STD : BRM_PENALTY_VAR;
    for (double k : ks) {
      double value = 0.0;
      brm_status s = brm_ensemble_penalized_reward(means.data(), variances.data(),
                                                   means.size(), kind, k, &value);
      if (s != BRM_OK) return report(s);
      std::printf("penalized %s k=%.17g %.17g\n", penalty.c_str(), k, value);
    }
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Bayesian reward-model laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(brm_version()));

  std::string config_path, out_path, data_path, net_path, posterior_path, pool_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> k_raw, net_paths, posterior_paths;
  std::vector<std::uint64_t> n_list;
  std::string penalty = "none";
  std::string evaluator, ranking = "proxy";
  std::vector<double> x_point;
  std::string responses_path, trace_path;
  bool fault_bon = false;

  auto* gen = app.add_subcommand("gen-data", "Generate a synthetic preference dataset");
  gen->add_option("--config", config_path, "world config JSON")->required();
  gen->add_option("--seed", seed, "override the config seed");
  gen->add_option("--out", out_path, "output directory")->required();

  auto* train = app.add_subcommand("train-reward", "Train a proxy reward model (MAP)");
  train->add_option("--config", config_path, "world config JSON")->required();
  train->add_option("--data", data_path, "preference CSV")->required();
  train->add_option("--seed", seed, "override the config seed");
  train->add_option("--out", out_path, "output net checkpoint")->required();
  train->add_option("--trace", trace_path, "optional per-step loss CSV");

  auto* fit = app.add_subcommand("fit-laplace", "Fit the Laplace posterior for a net");
  fit->add_option("--net", net_path, "net checkpoint")->required();
  fit->add_option("--data", data_path, "preference CSV")->required();
  std::optional<double> lambda;
  fit->add_option("--lambda", lambda, "prior precision (default: training lambda)");
  fit->add_option("--out", out_path, "output posterior checkpoint")->required();

  auto* score = app.add_subcommand("score", "Score inputs or a response file");
  score->add_option("--net", net_paths, "net checkpoint(s)")->required();
  score->add_option("--posterior", posterior_paths, "posterior checkpoint(s)");
  score->add_option("--x", x_point, "feature vector (score a single point)");
  score->add_option("--responses", responses_path, "response features CSV");
  score->add_option("--out", out_path, "output pool CSV (with --responses)");
  score->add_option("--penalty", penalty, "none|std|var")
      ->check(CLI::IsMember({"none", "std", "var"}));
  score->add_option("--k", k_raw, "penalty coefficients")->delimiter(',');

  auto* curve = app.add_subcommand("bon-curve", "Best-of-n curve over a pool CSV");
  curve->add_option("--pool", pool_path, "pool CSV")->required();
  curve->add_option("--n", n_list, "subset sizes")->delimiter(',')->required();
  curve->add_option("--ranking", ranking, "ranking column (default proxy)");
  curve->add_option("--evaluator", evaluator, "evaluator column(s), comma separated");
  curve->add_option("--out", out_path, "output curve CSV")->required();

  auto* exp = app.add_subcommand("experiment", "Run the full overoptimization experiment");
  exp->add_option("--config", config_path, "world config JSON")->required();
  exp->add_option("--seed", seed, "override the config seed");
  exp->add_option("--k", k_raw, "override the penalty k grid")->delimiter(',');
  exp->add_option("--n", n_list, "override the n grid")->delimiter(',');
  exp->add_option("--out", out_path, "output directory")->required();

  auto* verify = app.add_subcommand("verify", "Run the built-in oracle suite");
  verify->add_flag("--fault-bon-weights", fault_bon,
                   "negative control: perturb a best-of-n weight");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? 0 : 2;
  }

  const std::uint64_t* seed_ptr = seed.has_value() ? &*seed : nullptr;

  try {
    if (gen->parsed()) {
      return report(brm_cmd_gen_data(config_path.c_str(), seed_ptr, out_path.c_str()));
    }
    if (train->parsed()) {
      return report(brm_cmd_train_reward(config_path.c_str(), data_path.c_str(), seed_ptr,
                                         out_path.c_str(),
                                         trace_path.empty() ? nullptr : trace_path.c_str()));
    }
    if (fit->parsed()) {
      const double* lambda_ptr = lambda.has_value() ? &*lambda : nullptr;
      return report(brm_cmd_fit_laplace(net_path.c_str(), data_path.c_str(), lambda_ptr,
                                        out_path.c_str()));
    }
    if (score->parsed()) {
      const std::vector<double> ks = parse_double_list(k_raw);
      if (penalty != "none" && ks.empty()) {
        std::fprintf(stderr, "error: --penalty %s requires --k\n", penalty.c_str());
        return 2;
      }
      if (!x_point.empty()) {
        return score_point(net_paths, posterior_paths, x_point, penalty, ks);
      }
      if (responses_path.empty() || out_path.empty()) {
        std::fprintf(stderr, "error: score needs either --x or --responses with --out\n");
        return 2;
      }
      if (!posterior_paths.empty() && posterior_paths.size() != net_paths.size()) {
        std::fprintf(stderr, "error: --posterior count must match --net count\n");
        return 2;
      }
      std::vector<const char*> nets_c, posts_c;
      for (const std::string& p : net_paths) nets_c.push_back(p.c_str());
      for (const std::string& p : posterior_paths) posts_c.push_back(p.c_str());
      std::vector<brm_penalty_kind> kinds;
      std::vector<double> kvals;
      if (penalty != "none") {
        for (double k : ks) {
          kinds.push_back(penalty == "std" ? BRM_PENALTY_STD : BRM_PENALTY_VAR);
          kvals.push_back(k);
        }
      }
      return report(brm_cmd_score_pool(
          nets_c.data(), nets_c.size(), posts_c.empty() ? nullptr : posts_c.data(),
          responses_path.c_str(), kinds.empty() ? nullptr : kinds.data(),
          kvals.empty() ? nullptr : kvals.data(), kinds.size(), out_path.c_str()));
    }
    if (curve->parsed()) {
      brm_pool* pool = nullptr;
      if (brm_status s = brm_pool_load(pool_path.c_str(), &pool); s != BRM_OK) {
        return report(s);
      }
      const brm_status s = brm_bon_curve_to_csv(
          pool, ranking.c_str(), evaluator.empty() ? nullptr : evaluator.c_str(),
          n_list.data(), n_list.size(), out_path.c_str());
      brm_pool_free(pool);
      return report(s);
    }
    if (exp->parsed()) {
      const std::vector<double> ks = parse_double_list(k_raw);
      return report(brm_cmd_experiment(config_path.c_str(), seed_ptr,
                                       ks.empty() ? nullptr : ks.data(), ks.size(),
                                       n_list.empty() ? nullptr : n_list.data(),
                                       n_list.size(), out_path.c_str()));
    }
    if (verify->parsed()) {
      return report(brm_verify(fault_bon ? BRM_VERIFY_FAULT_BON_WEIGHTS : 0u));
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 2;
}
