#include "brm.h"

#include <cstring>
#include <exception>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "core/bon.hpp"
#include "core/io.hpp"
#include "core/laplace.hpp"
#include "core/numerics.hpp"
#include "core/reward_model.hpp"
#include "core/scoring.hpp"
#include "core/synthetic.hpp"
#include "core/verify.hpp"
#include "core/version.hpp"

struct brm_net {
  brm::RewardNet impl;
};
struct brm_dataset {
  std::vector<brm::PreferenceExample> impl;
};
struct brm_posterior {
  brm::PosteriorState impl;
};
struct brm_pool {
  brm::ResponsePool impl;
};

namespace {

thread_local std::string g_last_error;

brm_status fail(brm_status status, const std::string& message) {
  g_last_error = message;
  return status;
}

template <typename Fn>
brm_status guarded(Fn&& fn) {
  try {
    fn();
    return BRM_OK;
  } catch (const brm::SchemaError& e) {
    return fail(BRM_ERR_SCHEMA, e.what());
  } catch (const brm::NumericError& e) {
    return fail(BRM_ERR_NUMERIC, e.what());
  } catch (const brm::UsageError& e) {
    return fail(BRM_ERR_USAGE, e.what());
  } catch (const std::exception& e) {
    return fail(BRM_ERR_USAGE, e.what());
  }
}

brm_status require_args(bool ok) {
  if (!ok) return fail(BRM_ERR_USAGE, "null argument");
  return BRM_OK;
}

brm::Penalty to_penalty(brm_penalty_kind kind, double k) {
  switch (kind) {
    case BRM_PENALTY_NONE:
      return {brm::PenaltyKind::kNone, k};
    case BRM_PENALTY_STD:
      return {brm::PenaltyKind::kStd, k};
    case BRM_PENALTY_VAR:
      return {brm::PenaltyKind::kVar, k};
  }
  throw brm::UsageError("invalid penalty kind value");
}

std::vector<std::string> split_list(const std::string& csv) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= csv.size()) {
    const std::size_t comma = csv.find(',', start);
    if (comma == std::string::npos) {
      out.push_back(csv.substr(start));
      break;
    }
    out.push_back(csv.substr(start, comma - start));
    start = comma + 1;
  }
  return out;
}

}  // namespace

extern "C" {

const char* brm_version(void) { return brm::kLibraryVersion; }

const char* brm_last_error(void) { return g_last_error.c_str(); }

brm_status brm_log_sigmoid(double z, double* out) {
  if (brm_status s = require_args(out != nullptr); s != BRM_OK) return s;
  return guarded([&] { *out = brm::log_sigmoid(z); });
}

brm_status brm_bt_probability(double reward_winner, double reward_loser, double* out) {
  if (brm_status s = require_args(out != nullptr); s != BRM_OK) return s;
  return guarded([&] { *out = brm::bt_probability(reward_winner, reward_loser); });
}

brm_status brm_kl_bon(uint64_t n, double* out) {
  if (brm_status s = require_args(out != nullptr); s != BRM_OK) return s;
  return guarded([&] { *out = brm::kl_bon(n); });
}

brm_status brm_bon_weights(uint64_t n_total, uint64_t n, double* weights) {
  if (brm_status s = require_args(weights != nullptr); s != BRM_OK) return s;
  return guarded([&] {
    const brm::Vec w = brm::bon_weights(n_total, n);
    std::memcpy(weights, w.data(), w.size() * sizeof(double));
  });
}

brm_status brm_bon_expected_reward(const double* proxy, const double* eval,
                                   uint64_t n_total, uint64_t n, double* out) {
  if (brm_status s = require_args(proxy && eval && out); s != BRM_OK) return s;
  return guarded([&] {
    *out = brm::bon_expected_reward(std::span(proxy, n_total), std::span(eval, n_total), n);
  });
}

brm_status brm_penalized_reward(double mean, double variance, brm_penalty_kind kind,
                                double k, double* out) {
  if (brm_status s = require_args(out != nullptr); s != BRM_OK) return s;
  return guarded([&] {
    *out = brm::penalized_reward(brm::RewardDistribution{mean, variance},
                                 to_penalty(kind, k));
  });
}

brm_status brm_ensemble_penalized_reward(const double* means, const double* variances,
                                         uint64_t n_members, brm_penalty_kind kind,
                                         double k, double* out) {
  if (brm_status s = require_args(means && variances && out); s != BRM_OK) return s;
  return guarded([&] {
    std::vector<brm::RewardDistribution> members(n_members);
    for (uint64_t i = 0; i < n_members; ++i) members[i] = {means[i], variances[i]};
    *out = brm::ensemble_penalized_reward(members, to_penalty(kind, k));
  });
}

brm_status brm_mean_ensemble_reward(const double* means, uint64_t n_members, double* out) {
  if (brm_status s = require_args(means && out); s != BRM_OK) return s;
  return guarded([&] { *out = brm::mean_ensemble_reward(std::span(means, n_members)); });
}

brm_status brm_net_create(uint64_t d_in, const uint64_t* widths, uint64_t n_widths,
                          uint64_t rank, brm_activation activation, double head_scale,
                          double bias_scale, uint64_t seed, brm_net** out) {
  if (brm_status s = require_args(out && (widths || n_widths == 0)); s != BRM_OK) return s;
  return guarded([&] {
    brm::NetSpec spec;
    spec.d_in = d_in;
    spec.widths.assign(widths, widths + n_widths);
    spec.rank = rank;
    spec.activation = activation == BRM_ACTIVATION_LINEAR ? brm::Activation::kLinear
                                                          : brm::Activation::kTanh;
    spec.head_scale = head_scale;
    spec.bias_scale = bias_scale;
    *out = new brm_net{brm::make_net(spec, seed)};
  });
}

brm_status brm_net_load(const char* path, brm_net** out) {
  if (brm_status s = require_args(path && out); s != BRM_OK) return s;
  return guarded([&] { *out = new brm_net{brm::load_net(path)}; });
}

brm_status brm_net_save(const brm_net* net, const char* path) {
  if (brm_status s = require_args(net && path); s != BRM_OK) return s;
  return guarded([&] { brm::save_net(path, net->impl); });
}

void brm_net_free(brm_net* net) { delete net; }

brm_status brm_net_input_dim(const brm_net* net, uint64_t* out) {
  if (brm_status s = require_args(net && out); s != BRM_OK) return s;
  *out = net->impl.input_dim();
  return BRM_OK;
}

brm_status brm_net_param_count(const brm_net* net, uint64_t* out) {
  if (brm_status s = require_args(net && out); s != BRM_OK) return s;
  *out = brm::param_count(net->impl);
  return BRM_OK;
}

brm_status brm_net_forward(const brm_net* net, const double* x, uint64_t dim, double* out) {
  if (brm_status s = require_args(net && x && out); s != BRM_OK) return s;
  return guarded([&] { *out = brm::forward(net->impl, std::span(x, dim)); });
}

brm_status brm_dataset_load(const char* path, brm_dataset** out) {
  if (brm_status s = require_args(path && out); s != BRM_OK) return s;
  return guarded([&] { *out = new brm_dataset{brm::load_preferences(path)}; });
}

void brm_dataset_free(brm_dataset* dataset) { delete dataset; }

brm_status brm_dataset_size(const brm_dataset* dataset, uint64_t* out) {
  if (brm_status s = require_args(dataset && out); s != BRM_OK) return s;
  *out = dataset->impl.size();
  return BRM_OK;
}

brm_status brm_dataset_dim(const brm_dataset* dataset, uint64_t* out) {
  if (brm_status s = require_args(dataset && out); s != BRM_OK) return s;
  *out = dataset->impl.empty() ? 0 : dataset->impl.front().winner.size();
  return BRM_OK;
}

brm_status brm_dataset_fingerprint(const brm_dataset* dataset, uint64_t* out) {
  if (brm_status s = require_args(dataset && out); s != BRM_OK) return s;
  *out = brm::dataset_fingerprint(dataset->impl);
  return BRM_OK;
}

brm_status brm_train_map(const brm_net* net, const brm_dataset* dataset,
                         const brm_train_config* cfg, double* trace, brm_net** out) {
  if (brm_status s = require_args(net && dataset && cfg && out); s != BRM_OK) return s;
  return guarded([&] {
    brm::TrainConfig tc;
    tc.learning_rate = cfg->learning_rate;
    tc.steps = cfg->steps;
    tc.batch_size = cfg->batch_size;
    tc.prior_precision = cfg->prior_precision;
    tc.seed = cfg->seed;
    brm::TrainResult result = brm::train_map(net->impl, dataset->impl, tc);
    if (trace != nullptr) {
      std::memcpy(trace, result.trace.data(), result.trace.size() * sizeof(double));
    }
    *out = new brm_net{std::move(result.net)};
  });
}

brm_status brm_fit_laplace(const brm_net* net, const brm_dataset* dataset, double lambda,
                           brm_posterior** out) {
  if (brm_status s = require_args(net && dataset && out); s != BRM_OK) return s;
  return guarded([&] {
    *out = new brm_posterior{brm::fit_ggn_posterior(net->impl, dataset->impl, lambda)};
  });
}

brm_status brm_posterior_load(const char* path, brm_posterior** out) {
  if (brm_status s = require_args(path && out); s != BRM_OK) return s;
  return guarded([&] { *out = new brm_posterior{brm::load_posterior(path)}; });
}

brm_status brm_posterior_save(const brm_posterior* posterior, const char* path) {
  if (brm_status s = require_args(posterior && path); s != BRM_OK) return s;
  return guarded([&] { brm::save_posterior(path, posterior->impl); });
}

void brm_posterior_free(brm_posterior* posterior) { delete posterior; }

brm_status brm_predictive_reward(const brm_posterior* posterior, const brm_net* net,
                                 const double* x, uint64_t dim, double* mean,
                                 double* variance) {
  if (brm_status s = require_args(posterior && net && x && mean && variance); s != BRM_OK) {
    return s;
  }
  return guarded([&] {
    const brm::RewardDistribution dist =
        brm::predictive_reward(posterior->impl, net->impl, std::span(x, dim));
    *mean = dist.mean;
    *variance = dist.variance;
  });
}

brm_status brm_pool_load(const char* path, brm_pool** out) {
  if (brm_status s = require_args(path && out); s != BRM_OK) return s;
  return guarded([&] { *out = new brm_pool{brm::load_pool(path)}; });
}

void brm_pool_free(brm_pool* pool) { delete pool; }

brm_status brm_pool_num_prompts(const brm_pool* pool, uint64_t* out) {
  if (brm_status s = require_args(pool && out); s != BRM_OK) return s;
  *out = pool->impl.prompts.size();
  return BRM_OK;
}

brm_status brm_bon_curve_to_csv(const brm_pool* pool, const char* ranking,
                                const char* evaluators, const uint64_t* ns, uint64_t n_ns,
                                const char* out_path) {
  if (brm_status s = require_args(pool && ranking && ns && out_path); s != BRM_OK) return s;
  return guarded([&] {
    std::vector<std::size_t> n_list(ns, ns + n_ns);
    std::vector<std::string> eval_list;
    if (evaluators != nullptr && std::strlen(evaluators) > 0) {
      eval_list = split_list(evaluators);
    } else {
      eval_list.push_back("proxy");
      for (const std::string& name : pool->impl.evaluators) eval_list.push_back(name);
    }
    const auto points = brm::bon_curve(pool->impl, n_list, ranking, eval_list);
    std::vector<brm::CurveRow> rows;
    for (const auto& point : points) {
      for (const auto& [name, value] : point.values) {
        rows.push_back(brm::CurveRow{ranking, 0.0, point.n, point.kl, name, value});
      }
    }
    brm::save_curve(out_path, rows);
  });
}

brm_status brm_cmd_gen_data(const char* config_path, const uint64_t* seed_override,
                            const char* out_dir) {
  if (brm_status s = require_args(config_path && out_dir); s != BRM_OK) return s;
  return guarded([&] {
    brm::WorldConfig cfg = brm::load_world_config(config_path);
    if (seed_override != nullptr) cfg.seed = *seed_override;
    brm::write_gen_data(cfg, out_dir);
  });
}

brm_status brm_cmd_train_reward(const char* config_path, const char* data_csv,
                                const uint64_t* seed_override, const char* out_net_path,
                                const char* trace_csv_or_null) {
  if (brm_status s = require_args(config_path && data_csv && out_net_path); s != BRM_OK) {
    return s;
  }
  return guarded([&] {
    brm::WorldConfig cfg = brm::load_world_config(config_path);
    if (seed_override != nullptr) cfg.seed = *seed_override;
    const auto data = brm::load_preferences(data_csv);
    brm::NetSpec spec = cfg.proxy;
    spec.d_in = data.front().winner.size();
    brm::TrainConfig tc = cfg.train;
    tc.seed = cfg.seed;
    const brm::RewardNet init = brm::make_net(spec, cfg.seed);
    brm::TrainResult result = brm::train_map(init, data, tc);
    brm::save_net(out_net_path, result.net);
    if (trace_csv_or_null != nullptr) {
      std::ofstream trace(trace_csv_or_null);
      if (!trace) throw brm::UsageError(std::string("cannot open '") + trace_csv_or_null +
                                        "' for writing");
      trace << "step,loss\n";
      for (std::size_t i = 0; i < result.trace.size(); ++i) {
        trace << i << "," << brm::format_double(result.trace[i]) << "\n";
      }
    }
  });
}

brm_status brm_cmd_fit_laplace(const char* net_path, const char* data_csv,
                               const double* lambda_override,
                               const char* out_posterior_path) {
  if (brm_status s = require_args(net_path && data_csv && out_posterior_path); s != BRM_OK) {
    return s;
  }
  return guarded([&] {
    const brm::RewardNet net = brm::load_net(net_path);
    const auto data = brm::load_preferences(data_csv);
    double lambda;
    if (lambda_override != nullptr) {
      lambda = *lambda_override;
    } else if (net.provenance.present) {
      lambda = net.provenance.lambda;
    } else {
      throw brm::UsageError(
          "fit-laplace: the checkpoint records no training lambda; pass --lambda");
    }
    brm::save_posterior(out_posterior_path, brm::fit_ggn_posterior(net, data, lambda));
  });
}

brm_status brm_cmd_score_pool(const char* const* net_paths, uint64_t n_members,
                              const char* const* posterior_paths,
                              const char* responses_csv, const brm_penalty_kind* kinds,
                              const double* ks, uint64_t n_penalties,
                              const char* out_pool_csv) {
  if (brm_status s = require_args(net_paths && n_members >= 1 && responses_csv &&
                                  out_pool_csv && (n_penalties == 0 || (kinds && ks)));
      s != BRM_OK) {
    return s;
  }
  return guarded([&] {
    if (n_penalties > 0 && posterior_paths == nullptr) {
      throw brm::UsageError("score: penalties require posterior checkpoints");
    }
    std::vector<brm::RewardNet> nets;
    std::vector<brm::PosteriorState> posteriors;
    for (uint64_t m = 0; m < n_members; ++m) {
      nets.push_back(brm::load_net(net_paths[m]));
      if (posterior_paths != nullptr) {
        posteriors.push_back(brm::load_posterior(posterior_paths[m]));
      }
    }
    const brm::FeaturePool responses = brm::load_feature_pool(responses_csv);
    const bool with_posterior = !posteriors.empty();

    std::vector<std::pair<brm::PenaltyKind, double>> penalties;
    for (uint64_t i = 0; i < n_penalties; ++i) {
      penalties.emplace_back(to_penalty(kinds[i], ks[i]).kind, ks[i]);
    }

    brm::ResponsePool pool;
    for (const std::string& name : responses.evaluators) pool.evaluators.push_back(name);
    if (with_posterior) pool.evaluators.push_back("lambda");
    for (const auto& [kind, k] : penalties) {
      pool.evaluators.push_back(brm::penalty_column_name("la", kind, k));
    }
    if (n_members > 1) {
      pool.evaluators.push_back("ens");
      for (const auto& [kind, k] : penalties) {
        pool.evaluators.push_back(brm::penalty_column_name("la_ens", kind, k));
      }
    }

    std::vector<brm::RewardDistribution> dists(n_members);
    brm::Vec means(n_members);
    for (const brm::FeaturePool::Prompt& prompt : responses.prompts) {
      brm::PromptResponses out;
      out.prompt_id = prompt.prompt_id;
      const std::size_t n_resp = prompt.features.size();
      out.proxy.resize(n_resp);
      for (const std::string& c : pool.evaluators) out.evals[c] = brm::Vec(n_resp);
      for (std::size_t r = 0; r < n_resp; ++r) {
        const brm::Vec& x = prompt.features[r];
        for (uint64_t m = 0; m < n_members; ++m) {
          if (with_posterior) {
            dists[m] = brm::predictive_reward(posteriors[m], nets[m], x);
          } else {
            dists[m] = {brm::forward(nets[m], x), 0.0};
          }
          means[m] = dists[m].mean;
        }
        out.proxy[r] = dists[0].mean;
        for (const std::string& name : responses.evaluators) {
          out.evals[name][r] = prompt.evals.at(name)[r];
        }
        if (with_posterior) out.evals["lambda"][r] = dists[0].variance;
        for (const auto& [kind, k] : penalties) {
          out.evals[brm::penalty_column_name("la", kind, k)][r] =
              brm::penalized_reward(dists[0], brm::Penalty{kind, k});
        }
        if (n_members > 1) {
          out.evals["ens"][r] = brm::mean_ensemble_reward(means);
          for (const auto& [kind, k] : penalties) {
            out.evals[brm::penalty_column_name("la_ens", kind, k)][r] =
                brm::ensemble_penalized_reward(dists, brm::Penalty{kind, k});
          }
        }
      }
      pool.prompts.push_back(std::move(out));
    }
    brm::save_pool(out_pool_csv, pool);
  });
}

brm_status brm_cmd_experiment(const char* config_path, const uint64_t* seed_override,
                              const double* ks, uint64_t n_ks, const uint64_t* ns,
                              uint64_t n_ns, const char* out_dir) {
  if (brm_status s = require_args(config_path && out_dir); s != BRM_OK) return s;
  return guarded([&] {
    brm::WorldConfig cfg = brm::load_world_config(config_path);
    if (seed_override != nullptr) cfg.seed = *seed_override;
    if (ks != nullptr && n_ks > 0) cfg.penalty_ks.assign(ks, ks + n_ks);
    if (ns != nullptr && n_ns > 0) {
      cfg.n_grid.clear();
      for (uint64_t i = 0; i < n_ns; ++i) {
        if (ns[i] < 1 || ns[i] > cfg.responses_per_prompt) {
          throw brm::UsageError("experiment: n = " + std::to_string(ns[i]) +
                                " outside [1, responses_per_prompt]");
        }
        cfg.n_grid.push_back(ns[i]);
      }
    }
    brm::write_experiment(cfg, out_dir);
  });
}

brm_status brm_verify(unsigned fault_flags) {
  return guarded([&] {
    brm::VerifyOptions opts;
    opts.fault_bon_weights = (fault_flags & BRM_VERIFY_FAULT_BON_WEIGHTS) != 0;
    const int failures = brm::run_verify(opts, std::cout);
    if (failures != 0) {
      throw brm::NumericError(std::to_string(failures) + " verification check(s) failed");
    }
  });
}

}  // extern "C"
