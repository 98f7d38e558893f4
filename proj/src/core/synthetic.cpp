#include "core/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>

#include <json.hpp>

#include "core/version.hpp"

namespace brm {

namespace {

using nlohmann::json;

// Sub-stream indices of the master seed.
constexpr std::uint64_t kGoldStream = 1;
constexpr std::uint64_t kDataStream = 2;
constexpr std::uint64_t kLabelStream = 3;
constexpr std::uint64_t kValStream = 4;
constexpr std::uint64_t kMemberStreamBase = 100;

void require(bool ok, const std::string& message) {
  if (!ok) throw SchemaError(message);
}

void check_keys(const json& obj, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (const auto& item : obj.items()) {
    if (std::find_if(allowed.begin(), allowed.end(), [&](const char* k) {
          return item.key() == k;
        }) == allowed.end()) {
      throw SchemaError(where + ": unknown key '" + item.key() + "'");
    }
  }
}

NetSpec net_spec_from_json(const json& obj, std::size_t d_in, bool adapter,
                           const std::string& where) {
  check_keys(obj,
             adapter ? std::initializer_list<const char*>{"widths", "rank", "head_scale",
                                                          "bias_scale", "w0_scale"}
                     : std::initializer_list<const char*>{"widths", "head_scale",
                                                          "bias_scale", "w0_scale"},
             where);
  NetSpec spec;
  spec.d_in = d_in;
  spec.widths.clear();
  for (const json& w : obj.at("widths")) {
    const auto width = w.get<std::int64_t>();
    require(width >= 1, where + ": widths must be >= 1");
    spec.widths.push_back(static_cast<std::size_t>(width));
  }
  spec.rank = 0;
  if (adapter) {
    const auto rank = obj.at("rank").get<std::int64_t>();
    require(rank >= 1, where + ": rank must be >= 1");
    spec.rank = static_cast<std::size_t>(rank);
  }
  spec.head_scale = obj.at("head_scale").get<double>();
  spec.bias_scale = obj.at("bias_scale").get<double>();
  spec.w0_scale = obj.value("w0_scale", 1.0);
  require(std::isfinite(spec.head_scale) && std::isfinite(spec.bias_scale) &&
              std::isfinite(spec.w0_scale) && spec.w0_scale > 0.0,
          where + ": scales must be finite (w0_scale > 0)");
  return spec;
}

json net_spec_to_json(const NetSpec& spec, bool adapter) {
  json obj;
  obj["widths"] = spec.widths;
  if (adapter) obj["rank"] = spec.rank;
  obj["head_scale"] = spec.head_scale;
  obj["bias_scale"] = spec.bias_scale;
  obj["w0_scale"] = spec.w0_scale;
  return obj;
}

WorldConfig config_from_json(const json& doc, const std::string& where) {
  check_keys(doc,
             {"format", "format_version", "d_in", "train_prompts", "val_prompts",
              "responses_per_prompt", "pairs_per_prompt", "policy_spread", "label_mode",
              "seed", "gold", "proxy", "train", "ensemble_size", "penalty_ks", "n_grid"},
             where);
  WorldConfig cfg;
  cfg.d_in = doc.at("d_in").get<std::size_t>();
  cfg.train_prompts = doc.at("train_prompts").get<std::size_t>();
  cfg.val_prompts = doc.at("val_prompts").get<std::size_t>();
  cfg.responses_per_prompt = doc.at("responses_per_prompt").get<std::size_t>();
  cfg.pairs_per_prompt = doc.at("pairs_per_prompt").get<std::size_t>();
  cfg.policy_spread = doc.at("policy_spread").get<double>();
  const std::string mode = doc.at("label_mode").get<std::string>();
  if (mode == "sample") {
    cfg.label_mode = LabelMode::kSample;
  } else if (mode == "argmax") {
    cfg.label_mode = LabelMode::kArgmax;
  } else {
    throw SchemaError(where + ": label_mode must be sample or argmax");
  }
  cfg.seed = doc.at("seed").get<std::uint64_t>();
  cfg.gold = net_spec_from_json(doc.at("gold"), cfg.d_in, false, where + ": gold");
  cfg.proxy = net_spec_from_json(doc.at("proxy"), cfg.d_in, true, where + ": proxy");

  const json& train = doc.at("train");
  check_keys(train, {"learning_rate", "steps", "batch_size", "prior_precision"},
             where + ": train");
  cfg.train.learning_rate = train.at("learning_rate").get<double>();
  cfg.train.steps = train.at("steps").get<std::size_t>();
  cfg.train.batch_size = train.at("batch_size").get<std::size_t>();
  cfg.train.prior_precision = train.at("prior_precision").get<double>();
  cfg.train.seed = 0;

  cfg.ensemble_size = doc.at("ensemble_size").get<std::size_t>();
  cfg.penalty_ks.clear();
  for (const json& k : doc.at("penalty_ks")) cfg.penalty_ks.push_back(k.get<double>());
  cfg.n_grid.clear();
  if (doc.contains("n_grid")) {
    for (const json& n : doc.at("n_grid")) {
      cfg.n_grid.push_back(n.get<std::size_t>());
    }
  }
  return cfg;
}

void resolve_and_validate(WorldConfig& cfg, const std::string& where) {
  require(cfg.d_in >= 1, where + ": d_in must be >= 1");
  require(cfg.train_prompts >= 1 && cfg.val_prompts >= 1, where + ": prompt counts >= 1");
  require(cfg.responses_per_prompt >= 1, where + ": responses_per_prompt >= 1");
  require(cfg.pairs_per_prompt >= 1, where + ": pairs_per_prompt >= 1");
  require(std::isfinite(cfg.policy_spread) && cfg.policy_spread >= 0.0,
          where + ": policy_spread must be finite and >= 0");
  require(cfg.ensemble_size >= 1, where + ": ensemble_size >= 1");
  require(!cfg.penalty_ks.empty(), where + ": penalty_ks must be non-empty");
  for (double k : cfg.penalty_ks) {
    require(std::isfinite(k) && k >= 0.0, where + ": penalty k must be finite and >= 0");
  }
  require(cfg.train.steps >= 1, where + ": train.steps >= 1");
  require(cfg.train.batch_size >= 1, where + ": train.batch_size >= 1");
  require(cfg.train.prior_precision > 0.0, where + ": train.prior_precision > 0");
  require(cfg.train.learning_rate > 0.0, where + ": train.learning_rate > 0");
  if (cfg.n_grid.empty()) {
    for (std::size_t n = 1; n < cfg.responses_per_prompt; n *= 2) cfg.n_grid.push_back(n);
    cfg.n_grid.push_back(cfg.responses_per_prompt);
  }
  for (std::size_t n : cfg.n_grid) {
    require(n >= 1 && n <= cfg.responses_per_prompt,
            where + ": n_grid entries must lie in [1, responses_per_prompt]");
  }
}

json config_to_json(const WorldConfig& cfg) {
  json doc;
  doc["format"] = "brm-config";
  doc["format_version"] = 1;
  doc["d_in"] = cfg.d_in;
  doc["train_prompts"] = cfg.train_prompts;
  doc["val_prompts"] = cfg.val_prompts;
  doc["responses_per_prompt"] = cfg.responses_per_prompt;
  doc["pairs_per_prompt"] = cfg.pairs_per_prompt;
  doc["policy_spread"] = cfg.policy_spread;
  doc["label_mode"] = cfg.label_mode == LabelMode::kSample ? "sample" : "argmax";
  doc["seed"] = cfg.seed;
  doc["gold"] = net_spec_to_json(cfg.gold, false);
  doc["proxy"] = net_spec_to_json(cfg.proxy, true);
  doc["train"] = {{"learning_rate", cfg.train.learning_rate},
                  {"steps", cfg.train.steps},
                  {"batch_size", cfg.train.batch_size},
                  {"prior_precision", cfg.train.prior_precision}};
  doc["ensemble_size"] = cfg.ensemble_size;
  doc["penalty_ks"] = cfg.penalty_ks;
  doc["n_grid"] = cfg.n_grid;
  return doc;
}

}  // namespace

WorldConfig default_world_config() {
  WorldConfig cfg;
  cfg.gold = NetSpec{cfg.d_in, {64, 64}, 0, Activation::kTanh, 0.125, 0.5};
  cfg.proxy = NetSpec{cfg.d_in, {16, 16}, 4, Activation::kTanh, 0.1, 0.5};
  resolve_and_validate(cfg, "default config");
  return cfg;
}

WorldConfig load_world_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config '" + path + "'");
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::exception& e) {
    throw SchemaError(path + ": invalid JSON: " + e.what());
  }
  if (!doc.is_object() || doc.value("format", "") != "brm-config") {
    throw SchemaError(path + ": expected a 'brm-config' document");
  }
  if (doc.value("format_version", -1) != 1) {
    throw SchemaError(path + ": unsupported format_version (this build reads version 1)");
  }
  WorldConfig cfg;
  try {
    cfg = config_from_json(doc, path);
  } catch (const json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
  resolve_and_validate(cfg, path);
  return cfg;
}

void save_world_config(const std::string& path, const WorldConfig& cfg) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot open '" + path + "' for writing");
  out << config_to_json(cfg).dump(2) << "\n";
}

std::string config_canonical_json(const WorldConfig& cfg) {
  return config_to_json(cfg).dump();
}

std::uint64_t config_hash(const WorldConfig& cfg) {
  return fnv1a(config_canonical_json(cfg));
}

World make_world(const WorldConfig& cfg) {
  WorldConfig resolved = cfg;
  resolve_and_validate(resolved, "config");
  NetSpec gold_spec = resolved.gold;
  gold_spec.d_in = resolved.d_in;
  gold_spec.rank = 0;
  gold_spec.activation = Activation::kTanh;
  World world;
  world.gold = make_net(gold_spec, Rng::derive_seed(resolved.seed, kGoldStream));
  world.cfg = std::move(resolved);
  return world;
}

Vec sample_prompt(const World& world, Rng& rng) {
  Vec x(world.cfg.d_in);
  for (double& v : x) v = rng.gaussian();
  return x;
}

Vec sample_response(const World& world, std::span<const double> prompt, Rng& rng) {
  Vec x(prompt.begin(), prompt.end());
  for (double& v : x) v += world.cfg.policy_spread * rng.gaussian();
  return x;
}

std::vector<PreferenceExample> label_preferences(const RewardNet& gold,
                                                 std::span<const ResponsePair> pairs,
                                                 LabelMode mode, Rng& rng) {
  std::vector<PreferenceExample> out;
  out.reserve(pairs.size());
  for (const ResponsePair& pair : pairs) {
    const double g1 = forward(gold, pair.first);
    const double g2 = forward(gold, pair.second);
    bool first_wins;
    if (mode == LabelMode::kArgmax) {
      first_wins = g1 >= g2;
    } else {
      first_wins = rng.uniform() < bt_probability(g1, g2);
    }
    PreferenceExample ex;
    ex.prompt_id = pair.prompt_id;
    ex.winner = first_wins ? pair.first : pair.second;
    ex.loser = first_wins ? pair.second : pair.first;
    out.push_back(std::move(ex));
  }
  return out;
}

GeneratedDataset generate_dataset(const World& world) {
  const WorldConfig& cfg = world.cfg;
  GeneratedDataset data;

  Rng rng_data(Rng::derive_seed(cfg.seed, kDataStream));
  std::vector<ResponsePair> pairs;
  pairs.reserve(cfg.train_prompts * cfg.pairs_per_prompt);
  for (std::size_t p = 0; p < cfg.train_prompts; ++p) {
    const Vec prompt = sample_prompt(world, rng_data);
    for (std::size_t q = 0; q < cfg.pairs_per_prompt; ++q) {
      ResponsePair pair;
      pair.prompt_id = static_cast<std::int64_t>(p);
      pair.first = sample_response(world, prompt, rng_data);
      pair.second = sample_response(world, prompt, rng_data);
      pairs.push_back(std::move(pair));
    }
  }
  Rng rng_label(Rng::derive_seed(cfg.seed, kLabelStream));
  data.train = label_preferences(world.gold, pairs, cfg.label_mode, rng_label);

  Rng rng_val(Rng::derive_seed(cfg.seed, kValStream));
  data.validation.dim = cfg.d_in;
  data.validation.evaluators = {"gold"};
  data.validation.prompts.reserve(cfg.val_prompts);
  for (std::size_t p = 0; p < cfg.val_prompts; ++p) {
    FeaturePool::Prompt prompt;
    prompt.prompt_id = static_cast<std::int64_t>(p);
    const Vec feats = sample_prompt(world, rng_val);
    Vec gold_scores(cfg.responses_per_prompt);
    prompt.features.reserve(cfg.responses_per_prompt);
    for (std::size_t r = 0; r < cfg.responses_per_prompt; ++r) {
      Vec x = sample_response(world, feats, rng_val);
      gold_scores[r] = forward(world.gold, x);
      if (!std::isfinite(gold_scores[r])) {
        throw NumericError("generate_dataset: non-finite gold score at prompt " +
                           std::to_string(p) + " response " + std::to_string(r));
      }
      prompt.features.push_back(std::move(x));
    }
    prompt.evals["gold"] = std::move(gold_scores);
    data.validation.prompts.push_back(std::move(prompt));
  }
  return data;
}

ColumnStats column_stats(std::span<const double> xs) {
  if (xs.empty()) throw UsageError("column_stats: empty column");
  const double mean = pairwise_sum(xs) / static_cast<double>(xs.size());
  Vec sq(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - mean) * (xs[i] - mean);
  const double var = pairwise_sum(sq) / static_cast<double>(xs.size());
  const double stddev = std::sqrt(var);
  if (!(stddev > 0.0)) {
    throw NumericError("degenerate pool: column has zero spread (mean " +
                       format_double(mean) + ")");
  }
  return ColumnStats{mean, stddev};
}

void normalize_scores(Vec& xs, const ColumnStats& stats) {
  for (double& v : xs) v = (v - stats.mean) / stats.stddev;
}

ExperimentResult run_experiment(const WorldConfig& raw_cfg) {
  const World world = make_world(raw_cfg);
  const WorldConfig& cfg = world.cfg;
  ExperimentResult result;
  result.data = generate_dataset(world);

  // Ensemble members differ in adapter initialization and batch order.
  std::vector<RewardNet> members;
  std::vector<PosteriorState> posteriors;
  members.reserve(cfg.ensemble_size);
  posteriors.reserve(cfg.ensemble_size);
  for (std::size_t m = 0; m < cfg.ensemble_size; ++m) {
    const std::uint64_t member_seed = Rng::derive_seed(cfg.seed, kMemberStreamBase + m);
    TrainConfig tc = cfg.train;
    tc.seed = member_seed;
    const RewardNet init = make_net(cfg.proxy, member_seed);
    TrainResult trained = train_map(init, result.data.train, tc);
    posteriors.push_back(
        fit_ggn_posterior(trained.net, result.data.train, tc.prior_precision));
    members.push_back(std::move(trained.net));
  }

  // Column order in the output pool.
  std::vector<std::string> columns = {"gold", "lambda"};
  std::vector<std::pair<PenaltyKind, double>> penalties;
  for (PenaltyKind kind : {PenaltyKind::kStd, PenaltyKind::kVar}) {
    for (double k : cfg.penalty_ks) penalties.emplace_back(kind, k);
  }
  for (const auto& [kind, k] : penalties) columns.push_back(penalty_column_name("la", kind, k));
  columns.push_back("ens");
  for (const auto& [kind, k] : penalties) {
    columns.push_back(penalty_column_name("la_ens", kind, k));
  }

  result.pool.evaluators = columns;
  result.pool.prompts.reserve(result.data.validation.prompts.size());
  const std::size_t n_members = members.size();
  std::vector<RewardDistribution> dists(n_members);
  Vec means(n_members);
  for (const FeaturePool::Prompt& vp : result.data.validation.prompts) {
    PromptResponses out;
    out.prompt_id = vp.prompt_id;
    const std::size_t n_resp = vp.features.size();
    out.proxy.resize(n_resp);
    for (const std::string& c : columns) out.evals[c] = Vec(n_resp);
    for (std::size_t r = 0; r < n_resp; ++r) {
      const Vec& x = vp.features[r];
      for (std::size_t m = 0; m < n_members; ++m) {
        dists[m] = predictive_reward(posteriors[m], members[m], x);
        means[m] = dists[m].mean;
      }
      out.proxy[r] = dists[0].mean;
      out.evals["gold"][r] = vp.evals.at("gold")[r];
      out.evals["lambda"][r] = dists[0].variance;
      for (const auto& [kind, k] : penalties) {
        out.evals[penalty_column_name("la", kind, k)][r] =
            penalized_reward(dists[0], Penalty{kind, k});
        out.evals[penalty_column_name("la_ens", kind, k)][r] =
            ensemble_penalized_reward(dists, Penalty{kind, k});
      }
      out.evals["ens"][r] = mean_ensemble_reward(means);
      for (const std::string& c : columns) {
        if (!std::isfinite(out.evals[c][r])) {
          throw NumericError("experiment: non-finite score in column '" + c +
                             "' at prompt " + std::to_string(vp.prompt_id) + " response " +
                             std::to_string(r));
        }
      }
    }
    result.pool.prompts.push_back(std::move(out));
  }

  // Uncertainty by selection pressure: mean member-0 variance in the bottom
  // and top proxy deciles of the pooled responses.
  {
    std::vector<std::pair<double, double>> scored;  // (proxy, lambda)
    for (const PromptResponses& prompt : result.pool.prompts) {
      const Vec& lam = prompt.evals.at("lambda");
      for (std::size_t r = 0; r < prompt.proxy.size(); ++r) {
        scored.emplace_back(prompt.proxy[r], lam[r]);
      }
    }
    std::sort(scored.begin(), scored.end());
    const std::size_t q = std::max<std::size_t>(1, scored.size() / 10);
    double bottom = 0.0, top = 0.0;
    for (std::size_t i = 0; i < q; ++i) {
      bottom += scored[i].second;
      top += scored[scored.size() - 1 - i].second;
    }
    result.lambda_bottom_decile = bottom / static_cast<double>(q);
    result.lambda_top_decile = top / static_cast<double>(q);
  }

  // z-score every method column against its own n = 1 pool baseline. The raw
  // lambda column is a diagnostic, not an optimization target.
  {
    std::vector<std::string> to_normalize = {"proxy"};
    for (const std::string& c : columns) {
      if (c != "lambda") to_normalize.push_back(c);
    }
    for (const std::string& c : to_normalize) {
      Vec all;
      for (const PromptResponses& prompt : result.pool.prompts) {
        const Vec& v = c == "proxy" ? prompt.proxy : prompt.evals.at(c);
        all.insert(all.end(), v.begin(), v.end());
      }
      const ColumnStats stats = column_stats(all);
      for (PromptResponses& prompt : result.pool.prompts) {
        Vec& v = c == "proxy" ? prompt.proxy : prompt.evals.at(c);
        normalize_scores(v, stats);
      }
    }
  }

  // Best-of-n curves: each method ranks by its own column and is evaluated
  // under that column ("proxy") and under "gold".
  struct MethodSpec {
    std::string name;
    double k;
    std::string column;
  };
  std::vector<MethodSpec> methods;
  methods.push_back({"map", 0.0, "proxy"});
  for (const auto& [kind, k] : penalties) {
    methods.push_back({"la_" + penalty_kind_to_string(kind), k, penalty_column_name("la", kind, k)});
  }
  methods.push_back({"ens", 0.0, "ens"});
  for (const auto& [kind, k] : penalties) {
    methods.push_back(
        {"la_ens_" + penalty_kind_to_string(kind), k, penalty_column_name("la_ens", kind, k)});
  }

  for (const MethodSpec& method : methods) {
    const std::vector<std::string> evals = {method.column, "gold"};
    const std::vector<BonCurvePoint> points =
        bon_curve(result.pool, cfg.n_grid, method.column, evals);
    for (const BonCurvePoint& point : points) {
      result.curve.push_back(CurveRow{method.name, method.k, point.n, point.kl, "proxy",
                                      point.values[0].second});
      result.curve.push_back(CurveRow{method.name, method.k, point.n, point.kl, "gold",
                                      point.values[1].second});
    }
  }
  return result;
}

namespace {

void write_manifest(const std::string& path, const WorldConfig& cfg,
                    const std::string& command, const std::vector<std::string>& files,
                    const ExperimentResult* result) {
  json doc;
  doc["format"] = "brm-manifest";
  doc["format_version"] = 1;
  doc["command"] = command;
  doc["library_version"] = kLibraryVersion;
  doc["seed"] = cfg.seed;
  doc["config_hash"] = to_hex_u64(config_hash(cfg));
  doc["config"] = json::parse(config_canonical_json(cfg));
  doc["files"] = files;
  if (result != nullptr) {
    doc["diagnostics"] = {{"lambda_top_decile", result->lambda_top_decile},
                          {"lambda_bottom_decile", result->lambda_bottom_decile},
                          {"curve_rows", result->curve.size()}};
  }
  std::ofstream out(path);
  if (!out) throw UsageError("cannot open '" + path + "' for writing");
  out << doc.dump(2) << "\n";
}

}  // namespace

void write_gen_data(const WorldConfig& raw_cfg, const std::string& out_dir) {
  const World world = make_world(raw_cfg);
  const WorldConfig& cfg = world.cfg;
  std::filesystem::create_directories(out_dir);
  const GeneratedDataset data = generate_dataset(world);
  const std::filesystem::path dir(out_dir);
  save_preferences((dir / "preferences.csv").string(), data.train);
  save_feature_pool((dir / "val_responses.csv").string(), data.validation);
  write_manifest((dir / "manifest.json").string(), cfg, "gen-data",
                 {"preferences.csv", "val_responses.csv"}, nullptr);
}

ExperimentResult write_experiment(const WorldConfig& raw_cfg, const std::string& out_dir) {
  const World world = make_world(raw_cfg);
  const WorldConfig& cfg = world.cfg;
  std::filesystem::create_directories(out_dir);
  ExperimentResult result = run_experiment(cfg);
  const std::filesystem::path dir(out_dir);
  save_preferences((dir / "preferences.csv").string(), result.data.train);
  save_feature_pool((dir / "val_responses.csv").string(), result.data.validation);
  save_pool((dir / "pool.csv").string(), result.pool);
  save_curve((dir / "curve.csv").string(), result.curve);
  write_manifest((dir / "manifest.json").string(), cfg, "experiment",
                 {"preferences.csv", "val_responses.csv", "pool.csv", "curve.csv"}, &result);
  return result;
}

}  // namespace brm
