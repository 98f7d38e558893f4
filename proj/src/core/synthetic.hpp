#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "core/io.hpp"
#include "core/scoring.hpp"

namespace brm {

enum class LabelMode { kSample, kArgmax };

// Full description of the synthetic gold/proxy world and the experiment
// grids. Regenerable bit-exactly from (config, seed).
struct WorldConfig {
  std::size_t d_in = 8;
  std::size_t train_prompts = 200;
  std::size_t val_prompts = 100;
  std::size_t responses_per_prompt = 1024;
  std::size_t pairs_per_prompt = 4;
  double policy_spread = 3.0;
  LabelMode label_mode = LabelMode::kSample;
  std::uint64_t seed = 20240501;
  NetSpec gold;   // rank forced to 0; all weights frozen
  NetSpec proxy;  // LoRA-adapted trainee
  TrainConfig train;  // per-member seeds are derived from the master seed
  std::size_t ensemble_size = 4;
  std::vector<double> penalty_ks = {1.0, 3.0, 5.0, 10.0};
  std::vector<std::size_t> n_grid;  // empty = powers of 2 up to N, plus N
};

WorldConfig default_world_config();
WorldConfig load_world_config(const std::string& path);
void save_world_config(const std::string& path, const WorldConfig& cfg);

// Canonical serialized form (sorted keys); the hash recorded in manifests.
std::string config_canonical_json(const WorldConfig& cfg);
std::uint64_t config_hash(const WorldConfig& cfg);

// The gold model plus the prompt/response distributions. A response is its
// prompt's features plus a policy perturbation of scale policy_spread; large
// perturbations are exactly the inputs far from the proxy's training support.
struct World {
  WorldConfig cfg;
  RewardNet gold;
};

World make_world(const WorldConfig& cfg);

Vec sample_prompt(const World& world, Rng& rng);
Vec sample_response(const World& world, std::span<const double> prompt, Rng& rng);

struct ResponsePair {
  std::int64_t prompt_id = 0;
  Vec first;
  Vec second;
};

// Gold-labeled comparisons. argmax: higher gold reward wins, ties to the
// first element. sample: first wins with probability sigmoid(g1 - g2).
std::vector<PreferenceExample> label_preferences(const RewardNet& gold,
                                                 std::span<const ResponsePair> pairs,
                                                 LabelMode mode, Rng& rng);

struct GeneratedDataset {
  std::vector<PreferenceExample> train;
  FeaturePool validation;  // features plus a raw "gold" column
};

GeneratedDataset generate_dataset(const World& world);

struct ColumnStats {
  double mean = 0.0;
  double stddev = 0.0;
};

// Mean and population standard deviation; a zero-spread column is a
// degenerate pool and raises NumericError.
ColumnStats column_stats(std::span<const double> xs);

// z-score against the n = 1 pool baseline: the unoptimized policy sits at 0
// with unit spread.
void normalize_scores(Vec& xs, const ColumnStats& stats);

struct ExperimentResult {
  std::vector<CurveRow> curve;
  ResponsePool pool;       // normalized method columns plus raw "lambda"
  GeneratedDataset data;   // raw training pairs and validation features
  double lambda_top_decile = 0.0;     // mean member-0 variance, top proxy decile
  double lambda_bottom_decile = 0.0;  // same, bottom decile
};

// End-to-end pipeline: generate data, train the ensemble, fit per-member
// Laplace posteriors, score the validation pool, and emit best-of-n curves
// for methods map, la_{std,var}, ens, la_ens_{std,var} over the k grid.
// Curve rows carry evaluator "proxy" (the method's own selection score) and
// "gold".
ExperimentResult run_experiment(const WorldConfig& cfg);

// File-level commands. gen-data writes preferences.csv, val_responses.csv,
// manifest.json; experiment adds pool.csv and curve.csv and returns the
// in-memory result.
void write_gen_data(const WorldConfig& cfg, const std::string& out_dir);
ExperimentResult write_experiment(const WorldConfig& cfg, const std::string& out_dir);

}  // namespace brm
