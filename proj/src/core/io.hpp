#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "core/bon.hpp"
#include "core/laplace.hpp"
#include "core/reward_model.hpp"

namespace brm {

// Plain-text persistence. CSV for tabular data, JSON documents with explicit
// format/version fields for checkpoints and manifests. Doubles are written in
// shortest round-trip form so a save/load cycle is bit-exact.

// Response features, optionally with precomputed evaluator columns (e.g. the
// gold score). CSV header: prompt_id,response_id,x0..x{d-1}[,<evaluators>].
struct FeaturePool {
  struct Prompt {
    std::int64_t prompt_id = 0;
    std::vector<Vec> features;
    std::map<std::string, Vec> evals;
  };
  std::size_t dim = 0;
  std::vector<Prompt> prompts;
  std::vector<std::string> evaluators;
};

struct CurveRow {
  std::string method;
  double k = 0.0;
  std::size_t n = 0;
  double kl = 0.0;
  std::string evaluator;
  double value = 0.0;
};

std::string format_double(double v);
std::string to_hex_u64(std::uint64_t v);
std::uint64_t from_hex_u64(const std::string& s);
std::uint64_t fnv1a(const std::string& bytes);

// Preference CSV: prompt_id,w0..w{d-1},l0..l{d-1}
void save_preferences(const std::string& path, std::span<const PreferenceExample> data);
std::vector<PreferenceExample> load_preferences(const std::string& path);

void save_feature_pool(const std::string& path, const FeaturePool& pool);
FeaturePool load_feature_pool(const std::string& path);

// Score pool CSV: prompt_id,response_id,proxy_score[,<evaluators>]
void save_pool(const std::string& path, const ResponsePool& pool);
ResponsePool load_pool(const std::string& path);

// Curve CSV: method,k,n,kl,evaluator,value
void save_curve(const std::string& path, std::span<const CurveRow> rows);

void save_net(const std::string& path, const RewardNet& net);
RewardNet load_net(const std::string& path);

void save_posterior(const std::string& path, const PosteriorState& post);
PosteriorState load_posterior(const std::string& path);

}  // namespace brm
