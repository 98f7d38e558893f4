#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "core/numerics.hpp"

namespace brm {

// Scores for the N sampled responses of one prompt. proxy holds the ranking
// scores; evals holds one index-aligned vector per evaluator name.
struct PromptResponses {
  std::int64_t prompt_id = 0;
  Vec proxy;
  std::map<std::string, Vec> evals;
};

struct ResponsePool {
  std::vector<PromptResponses> prompts;
  std::vector<std::string> evaluators;  // column order as loaded/produced
};

struct BonCurvePoint {
  std::size_t n = 0;
  double kl = 0.0;
  std::vector<std::pair<std::string, double>> values;  // evaluator -> mean value
};

// KL divergence between the best-of-n policy and the reference policy:
// log(n) - (n-1)/n.
double kl_bon(std::size_t n);

// Probability that sorted position i (ascending, 1-based) is the argmax of a
// uniformly random n-subset: C(i-1, n-1) / C(N, n). Returned in ascending
// rank order; computed by a downward recurrence from w_N = n/N so no large
// binomials are formed.
Vec bon_weights(std::size_t n_total, std::size_t n);

// Exact expectation of eval[argmax-by-proxy] over random n-subsets of the
// pool, using the rank weights above. Ties in proxy scores resolve by
// original index, matching a stable ascending sort.
double bon_expected_reward(std::span<const double> proxy, std::span<const double> eval,
                           std::size_t n);

// Brute-force enumeration of all C(N, n) subsets; test oracle. Refuses
// budgets above 1e6 subsets.
double enumeration_oracle(std::span<const double> proxy, std::span<const double> eval,
                          std::size_t n);

// Per-n averages of bon_expected_reward across prompts. ranking selects the
// scores used for ordering ("proxy" or any evaluator column); evaluators
// selects the columns to average.
std::vector<BonCurvePoint> bon_curve(const ResponsePool& pool,
                                     std::span<const std::size_t> ns,
                                     const std::string& ranking,
                                     std::span<const std::string> evaluators);

namespace detail {
// Fault injection for the verify negative control: adds delta to the top
// weight produced by bon_weights. Keep at 0 outside that path.
void set_bon_weight_fault(double delta);
}  // namespace detail

}  // namespace brm
