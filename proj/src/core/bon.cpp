#include "core/bon.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

namespace brm {

namespace {

double g_weight_fault = 0.0;

const Vec& eval_column(const PromptResponses& prompt, const std::string& name) {
  if (name == "proxy") return prompt.proxy;
  const auto it = prompt.evals.find(name);
  if (it == prompt.evals.end()) {
    throw UsageError("unknown evaluator '" + name + "' for prompt " +
                     std::to_string(prompt.prompt_id));
  }
  return it->second;
}

// Ascending sorted order of the pool positions, ties by original index.
std::vector<std::size_t> ranked_order(std::span<const double> proxy) {
  std::vector<std::size_t> order(proxy.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    if (proxy[a] != proxy[b]) return proxy[a] < proxy[b];
    return a < b;
  });
  return order;
}

}  // namespace

namespace detail {
void set_bon_weight_fault(double delta) { g_weight_fault = delta; }
}  // namespace detail

double kl_bon(std::size_t n) {
  if (n < 1) throw UsageError("kl_bon: n must be >= 1");
  const double nd = static_cast<double>(n);
  return std::log(nd) - (nd - 1.0) / nd;
}

Vec bon_weights(std::size_t n_total, std::size_t n) {
  if (n < 1) throw UsageError("bon_weights: n must be >= 1");
  if (n > n_total) {
    throw UsageError("bon_weights: n = " + std::to_string(n) + " exceeds pool size N = " +
                     std::to_string(n_total));
  }
  Vec w(n_total, 0.0);
  w[n_total - 1] = static_cast<double>(n) / static_cast<double>(n_total);
  for (std::size_t i = n_total; i > n; --i) {
    // w_{i-1} = w_i * (i - n) / (i - 1), positions 1-based. n = 1 copies the
    // weight outright so the uniform case stays bit-equal across ranks.
    w[i - 2] = n == 1 ? w[i - 1]
                      : w[i - 1] * static_cast<double>(i - n) / static_cast<double>(i - 1);
  }
  w[n_total - 1] += g_weight_fault;
  return w;
}

double bon_expected_reward(std::span<const double> proxy, std::span<const double> eval,
                           std::size_t n) {
  if (proxy.size() != eval.size()) {
    throw ShapeError("bon_expected_reward: proxy and eval lengths differ");
  }
  if (proxy.empty()) throw UsageError("bon_expected_reward: empty pool");
  const Vec w = bon_weights(proxy.size(), n);
  const std::vector<std::size_t> order = ranked_order(proxy);
  double acc = 0.0;
  for (std::size_t i = n - 1; i < order.size(); ++i) {
    acc += w[i] * eval[order[i]];
  }
  return acc;
}

double enumeration_oracle(std::span<const double> proxy, std::span<const double> eval,
                          std::size_t n) {
  if (proxy.size() != eval.size()) {
    throw ShapeError("enumeration_oracle: proxy and eval lengths differ");
  }
  const std::size_t n_total = proxy.size();
  if (n < 1 || n > n_total) {
    throw UsageError("enumeration_oracle: need 1 <= n <= N");
  }
  double n_subsets = 1.0;
  for (std::size_t i = 0; i < n; ++i) {
    n_subsets *= static_cast<double>(n_total - i) / static_cast<double>(i + 1);
    if (n_subsets > 1e6) {
      throw UsageError("enumeration_oracle: C(N, n) exceeds the 1e6 subset budget");
    }
  }

  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  double total = 0.0;
  std::size_t count = 0;
  while (true) {
    std::size_t best = idx[0];
    for (std::size_t k = 1; k < n; ++k) {
      const std::size_t c = idx[k];
      if (proxy[c] > proxy[best] || (proxy[c] == proxy[best] && c > best)) best = c;
    }
    total += eval[best];
    ++count;

    // Next combination in lexicographic order.
    std::size_t k = n;
    while (k > 0 && idx[k - 1] == n_total - n + (k - 1)) --k;
    if (k == 0) break;
    ++idx[k - 1];
    for (std::size_t j = k; j < n; ++j) idx[j] = idx[j - 1] + 1;
  }
  return total / static_cast<double>(count);
}

std::vector<BonCurvePoint> bon_curve(const ResponsePool& pool,
                                     std::span<const std::size_t> ns,
                                     const std::string& ranking,
                                     std::span<const std::string> evaluators) {
  if (pool.prompts.empty()) throw UsageError("bon_curve: empty pool");
  if (evaluators.empty()) throw UsageError("bon_curve: no evaluators requested");
  for (const PromptResponses& prompt : pool.prompts) {
    eval_column(prompt, ranking);  // validates the name
    for (const std::string& name : evaluators) {
      if (eval_column(prompt, name).size() != prompt.proxy.size()) {
        throw ShapeError("bon_curve: evaluator '" + name + "' misaligned for prompt " +
                         std::to_string(prompt.prompt_id));
      }
    }
  }

  std::vector<BonCurvePoint> points;
  points.reserve(ns.size());
  Vec per_prompt(pool.prompts.size());
  for (const std::size_t n : ns) {
    BonCurvePoint point;
    point.n = n;
    point.kl = kl_bon(n);
    for (const std::string& name : evaluators) {
      for (std::size_t pi = 0; pi < pool.prompts.size(); ++pi) {
        const PromptResponses& prompt = pool.prompts[pi];
        per_prompt[pi] =
            bon_expected_reward(eval_column(prompt, ranking), eval_column(prompt, name), n);
      }
      point.values.emplace_back(name, pairwise_sum(per_prompt) /
                                          static_cast<double>(per_prompt.size()));
    }
    points.push_back(std::move(point));
  }
  return points;
}

}  // namespace brm
