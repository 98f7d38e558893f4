#include "core/laplace.hpp"

#include <cmath>
#include <iostream>
#include <string>

namespace brm {

Vec score_jacobian(const RewardNet& net, std::span<const double> x) {
  return reward_gradient(net, x);
}

Matrix ggn_precision(const RewardNet& net, std::span<const PreferenceExample> data,
                     double lambda) {
  if (!(lambda > 0.0) || !std::isfinite(lambda)) {
    throw UsageError("ggn_precision: lambda must be positive and finite");
  }
  const std::size_t p = param_count(net);
  Matrix h(p, p);
  for (std::size_t i = 0; i < p; ++i) h(i, i) = lambda;

  Vec g(p);
  for (const PreferenceExample& ex : data) {
    const Vec gw = score_jacobian(net, ex.winner);
    const Vec gl = score_jacobian(net, ex.loser);
    const double d = forward(net, ex.winner) - forward(net, ex.loser);
    const double w = sigmoid(d) * sigmoid(-d);
    for (std::size_t i = 0; i < p; ++i) g[i] = gw[i] - gl[i];
    // Rank-one update on the lower triangle, mirrored afterwards.
    for (std::size_t i = 0; i < p; ++i) {
      const double wg = w * g[i];
      for (std::size_t j = 0; j <= i; ++j) h(i, j) += wg * g[j];
    }
  }
  for (std::size_t i = 0; i < p; ++i) {
    for (std::size_t j = i + 1; j < p; ++j) h(i, j) = h(j, i);
  }
  return h;
}

PosteriorState fit_ggn_posterior(const RewardNet& net,
                                 std::span<const PreferenceExample> data, double lambda) {
  const std::uint64_t fp = dataset_fingerprint(data);
  if (net.provenance.present &&
      (net.provenance.data_fingerprint != fp || net.provenance.lambda != lambda)) {
    std::cerr << "warning: fit_ggn_posterior: net was trained with a different "
                 "dataset or prior precision than supplied here\n";
  }
  const Matrix h = ggn_precision(net, data, lambda);
  PosteriorState post;
  post.theta_map = flatten(net);
  post.lambda = lambda;
  post.data_fingerprint = fp;
  try {
    post.covariance = invert_spd(h);
  } catch (const FactorizationError& e) {
    double dmin = h(0, 0), dmax = h(0, 0);
    for (std::size_t i = 1; i < h.rows(); ++i) {
      dmin = std::min(dmin, h(i, i));
      dmax = std::max(dmax, h(i, i));
    }
    throw NumericError("fit_ggn_posterior: curvature factorization failed at pivot " +
                       std::to_string(e.pivot()) + " (lambda " + std::to_string(lambda) +
                       ", P " + std::to_string(h.rows()) + ", diag range [" +
                       std::to_string(dmin) + ", " + std::to_string(dmax) + "])");
  }
  return post;
}

RewardDistribution predictive_reward(const PosteriorState& post, const RewardNet& net,
                                     std::span<const double> x) {
  const Vec theta = flatten(net);
  if (theta != post.theta_map) {
    throw UsageError(
        "predictive_reward: net parameters differ from the posterior's MAP point; "
        "refit or load the matching checkpoint");
  }
  const Vec j = score_jacobian(net, x);
  if (j.size() != post.covariance.rows()) {
    throw ShapeError("predictive_reward: jacobian length " + std::to_string(j.size()) +
                     " vs covariance size " + std::to_string(post.covariance.rows()));
  }
  const Vec sj = matvec(post.covariance, j);
  double variance = dot(j, sj);
  if (variance < 0.0) {
    if (variance < -1e-9) {
      throw NumericError("predictive_reward: negative variance " + std::to_string(variance));
    }
    variance = 0.0;
  }
  RewardDistribution dist;
  dist.mean = forward(net, x);
  dist.variance = variance;
  return dist;
}

}  // namespace brm
