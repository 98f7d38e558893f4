#pragma once

#include <cstdint>
#include <span>

#include "core/numerics.hpp"
#include "core/reward_model.hpp"

namespace brm {

// Gaussian posterior over the trainable parameters, centered at the MAP
// estimate with covariance = inverse curvature.
struct PosteriorState {
  Vec theta_map;
  Matrix covariance;        // P x P, symmetric positive definite
  double lambda = 0.0;      // prior precision used for the fit
  std::uint64_t data_fingerprint = 0;
};

// Gaussian over a single reward.
struct RewardDistribution {
  double mean = 0.0;
  double variance = 0.0;
};

// d forward(net, x) / d theta over the trainable parameters, flatten order.
Vec score_jacobian(const RewardNet& net, std::span<const double> x);

// Gauss-Newton curvature of the Bradley-Terry objective at the net's current
// parameters: lambda*I + sum_i w_i g_i g_i^T with g_i the jacobian difference
// of the pair and w_i = sigmoid(d_i) * sigmoid(-d_i).
Matrix ggn_precision(const RewardNet& net, std::span<const PreferenceExample> data,
                     double lambda);

// Inverts the curvature into a PosteriorState. Warns on stderr when the net
// carries training provenance that disagrees with (data, lambda).
PosteriorState fit_ggn_posterior(const RewardNet& net,
                                 std::span<const PreferenceExample> data, double lambda);

// Linearized predictive: mean = forward(net, x), variance = j^T S j. The net
// must carry exactly the parameters the posterior was fit at.
RewardDistribution predictive_reward(const PosteriorState& post, const RewardNet& net,
                                     std::span<const double> x);

}  // namespace brm
