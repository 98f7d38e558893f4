#pragma once

#include <span>
#include <string>

#include "core/laplace.hpp"

namespace brm {

enum class PenaltyKind { kNone, kStd, kVar };

// Uncertainty penalty: none keeps the mean, std subtracts k*sqrt(variance),
// var subtracts k*variance.
struct Penalty {
  PenaltyKind kind = PenaltyKind::kNone;
  double k = 0.0;
};

PenaltyKind penalty_kind_from_string(const std::string& s);
std::string penalty_kind_to_string(PenaltyKind kind);

// Pool column naming convention for penalized scores, e.g. la_var_k3.
std::string penalty_column_name(const std::string& prefix, PenaltyKind kind, double k);

double penalized_reward(const RewardDistribution& dist, const Penalty& penalty);

// Mean of independent Gaussians: mean of means, variance = sum(var)/n^2.
RewardDistribution ensemble_distribution(std::span<const RewardDistribution> members);

// Penalized ensemble reward. Equals penalized_reward(ensemble_distribution(m))
// for both kinds: (1/n)*sqrt(sum var) = sqrt(sum var / n^2).
double ensemble_penalized_reward(std::span<const RewardDistribution> members,
                                 const Penalty& penalty);

// Plain mean aggregation, the non-Bayesian ensemble baseline.
double mean_ensemble_reward(std::span<const double> member_means);

}  // namespace brm
