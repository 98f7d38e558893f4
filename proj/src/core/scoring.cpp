#include "core/scoring.hpp"

#include <charconv>
#include <cmath>

namespace brm {

PenaltyKind penalty_kind_from_string(const std::string& s) {
  if (s == "none") return PenaltyKind::kNone;
  if (s == "std") return PenaltyKind::kStd;
  if (s == "var") return PenaltyKind::kVar;
  throw UsageError("unknown penalty kind '" + s + "' (expected none|std|var)");
}

std::string penalty_kind_to_string(PenaltyKind kind) {
  switch (kind) {
    case PenaltyKind::kNone:
      return "none";
    case PenaltyKind::kStd:
      return "std";
    case PenaltyKind::kVar:
      return "var";
  }
  throw UsageError("invalid penalty kind");
}

std::string penalty_column_name(const std::string& prefix, PenaltyKind kind, double k) {
  char buf[32];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), k);
  (void)ec;
  return prefix + "_" + penalty_kind_to_string(kind) + "_k" + std::string(buf, ptr);
}

namespace {

void check_penalty(const Penalty& penalty) {
  if (!(penalty.k >= 0.0) || !std::isfinite(penalty.k)) {
    throw UsageError("penalty coefficient k must be >= 0 and finite");
  }
}

void check_variance(double variance) {
  if (variance < 0.0 || !std::isfinite(variance)) {
    throw NumericError("reward variance must be finite and >= 0, got " +
                       std::to_string(variance));
  }
}

}  // namespace

double penalized_reward(const RewardDistribution& dist, const Penalty& penalty) {
  check_penalty(penalty);
  check_variance(dist.variance);
  switch (penalty.kind) {
    case PenaltyKind::kNone:
      return dist.mean;
    case PenaltyKind::kStd:
      return dist.mean - penalty.k * std::sqrt(dist.variance);
    case PenaltyKind::kVar:
      return dist.mean - penalty.k * dist.variance;
  }
  throw UsageError("invalid penalty kind");
}

RewardDistribution ensemble_distribution(std::span<const RewardDistribution> members) {
  if (members.empty()) throw UsageError("ensemble_distribution: empty member list");
  const double n = static_cast<double>(members.size());
  double mean = 0.0;
  double var_sum = 0.0;
  for (const RewardDistribution& m : members) {
    check_variance(m.variance);
    mean += m.mean;
    var_sum += m.variance;
  }
  return RewardDistribution{mean / n, var_sum / (n * n)};
}

double ensemble_penalized_reward(std::span<const RewardDistribution> members,
                                 const Penalty& penalty) {
  if (members.empty()) throw UsageError("ensemble_penalized_reward: empty member list");
  check_penalty(penalty);
  const double n = static_cast<double>(members.size());
  double mean = 0.0;
  double var_sum = 0.0;
  for (const RewardDistribution& m : members) {
    check_variance(m.variance);
    mean += m.mean;
    var_sum += m.variance;
  }
  mean /= n;
  switch (penalty.kind) {
    case PenaltyKind::kNone:
      return mean;
    case PenaltyKind::kStd:
      return mean - (penalty.k / n) * std::sqrt(var_sum);
    case PenaltyKind::kVar:
      return mean - (penalty.k / (n * n)) * var_sum;
  }
  throw UsageError("invalid penalty kind");
}

double mean_ensemble_reward(std::span<const double> member_means) {
  if (member_means.empty()) throw UsageError("mean_ensemble_reward: empty member list");
  return pairwise_sum(member_means) / static_cast<double>(member_means.size());
}

}  // namespace brm
