#include <doctest.h>

#include <cmath>

#include "core/scoring.hpp"

using namespace brm;

TEST_CASE("penalized_reward closed forms") {
  const RewardDistribution dist{2.0, 0.25};
  CHECK(penalized_reward(dist, {PenaltyKind::kStd, 2.0}) == doctest::Approx(1.0));
  CHECK(penalized_reward(dist, {PenaltyKind::kVar, 2.0}) == doctest::Approx(1.5));
  CHECK(penalized_reward(dist, {PenaltyKind::kNone, 0.0}) == 2.0);
  CHECK(penalized_reward(dist, {PenaltyKind::kStd, 0.0}) == 2.0);

  CHECK_THROWS_AS(penalized_reward({1.0, -0.1}, {PenaltyKind::kStd, 1.0}), NumericError);
  CHECK_THROWS_AS(penalized_reward(dist, {PenaltyKind::kStd, -1.0}), UsageError);
}

TEST_CASE("ensemble_distribution") {
  const RewardDistribution single{1.5, 0.3};
  const RewardDistribution fused_single = ensemble_distribution({&single, 1});
  CHECK(fused_single.mean == 1.5);
  CHECK(fused_single.variance == 0.3);

  const std::vector<RewardDistribution> pair = {{1.0, 0.04}, {3.0, 0.16}};
  const RewardDistribution fused = ensemble_distribution(pair);
  CHECK(fused.mean == doctest::Approx(2.0));
  CHECK(fused.variance == doctest::Approx(0.05).epsilon(1e-14));

  const std::vector<RewardDistribution> same(5, RewardDistribution{0.7, 0.2});
  const RewardDistribution fused_same = ensemble_distribution(same);
  CHECK(fused_same.mean == doctest::Approx(0.7));
  CHECK(fused_same.variance == doctest::Approx(0.2 / 5.0));

  CHECK_THROWS_AS(ensemble_distribution({}), UsageError);
}

TEST_CASE("ensemble_penalized_reward closed forms") {
  const std::vector<RewardDistribution> members = {{1.0, 0.04}, {3.0, 0.16}};
  CHECK(ensemble_penalized_reward(members, {PenaltyKind::kStd, 1.0}) ==
        doctest::Approx(2.0 - 0.5 * std::sqrt(0.2)).epsilon(1e-14));
  CHECK(ensemble_penalized_reward(members, {PenaltyKind::kVar, 1.0}) ==
        doctest::Approx(1.95).epsilon(1e-14));
  CHECK(ensemble_penalized_reward(members, {PenaltyKind::kStd, 0.0}) == doctest::Approx(2.0));
  CHECK(ensemble_penalized_reward(members, {PenaltyKind::kVar, 0.0}) == doctest::Approx(2.0));
}

TEST_CASE("mean_ensemble_reward") {
  CHECK(mean_ensemble_reward(std::vector<double>{1.0}) == 1.0);
  CHECK(mean_ensemble_reward(std::vector<double>{1.0, 3.0}) == 2.0);
  CHECK(mean_ensemble_reward(std::vector<double>{-1.0, 0.0, 4.0}) == doctest::Approx(1.0));
  CHECK_THROWS_AS(mean_ensemble_reward(std::vector<double>{}), UsageError);
}

TEST_CASE("penalties only ever lower the reward") {
  Rng rng(2024);
  for (int i = 0; i < 300; ++i) {
    const RewardDistribution dist{3.0 * rng.gaussian(), rng.uniform()};
    const double k = 10.0 * rng.uniform();
    for (PenaltyKind kind : {PenaltyKind::kStd, PenaltyKind::kVar}) {
      const double value = penalized_reward(dist, {kind, k});
      CHECK(value <= dist.mean);
      if (k > 0.0 && dist.variance > 0.0) {
        CHECK(value < dist.mean);
      } else {
        CHECK(value == dist.mean);
      }
    }
  }
}

TEST_CASE("penalized reward strictly decreases in k when variance is positive") {
  const RewardDistribution dist{0.4, 0.09};
  double prev_std = penalized_reward(dist, {PenaltyKind::kStd, 0.0});
  double prev_var = penalized_reward(dist, {PenaltyKind::kVar, 0.0});
  for (double k : {0.5, 1.0, 2.0, 5.0, 10.0}) {
    const double v_std = penalized_reward(dist, {PenaltyKind::kStd, k});
    const double v_var = penalized_reward(dist, {PenaltyKind::kVar, k});
    CHECK(v_std < prev_std);
    CHECK(v_var < prev_var);
    prev_std = v_std;
    prev_var = v_var;
  }
}

TEST_CASE("ensemble fusion identity") {
  Rng rng(31337);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t n = 1 + rng.next_u64() % 8;
    std::vector<RewardDistribution> members(n);
    for (auto& m : members) m = {2.0 * rng.gaussian(), rng.uniform()};
    const double k = 10.0 * rng.uniform();
    const RewardDistribution fused = ensemble_distribution(members);
    for (PenaltyKind kind : {PenaltyKind::kNone, PenaltyKind::kStd, PenaltyKind::kVar}) {
      const double direct = ensemble_penalized_reward(members, {kind, k});
      const double via_fused = penalized_reward(fused, {kind, k});
      CHECK(std::abs(direct - via_fused) <= 1e-12 * std::max(1.0, std::abs(direct)));
    }
  }
}

TEST_CASE("shared mean shift moves penalized ensemble rewards by the shift") {
  Rng rng(555);
  for (int trial = 0; trial < 100; ++trial) {
    const std::size_t n = 1 + rng.next_u64() % 6;
    std::vector<RewardDistribution> members(n), shifted(n);
    const double c = 4.0 * rng.gaussian();
    for (std::size_t i = 0; i < n; ++i) {
      members[i] = {rng.gaussian(), rng.uniform()};
      shifted[i] = {members[i].mean + c, members[i].variance};
    }
    const double k = 5.0 * rng.uniform();
    for (PenaltyKind kind : {PenaltyKind::kStd, PenaltyKind::kVar}) {
      const double base = ensemble_penalized_reward(members, {kind, k});
      const double moved = ensemble_penalized_reward(shifted, {kind, k});
      CHECK(moved - base == doctest::Approx(c).epsilon(1e-12));
    }
  }
}

TEST_CASE("penalty kind string round-trip") {
  for (PenaltyKind kind : {PenaltyKind::kNone, PenaltyKind::kStd, PenaltyKind::kVar}) {
    CHECK(penalty_kind_from_string(penalty_kind_to_string(kind)) == kind);
  }
  CHECK_THROWS_AS(penalty_kind_from_string("stdev"), UsageError);
  CHECK(penalty_column_name("la", PenaltyKind::kVar, 3.0) == "la_var_k3");
  CHECK(penalty_column_name("la_ens", PenaltyKind::kStd, 0.5) == "la_ens_std_k0.5");
}
