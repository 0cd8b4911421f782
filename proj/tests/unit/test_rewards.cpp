#include <cmath>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "superflow/flow.hpp"
#include "superflow/rewards.hpp"

using namespace superflow;

namespace {

const PolicyParams& pretrained_ring() {
  static const PolicyParams p = [] {
    PolicyShape shape;
    shape.prompts = 1;
    Rng rng = make_stream(9, {tag(StreamTag::init)});
    PretrainSettings s;
    s.steps = 1500;
    return pretrain(SyntheticDataset::ring(8, 2.0, 0.1), s, make_policy(shape, rng), 9).params;
  }();
  return p;
}

std::vector<RewardTask> sample_tasks() {
  return {RewardTask::mode({1.0, -0.5}, 0.4), RewardTask::ball({0.5, 0.5}, 1.2),
          RewardTask::tiered({0.0, 1.0}, 1.5, {1.0, 0.0}, 0.2, 0.5)};
}

}  // namespace

TEST(EvaluateReward, ModeTargetAtCenterIsOne) {
  EXPECT_EQ(evaluate_reward(RewardTask::mode({0.3, -2.0}, 0.5), Vec{0.3, -2.0}), 1.0);
}

TEST(EvaluateReward, ModeTargetKernel) {
  const double r = evaluate_reward(RewardTask::mode({0.0, 0.0}, 0.5), Vec{0.3, 0.4});
  EXPECT_NEAR(r, std::exp(-0.25 / (2 * 0.25)), 1e-15);
}

TEST(EvaluateReward, RegionBoundaryIsInside) {
  const auto task = RewardTask::ball({1.0, 0.0}, 2.0);
  EXPECT_EQ(evaluate_reward(task, Vec{3.0, 0.0}), 1.0);
  EXPECT_EQ(evaluate_reward(task, Vec{1.0, -2.0}), 1.0);
  EXPECT_EQ(evaluate_reward(task, Vec{3.0 + 1e-9, 0.0}), 0.0);
}

TEST(EvaluateReward, HierarchicalTiers) {
  const auto task = RewardTask::tiered({0.0, 0.0}, 1.0, {1.0, 0.0}, 0.0, 0.5);
  EXPECT_EQ(evaluate_reward(task, Vec{0.5, 0.0}), 1.0);
  EXPECT_EQ(evaluate_reward(task, Vec{-0.5, 0.0}), 0.5);
  EXPECT_EQ(evaluate_reward(task, Vec{2.0, 0.0}), 0.0);
  EXPECT_EQ(evaluate_reward(task, Vec{-2.0, 0.0}), 0.0);
}

TEST(EvaluateReward, RejectsDimensionMismatch) {
  for (const auto& task : sample_tasks()) EXPECT_THROW(evaluate_reward(task, Vec{1.0}), DimensionError);
}

TEST(EvaluateReward, RangeAndValueSetOnRandomInputs) {
  std::mt19937_64 rng(2024);
  std::normal_distribution<double> n(0.0, 2.0);
  const auto tasks = sample_tasks();
  for (const auto& task : tasks) {
    std::set<double> values;
    for (int k = 0; k < 10000; ++k) {
      const double r = evaluate_reward(task, Vec{n(rng), n(rng)});
      ASSERT_GE(r, 0.0);
      ASSERT_LE(r, 1.0);
      if (task.kind == RewardKind::hierarchical) values.insert(r);
    }
    if (task.kind == RewardKind::hierarchical) EXPECT_EQ(values, (std::set<double>{0.0, 0.5, 1.0}));
  }
}

TEST(EvaluateReward, ModeTargetStrictlyDecreasingInDistance) {
  const auto task = RewardTask::mode({0.5, 0.5}, 0.7);
  double prev = 2.0;
  for (double d = 0.0; d < 3.0; d += 0.05) {
    const double r = evaluate_reward(task, Vec{0.5 + d * 0.6, 0.5 - d * 0.8});
    EXPECT_LT(r, prev);
    prev = r;
  }
}

TEST(RewardTask, Validation) {
  EXPECT_NO_THROW(RewardTask::mode({0.0, 0.0}, 0.5).validate(2));
  EXPECT_THROW(RewardTask::mode({0.0, 0.0}, 0.0).validate(2), DomainError);
  EXPECT_THROW(RewardTask::ball({0.0, 0.0}, -1.0).validate(2), DomainError);
  EXPECT_THROW(RewardTask::ball({0.0}, 1.0).validate(2), DimensionError);
  EXPECT_THROW(RewardTask::tiered({0.0, 0.0}, 1.0, {1.0, 0.0}, 0.0, 1.0).validate(2), DomainError);
}

TEST(RewardKind, StringRoundTrip) {
  for (auto k : {RewardKind::mode_target, RewardKind::region, RewardKind::hierarchical}) {
    EXPECT_EQ(reward_kind_from_string(to_string(k)), k);
  }
  EXPECT_ANY_THROW(reward_kind_from_string("nearest"));
}

TEST(OracleRewardStats, CoveringRegionIsCertain) {
  const auto s = oracle_reward_stats(RewardTask::ball({0.0, 0.0}, 1e6), pretrained_ring(), 0, {0.7}, 10, 200, 1);
  EXPECT_EQ(s.mean, 1.0);
  EXPECT_EQ(s.std, 0.0);
  EXPECT_EQ(s.standard_error, 0.0);
}

TEST(OracleRewardStats, DisjointRegionIsZero) {
  const auto s = oracle_reward_stats(RewardTask::ball({40.0, 40.0}, 1.0), pretrained_ring(), 0, {0.7}, 10, 200, 1);
  EXPECT_EQ(s.mean, 0.0);
}

TEST(OracleRewardStats, IndependentSeedsAgree) {
  const auto task = RewardTask::mode({2.0, 0.0}, 0.5);
  const auto a = oracle_reward_stats(task, pretrained_ring(), 0, {0.7}, 10, 2000, 11, 2);
  const auto b = oracle_reward_stats(task, pretrained_ring(), 0, {0.7}, 10, 2000, 12, 2);
  EXPECT_GT(a.mean, 0.02);
  EXPECT_LT(std::abs(a.mean - b.mean), 3.0 * std::hypot(a.standard_error, b.standard_error));
}

TEST(OracleRewardStats, RequiresEnoughRollouts) {
  EXPECT_THROW(oracle_reward_stats(RewardTask::mode({0.0, 0.0}, 1.0), pretrained_ring(), 0, {0.7}, 10, 50, 1),
               DomainError);
}

TEST(OracleRewardStats, ThreadCountDoesNotChangeResult) {
  const auto task = RewardTask::ball({0.0, 2.0}, 1.0);
  const auto a = oracle_reward_stats(task, pretrained_ring(), 0, {0.7}, 10, 300, 5, 1);
  const auto b = oracle_reward_stats(task, pretrained_ring(), 0, {0.7}, 10, 300, 5, 4);
  EXPECT_EQ(a.mean, b.mean);
  EXPECT_EQ(a.std, b.std);
}
