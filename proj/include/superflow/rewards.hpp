#pragma once

#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "superflow/error.hpp"
#include "superflow/linalg.hpp"
#include "superflow/parallel.hpp"
#include "superflow/policy.hpp"
#include "superflow/rng.hpp"
#include "superflow/sde.hpp"

namespace superflow {

enum class RewardKind { mode_target, region, hierarchical };

inline const char* to_string(RewardKind k) {
  switch (k) {
    case RewardKind::mode_target: return "mode_target";
    case RewardKind::region: return "region";
    case RewardKind::hierarchical: return "hierarchical";
  }
  return "?";
}

inline RewardKind reward_kind_from_string(const std::string& s) {
  if (s == "mode_target") return RewardKind::mode_target;
  if (s == "region") return RewardKind::region;
  if (s == "hierarchical") return RewardKind::hierarchical;
  throw ConfigError("unknown reward kind '" + s + "'");
}

/// Verifiable terminal reward with values in [0,1].
///
/// - mode_target:  exp(-||x - target||^2 / (2 bandwidth^2))
/// - region:       1 inside the closed ball (center, radius), else 0
/// - hierarchical: 0 outside the ball; partial_credit inside the ball but on
///                 the wrong side of the half-plane normal . x >= offset; 1 if both hold
struct RewardTask {
  RewardKind kind = RewardKind::mode_target;
  Vec target;
  double bandwidth = 0.5;
  Vec center;
  double radius = 1.0;
  Vec normal;
  double offset = 0.0;
  double partial_credit = 0.5;

  void validate(std::size_t dim) const {
    switch (kind) {
      case RewardKind::mode_target:
        require_dims(target.size(), dim, "mode_target target");
        if (!(bandwidth > 0.0)) throw DomainError("mode_target: bandwidth must be positive");
        break;
      case RewardKind::hierarchical:
        require_dims(normal.size(), dim, "hierarchical normal");
        if (!(partial_credit > 0.0 && partial_credit < 1.0)) {
          throw DomainError("hierarchical: partial credit must lie in (0,1)");
        }
        [[fallthrough]];
      case RewardKind::region:
        require_dims(center.size(), dim, "region center");
        if (!(radius > 0.0)) throw DomainError("region: radius must be positive");
        break;
    }
  }

  static RewardTask mode(Vec target, double bandwidth) {
    RewardTask t;
    t.kind = RewardKind::mode_target;
    t.target = std::move(target);
    t.bandwidth = bandwidth;
    return t;
  }
  static RewardTask ball(Vec center, double radius) {
    RewardTask t;
    t.kind = RewardKind::region;
    t.center = std::move(center);
    t.radius = radius;
    return t;
  }
  static RewardTask tiered(Vec center, double radius, Vec normal, double offset, double credit) {
    RewardTask t = ball(std::move(center), radius);
    t.kind = RewardKind::hierarchical;
    t.normal = std::move(normal);
    t.offset = offset;
    t.partial_credit = credit;
    return t;
  }
};

struct PromptSpec {
  std::size_t id = 0;  // also the embedding row
  std::string label;
  RewardTask task;
};

inline double evaluate_reward(const RewardTask& task, std::span<const double> x) {
  switch (task.kind) {
    case RewardKind::mode_target: {
      require_dims(x.size(), task.target.size(), "evaluate_reward");
      return std::exp(-squared_distance(x, task.target) / (2.0 * task.bandwidth * task.bandwidth));
    }
    case RewardKind::region: {
      require_dims(x.size(), task.center.size(), "evaluate_reward");
      return squared_distance(x, task.center) <= task.radius * task.radius ? 1.0 : 0.0;
    }
    case RewardKind::hierarchical: {
      require_dims(x.size(), task.center.size(), "evaluate_reward");
      if (squared_distance(x, task.center) > task.radius * task.radius) return 0.0;
      return dot(task.normal, x) >= task.offset ? 1.0 : task.partial_credit;
    }
  }
  return 0.0;
}

struct RewardStats {
  double mean = 0.0;
  double std = 0.0;
  double standard_error = 0.0;
};

/// Monte-Carlo reward statistics over n fresh SDE rollouts of `prompt`.
inline RewardStats oracle_reward_stats(const RewardTask& task, const PolicyParams& policy,
                                       std::size_t prompt, const NoiseSchedule& schedule,
                                       std::size_t steps, std::size_t n, std::uint64_t seed,
                                       std::size_t threads = 1) {
  if (n < 100) throw DomainError("oracle_reward_stats: need at least 100 rollouts");
  std::vector<double> rewards(n);
  parallel_for(n, threads, [&](std::size_t i) {
    Rng rng = make_stream(seed, {tag(StreamTag::oracle), prompt, i});
    const Trajectory traj = rollout(policy, prompt, steps, schedule, rng);
    rewards[i] = evaluate_reward(task, traj.x_final);
  });
  RewardStats s;
  s.mean = mean(rewards);
  double ss = 0.0;
  for (double r : rewards) ss += (r - s.mean) * (r - s.mean);
  s.std = std::sqrt(ss / static_cast<double>(n - 1));
  s.standard_error = s.std / std::sqrt(static_cast<double>(n));
  return s;
}

}  // namespace superflow
