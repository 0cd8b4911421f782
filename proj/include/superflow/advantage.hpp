#pragma once

#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "superflow/error.hpp"
#include "superflow/linalg.hpp"

namespace superflow {

inline constexpr double kStdFloor = 1e-6;

/// Group-relative advantage: (r - mean) / max(std, 1e-6), population std.
inline std::vector<double> group_advantage(std::span<const double> rewards) {
  if (rewards.size() < 2) {
    throw DomainError("group_advantage: group of size " + std::to_string(rewards.size()) +
                      " has no relative baseline; use the tracker baseline");
  }
  const double mu = mean(rewards);
  const double sd = std::max(population_std(rewards), kStdFloor);
  std::vector<double> out(rewards.size());
  for (std::size_t i = 0; i < rewards.size(); ++i) out[i] = (rewards[i] - mu) / sd;
  return out;
}

/// Reward minus the pre-update tracker estimate.
inline double raw_advantage(double reward, double v_prev) { return reward - v_prev; }

/// Batch standardization with population statistics. A batch of one is
/// passed through unchanged with a warning.
inline std::vector<double> normalize_batch_advantages(std::span<const double> raw,
                                                      double* batch_mean = nullptr,
                                                      double* batch_std = nullptr) {
  if (raw.empty()) return {};
  const double mu = mean(raw);
  const double sd = population_std(raw);
  if (batch_mean) *batch_mean = mu;
  if (batch_std) *batch_std = sd;
  if (raw.size() == 1) {
    std::fprintf(stderr, "warning: batch of one advantage; normalization skipped\n");
    return {raw.begin(), raw.end()};
  }
  const double denom = std::max(sd, kStdFloor);
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = (raw[i] - mu) / denom;
  return out;
}

/// Step-level re-estimate eta * sigma_t * A_tau.
inline double step_advantage(double trajectory_advantage, double sigma_t, double eta) {
  if (!(sigma_t >= 0.0)) throw DomainError("step_advantage: sigma_t must be >= 0");
  if (!(eta > 0.0)) throw DomainError("step_advantage: eta must be positive");
  return eta * sigma_t * trajectory_advantage;
}

/// Monte Carlo return from step t minus a baseline: sum_{s>=t} gamma^(s-t) r_s - b.
/// `rewards_per_step` is indexed by step s = 0..T.
inline double discounted_advantage(std::span<const double> rewards_per_step, double gamma,
                                   double baseline, std::size_t t) {
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw DomainError("discounted_advantage: gamma in [0,1]");
  if (t >= rewards_per_step.size()) throw DimensionError("discounted_advantage: t out of range");
  double ret = 0.0;
  double discount = 1.0;
  for (std::size_t s = t; s < rewards_per_step.size(); ++s) {
    ret += discount * rewards_per_step[s];
    discount *= gamma;
  }
  return ret - baseline;
}

/// Terminal-only reward form: gamma^(T-t) r_final - b.
inline double terminal_discounted_advantage(double final_reward, double gamma, double baseline,
                                            std::size_t steps_to_end) {
  return std::pow(gamma, static_cast<double>(steps_to_end)) * final_reward - baseline;
}

/// Trajectory- and step-level advantages for one collected batch.
struct AdvantageSet {
  std::vector<double> trajectory;             // A_tau per trajectory
  std::vector<std::vector<double>> per_step;  // A_hat_t per trajectory and step
  double batch_mean = 0.0;
  double batch_std = 0.0;
};

}  // namespace superflow
