#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <span>
#include <string>
#include <vector>

#include "superflow/error.hpp"
#include "superflow/linalg.hpp"
#include "superflow/policy.hpp"
#include "superflow/sde.hpp"

namespace superflow {

struct TrackerConfig {
  double rho_min = 0.875;
  double rho_max = 0.99;
  double d_half = 1.0;
  std::size_t n0 = 8;
  double epsilon_w = 0.01;
  std::size_t probe_cap = 32;

  /// Equilibrium effective sample size 1 / (1 - rho_min).
  double initial_sample_size() const { return 1.0 / (1.0 - rho_min); }

  void validate() const {
    if (!(rho_min > 0.0 && rho_min < 1.0)) throw ConfigError("tracker: rho_min must lie in (0,1)");
    if (!(rho_max >= rho_min && rho_max <= 1.0)) {
      throw ConfigError("tracker: rho_max must lie in [rho_min, 1]");
    }
    if (!(d_half > 0.0)) throw ConfigError("tracker: d_half must be positive");
    if (n0 < 1) throw ConfigError("tracker: n0 must be at least 1");
    if (!(epsilon_w > 0.0)) throw ConfigError("tracker: epsilon_w must be positive");
  }
};

/// A state visited by the last policy that acted on a prompt, together with
/// that policy's step mean there.
struct TrackerProbe {
  StepRecord state;  // x_t, t, dt, sigma, std of the visited step
  Vec mean;          // step mean under the acting policy
};

/// Per-prompt Beta(alpha, beta) running reward estimate.
struct ValueTracker {
  double alpha = 1.0;
  double beta = 1.0;
  double v_hat = 0.5;  // alpha / (alpha + beta)
  std::vector<TrackerProbe> last_visit;
  std::size_t visits = 0;
};

inline void check_reward(double r) {
  if (!(r >= 0.0 && r <= 1.0)) {
    throw DomainError("reward " + std::to_string(r) + " outside [0,1]");
  }
}

/// Initial estimate from n0 rewards of the initial policy:
/// alpha0 = N0 v0, beta0 = N0 (1 - v0). Degenerate v0 in {0,1} is moved 1e-3
/// inside the interval so both pseudo-counts stay positive.
inline ValueTracker tracker_init(std::span<const double> rewards, const TrackerConfig& cfg) {
  if (rewards.size() != cfg.n0) {
    throw DimensionError("tracker_init: expected n0 = " + std::to_string(cfg.n0) + " rewards, got " +
                         std::to_string(rewards.size()));
  }
  for (double r : rewards) check_reward(r);
  double v0 = mean(rewards);
  v0 = std::clamp(v0, 1e-3, 1.0 - 1e-3);
  const double n = cfg.initial_sample_size();
  ValueTracker tr;
  tr.alpha = n * v0;
  tr.beta = n * (1.0 - v0);
  tr.v_hat = tr.alpha / (tr.alpha + tr.beta);
  return tr;
}

/// rho = clamp(2^(-D / D_half), rho_min, rho_max).
inline double forgetting_factor(double divergence, const TrackerConfig& cfg) {
  if (!(divergence >= 0.0)) throw DomainError("forgetting_factor: divergence must be >= 0");
  const double raw = std::exp2(-divergence / cfg.d_half);
  return std::clamp(raw, cfg.rho_min, cfg.rho_max);
}

inline void tracker_update(ValueTracker& tr, double r, double rho) {
  check_reward(r);
  if (!(rho > 0.0 && rho <= 1.0)) throw DomainError("tracker_update: rho must lie in (0,1]");
  tr.alpha = rho * tr.alpha + r;
  tr.beta = rho * tr.beta + (1.0 - r);
  tr.v_hat = tr.alpha / (tr.alpha + tr.beta);
  if (!(std::isfinite(tr.alpha) && std::isfinite(tr.beta) && tr.alpha > 0.0 && tr.beta > 0.0)) {
    throw NumericalError("tracker corrupted: alpha=" + std::to_string(tr.alpha) +
                         " beta=" + std::to_string(tr.beta));
  }
}

/// w = sqrt(v (1 - v)) + epsilon: reward uncertainty plus a sampling floor.
inline double uncertainty_weight(const ValueTracker& tr, double epsilon_w) {
  const double v = std::clamp(tr.v_hat, 0.0, 1.0);
  return std::sqrt(v * (1.0 - v)) + epsilon_w;
}

/// Mean step KL between `policy` and the stored last-visit means over the
/// tracker's probes. Returns 0 (no drift) when there are no probes.
inline double estimate_prompt_kl(const PolicyParams& policy, const ValueTracker& tr,
                                 std::size_t prompt, bool warn_if_empty = true) {
  if (tr.last_visit.empty()) {
    if (warn_if_empty) {
      std::fprintf(stderr, "warning: prompt %zu has no last-visit probes; assuming no drift\n",
                   prompt);
    }
    return 0.0;
  }
  double total = 0.0;
  for (const auto& probe : tr.last_visit) {
    const Vec now = step_mean_under(policy, probe.state, prompt);
    total += gaussian_step_kl(now, probe.mean, probe.state.std);
  }
  return total / static_cast<double>(tr.last_visit.size());
}

/// Replaces the tracker's probes with up to `cap` stochastic steps spread
/// evenly over all (trajectory, step) pairs of the visit. Step means are those
/// of the policy that generated the visit.
inline void record_visit(ValueTracker& tr, std::span<const Trajectory* const> visit,
                         std::size_t cap) {
  tr.last_visit.clear();
  std::vector<const StepRecord*> pool;
  for (const auto* traj : visit) {
    for (const auto& rec : traj->steps) {
      if (rec.stochastic()) pool.push_back(&rec);
    }
  }
  const std::size_t take = std::min(cap, pool.size());
  for (std::size_t j = 0; j < take; ++j) {
    const StepRecord& rec = *pool[j * pool.size() / take];
    TrackerProbe p;
    p.state = rec;
    p.state.x_next.clear();
    p.mean = rec.mean;
    tr.last_visit.push_back(std::move(p));
  }
  tr.visits += 1;
}

}  // namespace superflow
