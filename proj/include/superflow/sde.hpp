#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "superflow/error.hpp"
#include "superflow/linalg.hpp"
#include "superflow/policy.hpp"
#include "superflow/rng.hpp"

namespace superflow {

/// sigma_t = a * sqrt(t / (1 - t)).
struct NoiseSchedule {
  double noise_level = 0.7;
};

inline double sigma_at(const NoiseSchedule& s, double t) {
  if (!(t > 0.0 && t < 1.0)) {
    throw DomainError("sigma_at: t must lie in the open interval (0,1), got " + std::to_string(t));
  }
  return s.noise_level * std::sqrt(t / (1.0 - t));
}

// sigma_t on a uniform grid with spacing dt. The singular endpoint t = 1 uses
// 1 - t clamped to dt, so the first step has step std a (a * sqrt(t/dt) * sqrt(dt)).
inline double grid_sigma(const NoiseSchedule& s, double t, double dt) {
  if (!(t > 0.0 && t <= 1.0)) {
    throw DomainError("grid_sigma: t must lie in (0,1], got " + std::to_string(t));
  }
  if (s.noise_level == 0.0) return 0.0;
  return s.noise_level * std::sqrt(t / std::max(1.0 - t, dt));
}

/// One reverse-time transition x_t -> x_{t-dt}.
struct StepRecord {
  double t = 0.0;
  double dt = 0.0;
  double sigma = 0.0;  // diffusion coefficient sigma_t
  Vec x_t;
  Vec mean;
  double std = 0.0;  // sigma_t * sqrt(dt); 0 means deterministic
  Vec x_next;
  double logprob = std::numeric_limits<double>::quiet_NaN();  // undefined when std == 0

  bool stochastic() const { return std > 0.0; }
};

struct Trajectory {
  std::size_t prompt = 0;
  std::vector<StepRecord> steps;  // strictly decreasing t
  Vec x_final;
  double reward = std::numeric_limits<double>::quiet_NaN();
};

namespace detail {

inline void check_step_args(double t, double dt) {
  if (!(t > 0.0 && t <= 1.0)) {
    throw DomainError("step: t must lie in (0,1], got " + std::to_string(t));
  }
  if (!(dt > 0.0) || dt > t + 1e-12) {
    throw DomainError("step: need 0 < dt <= t, got dt=" + std::to_string(dt));
  }
}

inline void check_state(std::span<const double> x, double t) {
  if (!all_finite(x)) throw NumericalError("sampler: non-finite state at t=" + std::to_string(t));
}

}  // namespace detail

// d(mean)/d(v) for the stochastic step; the mean is affine in v.
inline double mean_velocity_slope(double t, double dt, double sigma) {
  return -dt * (1.0 + sigma * sigma * (1.0 - t) / (2.0 * t));
}

/// Mean of the stochastic step given the velocity v at (x, t):
/// x - dt * [v + sigma^2/(2t) (x + (1-t) v)].
inline Vec sde_mean_from_velocity(std::span<const double> x, std::span<const double> v, double t,
                                  double dt, double sigma) {
  Vec mean(x.size());
  if (sigma == 0.0) {
    for (std::size_t i = 0; i < x.size(); ++i) mean[i] = x[i] - dt * v[i];
    return mean;
  }
  const double c = sigma * sigma / (2.0 * t);
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double drift = v[i] + c * (x[i] + (1.0 - t) * v[i]);
    mean[i] = x[i] - dt * drift;
  }
  return mean;
}

/// Euler step of dx = v dt toward t = 0.
inline Vec ode_step(const PolicyParams& policy, std::span<const double> x, double t, double dt,
                    std::size_t prompt) {
  detail::check_step_args(t, dt);
  const Vec v = velocity(policy, x, t, prompt);
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - dt * v[i];
  detail::check_state(out, t - dt);
  return out;
}

/// Euler-Maruyama step of the reverse-time SDE with diffusion sigma_t.
inline StepRecord sde_step(const PolicyParams& policy, std::span<const double> x, double t,
                           double dt, std::size_t prompt, const NoiseSchedule& schedule,
                           Rng& rng) {
  detail::check_step_args(t, dt);
  StepRecord r;
  r.t = t;
  r.dt = dt;
  r.sigma = grid_sigma(schedule, t, dt);
  r.x_t.assign(x.begin(), x.end());
  const Vec v = velocity(policy, x, t, prompt);
  r.mean = sde_mean_from_velocity(x, v, t, dt, r.sigma);
  r.std = r.sigma * std::sqrt(dt);
  if (r.std == 0.0) {
    r.x_next = r.mean;
  } else {
    std::normal_distribution<double> normal(0.0, 1.0);
    r.x_next.resize(x.size());
    for (std::size_t i = 0; i < x.size(); ++i) r.x_next[i] = r.mean[i] + r.std * normal(rng);
    r.logprob = isotropic_gaussian_logpdf(r.x_next, r.mean, r.std);
  }
  detail::check_state(r.x_next, t - dt);
  return r;
}

/// Reverse-time trajectory on the uniform grid t_k = k/T, k = T..1, starting
/// from the given initial noise.
inline Trajectory rollout_from(const PolicyParams& policy, std::size_t prompt, std::size_t steps,
                               const NoiseSchedule& schedule, Vec x_init, Rng& rng) {
  if (steps == 0) throw DomainError("rollout: need at least one step");
  require_dims(x_init.size(), policy.shape.dim, "rollout initial state");
  Trajectory traj;
  traj.prompt = prompt;
  traj.steps.reserve(steps);
  const double dt = 1.0 / static_cast<double>(steps);
  Vec x = std::move(x_init);
  for (std::size_t k = steps; k >= 1; --k) {
    const double t = static_cast<double>(k) / static_cast<double>(steps);
    traj.steps.push_back(sde_step(policy, x, t, dt, prompt, schedule, rng));
    x = traj.steps.back().x_next;
  }
  traj.x_final = x;
  return traj;
}

inline Trajectory rollout(const PolicyParams& policy, std::size_t prompt, std::size_t steps,
                          const NoiseSchedule& schedule, Rng& rng) {
  Vec x0 = standard_normal_vector(policy.shape.dim, rng);
  return rollout_from(policy, prompt, steps, schedule, std::move(x0), rng);
}

/// Deterministic ODE trajectory states x_T, ..., x_0 from the given noise.
inline std::vector<Vec> ode_path(const PolicyParams& policy, std::size_t prompt, std::size_t steps,
                                 Vec x_init) {
  if (steps == 0) throw DomainError("ode_path: need at least one step");
  const double dt = 1.0 / static_cast<double>(steps);
  std::vector<Vec> path;
  path.reserve(steps + 1);
  path.push_back(std::move(x_init));
  for (std::size_t k = steps; k >= 1; --k) {
    const double t = static_cast<double>(k) / static_cast<double>(steps);
    path.push_back(ode_step(policy, path.back(), t, dt, prompt));
  }
  return path;
}

inline Vec ode_sample(const PolicyParams& policy, std::size_t prompt, std::size_t steps,
                      Vec x_init) {
  const double dt = 1.0 / static_cast<double>(steps);
  Vec x = std::move(x_init);
  for (std::size_t k = steps; k >= 1; --k) {
    x = ode_step(policy, x, static_cast<double>(k) / static_cast<double>(steps), dt, prompt);
  }
  return x;
}

/// Step mean under `policy` at the record's stored state.
inline Vec step_mean_under(const PolicyParams& policy, const StepRecord& record,
                           std::size_t prompt) {
  const Vec v = velocity(policy, record.x_t, record.t, prompt);
  return sde_mean_from_velocity(record.x_t, v, record.t, record.dt, record.sigma);
}

/// Log-density of the record's x_next under `policy`, evaluated at the stored x_t.
inline double step_logprob_under(const PolicyParams& policy, const StepRecord& record,
                                 std::size_t prompt) {
  if (!record.stochastic()) {
    throw DomainError("step_logprob_under: deterministic step (std == 0) has no density ratio");
  }
  return isotropic_gaussian_logpdf(record.x_next, step_mean_under(policy, record, prompt),
                                   record.std);
}

/// KL between two Gaussians with equal isotropic std: ||a - b||^2 / (2 std^2).
inline double gaussian_step_kl(std::span<const double> mean_a, std::span<const double> mean_b,
                               double std) {
  if (!(std > 0.0)) throw DomainError("gaussian_step_kl: std must be positive");
  return squared_distance(mean_a, mean_b) / (2.0 * std * std);
}

}  // namespace superflow
