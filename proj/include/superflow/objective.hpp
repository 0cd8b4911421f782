#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "superflow/advantage.hpp"
#include "superflow/error.hpp"
#include "superflow/linalg.hpp"
#include "superflow/parallel.hpp"
#include "superflow/policy.hpp"
#include "superflow/sde.hpp"

namespace superflow {

struct ObjectiveResult {
  double objective = 0.0;  // clipped surrogate minus KL penalty
  double loss = 0.0;       // -objective
  PolicyParams grads;      // d(loss)/d(params)
  double mean_kl = 0.0;    // per-step KL(pi_theta || pi_ref), averaged like the objective
  double clip_fraction = 0.0;
};

struct ObjectiveSettings {
  double eps_clip = 0.2;
  double beta_kl = 0.04;
  std::size_t threads = 1;
};

/// PPO-style clipped surrogate over collected trajectories.
///
/// For every step: ratio = p_theta(x_next | x_t) / p_old(x_next | x_t) with the
/// old log-density taken from the record, term = min(ratio A, clip(ratio) A)
/// - beta KL(pi_theta || pi_ref) at the stored state. Terms are averaged 1/T
/// within a trajectory, 1/m within each prompt's group and 1/|B| over prompts.
/// Gradients flow through the new policy's step mean only.
inline ObjectiveResult policy_objective(std::span<const Trajectory> trajs, const AdvantageSet& adv,
                                        const PolicyParams& policy, const PolicyParams& ref,
                                        const ObjectiveSettings& settings) {
  if (trajs.empty()) throw DomainError("policy_objective: no trajectories");
  if (adv.per_step.size() != trajs.size()) {
    throw DimensionError("policy_objective: advantage set does not match trajectories");
  }
  std::map<std::size_t, std::size_t> group_size;
  for (const auto& tr : trajs) group_size[tr.prompt] += 1;
  const double n_groups = static_cast<double>(group_size.size());
  const double eps = settings.eps_clip;

  struct Partial {
    double objective = 0.0;
    double kl = 0.0;
    double clipped = 0.0;
    std::size_t steps = 0;
    PolicyParams grads;
  };
  std::vector<Partial> parts(trajs.size());

  parallel_for(trajs.size(), settings.threads, [&](std::size_t i) {
    const Trajectory& tr = trajs[i];
    const auto& a_steps = adv.per_step[i];
    if (a_steps.size() != tr.steps.size()) {
      throw DimensionError("policy_objective: step advantages do not match trajectory length");
    }
    Partial& part = parts[i];
    part.grads = zeros_like(policy);
    const double weight = 1.0 / (n_groups * static_cast<double>(group_size.at(tr.prompt)) *
                                 static_cast<double>(tr.steps.size()));
    MlpTape tape;
    Vec grad_mean(policy.shape.dim);
    Vec grad_v(policy.shape.dim);
    for (std::size_t s = 0; s < tr.steps.size(); ++s) {
      const StepRecord& rec = tr.steps[s];
      if (!rec.stochastic()) {
        throw DomainError("policy_objective: deterministic step (std == 0) at prompt " +
                          std::to_string(tr.prompt) + ", step " + std::to_string(s));
      }
      const Vec v_new = velocity(policy, rec.x_t, rec.t, tr.prompt, tape);
      const Vec mean_new = sde_mean_from_velocity(rec.x_t, v_new, rec.t, rec.dt, rec.sigma);
      const Vec v_ref = velocity(ref, rec.x_t, rec.t, tr.prompt);
      const Vec mean_ref = sde_mean_from_velocity(rec.x_t, v_ref, rec.t, rec.dt, rec.sigma);

      const double logp_new = isotropic_gaussian_logpdf(rec.x_next, mean_new, rec.std);
      const double ratio = std::exp(logp_new - rec.logprob);
      if (!std::isfinite(ratio)) {
        throw NumericalError("policy_objective: non-finite likelihood ratio at prompt " +
                             std::to_string(tr.prompt) + ", step " + std::to_string(s));
      }
      const double a = a_steps[s];
      const double unclipped = ratio * a;
      const double clipped = std::clamp(ratio, 1.0 - eps, 1.0 + eps) * a;
      const bool use_unclipped = unclipped <= clipped;
      const double term = use_unclipped ? unclipped : clipped;
      const double kl = gaussian_step_kl(mean_new, mean_ref, rec.std);

      part.objective += weight * (term - settings.beta_kl * kl);
      part.kl += weight * kl;
      if (!use_unclipped) part.clipped += 1.0;
      part.steps += 1;

      const double inv_var = 1.0 / (rec.std * rec.std);
      for (std::size_t d = 0; d < grad_mean.size(); ++d) {
        const double dterm = use_unclipped ? a * ratio * (rec.x_next[d] - mean_new[d]) * inv_var : 0.0;
        const double dkl = (mean_new[d] - mean_ref[d]) * inv_var;
        grad_mean[d] = -weight * (dterm - settings.beta_kl * dkl);
      }
      const double slope = mean_velocity_slope(rec.t, rec.dt, rec.sigma);
      for (std::size_t d = 0; d < grad_v.size(); ++d) grad_v[d] = slope * grad_mean[d];
      velocity_backward(policy, tape, tr.prompt, grad_v, part.grads);
    }
  });

  ObjectiveResult out;
  out.grads = zeros_like(policy);
  double clipped = 0.0;
  std::size_t steps = 0;
  for (const auto& p : parts) {
    out.objective += p.objective;
    out.mean_kl += p.kl;
    clipped += p.clipped;
    steps += p.steps;
    add_scaled(out.grads, p.grads);
  }
  out.loss = -out.objective;
  out.clip_fraction = steps ? clipped / static_cast<double>(steps) : 0.0;
  if (!std::isfinite(out.loss)) throw NumericalError("policy_objective: non-finite loss");
  return out;
}

}  // namespace superflow
