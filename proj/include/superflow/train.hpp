#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "superflow/adam.hpp"
#include "superflow/advantage.hpp"
#include "superflow/allocation.hpp"
#include "superflow/config.hpp"
#include "superflow/error.hpp"
#include "superflow/objective.hpp"
#include "superflow/parallel.hpp"
#include "superflow/policy.hpp"
#include "superflow/rewards.hpp"
#include "superflow/rng.hpp"
#include "superflow/sde.hpp"
#include "superflow/tracker.hpp"

namespace superflow {

struct TrainLogRow {
  std::size_t iteration = 0;
  Variant variant = Variant::superflow;
  std::uint64_t total_rollouts_cum = 0;
  double mean_reward = 0.0;
  std::optional<double> eval_reward;  // present on evaluation iterations only
  double mean_abs_advantage = 0.0;
  double mean_kl_to_ref = 0.0;
  double entropy_proxy = 0.0;  // mean step std sigma_t sqrt(dt)
  double wallclock_s = 0.0;
};

struct TrackerLogRow {
  std::size_t iteration = 0;
  std::size_t prompt_id = 0;
  double v_hat = 0.0;
  double alpha = 0.0;
  double beta = 0.0;
  double w = 0.0;
  std::size_t bin = 0;  // 0 when the variant does not bin
  std::size_t m = 0;
};

struct TrajectoryDumpRow {
  std::size_t iteration = 0;
  std::size_t prompt_id = 0;
  std::size_t rollout_idx = 0;
  double t = 0.0;
  double std = 0.0;
  double logprob = 0.0;
  double reward = 0.0;
};

/// Summary statistics, all derivable from the train log alone.
struct RunSummary {
  double baseline_eval_reward = 0.0;
  double final_eval_reward = 0.0;
  double best_eval_reward = 0.0;
  std::int64_t rollouts_to_threshold = -1;  // -1: threshold never reached
  double late_max_drawdown = 0.0;  // over the final third, relative to the running max
  bool stable = true;              // late_max_drawdown <= 0.2
};

inline constexpr double kStableDrawdown = 0.2;

/// Cumulative rollouts at the first evaluation whose reward reaches `threshold`.
inline std::int64_t rollouts_to_threshold(const std::vector<TrainLogRow>& log, double threshold) {
  for (const auto& row : log) {
    if (row.eval_reward && *row.eval_reward >= threshold) {
      return static_cast<std::int64_t>(row.total_rollouts_cum);
    }
  }
  return -1;
}

/// Largest relative drop below the running maximum of the eval reward, taken
/// over evaluations with iteration >= from_iteration (the running max covers
/// the whole history).
inline double max_drawdown(const std::vector<TrainLogRow>& log, std::size_t from_iteration) {
  double running = -std::numeric_limits<double>::infinity();
  double worst = 0.0;
  for (const auto& row : log) {
    if (!row.eval_reward) continue;
    running = std::max(running, *row.eval_reward);
    if (row.iteration >= from_iteration && running > 0.0) {
      worst = std::max(worst, (running - *row.eval_reward) / running);
    }
  }
  return worst;
}

inline RunSummary summarize(const std::vector<TrainLogRow>& log, double threshold) {
  RunSummary s;
  bool first = true;
  std::size_t last_iteration = 0;
  for (const auto& row : log) {
    last_iteration = std::max(last_iteration, row.iteration);
    if (!row.eval_reward) continue;
    if (first) {
      s.baseline_eval_reward = *row.eval_reward;
      s.best_eval_reward = *row.eval_reward;
      first = false;
    }
    s.final_eval_reward = *row.eval_reward;
    s.best_eval_reward = std::max(s.best_eval_reward, *row.eval_reward);
  }
  s.rollouts_to_threshold = rollouts_to_threshold(log, threshold);
  const std::size_t late_start = last_iteration - last_iteration / 3;
  s.late_max_drawdown = max_drawdown(log, late_start);
  s.stable = s.late_max_drawdown <= kStableDrawdown;
  return s;
}

struct RunArtifacts {
  PolicyParams policy;
  std::vector<TrainLogRow> log;
  std::vector<TrackerLogRow> tracker_log;  // empty for flow_grpo
  std::vector<TrajectoryDumpRow> trajectory_dump;
  RunSummary summary;
};

inline bool uses_trackers(Variant v) { return v != Variant::flow_grpo; }

/// Draws `count` distinct prompts with probability proportional to weight at
/// each draw (successive sampling without replacement). Result is sorted.
inline std::vector<std::size_t> sample_without_replacement(const std::vector<double>& weights,
                                                           std::size_t count, Rng& rng) {
  std::vector<std::size_t> remaining(weights.size());
  for (std::size_t i = 0; i < remaining.size(); ++i) remaining[i] = i;
  std::vector<std::size_t> picked;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  while (picked.size() < count && !remaining.empty()) {
    double total = 0.0;
    for (auto i : remaining) total += weights[i];
    double u = unit(rng) * total;
    std::size_t pos = remaining.size() - 1;
    for (std::size_t k = 0; k < remaining.size(); ++k) {
      u -= weights[remaining[k]];
      if (u < 0.0) {
        pos = k;
        break;
      }
    }
    picked.push_back(remaining[pos]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pos));
  }
  std::sort(picked.begin(), picked.end());
  return picked;
}

/// Deterministic ODE evaluation: mean over prompts of the mean terminal reward
/// from a fixed set of initial noises.
class Evaluator {
 public:
  Evaluator(const RunConfig& cfg, std::size_t threads) : cfg_(cfg), threads_(threads) {
    const std::size_t n = cfg.rl.eval_samples;
    noise_.resize(cfg.prompts.size() * n);
    for (std::size_t p = 0; p < cfg.prompts.size(); ++p) {
      for (std::size_t j = 0; j < n; ++j) {
        Rng rng = make_stream(cfg.seed, {tag(StreamTag::eval), p, j});
        noise_[p * n + j] = standard_normal_vector(cfg.dim(), rng);
      }
    }
  }

  std::vector<double> per_prompt(const PolicyParams& policy) const {
    const std::size_t n = cfg_.rl.eval_samples;
    std::vector<double> rewards(noise_.size());
    parallel_for(noise_.size(), threads_, [&](std::size_t i) {
      const std::size_t p = i / n;
      const Vec x = ode_sample(policy, p, cfg_.rl.t_eval, noise_[i]);
      rewards[i] = evaluate_reward(cfg_.prompts[p].task, x);
    });
    std::vector<double> out(cfg_.prompts.size());
    for (std::size_t p = 0; p < out.size(); ++p) {
      out[p] = mean(std::span<const double>(rewards).subspan(p * n, n));
    }
    return out;
  }

  double operator()(const PolicyParams& policy) const {
    const auto per = per_prompt(policy);
    return mean(per);
  }

 private:
  const RunConfig& cfg_;
  std::size_t threads_;
  std::vector<Vec> noise_;
};

/// Observer hooks for progress reporting.
struct TrainHooks {
  std::function<void(const TrainLogRow&)> on_log;
};

/// RL fine-tuning of `pretrained` with one of the four variants.
///
/// Per iteration: choose the prompt batch and per-prompt rollout counts, collect
/// SDE rollouts with the data-collection snapshot, compute advantages, update
/// the value trackers, then take `updates_per_iter` clipped-surrogate steps.
///
///   flow_grpo  uniform prompts, G rollouts each, group-normalized advantages
///   flow_spo   prompts ~ w, one rollout each, tracker baseline + batch normalization
///   spo_fr     prompts ~ w, M_max rollouts each, tracker baseline + batch normalization
///   superflow  prompts ~ w, m(c) from uncertainty bins, tracker baseline + batch
///              normalization, step advantages eta * sigma_t * A
inline RunArtifacts train(const RunConfig& cfg, Variant variant, const PolicyParams& pretrained,
                          const TrainHooks& hooks = {}) {
  cfg.validate();
  if (pretrained.shape != cfg.policy_shape()) {
    throw ConfigError("train: checkpoint architecture does not match the configuration");
  }
  const auto& rl = cfg.rl;
  const std::size_t n_prompts = cfg.prompts.size();
  const std::size_t threads = cfg.thread_count();
  const NoiseSchedule schedule{rl.noise_level};
  const auto clock_start = std::chrono::steady_clock::now();
  auto wallclock = [&] {
    if (!rl.log_wallclock) return 0.0;
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start).count();
  };

  RunArtifacts out;
  out.policy = pretrained;
  const PolicyParams& ref = pretrained;
  PolicyParams& policy = out.policy;
  PolicyParams snapshot = pretrained;
  auto adam = make_adam_state(policy, AdamHyper{rl.lr, 0.9, 0.999, 1e-8});
  const ObjectiveSettings objective_settings{rl.eps_clip, rl.beta_kl, threads};
  const Evaluator evaluate(cfg, threads);
  std::uint64_t rollouts_cum = 0;
  std::size_t optimizer_steps_since_refresh = 0;

  auto check_rewards = [](const std::vector<Trajectory>& trajs) {
    for (const auto& tr : trajs) {
      if (!(tr.reward >= 0.0 && tr.reward <= 1.0)) {
        throw NumericalError("reward " + std::to_string(tr.reward) + " outside [0,1] for prompt " +
                             std::to_string(tr.prompt));
      }
    }
  };

  auto collect = [&](const PolicyParams& acting, const std::vector<std::size_t>& prompts,
                     const std::vector<std::size_t>& counts, std::uint64_t stream_tag,
                     std::uint64_t iteration, std::size_t steps) {
    std::vector<std::pair<std::size_t, std::size_t>> jobs;
    for (std::size_t k = 0; k < prompts.size(); ++k) {
      for (std::size_t j = 0; j < counts[k]; ++j) jobs.emplace_back(prompts[k], j);
    }
    std::vector<Trajectory> trajs(jobs.size());
    parallel_for(jobs.size(), threads, [&](std::size_t i) {
      const auto [p, j] = jobs[i];
      Rng rng = make_stream(cfg.seed, {stream_tag, iteration, p, j});
      trajs[i] = rollout(acting, p, steps, schedule, rng);
      trajs[i].reward = evaluate_reward(cfg.prompts[p].task, trajs[i].x_final);
    });
    check_rewards(trajs);
    rollouts_cum += trajs.size();
    return trajs;
  };

  auto group_pointers = [](const std::vector<Trajectory>& trajs, std::size_t prompt) {
    std::vector<const Trajectory*> g;
    for (const auto& tr : trajs) {
      if (tr.prompt == prompt) g.push_back(&tr);
    }
    return g;
  };

  // Value trackers from n0 rollouts of the initial policy.
  std::vector<ValueTracker> trackers;
  if (uses_trackers(variant)) {
    std::vector<std::size_t> all(n_prompts);
    for (std::size_t p = 0; p < n_prompts; ++p) all[p] = p;
    const std::vector<std::size_t> counts(n_prompts, cfg.tracker.n0);
    const auto init_trajs = collect(pretrained, all, counts, tag(StreamTag::tracker_init), 0, rl.t_train);
    trackers.resize(n_prompts);
    for (std::size_t p = 0; p < n_prompts; ++p) {
      const auto group = group_pointers(init_trajs, p);
      std::vector<double> rewards;
      for (const auto* tr : group) rewards.push_back(tr->reward);
      trackers[p] = tracker_init(rewards, cfg.tracker);
      record_visit(trackers[p], group, cfg.tracker.probe_cap);
      out.tracker_log.push_back({0, p, trackers[p].v_hat, trackers[p].alpha, trackers[p].beta,
                                 uncertainty_weight(trackers[p], cfg.tracker.epsilon_w), 0, 0});
    }
  }

  {
    TrainLogRow row;
    row.iteration = 0;
    row.variant = variant;
    row.total_rollouts_cum = rollouts_cum;
    row.eval_reward = evaluate(policy);
    row.wallclock_s = wallclock();
    out.log.push_back(row);
    if (hooks.on_log) hooks.on_log(row);
  }

  for (std::size_t it = 1; it <= rl.iterations; ++it) {
    if (it == 1 || optimizer_steps_since_refresh >= rl.update_interval) {
      snapshot = policy;
      optimizer_steps_since_refresh = 0;
    }

    // Prompt batch and rollout counts.
    std::vector<double> weights(n_prompts, 1.0);
    if (uses_trackers(variant)) {
      for (std::size_t p = 0; p < n_prompts; ++p) {
        weights[p] = uncertainty_weight(trackers[p], cfg.tracker.epsilon_w);
      }
    }
    Rng batch_rng = make_stream(cfg.seed, {tag(StreamTag::batch), it});
    const auto batch = sample_without_replacement(weights, rl.batch_prompts, batch_rng);

    std::vector<std::size_t> m_all(n_prompts, 0);
    std::vector<std::size_t> bin_all(n_prompts, 0);
    switch (variant) {
      case Variant::flow_grpo: std::fill(m_all.begin(), m_all.end(), rl.group_size); break;
      case Variant::flow_spo: std::fill(m_all.begin(), m_all.end(), 1); break;
      case Variant::spo_fr: std::fill(m_all.begin(), m_all.end(), rl.m_max); break;
      case Variant::superflow: {
        std::map<std::size_t, double> wmap;
        for (std::size_t p = 0; p < n_prompts; ++p) wmap[p] = weights[p];
        const auto alloc = allocate_rollouts(wmap, rl.bins, rl.m_max, rl.invert_allocation);
        for (std::size_t p = 0; p < n_prompts; ++p) {
          m_all[p] = alloc.rollouts.at(p);
          bin_all[p] = alloc.bin.at(p);
        }
        break;
      }
    }
    std::vector<std::size_t> counts;
    for (auto p : batch) counts.push_back(m_all[p]);

    const auto trajs = collect(snapshot, batch, counts, tag(StreamTag::rollout), it, rl.t_train);

    // Trajectory-level advantages.
    AdvantageSet adv;
    adv.trajectory.resize(trajs.size());
    if (variant == Variant::flow_grpo) {
      for (auto p : batch) {
        std::vector<std::size_t> idx;
        std::vector<double> rewards;
        for (std::size_t i = 0; i < trajs.size(); ++i) {
          if (trajs[i].prompt == p) {
            idx.push_back(i);
            rewards.push_back(trajs[i].reward);
          }
        }
        const auto a = group_advantage(rewards);
        for (std::size_t k = 0; k < idx.size(); ++k) adv.trajectory[idx[k]] = a[k];
      }
      adv.batch_mean = 0.0;
      adv.batch_std = 1.0;
    } else {
      std::vector<double> raw(trajs.size());
      for (std::size_t i = 0; i < trajs.size(); ++i) {
        raw[i] = raw_advantage(trajs[i].reward, trackers[trajs[i].prompt].v_hat);
      }
      if (rl.per_group_centering) {
        for (auto p : batch) {
          double s = 0.0;
          std::size_t n = 0;
          for (std::size_t i = 0; i < trajs.size(); ++i) {
            if (trajs[i].prompt == p) {
              s += raw[i];
              ++n;
            }
          }
          for (std::size_t i = 0; i < trajs.size(); ++i) {
            if (trajs[i].prompt == p) raw[i] -= s / static_cast<double>(n);
          }
        }
      }
      adv.trajectory = normalize_batch_advantages(raw, &adv.batch_mean, &adv.batch_std);
    }

    // Step-level advantages.
    adv.per_step.resize(trajs.size());
    const bool reweight = variant == Variant::superflow;
    for (std::size_t i = 0; i < trajs.size(); ++i) {
      const auto& steps = trajs[i].steps;
      adv.per_step[i].resize(steps.size());
      for (std::size_t s = 0; s < steps.size(); ++s) {
        adv.per_step[i][s] = reweight ? step_advantage(adv.trajectory[i], steps[s].sigma, rl.eta)
                                      : adv.trajectory[i];
      }
    }

    // Tracker updates, with forgetting driven by policy drift since the last visit.
    if (uses_trackers(variant)) {
      for (auto p : batch) {
        auto& tr = trackers[p];
        const double drift = estimate_prompt_kl(snapshot, tr, p);
        const double rho = forgetting_factor(drift, cfg.tracker);
        const auto group = group_pointers(trajs, p);
        for (const auto* traj : group) tracker_update(tr, traj->reward, rho);
        record_visit(tr, group, cfg.tracker.probe_cap);
      }
      for (std::size_t p = 0; p < n_prompts; ++p) {
        const auto& tr = trackers[p];
        out.tracker_log.push_back({it, p, tr.v_hat, tr.alpha, tr.beta, weights[p], bin_all[p], m_all[p]});
      }
    }

    // Policy updates.
    double kl_to_ref = 0.0;
    for (std::size_t u = 0; u < rl.updates_per_iter; ++u) {
      const auto res = policy_objective(trajs, adv, policy, ref, objective_settings);
      if (u == 0) kl_to_ref = res.mean_kl;
      adam_step(policy, res.grads, adam);
      ++optimizer_steps_since_refresh;
    }

    TrainLogRow row;
    row.iteration = it;
    row.variant = variant;
    row.total_rollouts_cum = rollouts_cum;
    double reward_sum = 0.0;
    double abs_adv = 0.0;
    double std_sum = 0.0;
    std::size_t n_steps = 0;
    for (std::size_t i = 0; i < trajs.size(); ++i) {
      reward_sum += trajs[i].reward;
      abs_adv += std::abs(adv.trajectory[i]);
      for (const auto& s : trajs[i].steps) {
        std_sum += s.std;
        ++n_steps;
      }
    }
    row.mean_reward = reward_sum / static_cast<double>(trajs.size());
    row.mean_abs_advantage = abs_adv / static_cast<double>(trajs.size());
    row.mean_kl_to_ref = kl_to_ref;
    row.entropy_proxy = n_steps ? std_sum / static_cast<double>(n_steps) : 0.0;
    if (it % rl.eval_interval == 0 || it == rl.iterations) row.eval_reward = evaluate(policy);
    row.wallclock_s = wallclock();
    out.log.push_back(row);
    if (hooks.on_log) hooks.on_log(row);

    if (rl.trajectory_dump) {
      std::map<std::size_t, std::size_t> seen;
      for (const auto& tr : trajs) {
        const std::size_t idx = seen[tr.prompt]++;
        for (const auto& s : tr.steps) {
          out.trajectory_dump.push_back({it, tr.prompt, idx, s.t, s.std, s.logprob, tr.reward});
        }
      }
    }
  }

  out.summary = summarize(out.log, rl.threshold);
  return out;
}

}  // namespace superflow
