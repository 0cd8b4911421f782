#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "superflow/adam.hpp"
#include "superflow/error.hpp"
#include "superflow/linalg.hpp"
#include "superflow/policy.hpp"
#include "superflow/rng.hpp"

namespace superflow {

/// Straight-line path between data (tau = 0) and noise (tau = 1).
inline Vec interpolate(std::span<const double> x0, std::span<const double> x1, double tau) {
  require_dims(x1.size(), x0.size(), "interpolate");
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw DomainError("interpolate: tau must lie in [0,1], got " + std::to_string(tau));
  }
  Vec out(x0.size());
  for (std::size_t i = 0; i < x0.size(); ++i) out[i] = (1.0 - tau) * x0[i] + tau * x1[i];
  return out;
}

struct FlowSample {
  Vec x0;  // data point
  Vec x1;  // standard-normal noise
  double tau = 0.0;
  std::size_t prompt = 0;
};

/// Isotropic Gaussian mixture standing in for the data distribution.
struct SyntheticDataset {
  struct Component {
    Vec mean;
    double std = 1.0;
    double weight = 1.0;
  };
  std::vector<Component> components;
  std::size_t dim = 2;

  void validate() const {
    if (components.empty()) throw DomainError("dataset: no components");
    double total = 0.0;
    for (const auto& c : components) {
      require_dims(c.mean.size(), dim, "dataset component mean");
      if (!(c.std > 0.0)) throw DomainError("dataset: component std must be positive");
      if (!(c.weight > 0.0)) throw DomainError("dataset: component weight must be positive");
      total += c.weight;
    }
    if (std::abs(total - 1.0) > 1e-9) throw DomainError("dataset: weights must sum to 1");
  }

  Vec sample(Rng& rng) const {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double pick = u(rng);
    std::size_t k = 0;
    for (; k + 1 < components.size(); ++k) {
      if (pick < components[k].weight) break;
      pick -= components[k].weight;
    }
    const auto& c = components[k];
    std::normal_distribution<double> normal(0.0, 1.0);
    Vec x(dim);
    for (std::size_t i = 0; i < dim; ++i) x[i] = c.mean[i] + c.std * normal(rng);
    return x;
  }

  /// `modes` equal-weight 2-D Gaussians evenly spaced on a circle.
  static SyntheticDataset ring(std::size_t modes, double radius, double std) {
    SyntheticDataset d;
    d.dim = 2;
    for (std::size_t k = 0; k < modes; ++k) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(modes);
      d.components.push_back({{radius * std::cos(a), radius * std::sin(a)}, std,
                              1.0 / static_cast<double>(modes)});
    }
    return d;
  }

  static SyntheticDataset standard_normal(std::size_t dim) {
    SyntheticDataset d;
    d.dim = dim;
    d.components.push_back({Vec(dim, 0.0), 1.0, 1.0});
    return d;
  }
};

struct FlowLoss {
  double loss = 0.0;
  PolicyParams grads;
};

/// Mean over the batch of ||(x1 - x0) - v(x_tau, tau, c)||^2 and its gradient.
inline FlowLoss fm_loss_and_grads(const PolicyParams& policy, std::span<const FlowSample> batch) {
  if (batch.empty()) throw DomainError("fm_loss_and_grads: empty batch");
  FlowLoss out{0.0, zeros_like(policy)};
  const double scale = 1.0 / static_cast<double>(batch.size());
  MlpTape tape;
  Vec grad_v(policy.shape.dim);
  for (const auto& s : batch) {
    require_dims(s.x0.size(), policy.shape.dim, "fm_loss x0");
    const Vec xt = interpolate(s.x0, s.x1, s.tau);
    const Vec v = velocity(policy, xt, s.tau, s.prompt, tape);
    double sq = 0.0;
    for (std::size_t i = 0; i < v.size(); ++i) {
      const double r = v[i] - (s.x1[i] - s.x0[i]);
      sq += r * r;
      grad_v[i] = 2.0 * r * scale;
    }
    out.loss += sq * scale;
    velocity_backward(policy, tape, s.prompt, grad_v, out.grads);
  }
  return out;
}

struct PretrainSettings {
  std::size_t steps = 4000;
  std::size_t batch = 128;
  double lr = 2e-3;
  double loss_warn_threshold = 4.0;
  std::size_t smoothing_window = 100;
};

struct PretrainResult {
  PolicyParams params;
  std::vector<double> losses;  // one per step
  double final_smoothed_loss = 0.0;
  bool below_threshold = true;
};

inline double trailing_mean(std::span<const double> v, std::size_t end, std::size_t window) {
  const std::size_t begin = end > window ? end - window : 0;
  double s = 0.0;
  for (std::size_t i = begin; i < end; ++i) s += v[i];
  return end > begin ? s / static_cast<double>(end - begin) : 0.0;
}

/// Supervised flow-matching fit of `init` to `data`. Prompt ids are drawn
/// uniformly per sample, so the base policy is unconditional in distribution.
/// `on_step(step, loss)` is invoked after every optimizer step.
inline PretrainResult pretrain(const SyntheticDataset& data, const PretrainSettings& settings,
                               PolicyParams init, std::uint64_t seed,
                               const std::function<void(std::size_t, double)>& on_step = {}) {
  data.validate();
  require_dims(data.dim, init.shape.dim, "pretrain dataset");
  if (settings.batch == 0) throw DomainError("pretrain: batch size must be positive");

  PretrainResult out{std::move(init), {}, 0.0, true};
  if (settings.steps == 0) return out;

  auto adam = make_adam_state(out.params, AdamHyper{settings.lr, 0.9, 0.999, 1e-8});
  Rng rng = make_stream(seed, {tag(StreamTag::pretrain)});
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> prompt_pick(0, out.params.shape.prompts - 1);
  std::vector<FlowSample> batch(settings.batch);
  out.losses.reserve(settings.steps);

  for (std::size_t step = 0; step < settings.steps; ++step) {
    for (auto& s : batch) {
      s.x0 = data.sample(rng);
      s.x1 = standard_normal_vector(data.dim, rng);
      s.tau = unit(rng);
      s.prompt = prompt_pick(rng);
    }
    auto fl = fm_loss_and_grads(out.params, batch);
    if (!std::isfinite(fl.loss)) {
      throw NumericalError("pretrain: non-finite flow-matching loss at step " +
                           std::to_string(step));
    }
    adam_step(out.params, fl.grads, adam);
    out.losses.push_back(fl.loss);
    if (on_step) on_step(step, fl.loss);
  }
  out.final_smoothed_loss =
      trailing_mean(out.losses, out.losses.size(), settings.smoothing_window);
  out.below_threshold = out.final_smoothed_loss < settings.loss_warn_threshold;
  return out;
}

}  // namespace superflow
