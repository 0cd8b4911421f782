#pragma once

#include <cmath>
#include <cstddef>
#include <numbers>
#include <random>
#include <span>
#include <vector>

#include "superflow/error.hpp"
#include "superflow/linalg.hpp"
#include "superflow/mlp.hpp"
#include "superflow/rng.hpp"

namespace superflow {

struct PolicyShape {
  std::size_t dim = 2;          // data dimension
  std::size_t time_freqs = 3;   // sinusoidal time features: sin/cos(k*pi*t), k = 1..time_freqs
  std::size_t embed_dim = 4;    // learned prompt embedding width
  std::size_t prompts = 1;      // embedding rows
  std::vector<std::size_t> hidden{32, 32};
  Activation activation = Activation::tanh;

  std::size_t feature_dim() const { return dim + 1 + 2 * time_freqs + embed_dim; }

  bool operator==(const PolicyShape&) const = default;
};

/// Conditional velocity field v(x, t, c): an MLP over [x, t, sin/cos(k*pi*t), e_c]
/// where e_c is a learned embedding row per prompt.
struct PolicyParams {
  PolicyShape shape;
  MlpParams net;
  std::vector<double> embedding;  // prompts * embed_dim, row-major

  std::span<const double> embedding_row(std::size_t prompt) const {
    return std::span<const double>(embedding).subspan(prompt * shape.embed_dim, shape.embed_dim);
  }
  std::span<double> embedding_row(std::size_t prompt) {
    return std::span<double>(embedding).subspan(prompt * shape.embed_dim, shape.embed_dim);
  }

  bool operator==(const PolicyParams&) const = default;
};

inline PolicyParams zeros_like(const PolicyParams& p) {
  return PolicyParams{p.shape, zeros_like(p.net), std::vector<double>(p.embedding.size(), 0.0)};
}

inline std::vector<std::span<double>> parameter_blocks(PolicyParams& p) {
  auto out = parameter_blocks(p.net);
  out.emplace_back(p.embedding);
  return out;
}

inline std::vector<std::span<const double>> parameter_blocks(const PolicyParams& p) {
  auto out = parameter_blocks(p.net);
  out.emplace_back(p.embedding);
  return out;
}

inline PolicyParams make_policy(const PolicyShape& shape, Rng& rng) {
  if (shape.dim == 0 || shape.prompts == 0) throw DimensionError("make_policy: empty shape");
  std::vector<std::size_t> sizes;
  sizes.push_back(shape.feature_dim());
  sizes.insert(sizes.end(), shape.hidden.begin(), shape.hidden.end());
  sizes.push_back(shape.dim);
  PolicyParams p;
  p.shape = shape;
  p.net = make_mlp(sizes, shape.activation, rng);
  p.embedding.resize(shape.prompts * shape.embed_dim);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (auto& e : p.embedding) e = u(rng);
  return p;
}

inline void check_prompt(const PolicyParams& p, std::size_t prompt) {
  if (prompt >= p.shape.prompts) {
    throw DimensionError("policy: prompt index " + std::to_string(prompt) + " out of range (" +
                         std::to_string(p.shape.prompts) + " embedding rows)");
  }
}

inline Vec policy_features(const PolicyParams& p, std::span<const double> x, double t,
                           std::size_t prompt) {
  require_dims(x.size(), p.shape.dim, "policy input");
  check_prompt(p, prompt);
  Vec f;
  f.reserve(p.shape.feature_dim());
  f.insert(f.end(), x.begin(), x.end());
  f.push_back(t);
  for (std::size_t k = 1; k <= p.shape.time_freqs; ++k) {
    const double w = static_cast<double>(k) * std::numbers::pi * t;
    f.push_back(std::sin(w));
    f.push_back(std::cos(w));
  }
  const auto e = p.embedding_row(prompt);
  f.insert(f.end(), e.begin(), e.end());
  return f;
}

inline Vec velocity(const PolicyParams& p, std::span<const double> x, double t,
                    std::size_t prompt) {
  return mlp_forward(p.net, policy_features(p, x, t, prompt));
}

inline Vec velocity(const PolicyParams& p, std::span<const double> x, double t,
                    std::size_t prompt, MlpTape& tape) {
  return mlp_forward(p.net, policy_features(p, x, t, prompt), tape);
}

/// Accumulates d(loss)/d(params) into `grads` given d(loss)/dv, using the
/// tape of the matching velocity() call. Returns d(loss)/dx.
inline Vec velocity_backward(const PolicyParams& p, const MlpTape& tape, std::size_t prompt,
                             std::span<const double> grad_v, PolicyParams& grads) {
  const Vec gin = mlp_backward_accumulate(p.net, tape, grad_v, grads.net);
  const std::size_t off = p.shape.dim + 1 + 2 * p.shape.time_freqs;
  auto row = grads.embedding_row(prompt);
  for (std::size_t k = 0; k < p.shape.embed_dim; ++k) row[k] += gin[off + k];
  return Vec(gin.begin(), gin.begin() + static_cast<std::ptrdiff_t>(p.shape.dim));
}

/// grads += scale * other, shapes must match.
inline void add_scaled(PolicyParams& grads, const PolicyParams& other, double scale = 1.0) {
  auto a = parameter_blocks(grads);
  const auto b = parameter_blocks(other);
  for (std::size_t k = 0; k < a.size(); ++k) {
    for (std::size_t i = 0; i < a[k].size(); ++i) a[k][i] += scale * b[k][i];
  }
}

}  // namespace superflow
