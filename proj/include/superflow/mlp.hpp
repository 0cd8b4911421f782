#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "superflow/error.hpp"
#include "superflow/linalg.hpp"
#include "superflow/rng.hpp"

namespace superflow {

enum class Activation { tanh, relu };

inline const char* to_string(Activation a) { return a == Activation::tanh ? "tanh" : "relu"; }

inline Activation activation_from_string(const std::string& s) {
  if (s == "tanh") return Activation::tanh;
  if (s == "relu") return Activation::relu;
  throw ConfigError("unknown activation '" + s + "' (expected tanh or relu)");
}

/// Dense layer computing y = x W + b, with W stored row-major as rows = in, cols = out.
struct Layer {
  std::size_t in = 0;
  std::size_t out = 0;
  std::vector<double> weight;  // in * out
  std::vector<double> bias;    // out

  Layer() = default;
  Layer(std::size_t in_dim, std::size_t out_dim)
      : in(in_dim), out(out_dim), weight(in_dim * out_dim, 0.0), bias(out_dim, 0.0) {}

  double& w(std::size_t row, std::size_t col) { return weight[row * out + col]; }
  double w(std::size_t row, std::size_t col) const { return weight[row * out + col]; }

  bool operator==(const Layer&) const = default;
};

/// Multilayer perceptron. Every layer except the last is followed by its
/// activation; the output layer is linear.
struct MlpParams {
  std::vector<Layer> layers;
  std::vector<Activation> activations;  // one per hidden layer: layers.size() - 1

  std::size_t in_dim() const { return layers.empty() ? 0 : layers.front().in; }
  std::size_t out_dim() const { return layers.empty() ? 0 : layers.back().out; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& l : layers) n += l.weight.size() + l.bias.size();
    return n;
  }

  bool operator==(const MlpParams&) const = default;
};

/// Same shapes as `p`, all entries zero.
inline MlpParams zeros_like(const MlpParams& p) {
  MlpParams z;
  z.activations = p.activations;
  z.layers.reserve(p.layers.size());
  for (const auto& l : p.layers) z.layers.emplace_back(l.in, l.out);
  return z;
}

inline void validate(const MlpParams& p) {
  if (p.layers.empty()) throw DimensionError("mlp: no layers");
  if (p.activations.size() + 1 != p.layers.size()) {
    throw DimensionError("mlp: need exactly one activation per hidden layer");
  }
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    const auto& l = p.layers[k];
    if (l.in == 0 || l.out == 0) throw DimensionError("mlp: zero-width layer");
    if (l.weight.size() != l.in * l.out || l.bias.size() != l.out) {
      throw DimensionError("mlp: layer " + std::to_string(k) + " storage does not match its shape");
    }
    if (k + 1 < p.layers.size() && p.layers[k + 1].in != l.out) {
      throw DimensionError("mlp: layer " + std::to_string(k) + " output does not chain into layer " +
                           std::to_string(k + 1));
    }
  }
}

/// Uniform init in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
inline MlpParams make_mlp(std::span<const std::size_t> sizes, Activation hidden, Rng& rng) {
  if (sizes.size() < 2) throw DimensionError("make_mlp: need at least input and output sizes");
  MlpParams p;
  for (std::size_t k = 0; k + 1 < sizes.size(); ++k) {
    Layer l(sizes[k], sizes[k + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(sizes[k]));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (auto& w : l.weight) w = u(rng);
    for (auto& b : l.bias) b = u(rng);
    p.layers.push_back(std::move(l));
    if (k + 2 < sizes.size()) p.activations.push_back(hidden);
  }
  return p;
}

/// Layer inputs recorded during a forward pass: `inputs[k]` feeds layer k.
struct MlpTape {
  std::vector<Vec> inputs;
};

namespace detail {

inline void affine(const Layer& l, std::span<const double> x, Vec& y) {
  y.assign(l.bias.begin(), l.bias.end());
  for (std::size_t i = 0; i < l.in; ++i) {
    const double xi = x[i];
    const double* row = &l.weight[i * l.out];
    for (std::size_t j = 0; j < l.out; ++j) y[j] += xi * row[j];
  }
}

inline void activate(Activation a, Vec& y) {
  if (a == Activation::tanh) {
    for (auto& v : y) v = std::tanh(v);
  } else {
    for (auto& v : y) v = v > 0.0 ? v : 0.0;
  }
}

// Derivative of the activation expressed through its output.
inline double activation_slope(Activation a, double out) {
  return a == Activation::tanh ? 1.0 - out * out : (out > 0.0 ? 1.0 : 0.0);
}

}  // namespace detail

inline Vec mlp_forward(const MlpParams& params, std::span<const double> input, MlpTape& tape) {
  require_dims(input.size(), params.in_dim(), "mlp_forward input");
  const std::size_t n = params.layers.size();
  tape.inputs.resize(n);
  tape.inputs[0].assign(input.begin(), input.end());
  Vec y;
  for (std::size_t k = 0; k < n; ++k) {
    detail::affine(params.layers[k], tape.inputs[k], y);
    if (k + 1 < n) {
      detail::activate(params.activations[k], y);
      tape.inputs[k + 1] = y;
    }
  }
  return y;
}

inline Vec mlp_forward(const MlpParams& params, std::span<const double> input) {
  MlpTape tape;
  return mlp_forward(params, input, tape);
}

/// Reverse pass over a recorded tape. Parameter gradients are added into
/// `grads` (same shapes as params); the input gradient is returned.
inline Vec mlp_backward_accumulate(const MlpParams& params, const MlpTape& tape,
                                   std::span<const double> grad_output, MlpParams& grads) {
  require_dims(grad_output.size(), params.out_dim(), "mlp_backward grad_output");
  const std::size_t n = params.layers.size();
  Vec delta(grad_output.begin(), grad_output.end());
  Vec prev;
  for (std::size_t k = n; k-- > 0;) {
    const Layer& l = params.layers[k];
    Layer& g = grads.layers[k];
    const Vec& x = tape.inputs[k];
    for (std::size_t j = 0; j < l.out; ++j) g.bias[j] += delta[j];
    prev.assign(l.in, 0.0);
    for (std::size_t i = 0; i < l.in; ++i) {
      const double xi = x[i];
      const double* row = &l.weight[i * l.out];
      double* grow = &g.weight[i * l.out];
      double acc = 0.0;
      for (std::size_t j = 0; j < l.out; ++j) {
        grow[j] += xi * delta[j];
        acc += row[j] * delta[j];
      }
      prev[i] = acc;
    }
    if (k > 0) {
      const Activation a = params.activations[k - 1];
      for (std::size_t i = 0; i < l.in; ++i) prev[i] *= detail::activation_slope(a, x[i]);
    }
    delta.swap(prev);
  }
  return delta;
}

struct MlpGradients {
  MlpParams param_grads;
  Vec grad_input;
};

inline MlpGradients mlp_backward(const MlpParams& params, std::span<const double> input,
                                 std::span<const double> grad_output) {
  MlpTape tape;
  mlp_forward(params, input, tape);
  MlpGradients out{zeros_like(params), {}};
  out.grad_input = mlp_backward_accumulate(params, tape, grad_output, out.param_grads);
  return out;
}

// Flat views over every parameter block, in a fixed order shared by all
// objects with the same shapes.
inline std::vector<std::span<double>> parameter_blocks(MlpParams& p) {
  std::vector<std::span<double>> out;
  for (auto& l : p.layers) {
    out.emplace_back(l.weight);
    out.emplace_back(l.bias);
  }
  return out;
}

inline std::vector<std::span<const double>> parameter_blocks(const MlpParams& p) {
  std::vector<std::span<const double>> out;
  for (const auto& l : p.layers) {
    out.emplace_back(l.weight);
    out.emplace_back(l.bias);
  }
  return out;
}

}  // namespace superflow
