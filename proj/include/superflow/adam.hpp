#pragma once

#include <cmath>
#include <cstdint>
#include <string>

#include "superflow/error.hpp"
#include "superflow/linalg.hpp"

namespace superflow {

struct AdamHyper {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// First/second moment estimates mirroring the parameter shapes of P.
template <class P>
struct AdamState {
  P m;
  P v;
  std::uint64_t step_count = 0;
  AdamHyper hyper;
};

template <class P>
AdamState<P> make_adam_state(const P& params, AdamHyper hyper) {
  return AdamState<P>{zeros_like(params), zeros_like(params), 0, hyper};
}

/// One bias-corrected Adam step applied in place. A non-finite gradient
/// entry rejects the whole update and leaves params and state untouched.
template <class P>
void adam_step(P& params, const P& grads, AdamState<P>& state) {
  auto pb = parameter_blocks(params);
  const auto gb = parameter_blocks(grads);
  auto mb = parameter_blocks(state.m);
  auto vb = parameter_blocks(state.v);
  if (gb.size() != pb.size() || mb.size() != pb.size() || vb.size() != pb.size()) {
    throw DimensionError("adam_step: parameter/gradient/state block counts differ");
  }
  for (std::size_t b = 0; b < pb.size(); ++b) {
    if (gb[b].size() != pb[b].size() || mb[b].size() != pb[b].size() ||
        vb[b].size() != pb[b].size()) {
      throw DimensionError("adam_step: block " + std::to_string(b) + " shapes differ");
    }
    if (!all_finite(gb[b])) {
      throw NumericalError("adam_step: non-finite gradient in block " + std::to_string(b) +
                           "; update rejected");
    }
  }

  const auto& h = state.hyper;
  state.step_count += 1;
  const auto t = static_cast<double>(state.step_count);
  const double c1 = 1.0 - std::pow(h.beta1, t);
  const double c2 = 1.0 - std::pow(h.beta2, t);
  for (std::size_t b = 0; b < pb.size(); ++b) {
    auto p = pb[b];
    auto g = gb[b];
    auto m = mb[b];
    auto v = vb[b];
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = h.beta1 * m[i] + (1.0 - h.beta1) * g[i];
      v[i] = h.beta2 * v[i] + (1.0 - h.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      p[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
    }
  }
}

}  // namespace superflow
