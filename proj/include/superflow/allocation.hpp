#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "superflow/error.hpp"

namespace superflow {

/// Per-iteration rollout counts from uncertainty binning.
///
/// The bin score is the uncertainty weight w(c). Bins are K uniform intervals
/// over [min w, max w]; bin k (1-based) holds w in [edge[k-1], edge[k]) with the
/// top bin closed. A prompt in bin b receives M_max - b + 1 rollouts, or
/// M_max - K + b when the mapping is inverted (more rollouts for more
/// uncertain prompts).
struct GroupAllocation {
  std::map<std::size_t, std::size_t> rollouts;  // prompt -> m
  std::map<std::size_t, std::size_t> bin;       // prompt -> b in 1..K
  std::vector<double> bin_edges;                // K + 1 thresholds
};

inline std::vector<double> uniform_bin_edges(double lo, double hi, std::size_t bins) {
  std::vector<double> edges(bins + 1);
  const double width = (hi - lo) / static_cast<double>(bins);
  for (std::size_t k = 0; k < bins; ++k) edges[k] = lo + static_cast<double>(k) * width;
  edges[bins] = hi;
  return edges;
}

inline GroupAllocation allocate_rollouts(const std::map<std::size_t, double>& weights,
                                         std::size_t bins, std::size_t max_rollouts,
                                         bool invert = false) {
  if (bins < 1) throw DomainError("allocate_rollouts: need at least one bin");
  if (max_rollouts < bins) throw DomainError("allocate_rollouts: M_max must be >= K");
  if (weights.empty()) throw DomainError("allocate_rollouts: no prompts");

  double lo = weights.begin()->second;
  double hi = lo;
  for (const auto& [id, w] : weights) {
    lo = std::min(lo, w);
    hi = std::max(hi, w);
  }
  GroupAllocation out;
  out.bin_edges = uniform_bin_edges(lo, hi, bins);
  for (const auto& [id, w] : weights) {
    std::size_t b = 1;
    if (hi > lo) {
      const double pos = (w - lo) / (hi - lo) * static_cast<double>(bins);
      b = std::min(bins, static_cast<std::size_t>(pos) + 1);
    }
    out.bin[id] = b;
    out.rollouts[id] = invert ? max_rollouts - bins + b : max_rollouts - b + 1;
  }
  return out;
}

}  // namespace superflow
