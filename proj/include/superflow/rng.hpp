#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <vector>

namespace superflow {

using Rng = std::mt19937_64;

// Independent stream keyed by (seed, tags...). The same key always yields the
// same stream, so work can be spread over threads without changing results.
inline Rng make_stream(std::uint64_t seed, std::initializer_list<std::uint64_t> tags = {}) {
  std::vector<std::uint32_t> words;
  words.reserve(2 + 2 * tags.size());
  words.push_back(static_cast<std::uint32_t>(seed));
  words.push_back(static_cast<std::uint32_t>(seed >> 32));
  for (auto t : tags) {
    words.push_back(static_cast<std::uint32_t>(t));
    words.push_back(static_cast<std::uint32_t>(t >> 32));
  }
  std::seed_seq seq(words.begin(), words.end());
  return Rng(seq);
}

// Stream tags used across the code base.
enum class StreamTag : std::uint64_t {
  init = 1,
  pretrain = 2,
  tracker_init = 3,
  batch = 4,
  rollout = 5,
  eval = 6,
  oracle = 7,
};

inline constexpr std::uint64_t tag(StreamTag t) { return static_cast<std::uint64_t>(t); }

inline std::vector<double> standard_normal_vector(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> out(dim);
  for (auto& x : out) x = normal(rng);
  return out;
}

}  // namespace superflow
