#pragma once

#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "superflow/error.hpp"

namespace superflow {

// Dense 64-bit vector. Dimension is the vector length.
using Vec = std::vector<double>;

inline constexpr double kLog2Pi = 1.8378770664093454835606594728112;

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline double squared_norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return s;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
  require_dims(b.size(), a.size(), "squared_distance");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double dot(std::span<const double> a, std::span<const double> b) {
  require_dims(b.size(), a.size(), "dot");
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Population standard deviation (divides by n).
inline double population_std(std::span<const double> v) {
  if (v.empty()) return 0.0;
  const double mu = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - mu) * (x - mu);
  return std::sqrt(s / static_cast<double>(v.size()));
}

/// Log-density of N(mean, std^2 I) at x. Requires std > 0.
inline double isotropic_gaussian_logpdf(std::span<const double> x, std::span<const double> mean,
                                        double std) {
  const auto d = static_cast<double>(x.size());
  return -squared_distance(x, mean) / (2.0 * std * std) - d * std::log(std) - 0.5 * d * kLog2Pi;
}

}  // namespace superflow
