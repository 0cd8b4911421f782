#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <span>
#include <vector>

#include "superflow/linalg.hpp"
#include "superflow/parallel.hpp"
#include "superflow/rng.hpp"

namespace superflow {

namespace detail {

// Sum of Euclidean distances over unordered pairs within `members` of `pts`.
inline double within_distance_sum(const std::vector<Vec>& pts, const std::vector<std::size_t>& members,
                                  std::size_t threads) {
  const std::size_t n = members.size();
  std::vector<double> partial(n, 0.0);
  parallel_for(n, threads, [&](std::size_t i) {
    const Vec& a = pts[members[i]];
    double s = 0.0;
    for (std::size_t j = i + 1; j < n; ++j) s += std::sqrt(squared_distance(a, pts[members[j]]));
    partial[i] = s;
  });
  return std::accumulate(partial.begin(), partial.end(), 0.0);
}

}  // namespace detail

/// Two-sample energy distance 2 E|X-Y| - E|X-X'| - E|Y-Y'| (V-statistic form).
inline double energy_distance(const std::vector<Vec>& xs, const std::vector<Vec>& ys,
                              std::size_t threads = 1) {
  std::vector<Vec> pooled = xs;
  pooled.insert(pooled.end(), ys.begin(), ys.end());
  std::vector<std::size_t> ix(xs.size()), iy(ys.size()), all(pooled.size());
  std::iota(ix.begin(), ix.end(), 0);
  std::iota(iy.begin(), iy.end(), xs.size());
  std::iota(all.begin(), all.end(), 0);
  const double total = detail::within_distance_sum(pooled, all, threads);
  const double sxx = detail::within_distance_sum(pooled, ix, threads);
  const double syy = detail::within_distance_sum(pooled, iy, threads);
  const double sxy = total - sxx - syy;
  const auto n = static_cast<double>(xs.size());
  const auto m = static_cast<double>(ys.size());
  return 2.0 * sxy / (n * m) - 2.0 * sxx / (n * n) - 2.0 * syy / (m * m);
}

struct PermutationTest {
  double statistic = 0.0;
  std::vector<double> null;  // statistic under random relabelings
  double quantile(double q) const {
    std::vector<double> s = null;
    std::sort(s.begin(), s.end());
    const auto k = static_cast<std::size_t>(std::ceil(q * static_cast<double>(s.size()))) - 1;
    return s[std::min(k, s.size() - 1)];
  }
  double p_value() const {
    const auto ge = std::count_if(null.begin(), null.end(), [&](double v) { return v >= statistic; });
    return (1.0 + static_cast<double>(ge)) / (1.0 + static_cast<double>(null.size()));
  }
};

/// Energy-distance permutation test. Pairwise sums over the pooled sample are
/// shared across relabelings: the cross term follows from the total.
inline PermutationTest energy_permutation_test(const std::vector<Vec>& xs, const std::vector<Vec>& ys,
                                               std::size_t shuffles, std::uint64_t seed,
                                               std::size_t threads = 1) {
  std::vector<Vec> pooled = xs;
  pooled.insert(pooled.end(), ys.begin(), ys.end());
  const std::size_t n = xs.size();
  const std::size_t total_n = pooled.size();
  std::vector<std::size_t> all(total_n);
  std::iota(all.begin(), all.end(), 0);
  const double total = detail::within_distance_sum(pooled, all, threads);
  const auto nx = static_cast<double>(n);
  const auto ny = static_cast<double>(total_n - n);
  auto stat = [&](const std::vector<std::size_t>& perm) {
    std::vector<std::size_t> a(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n));
    std::vector<std::size_t> b(perm.begin() + static_cast<std::ptrdiff_t>(n), perm.end());
    const double sxx = detail::within_distance_sum(pooled, a, threads);
    const double syy = detail::within_distance_sum(pooled, b, threads);
    const double sxy = total - sxx - syy;
    return 2.0 * sxy / (nx * ny) - 2.0 * sxx / (nx * nx) - 2.0 * syy / (ny * ny);
  };
  PermutationTest out;
  out.statistic = stat(all);
  Rng rng = make_stream(seed, {tag(StreamTag::oracle), 0xE4E5});
  std::vector<std::size_t> perm = all;
  for (std::size_t k = 0; k < shuffles; ++k) {
    std::shuffle(perm.begin(), perm.end(), rng);
    out.null.push_back(stat(perm));
  }
  return out;
}

}  // namespace superflow
