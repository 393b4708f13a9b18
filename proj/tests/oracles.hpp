#pragma once

// Independent reference implementations used by unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <vector>

namespace oracle {

// Literal first-fit: for each unit, scan every edge's containers from index 0,
// stop at the first unit that cannot be routed, commit only routable units.
inline std::int64_t first_fit(std::vector<std::vector<double>>& edges, double v, std::int64_t q) {
  std::int64_t placed = 0;
  for (std::int64_t u = 0; u < q; ++u) {
    std::vector<std::size_t> slot;
    for (auto& residuals : edges) {
      std::size_t j = 0;
      while (j < residuals.size() && residuals[j] < v) ++j;
      if (j == residuals.size()) return placed;
      slot.push_back(j);
    }
    for (std::size_t k = 0; k < edges.size(); ++k) edges[k][slot[k]] -= v;
    ++placed;
  }
  return placed;
}

inline double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// P(L = l) for L = max(1, ceil(X)), X ~ N(mu, (0.2 mu)^2).
inline double lead_time_pmf(int l, double mu) {
  const double sd = 0.2 * mu;
  if (l < 1) return 0.0;
  if (l == 1) return normal_cdf((1.0 - mu) / sd);
  return normal_cdf((l - mu) / sd) - normal_cdf((l - 1 - mu) / sd);
}

}  // namespace oracle
