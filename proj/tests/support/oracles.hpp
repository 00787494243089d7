#pragma once

// Independent reference implementations used by the unit and acceptance
// tests. They favour obviousness over speed.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "emplace/geo.hpp"
#include "emplace/rng.hpp"

namespace oracle {

inline double haversine_m(const emplace::geo::LatLon& a, const emplace::geo::LatLon& b) {
  constexpr double kDeg = 3.14159265358979323846 / 180.0;
  const double dlat = (b.lat - a.lat) * kDeg;
  const double dlon = (b.lon - a.lon) * kDeg;
  const double h = std::sin(dlat / 2) * std::sin(dlat / 2) +
                   std::cos(a.lat * kDeg) * std::cos(b.lat * kDeg) * std::sin(dlon / 2) * std::sin(dlon / 2);
  return 2.0 * emplace::geo::kEarthRadiusM * std::asin(std::sqrt(h));
}

/// O(n^2) DBSCAN: core points by explicit neighbour counting, core
/// components by union-find, clusters ordered by their smallest core index
/// in id order, border points to the earliest adjacent cluster.
inline std::set<std::set<std::string>> brute_dbscan(const std::vector<emplace::geo::PanoramaMeta>& pts, double eps,
                                                  std::size_t min_pts) {
  std::vector<std::size_t> order(pts.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](auto a, auto b) { return pts[a].id < pts[b].id; });
  const std::size_t n = pts.size();
  std::vector<std::vector<bool>> adj(n, std::vector<bool>(n, false));
  std::vector<bool> core(n, false);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t count = 0;
    for (std::size_t j = 0; j < n; ++j) {
      adj[i][j] = haversine_m(pts[order[i]].position, pts[order[j]].position) <= eps;
      count += adj[i][j] ? 1 : 0;
    }
    core[i] = count >= min_pts;
  }
  std::vector<std::size_t> parent(n);
  std::iota(parent.begin(), parent.end(), 0);
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (core[i] && core[j] && adj[i][j]) {
        const auto a = find(i), b = find(j);
        if (a != b) parent[std::max(a, b)] = std::min(a, b);
      }
    }
  }
  // Root = smallest index in the component, so rank by root.
  std::vector<std::optional<std::size_t>> owner(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (core[i]) {
      owner[i] = find(i);
      continue;
    }
    for (std::size_t j = 0; j < n; ++j) {
      if (core[j] && adj[i][j] && (!owner[i] || find(j) < *owner[i])) owner[i] = find(j);
    }
  }
  std::vector<std::set<std::string>> by_root(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (owner[i]) by_root[*owner[i]].insert(pts[order[i]].id);
  }
  std::set<std::set<std::string>> out;
  for (auto& s : by_root) {
    if (!s.empty()) out.insert(s);
  }
  return out;
}

inline std::size_t choose3(std::size_t n) { return n < 3 ? 0 : n * (n - 1) * (n - 2) / 6; }

struct Ols {
  double slope, intercept, r2;
};

/// Solves [n Sx; Sx Sxx] [b; m] = [Sy; Sxy] with Cramer's rule on raw sums.
inline Ols normal_equations(const std::vector<double>& x, const std::vector<double>& y) {
  long double n = static_cast<long double>(x.size()), sx = 0, sy = 0, sxx = 0, sxy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sx += x[i];
    sy += y[i];
    sxx += static_cast<long double>(x[i]) * x[i];
    sxy += static_cast<long double>(x[i]) * y[i];
  }
  const long double det = n * sxx - sx * sx;
  const long double m = (n * sxy - sx * sy) / det;
  const long double b = (sy * sxx - sx * sxy) / det;
  long double ybar = sy / n, ss_res = 0, ss_tot = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const long double e = y[i] - (m * x[i] + b);
    ss_res += e * e;
    ss_tot += (y[i] - ybar) * (y[i] - ybar);
  }
  return {static_cast<double>(m), static_cast<double>(b), static_cast<double>(1.0L - ss_res / ss_tot)};
}

}  // namespace oracle
