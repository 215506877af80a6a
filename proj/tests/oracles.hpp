#pragma once

// Independent reference computations shared by the unit tests and the
// acceptance runner. Nothing here calls the code it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <span>
#include <vector>

#include "groundloop/scene.hpp"

namespace oracle {

// IoU of two inclusive cell rectangles by counting cells on an n x n grid.
inline double pixel_iou(const groundloop::CellRect& a, const groundloop::CellRect& b, int n) {
  int inter = 0, uni = 0;
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const bool ia = x >= a.x0 && x <= a.x1 && y >= a.y0 && y <= a.y1;
      const bool ib = x >= b.x0 && x <= b.x1 && y >= b.y0 && y <= b.y1;
      inter += ia && ib;
      uni += ia || ib;
    }
  return uni == 0 ? 0.0 : static_cast<double>(inter) / uni;
}

inline double mean(std::span<const double> v) {
  long double s = 0;
  for (double x : v) s += x;
  return static_cast<double>(s / v.size());
}

// Two-pass population standard deviation.
inline double population_std(std::span<const double> v) {
  const double m = mean(v);
  long double s = 0;
  for (double x : v) s += (x - m) * (x - m);
  return std::sqrt(static_cast<double>(s / v.size()));
}

// Pearson statistic against the uniform distribution.
inline double chi_square_uniform(std::span<const long> counts) {
  const double n = std::accumulate(counts.begin(), counts.end(), 0.0);
  const double e = n / counts.size();
  double chi = 0;
  for (long c : counts) chi += (c - e) * (c - e) / e;
  return chi;
}

// chi^2 with k-1 degrees of freedom stays within 3 sigma of its mean.
inline bool chi_square_within_3sigma(std::span<const long> counts) {
  const double df = static_cast<double>(counts.size() - 1);
  return chi_square_uniform(counts) <= df + 3.0 * std::sqrt(2.0 * df);
}

inline double central_difference(const std::function<double(double)>& f, double x, double h) {
  return (f(x + h) - f(x - h)) / (2 * h);
}

// Richardson-extrapolated central difference, O(h^4) truncation error.
inline double richardson_difference(const std::function<double(double)>& f, double x, double h) {
  const double d1 = central_difference(f, x, h);
  const double d2 = central_difference(f, x, h / 2);
  return (4 * d2 - d1) / 3;
}

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), 1e-7});
  return std::abs(analytic - numeric) / scale;
}

// Edge-adjacency to a category by scanning the 4-neighbourhood of every
// object cell.
inline bool touches(const groundloop::Scene& s, const groundloop::CellRect& r, groundloop::Category c) {
  const int dx[] = {1, -1, 0, 0};
  const int dy[] = {0, 0, 1, -1};
  for (int y = r.y0; y <= r.y1; ++y)
    for (int x = r.x0; x <= r.x1; ++x)
      for (int k = 0; k < 4; ++k) {
        const int nx = x + dx[k], ny = y + dy[k];
        if (nx < 0 || ny < 0 || nx >= s.width || ny >= s.height) continue;
        if (nx >= r.x0 && nx <= r.x1 && ny >= r.y0 && ny <= r.y1) continue;
        if (s.at(nx, ny) == c) return true;
      }
  return false;
}

// Exact binomial upper tail P(X >= k), X ~ Bin(n, 1/2), by summing terms.
inline double binomial_upper_tail(int k, int n) {
  double total = 0;
  for (int i = std::max(k, 0); i <= n; ++i) {
    double c = 1;
    for (int j = 0; j < i; ++j) c = c * (n - j) / (j + 1);
    total += c;
  }
  return total / std::pow(2.0, n);
}

}  // namespace oracle
