#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace hbnn {

using Vec = std::vector<double>;
using ConstSpan = std::span<const double>;

inline double dot(ConstSpan a, ConstSpan b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double sq_norm(ConstSpan a) { return dot(a, a); }
inline double norm(ConstSpan a) { return std::sqrt(sq_norm(a)); }

inline Vec scaled(ConstSpan a, double s) {
  Vec out(a.begin(), a.end());
  for (double& x : out) x *= s;
  return out;
}

/// a*x + b*y
inline Vec lincomb(double a, ConstSpan x, double b, ConstSpan y) {
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = a * x[i] + b * y[i];
  return out;
}

inline Vec negated(ConstSpan a) { return scaled(a, -1.0); }

inline double max_abs_diff(ConstSpan a, ConstSpan b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

inline bool all_finite(ConstSpan a) {
  for (double x : a)
    if (!std::isfinite(x)) return false;
  return true;
}

}  // namespace hbnn
