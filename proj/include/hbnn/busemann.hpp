#pragma once

// Busemann functions of geodesic rays leaving the origin, horospheres (their
// level sets) and the associated distance checks.

#include <cstdint>
#include <optional>
#include <vector>

#include "hbnn/manifold.hpp"

namespace hbnn {

/// Unit vector of R^n; identifies a ray from the origin (and a point at infinity).
class Direction {
 public:
  /// Normalizes `v`; throws UsageError if ||v|| < 1e-12.
  static Direction normalized(ConstSpan v);
  /// Accepts `v` as is; throws UsageError unless | ||v|| - 1 | <= 1e-12.
  explicit Direction(Vec v);

  const Vec& vec() const { return v_; }
  std::size_t dim() const { return v_.size(); }

 private:
  struct Unchecked {};
  Direction(Vec v, Unchecked) : v_(std::move(v)) {}
  Vec v_;
};

/// { x : -alpha B^v(x) + b = 0 }, i.e. the level set B^v = b / alpha.
struct Horosphere {
  Horosphere(Direction v, double alpha, double b);

  Direction v;
  double alpha;
  double b;

  double level() const { return b / alpha; }
};

double busemann_poincare(const Space& ball, const Direction& v, ConstSpan x);
double busemann_lorentz(const Space& hyperboloid, const Direction& v, ConstSpan x);
double busemann(const Space& space, const Direction& v, ConstSpan x);

/// Point of the unit-speed ray from the origin in direction v at time t.
Vec ray_point(const Space& space, const Direction& v, double t);

/// d(x, gamma(t)) - t: the truncated defining limit of the Busemann function.
double busemann_ray_oracle(const Space& space, const Direction& v, ConstSpan x, double t);

/// Riemannian gradient of B^v at x; a unit tangent vector.
Vec busemann_gradient(const Space& space, const Direction& v, ConstSpan x);

/// |-alpha B^v(x) + b| / alpha.
double point_to_horosphere(const Space& space, ConstSpan x, const Horosphere& h);

/// Deterministic points on the horosphere, built on the hyperboloid and mapped
/// to the ball when `space` is the Poincaré model.
std::vector<Vec> horosphere_sample(const Space& space, const Horosphere& h, std::size_t count,
                                   std::uint64_t seed);

struct HorosphereDistanceReport {
  double expected = 0.0;           ///< |tau2 - tau1|
  double measured = 0.0;           ///< min over sampled pairs and foot points
  double min_pair_distance = 0.0;  ///< min over raw sampled cross pairs
  double max_deviation = 0.0;      ///< max over foot-point distances of |d - expected|, and |measured - expected|
  double min_lower_slack = 0.0;    ///< min over all pairs of d(x, y) - expected (>= 0 up to rounding)
  std::size_t pairs = 0;
};

/// Distance between two horospheres sharing a direction, measured from
/// samples and refined by following the Busemann gradient flow (a geodesic
/// asymptotic to the ray) from each sample to the other horosphere.
HorosphereDistanceReport horosphere_distance_check(const Space& space, const Horosphere& h1,
                                                   const Horosphere& h2, std::size_t samples,
                                                   std::uint64_t seed = 0);

struct Feasibility {
  double discriminant = 0.0;  ///< T^2 - (m - 1)(1 + q)
  bool feasible = false;
  std::vector<double> roots;  ///< R = ||y||^2 (ball) or y_t (hyperboloid) candidates
};

/// Solvability of the "equate Busemann coordinates" FC construction for the
/// responses u, with t_k = exp(-sqrt(-K) u_k), T = sum t_k, q = sum t_k^2.
Feasibility bfc_horosphere_feasibility(ConstSpan u, const Curvature& k, Model model);

}  // namespace hbnn
