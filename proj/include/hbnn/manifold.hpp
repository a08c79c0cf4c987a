#pragma once

// Hyperbolic space primitives on the Poincaré ball and the Lorentz
// (hyperboloid) model with constant curvature K < 0.
//
// Points and tangent vectors are plain coordinate vectors. A Space fixes the
// model, the curvature and the intrinsic dimension n; every operation checks
// that its arguments have the matching ambient length (n for the ball, n + 1
// for the hyperboloid) and throws UsageError otherwise.

#include <algorithm>
#include <cstddef>
#include <string>
#include <string_view>

#include "hbnn/vecmath.hpp"

namespace hbnn {

enum class Model { poincare, lorentz };

Model parse_model(std::string_view name);
std::string_view to_string(Model model);

/// Strictly negative, finite sectional curvature.
class Curvature {
 public:
  explicit Curvature(double k);

  double value() const { return k_; }
  /// sqrt(-K), the inverse length scale used throughout the closed forms.
  double kappa() const { return kappa_; }

  friend bool operator==(const Curvature&, const Curvature&) = default;

 private:
  double k_;
  double kappa_;
};

inline constexpr double kBallEps = 1e-5;
inline constexpr double kAcoshFloor = 1.0;
inline constexpr double kAtanhCap = 1.0 - 1e-12;
inline constexpr double kLogFloor = 1e-15;
inline constexpr double kZeroNorm = 1e-12;

inline double clamped_acosh(double x) { return std::acosh(std::max(kAcoshFloor, x)); }
inline double clamped_atanh(double x) { return std::atanh(std::clamp(x, -kAtanhCap, kAtanhCap)); }
inline double clamped_log(double x) { return std::log(std::max(kLogFloor, x)); }

/// Minkowski bilinear form -x_t y_t + <x_s, y_s>.
double lorentz_inner(ConstSpan x, ConstSpan y);

class Space {
 public:
  Space(Model model, Curvature k, std::size_t n);

  Model model() const { return model_; }
  const Curvature& curvature() const { return k_; }
  double k() const { return k_.value(); }
  double kappa() const { return k_.kappa(); }
  std::size_t dim() const { return n_; }
  std::size_t ambient_dim() const { return model_ == Model::lorentz ? n_ + 1 : n_; }

  friend bool operator==(const Space&, const Space&) = default;

  Vec origin() const;

  /// Model invariant: strict ball containment, or hyperboloid residual
  /// |<x,x>_L - 1/K| <= 1e-9 max(1, |1/K|) with x_t > 0.
  bool contains(ConstSpan x) const;

  /// Poincaré: radial rescale onto ||x|| <= (1 - kBallEps)/sqrt(-K).
  /// Lorentz: keep x_s and recompute x_t from the constraint.
  Vec project(ConstSpan raw) const;

  double distance(ConstSpan x, ConstSpan y) const;
  Vec exp(ConstSpan x, ConstSpan v) const;
  Vec log(ConstSpan x, ConstSpan y) const;
  Vec transport(ConstSpan x, ConstSpan y, ConstSpan v) const;

  /// Riemannian metric g_x(u, v) and the induced norm.
  double metric(ConstSpan x, ConstSpan u, ConstSpan v) const;
  double tangent_norm(ConstSpan x, ConstSpan v) const;

  /// Orthogonal projection onto T_x (identity on the ball).
  Vec to_tangent(ConstSpan x, ConstSpan v) const;

  void check_point(ConstSpan x) const;
  void check_same(const Space& other) const;

 private:
  Model model_;
  Curvature k_;
  std::size_t n_;
};

Vec origin(Model model, Curvature k, std::size_t n);

/// lambda_x = 2 / (1 + K ||x||^2) on the ball.
double conformal_factor(const Space& ball, ConstSpan x);

/// Isometry between the ball and the hyperboloid of the same curvature.
Vec to_lorentz(const Curvature& k, ConstSpan p);
Vec to_poincare(const Curvature& k, ConstSpan x);

/// The same geometry in the other model.
Space counterpart(const Space& space);

namespace detail {
/// Möbius addition without any input validation.
Vec mobius_add(double k, ConstSpan x, ConstSpan y);
/// Closed-form Möbius gyration gyr[u, v] w, linear in w.
Vec mobius_gyration(double k, ConstSpan u, ConstSpan v, ConstSpan w);
}  // namespace detail

}  // namespace hbnn
