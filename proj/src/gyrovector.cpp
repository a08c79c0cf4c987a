#include "hbnn/gyrovector.hpp"

#include <cmath>

#include "hbnn/error.hpp"

namespace hbnn {

namespace {

constexpr double kTinyDenominator = 1e-15;
constexpr double kOriginNorm = 1e-15;

void require(const Space& space, Model model, const char* op) {
  if (space.model() != model)
    throw UsageError(std::string(op) + " requires the " + std::string(to_string(model)) + " model");
}

double mobius_denominator(double k, ConstSpan x, ConstSpan y) {
  return 1.0 - 2.0 * k * dot(x, y) + k * k * sq_norm(x) * sq_norm(y);
}

double spatial_norm(ConstSpan x) { return norm(x.subspan(1)); }

}  // namespace

Vec mobius_add(const Space& ball, ConstSpan x, ConstSpan y) {
  require(ball, Model::poincare, "mobius_add");
  ball.check_point(x);
  ball.check_point(y);
  if (mobius_denominator(ball.k(), x, y) >= kTinyDenominator)
    return ball.project(detail::mobius_add(ball.k(), x, y));
  const Vec px = ball.project(x);
  const Vec py = ball.project(y);
  if (mobius_denominator(ball.k(), px, py) < kTinyDenominator)
    throw NumericError("Möbius addition denominator vanished after projection");
  return ball.project(detail::mobius_add(ball.k(), px, py));
}

Vec mobius_scalar(const Space& ball, double t, ConstSpan x) {
  require(ball, Model::poincare, "mobius_scalar");
  ball.check_point(x);
  const double xn = norm(x);
  if (xn < kOriginNorm || t == 0.0) return Vec(x.size(), 0.0);
  const double kap = ball.kappa();
  const double r = std::tanh(t * clamped_atanh(kap * xn)) / kap;
  return ball.project(scaled(x, r / xn));
}

Vec lorentz_gyro_add(const Space& hyperboloid, ConstSpan x, ConstSpan y) {
  require(hyperboloid, Model::lorentz, "lorentz_gyro_add");
  hyperboloid.check_point(x);
  hyperboloid.check_point(y);
  if (spatial_norm(y) < kOriginNorm) return Vec(x.begin(), x.end());
  if (spatial_norm(x) < kOriginNorm) return Vec(y.begin(), y.end());

  const double k = hyperboloid.k();
  const double kap = hyperboloid.kappa();
  const ConstSpan xs = x.subspan(1);
  const ConstSpan ys = y.subspan(1);
  const double a = 1.0 + kap * x[0];
  const double b = 1.0 + kap * y[0];
  const double nx = sq_norm(xs);
  const double ny = sq_norm(ys);
  const double sxy = dot(xs, ys);
  const double d = a * a * b * b - 2.0 * k * a * b * sxy + k * k * nx * ny;
  const double nn = a * a * ny + 2.0 * a * b * sxy + b * b * nx;
  const double den = d + k * nn;
  if (std::abs(den) < kTinyDenominator) throw NumericError("Lorentz gyroaddition denominator vanished");
  const double as = a * b * b - 2.0 * k * b * sxy - k * a * ny;
  const double ay = b * (a * a + k * nx);
  Vec out(x.size());
  out[0] = (d - k * nn) / den / kap;
  for (std::size_t i = 0; i < xs.size(); ++i) out[i + 1] = 2.0 * (as * xs[i] + ay * ys[i]) / den;
  return hyperboloid.project(out);
}

Vec lorentz_gyro_scalar(const Space& hyperboloid, double t, ConstSpan x) {
  require(hyperboloid, Model::lorentz, "lorentz_gyro_scalar");
  hyperboloid.check_point(x);
  const double sn = spatial_norm(x);
  if (t == 0.0 || sn < kOriginNorm) return hyperboloid.origin();
  const double kap = hyperboloid.kappa();
  // theta = acosh(sqrt(-K) x_t); on the hyperboloid this equals asinh(sqrt(-K) ||x_s||),
  // which keeps full precision near the origin.
  const double theta = std::asinh(kap * sn);
  Vec out(x.size());
  out[0] = std::cosh(t * theta) / kap;
  const double s = std::sinh(t * theta) / kap / sn;
  for (std::size_t i = 1; i < x.size(); ++i) out[i] = s * x[i];
  return hyperboloid.project(out);
}

Vec gyro_add(const Space& space, ConstSpan x, ConstSpan y) {
  return space.model() == Model::poincare ? mobius_add(space, x, y) : lorentz_gyro_add(space, x, y);
}

Vec gyro_scalar(const Space& space, double t, ConstSpan x) {
  return space.model() == Model::poincare ? mobius_scalar(space, t, x) : lorentz_gyro_scalar(space, t, x);
}

Vec gyro_inverse(const Space& space, ConstSpan x) {
  space.check_point(x);
  if (space.model() == Model::poincare) return negated(x);
  Vec out = negated(x);
  out[0] = x[0];
  return out;
}

Vec gyration(const Space& space, ConstSpan x, ConstSpan y, ConstSpan z) {
  const Vec lhs = gyro_inverse(space, gyro_add(space, x, y));
  const Vec rhs = gyro_add(space, x, gyro_add(space, y, z));
  return gyro_add(space, lhs, rhs);
}

}  // namespace hbnn
