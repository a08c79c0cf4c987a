#include "hbnn/manifold.hpp"

#include <cmath>
#include <string>

#include "hbnn/error.hpp"

namespace hbnn {

Model parse_model(std::string_view name) {
  if (name == "poincare") return Model::poincare;
  if (name == "lorentz") return Model::lorentz;
  throw UsageError("unknown model '" + std::string(name) + "' (expected poincare or lorentz)");
}

std::string_view to_string(Model model) {
  return model == Model::poincare ? "poincare" : "lorentz";
}

Curvature::Curvature(double k) : k_(k), kappa_(std::sqrt(-k)) {
  if (!std::isfinite(k) || !(k < 0.0))
    throw UsageError("curvature must be finite and strictly negative, got " + std::to_string(k));
}

double lorentz_inner(ConstSpan x, ConstSpan y) {
  double s = -x[0] * y[0];
  for (std::size_t i = 1; i < x.size(); ++i) s += x[i] * y[i];
  return s;
}

namespace detail {

Vec mobius_add(double k, ConstSpan x, ConstSpan y) {
  const double xy = dot(x, y);
  const double x2 = sq_norm(x);
  const double y2 = sq_norm(y);
  const double cx = 1.0 - 2.0 * k * xy - k * y2;
  const double cy = 1.0 + k * x2;
  const double den = 1.0 - 2.0 * k * xy + k * k * x2 * y2;
  Vec out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = (cx * x[i] + cy * y[i]) / den;
  return out;
}

Vec mobius_gyration(double k, ConstSpan u, ConstSpan v, ConstSpan w) {
  const double uw = dot(u, w);
  const double vw = dot(v, w);
  const double uv = dot(u, v);
  const double u2 = sq_norm(u);
  const double v2 = sq_norm(v);
  const double k2 = k * k;
  const double a = -k2 * uw * v2 - k * vw + 2.0 * k2 * uv * vw;
  const double b = -k2 * vw * u2 + k * uw;
  const double d = 1.0 - 2.0 * k * uv + k2 * u2 * v2;
  Vec out(w.begin(), w.end());
  for (std::size_t i = 0; i < w.size(); ++i) out[i] += 2.0 * (a * u[i] + b * v[i]) / d;
  return out;
}

}  // namespace detail

Space::Space(Model model, Curvature k, std::size_t n) : model_(model), k_(k), n_(n) {
  if (n == 0) throw UsageError("dimension must be >= 1");
}

Vec Space::origin() const {
  Vec o(ambient_dim(), 0.0);
  if (model_ == Model::lorentz) o[0] = 1.0 / kappa();
  return o;
}

void Space::check_point(ConstSpan x) const {
  if (x.size() != ambient_dim())
    throw UsageError("expected a coordinate vector of length " + std::to_string(ambient_dim()) +
                     " for " + std::string(to_string(model_)) + " dimension " + std::to_string(n_) +
                     ", got " + std::to_string(x.size()));
}

void Space::check_same(const Space& other) const {
  if (!(*this == other)) throw UsageError("operands live on different spaces (model, curvature or dimension)");
}

bool Space::contains(ConstSpan x) const {
  if (x.size() != ambient_dim() || !all_finite(x)) return false;
  if (model_ == Model::poincare) return -k() * sq_norm(x) < 1.0;
  const double residual = std::abs(lorentz_inner(x, x) - 1.0 / k());
  return x[0] > 0.0 && residual <= 1e-9 * std::max(1.0, std::abs(1.0 / k()));
}

Vec Space::project(ConstSpan raw) const {
  check_point(raw);
  if (!all_finite(raw)) throw NumericError("cannot project a non-finite vector");
  Vec x(raw.begin(), raw.end());
  if (model_ == Model::poincare) {
    const double max_norm = (1.0 - kBallEps) / kappa();
    const double nrm = norm(x);
    if (nrm > max_norm) {
      const double s = max_norm / nrm;
      for (double& c : x) c *= s;
    }
    return x;
  }
  double s2 = 0.0;
  for (std::size_t i = 1; i < x.size(); ++i) s2 += x[i] * x[i];
  x[0] = std::sqrt(-1.0 / k() + s2);
  return x;
}

double Space::distance(ConstSpan x, ConstSpan y) const {
  check_point(x);
  check_point(y);
  if (model_ == Model::poincare) {
    const Vec w = detail::mobius_add(k(), negated(x), y);
    return 2.0 / kappa() * clamped_atanh(kappa() * norm(w));
  }
  const double beta = k() * lorentz_inner(x, y);
  if (beta > 1.5) return clamped_acosh(beta) / kappa();
  // Near coincidence acosh loses half the digits; the chord form
  // cosh(kd) - 1 = 2 sinh^2(kd/2) = -K ||x - y||_L^2 / 2 does not.
  Vec diff(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) diff[i] = x[i] - y[i];
  const double chord = std::sqrt(std::max(0.0, lorentz_inner(diff, diff)));
  return 2.0 / kappa() * std::asinh(kappa() * chord / 2.0);
}

Vec Space::exp(ConstSpan x, ConstSpan v) const {
  check_point(x);
  check_point(v);
  if (model_ == Model::poincare) {
    const double vn = norm(v);
    if (vn < kZeroNorm) return Vec(x.begin(), x.end());
    const double lam = 2.0 / (1.0 + k() * sq_norm(x));
    const Vec step = scaled(v, std::tanh(kappa() * lam * vn / 2.0) / (kappa() * vn));
    return project(detail::mobius_add(k(), x, step));
  }
  const double vn = std::sqrt(std::max(0.0, lorentz_inner(v, v)));
  if (vn < kZeroNorm) return Vec(x.begin(), x.end());
  const double a = kappa() * vn;
  return project(lincomb(std::cosh(a), x, std::sinh(a) / a, v));
}

Vec Space::log(ConstSpan x, ConstSpan y) const {
  check_point(x);
  check_point(y);
  if (model_ == Model::poincare) {
    const Vec w = detail::mobius_add(k(), negated(x), y);
    const double wn = norm(w);
    if (wn < 1e-15) return Vec(x.size(), 0.0);
    const double lam = 2.0 / (1.0 + k() * sq_norm(x));
    return scaled(w, 2.0 / (kappa() * lam) * clamped_atanh(kappa() * wn) / wn);
  }
  const double beta = std::max(1.0, k() * lorentz_inner(x, y));
  const Vec u = lincomb(1.0, y, -beta, x);
  const double un = std::sqrt(std::max(0.0, lorentz_inner(u, u)));
  if (un < 1e-15) return Vec(x.size(), 0.0);
  // acosh(beta)/sqrt(beta^2 - 1) (y - beta x), with ||y - beta x||_L = sqrt(beta^2 - 1)/sqrt(-K).
  return scaled(u, distance(x, y) / un);
}

Vec Space::transport(ConstSpan x, ConstSpan y, ConstSpan v) const {
  check_point(x);
  check_point(y);
  check_point(v);
  if (model_ == Model::poincare) {
    const double lx = 2.0 / (1.0 + k() * sq_norm(x));
    const double ly = 2.0 / (1.0 + k() * sq_norm(y));
    return scaled(detail::mobius_gyration(k(), y, negated(x), v), lx / ly);
  }
  const double c = k() * lorentz_inner(y, v) / (1.0 + k() * lorentz_inner(x, y));
  Vec out(v.begin(), v.end());
  for (std::size_t i = 0; i < v.size(); ++i) out[i] -= c * (x[i] + y[i]);
  return out;
}

double Space::metric(ConstSpan x, ConstSpan u, ConstSpan v) const {
  check_point(x);
  if (model_ == Model::poincare) {
    const double lam = 2.0 / (1.0 + k() * sq_norm(x));
    return lam * lam * dot(u, v);
  }
  return lorentz_inner(u, v);
}

double Space::tangent_norm(ConstSpan x, ConstSpan v) const {
  return std::sqrt(std::max(0.0, metric(x, v, v)));
}

Vec Space::to_tangent(ConstSpan x, ConstSpan v) const {
  check_point(x);
  check_point(v);
  if (model_ == Model::poincare) return Vec(v.begin(), v.end());
  return lincomb(1.0, v, -k() * lorentz_inner(x, v), x);
}

Vec origin(Model model, Curvature k, std::size_t n) { return Space(model, k, n).origin(); }

double conformal_factor(const Space& ball, ConstSpan x) {
  if (ball.model() != Model::poincare) throw UsageError("conformal factor is defined on the Poincaré ball");
  ball.check_point(x);
  const double den = 1.0 + ball.k() * sq_norm(x);
  if (den <= kBallEps) return 2.0 / (1.0 + ball.k() * sq_norm(ball.project(x)));
  return 2.0 / den;
}

Vec to_lorentz(const Curvature& k, ConstSpan p) {
  const double kap = k.kappa();
  const double u2 = kap * kap * sq_norm(p);
  const double den = 1.0 - u2;
  if (!(den > 0.0)) throw NumericError("point is outside the Poincaré ball; project it first");
  Vec x(p.size() + 1);
  x[0] = (1.0 + u2) / den / kap;
  for (std::size_t i = 0; i < p.size(); ++i) x[i + 1] = 2.0 * p[i] / den;
  return x;
}

Vec to_poincare(const Curvature& k, ConstSpan x) {
  const double den = 1.0 + k.kappa() * x[0];
  Vec p(x.size() - 1);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = x[i + 1] / den;
  return p;
}

Space counterpart(const Space& space) {
  return Space(space.model() == Model::poincare ? Model::lorentz : Model::poincare, space.curvature(),
               space.dim());
}

}  // namespace hbnn
