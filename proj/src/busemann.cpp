#include "hbnn/busemann.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>

#include "hbnn/error.hpp"

namespace hbnn {

namespace {

void check_direction(const Space& space, const Direction& v) {
  if (v.dim() != space.dim())
    throw UsageError("direction has dimension " + std::to_string(v.dim()) + ", space has " +
                     std::to_string(space.dim()));
}

}  // namespace

Direction Direction::normalized(ConstSpan v) {
  const double n = norm(v);
  if (!(n >= kZeroNorm)) throw UsageError("cannot normalize a (near-)zero direction");
  return Direction(scaled(v, 1.0 / n), Unchecked{});
}

Direction::Direction(Vec v) : v_(std::move(v)) {
  if (v_.empty() || std::abs(norm(v_) - 1.0) > 1e-12) throw UsageError("direction must have unit norm");
}

Horosphere::Horosphere(Direction v_, double alpha_, double b_) : v(std::move(v_)), alpha(alpha_), b(b_) {
  if (!(alpha > 0.0) || !std::isfinite(alpha)) throw UsageError("horosphere scale alpha must be positive");
}

double busemann_poincare(const Space& ball, const Direction& v, ConstSpan x) {
  if (ball.model() != Model::poincare) throw UsageError("busemann_poincare requires the Poincaré ball");
  ball.check_point(x);
  check_direction(ball, v);
  const double kap = ball.kappa();
  double num = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = v.vec()[i] - kap * x[i];
    num += d * d;
  }
  const double den = 1.0 + ball.k() * sq_norm(x);
  return clamped_log(num / den) / kap;
}

double busemann_lorentz(const Space& hyperboloid, const Direction& v, ConstSpan x) {
  if (hyperboloid.model() != Model::lorentz) throw UsageError("busemann_lorentz requires the Lorentz model");
  hyperboloid.check_point(x);
  check_direction(hyperboloid, v);
  const double kap = hyperboloid.kappa();
  return clamped_log(kap * (x[0] - dot(x.subspan(1), v.vec()))) / kap;
}

double busemann(const Space& space, const Direction& v, ConstSpan x) {
  return space.model() == Model::poincare ? busemann_poincare(space, v, x) : busemann_lorentz(space, v, x);
}

Vec ray_point(const Space& space, const Direction& v, double t) {
  check_direction(space, v);
  const double kap = space.kappa();
  if (space.model() == Model::poincare) return scaled(v.vec(), std::tanh(kap * t / 2.0) / kap);
  Vec out(space.ambient_dim());
  out[0] = std::cosh(kap * t) / kap;
  const double s = std::sinh(kap * t) / kap;
  for (std::size_t i = 0; i < v.dim(); ++i) out[i + 1] = s * v.vec()[i];
  return out;
}

double busemann_ray_oracle(const Space& space, const Direction& v, ConstSpan x, double t) {
  if (!(t > 0.0)) throw UsageError("ray oracle needs t > 0");
  space.check_point(x);
  check_direction(space, v);
  const double kap = space.kappa();
  if (space.model() == Model::lorentz) return space.distance(x, ray_point(space, v, t)) - t;

  // On the ball gamma(t) = tanh(kt/2) v / k reaches the boundary in double
  // precision long before t = 20, so the conformal factor of gamma(t) is
  // carried analytically: 1 - k^2 ||gamma||^2 = 1 / cosh^2(kt/2).
  const double s = kap * t / 2.0;
  const double th = std::tanh(s);
  const double ch = std::cosh(s);
  const double gap2 = sq_norm(x) - 2.0 * th * dot(x, v.vec()) / kap + th * th / (kap * kap);
  const double arg = 1.0 + 2.0 * kap * kap * std::max(0.0, gap2) * ch * ch / (1.0 + space.k() * sq_norm(x));
  return clamped_acosh(arg) / kap - t;
}

Vec busemann_gradient(const Space& space, const Direction& v, ConstSpan x) {
  space.check_point(x);
  check_direction(space, v);
  const double kap = space.kappa();
  const double k = space.k();
  if (space.model() == Model::lorentz) {
    // xi = (1, v) is the null vector of the ray's endpoint; B = log(-k <x, xi>_L) / k.
    const double xi_dot = -x[0] + dot(x.subspan(1), v.vec());
    Vec g(x.size());
    g[0] = 1.0 / (kap * xi_dot) + kap * x[0];
    for (std::size_t i = 0; i < v.dim(); ++i) g[i + 1] = v.vec()[i] / (kap * xi_dot) + kap * x[i + 1];
    return g;
  }
  Vec diff(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) diff[i] = v.vec()[i] - kap * x[i];
  const double d2 = sq_norm(diff);
  const double den = 1.0 + k * sq_norm(x);
  const double lam = 2.0 / den;
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double euclid = (-2.0 * kap * diff[i] / d2 - 2.0 * k * x[i] / den) / kap;
    g[i] = euclid / (lam * lam);
  }
  return g;
}

double point_to_horosphere(const Space& space, ConstSpan x, const Horosphere& h) {
  return std::abs(-h.alpha * busemann(space, h.v, x) + h.b) / h.alpha;
}

std::vector<Vec> horosphere_sample(const Space& space, const Horosphere& h, std::size_t count,
                                   std::uint64_t seed) {
  check_direction(space, h.v);
  std::vector<Vec> out;
  out.reserve(count);
  if (count == 0) return out;

  const Space hyperboloid(Model::lorentz, space.curvature(), space.dim());
  const double kap = space.kappa();
  const double c = std::exp(kap * h.level()) / kap;
  const Vec& v = h.v.vec();
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0 / kap);

  for (std::size_t s = 0; s < count; ++s) {
    Vec w(space.dim());
    for (double& wi : w) wi = gauss(rng);
    const double along = dot(w, v);
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= along * v[i];
    const double a = (1.0 / (kap * kap) + sq_norm(w) - c * c) / (2.0 * c);
    Vec x(space.dim() + 1, 0.0);
    for (std::size_t i = 0; i < w.size(); ++i) x[i + 1] = a * v[i] + w[i];
    x = hyperboloid.project(x);
    out.push_back(space.model() == Model::lorentz ? std::move(x) : to_poincare(space.curvature(), x));
  }
  return out;
}

HorosphereDistanceReport horosphere_distance_check(const Space& space, const Horosphere& h1,
                                                   const Horosphere& h2, std::size_t samples,
                                                   std::uint64_t seed) {
  if (max_abs_diff(h1.v.vec(), h2.v.vec()) > 1e-12)
    throw UsageError("horosphere distance check needs horospheres sharing a direction");
  HorosphereDistanceReport rep;
  rep.expected = std::abs(h2.level() - h1.level());

  const auto s1 = horosphere_sample(space, h1, samples, seed);
  const auto s2 = horosphere_sample(space, h2, samples, seed + 1);

  double min_pair = std::numeric_limits<double>::infinity();
  double slack = std::numeric_limits<double>::infinity();
  for (const Vec& x : s1)
    for (const Vec& y : s2) {
      const double d = space.distance(x, y);
      min_pair = std::min(min_pair, d);
      slack = std::min(slack, d - rep.expected);
      ++rep.pairs;
    }

  double refined = std::numeric_limits<double>::infinity();
  double foot_dev = 0.0;
  auto refine = [&](const std::vector<Vec>& from, double shift) {
    for (const Vec& x : from) {
      const Vec foot = space.exp(x, scaled(busemann_gradient(space, h1.v, x), shift));
      const double d = space.distance(x, foot);
      refined = std::min(refined, d);
      slack = std::min(slack, d - rep.expected);
      foot_dev = std::max(foot_dev, std::abs(d - rep.expected));
    }
  };
  refine(s1, h2.level() - h1.level());
  refine(s2, h1.level() - h2.level());

  rep.min_pair_distance = min_pair;
  rep.measured = std::min(min_pair, refined);
  rep.max_deviation = std::max(foot_dev, std::abs(rep.measured - rep.expected));
  rep.min_lower_slack = slack;
  return rep;
}

Feasibility bfc_horosphere_feasibility(ConstSpan u, const Curvature& k, Model model) {
  if (u.empty()) throw UsageError("feasibility needs at least one response");
  const double kap = k.kappa();
  const double m = static_cast<double>(u.size());
  double big_t = 0.0;
  double q = 0.0;
  for (double uk : u) {
    const double t = std::exp(-kap * uk);
    big_t += t;
    q += t * t;
  }
  Feasibility f;
  f.discriminant = big_t * big_t - (m - 1.0) * (1.0 + q);
  if (f.discriminant < 0.0) return f;

  if (model == Model::poincare) {
    // A2 R^2 + (A1 - 1) R + A0 = 0 with (A1 - 1)^2 - 4 A2 A0 = discriminant.
    const double a2 = kap * kap / 4.0 * (m + 2.0 * big_t + q);
    const double a1 = (m - q) / 2.0;
    const double sq = std::sqrt(f.discriminant);
    f.roots = {(-(a1 - 1.0) + sq) / (2.0 * a2), (-(a1 - 1.0) - sq) / (2.0 * a2)};
    for (double r : f.roots) f.feasible = f.feasible || (r >= 0.0 && r < 1.0 / (kap * kap));
    return f;
  }
  // (m - 1) K y_t^2 + 2 sqrt(-K) T y_t - (1 + q) = 0, discriminant 4(-K) Delta.
  if (u.size() == 1) {
    f.roots = {(1.0 + q) / (2.0 * kap * big_t)};
  } else {
    const double a = (m - 1.0) * k.value();
    const double b = 2.0 * kap * big_t;
    const double sq = std::sqrt(4.0 * kap * kap * f.discriminant);
    f.roots = {(-b + sq) / (2.0 * a), (-b - sq) / (2.0 * a)};
  }
  for (double yt : f.roots) f.feasible = f.feasible || yt > 0.0;
  return f;
}

}  // namespace hbnn
