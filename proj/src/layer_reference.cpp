// Single-sample evaluation of every layer through the scalar geometry
// routines; the batched tape forward is checked against these.

#include <cmath>

#include "hbnn/error.hpp"
#include "hbnn/gyrovector.hpp"
#include "hbnn/layers.hpp"

namespace hbnn {

namespace {

constexpr double kSinhArgCap = 700.0;

double softplus(double r) { return r > 0 ? r + std::log1p(std::exp(-r)) : std::log1p(std::exp(r)); }
double sigmoid(double r) { return r >= 0 ? 1.0 / (1.0 + std::exp(-r)) : std::exp(r) / (1.0 + std::exp(r)); }

Vec row(const ad::Tensor& t, std::size_t r) { return t.row(r); }

double shimizu_logit(const Space& ball, ConstSpan x, const Horosphere& h) {
  const double kap = ball.kappa();
  const double lam = conformal_factor(ball, x);
  const double alpha_term = lam * kap * dot(x, h.v.vec()) * std::cosh(2.0 * kap * h.b);
  const double beta_term = (lam - 1.0) * std::sinh(2.0 * kap * h.b);
  return 2.0 / kap * h.alpha * std::asinh(alpha_term - beta_term);
}

double activate(double u, Activation act) {
  switch (act) {
    case Activation::identity: return u;
    case Activation::tanh: return std::tanh(u);
    case Activation::relu: return u > 0 ? u : 0.0;
  }
  return u;
}

Vec from_responses(const Space& out, Vec u, std::size_t& saturated) {
  const double kap = out.kappa();
  const double cap = kSinhArgCap / kap;
  Vec w(u.size());
  for (std::size_t i = 0; i < u.size(); ++i) {
    if (std::abs(u[i]) > cap) {
      ++saturated;
      u[i] = std::clamp(u[i], -cap, cap);
    }
    w[i] = std::sinh(kap * u[i]) / kap;
  }
  if (out.model() == Model::lorentz) {
    Vec y(w.size() + 1);
    std::copy(w.begin(), w.end(), y.begin() + 1);
    return out.project(y);
  }
  const double r = kap * norm(w);
  return out.project(scaled(w, 1.0 / (1.0 + std::hypot(1.0, r))));
}

Vec ball_origin_exp(const Space& ball, ConstSpan t) { return ball.exp(ball.origin(), t); }

Vec lorentz_origin_exp(const Space& hyp, ConstSpan t) {
  Vec v(t.size() + 1, 0.0);
  std::copy(t.begin(), t.end(), v.begin() + 1);
  return hyp.exp(hyp.origin(), v);
}

}  // namespace

Vec Layer::reference(ConstSpan x) const {
  if (x.size() != input_width()) {
    throw UsageError(std::string(to_string(spec_.kind)) + " expects a point of width " + std::to_string(input_width()));
  }
  const auto in = input_space();
  if (in) in->check_point(x);
  const ParamSet& p = params_;
  const std::size_t m = spec_.out_dim;
  Vec out;

  switch (spec_.kind) {
    case LayerKind::euclidean_mlr: {
      for (std::size_t c = 0; c < m; ++c) out.push_back(dot(row(p.get("A"), c), x) + p.get("b")[c]);
      return out;
    }
    case LayerKind::bmlr_p:
    case LayerKind::bmlr_l: {
      for (const Horosphere& h : horospheres(*this)) out.push_back(-h.alpha * busemann(*in, h.v, x) + h.b);
      return out;
    }
    case LayerKind::shimizu_mlr: {
      for (const Horosphere& h : horospheres(*this)) out.push_back(shimizu_logit(*in, x, h));
      return out;
    }
    case LayerKind::ganea_mlr: {
      const double kap = in->kappa();
      for (std::size_t c = 0; c < m; ++c) {
        const Vec a = row(p.get("a"), c);
        const double an = norm(a);
        if (an < 1e-12) {
          out.push_back(0.0);
          continue;
        }
        const Vec pk = ball_origin_exp(*in, row(p.get("p"), c));
        const Vec z = mobius_add(*in, negated(pk), x);
        const double lam_p = conformal_factor(*in, pk);
        out.push_back(lam_p * an / kap * std::asinh(2.0 * kap * dot(z, a) / ((1.0 + in->k() * sq_norm(z)) * an)));
      }
      return out;
    }
    case LayerKind::pbmlr: {
      for (std::size_t c = 0; c < m; ++c) {
        const Vec pk = ball_origin_exp(*in, row(p.get("p"), c));
        const Vec z = mobius_add(*in, negated(pk), x);
        const double zn = norm(z);
        if (zn < 1e-15) {
          out.push_back(0.0);
          continue;
        }
        const Direction v = Direction::normalized(row(p.get("raw_v"), c));
        out.push_back(-in->distance(x, pk) * busemann(*in, v, z) / zn);
      }
      return out;
    }
    case LayerKind::bdeir_mlr: {
      const double kap = in->kappa();
      const ConstSpan xs = x.subspan(1);
      for (std::size_t c = 0; c < m; ++c) {
        const Vec z = row(p.get("z"), c);
        const double zn = norm(z);
        if (zn < 1e-12) {
          out.push_back(0.0);
          continue;
        }
        const double b = p.get("b")[c];
        const double alpha = std::cosh(kap * b) * dot(z, xs) - std::sinh(kap * b);
        const double beta = zn;
        const double sign = alpha > 0 ? 1.0 : (alpha < 0 ? -1.0 : 0.0);
        out.push_back(sign * beta * std::abs(std::asinh(kap * alpha / beta)) / kap);
      }
      return out;
    }
    default: break;
  }

  const Space y_space = *output_space();
  const double kap = y_space.kappa();
  Vec y;
  switch (spec_.kind) {
    case LayerKind::bfc_p:
    case LayerKind::bfc_l: {
      Vec u;
      for (const Horosphere& h : horospheres(*this)) u.push_back(activate(-h.alpha * busemann(*in, h.v, x) + h.b, spec_.activation));
      y = from_responses(y_space, std::move(u), saturated_);
      break;
    }
    case LayerKind::poincare_fc: {
      Vec u;
      for (const Horosphere& h : horospheres(*this)) u.push_back(shimizu_logit(*in, x, h));
      y = from_responses(y_space, std::move(u), saturated_);
      break;
    }
    case LayerKind::mobius_fc: {
      const ad::Tensor& w = p.get("W");
      Vec wx(m);
      for (std::size_t i = 0; i < m; ++i) wx[i] = dot(row(w, i), x);
      const double xn = norm(x);
      const double wn = norm(wx);
      if (wn < 1e-12 || xn < 1e-15) {
        y = y_space.origin();
      } else {
        const double r = std::tanh(wn / xn * std::atanh(kap * xn)) / kap;
        y = y_space.project(scaled(wx, r / wn));
      }
      break;
    }
    case LayerKind::lorentz_fc: {
      const ad::Tensor& w = p.get("W");
      Vec h(m);
      for (std::size_t i = 0; i < m; ++i) h[i] = dot(row(w, i), x) + p.get("b")[i];
      const double hn = norm(h);
      if (!(hn >= 1e-12)) throw NumericError("lorentz-fc: W x + b vanished");
      const double gate = sigmoid(dot(p.get("v").data(), x) + p.get("b_prime")[0]);
      const double lambda = softplus(p.get("raw_lambda")[0]);
      y.assign(m + 1, 0.0);
      for (std::size_t i = 0; i < m; ++i) y[i + 1] = lambda * gate * h[i] / hn;
      y = y_space.project(y);
      break;
    }
    case LayerKind::ltfc: {
      const Vec tangent = in->log(in->origin(), x);
      const ad::Tensor& mat = p.get("M");
      Vec v(m);
      for (std::size_t i = 0; i < m; ++i) v[i] = dot(row(mat, i), ConstSpan(tangent).subspan(1));
      y = lorentz_origin_exp(y_space, v);
      break;
    }
    default: throw UsageError("unhandled layer kind");
  }

  if (spec_.gyro_bias) {
    const ad::Tensor& t = p.get("gyro_bias");
    const Vec bias = y_space.model() == Model::poincare ? ball_origin_exp(y_space, t.data())
                                                        : lorentz_origin_exp(y_space, t.data());
    y = gyro_add(y_space, y, bias);
  }
  return y;
}

}  // namespace hbnn
