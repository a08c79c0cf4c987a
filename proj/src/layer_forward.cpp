// Batched forward passes on the autodiff tape.

#include <cmath>

#include "hbnn/error.hpp"
#include "hbnn/layers.hpp"

namespace hbnn {

namespace {

using ad::Var;

constexpr double kSinhArgCap = 700.0;

Var cols(const Var& x, std::size_t begin, std::size_t end) { return ad::slice(x, x.shape().size() - 1, begin, end); }

Var alpha_of(const Var& raw) { return ad::softplus(raw); }

// 1 where a row norm is usable, 0 where the row is degenerate (< 1e-12).
struct RowMask {
  Var keep;
  Var fill;  // 1 - keep, added to norms so the masked rows stay finite
};

RowMask row_mask(ad::Tape& tape, const ad::Tensor& rows) {
  const std::size_t r = rows.dim(0);
  ad::Tensor keep({r});
  ad::Tensor fill({r});
  for (std::size_t i = 0; i < r; ++i) {
    const bool ok = norm(rows.row(i)) >= 1e-12;
    keep[i] = ok ? 1.0 : 0.0;
    fill[i] = ok ? 0.0 : 1.0;
  }
  return {tape.constant(std::move(keep)), tape.constant(std::move(fill))};
}

// Radial rescale onto ||y|| <= (1 - eps)/sqrt(-K) along `axis`; identity inside.
Var project_ball(const Var& y, double kap, std::size_t axis) {
  const double max_norm = (1.0 - kBallEps) / kap;
  return y * (max_norm / ad::clamp_min(ad::norm(y, axis, true), max_norm));
}

// exp at the ball origin of tangent rows.
Var exp0_ball(const Var& t, double kap) {
  return t * ad::tanhc(ad::norm(t, t.shape().size() - 1, true) * kap);
}

// Completes spatial rows with the time coordinate of the hyperboloid.
Var lift(const Var& s, double kap) {
  const std::size_t axis = s.shape().size() - 1;
  return ad::concat({ad::hypot1(ad::norm(s, axis, true) * kap) / kap, s}, axis);
}

// Spatial part of exp at the hyperboloid origin of tangent (0, t) rows.
Var exp0_lorentz_spatial(const Var& t, double kap) {
  return t * ad::sinhc(ad::norm(t, t.shape().size() - 1, true) * kap);
}

// Möbius addition of broadcast-compatible row sets along the last axis.
Var mobius_add_rows(const Var& x, const Var& y, double k, double kap) {
  const std::size_t axis = std::max(x.shape().size(), y.shape().size()) - 1;
  const Var xy = ad::sum(x * y, axis, true);
  const Var nx = ad::sum_sq(x, x.shape().size() - 1, true);
  const Var ny = ad::sum_sq(y, y.shape().size() - 1, true);
  const Var c1 = 1.0 - xy * (2.0 * k) - ny * k;
  const Var c2 = 1.0 + nx * k;
  const Var den = 1.0 - xy * (2.0 * k) + nx * ny * (k * k);
  return project_ball((x * c1 + y * c2) / den, kap, axis);
}

// Closed-form Lorentz gyroaddition of [B, m+1] rows with [1 or B, m+1] rows.
Var lorentz_add_rows(const Var& x, const Var& y, double k, double kap) {
  const std::size_t w = x.shape().back();
  const Var xs = cols(x, 1, w);
  const Var ys = cols(y, 1, w);
  const Var a = 1.0 + cols(x, 0, 1) * kap;
  const Var b = 1.0 + cols(y, 0, 1) * kap;
  const Var nx = ad::sum_sq(xs, 1, true);
  const Var ny = ad::sum_sq(ys, 1, true);
  const Var s = ad::sum(xs * ys, 1, true);
  const Var ab = a * b;
  const Var d = ab * ab - ab * s * (2.0 * k) + nx * ny * (k * k);
  const Var nn = a * a * ny + ab * s * 2.0 + b * b * nx;
  const Var den = d + nn * k;
  const Var as = ab * b - b * s * (2.0 * k) - a * ny * k;
  const Var ay = b * (a * a + nx * k);
  return lift((xs * as + ys * ay) * 2.0 / den, kap);
}

// Busemann values [B, C] of rows x against unit rows V [C, n].
Var busemann_rows(Model model, const Var& x, const Var& v, double kap) {
  if (model == Model::poincare) {
    const Var s = ad::matmul(x, ad::transpose(v));
    const Var nx = ad::sum_sq(x, 1, true);
    const Var num = ad::clamp_min(1.0 - s * (2.0 * kap) + nx * (kap * kap), kLogFloor);
    const Var den = 1.0 - nx * (kap * kap);
    return (ad::log(num) - ad::log(den)) / kap;
  }
  const std::size_t w = x.shape().back();
  const Var s = ad::matmul(cols(x, 1, w), ad::transpose(v));
  return ad::log(ad::clamp_min((cols(x, 0, 1) - s) * kap, kLogFloor)) / kap;
}

Var shimizu_logits(const Var& x, const Var& raw_alpha, const Var& raw_v, const Var& b, double kap) {
  const Var s = ad::matmul(x, ad::transpose(ad::row_normalize(raw_v)));
  const Var lam = 2.0 / (1.0 - ad::sum_sq(x, 1, true) * (kap * kap));
  const Var two_b = b * (2.0 * kap);
  const Var alpha_term = lam * s * ad::cosh(two_b) * kap;
  const Var beta_term = (lam - 1.0) * ad::sinh(two_b);
  return alpha_of(raw_alpha) * ad::asinh(alpha_term - beta_term) * (2.0 / kap);
}

Var activate(const Var& u, Activation act) {
  switch (act) {
    case Activation::identity: return u;
    case Activation::tanh: return ad::tanh(u);
    case Activation::relu: return ad::relu(u);
  }
  return u;
}

// Clamps sqrt(-K) u to [-700, 700] and counts the clamped entries.
Var saturate(const Var& u, double kap, std::size_t& counter) {
  const double cap = kSinhArgCap / kap;
  for (double x : u.value().data()) {
    if (std::abs(x) > cap) ++counter;
  }
  return ad::clamp(u, -cap, cap);
}

// Point whose signed distances to the coordinate hyperplanes through the
// origin are the responses u.
Var from_responses(Model model, const Var& u, double kap) {
  const Var w = ad::sinh(u * kap) / kap;
  if (model == Model::lorentz) return lift(w, kap);
  const Var r = ad::norm(w, 1, true) * kap;
  return project_ball(w / (1.0 + ad::hypot1(r)), kap, 1);
}

// -p_k (+) x for every class at once: [B, C, n].
Var shifted_all(const Var& x, const Var& p, double k, double kap) {
  const std::size_t b = x.shape()[0];
  const std::size_t c = p.shape()[0];
  const std::size_t n = p.shape()[1];
  return mobius_add_rows(ad::reshape(-p, {1, c, n}), ad::reshape(x, {b, 1, n}), k, kap);
}

Var ganea_logits(const Var& x, const Var& p_raw, const Var& a, double k, double kap, MlrPath path,
                 ad::Tape& tape) {
  const Var p = exp0_ball(p_raw, kap);
  const std::size_t classes = p.shape()[0];
  if (path == MlrPath::broadcast) {
    const RowMask mask = row_mask(tape, a.value());
    const Var z = shifted_all(x, p, k, kap);
    const std::size_t n = a.shape()[1];
    const Var za = ad::sum(z * ad::reshape(a, {1, classes, n}), 2);
    const Var nz = ad::sum_sq(z, 2);
    const Var an = ad::norm(a, 1) + mask.fill;
    const Var lam_p = 2.0 / (1.0 - ad::sum_sq(p, 1) * (kap * kap));
    const Var arg = za * (2.0 * kap) / ((1.0 - nz * (kap * kap)) * an);
    return lam_p * an / kap * ad::asinh(arg) * mask.keep;
  }
  const std::size_t batch = x.shape()[0];
  std::vector<Var> per_class;
  per_class.reserve(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    const Var ac = ad::slice(a, 0, c, c + 1);
    if (!(norm(ac.value().data()) >= 1e-12)) {
      per_class.push_back(tape.constant(ad::Tensor({batch, 1})));
      continue;
    }
    const Var pc = ad::slice(p, 0, c, c + 1);
    const Var z = mobius_add_rows(-pc, x, k, kap);
    const Var za = ad::sum(z * ac, 1, true);
    const Var nz = ad::sum_sq(z, 1, true);
    const Var an = ad::norm(ac, 1, true);
    const Var lam_p = 2.0 / (1.0 - ad::sum_sq(pc, 1, true) * (kap * kap));
    per_class.push_back(lam_p * an / kap * ad::asinh(za * (2.0 * kap) / ((1.0 - nz * (kap * kap)) * an)));
  }
  return ad::concat(per_class, 1);
}

Var pbmlr_logits(const Var& x, const Var& p_raw, const Var& raw_v, double k, double kap, MlrPath path) {
  const Var p = exp0_ball(p_raw, kap);
  const Var v = ad::row_normalize(raw_v);
  const std::size_t classes = p.shape()[0];
  if (path == MlrPath::broadcast) {
    const Var z = shifted_all(x, p, k, kap);
    const std::size_t n = v.shape()[1];
    const Var s = ad::sum(z * ad::reshape(v, {1, classes, n}), 2);
    const Var nz2 = ad::sum_sq(z, 2);
    const Var num = ad::clamp_min(1.0 - s * (2.0 * kap) + nz2 * (kap * kap), kLogFloor);
    const Var bz = (ad::log(num) - ad::log(1.0 - nz2 * (kap * kap))) / kap;
    return ad::atanhc(ad::norm(z, 2) * kap) * bz * -2.0;
  }
  std::vector<Var> per_class;
  per_class.reserve(classes);
  for (std::size_t c = 0; c < classes; ++c) {
    const Var z = mobius_add_rows(-ad::slice(p, 0, c, c + 1), x, k, kap);
    const Var bz = busemann_rows(Model::poincare, z, ad::slice(v, 0, c, c + 1), kap);
    per_class.push_back(ad::atanhc(ad::norm(z, 1, true) * kap) * bz * -2.0);
  }
  return ad::concat(per_class, 1);
}

Var bdeir_logits(const Var& x, const Var& z, const Var& b, double kap, ad::Tape& tape) {
  const RowMask mask = row_mask(tape, z.value());
  const std::size_t w = x.shape().back();
  const Var s = ad::matmul(cols(x, 1, w), ad::transpose(z));
  const Var alpha = ad::cosh(b * kap) * s - ad::sinh(b * kap);
  // beta = sqrt(||cosh(kb) z||^2 - (sinh(kb) ||z||)^2), which is exactly ||z||.
  const Var beta = ad::norm(z, 1) + mask.fill;
  return beta * ad::asinh(alpha * kap / beta) / kap * mask.keep;
}

}  // namespace

ad::Var Layer::forward(ad::Tape& tape, std::span<const ad::Var> p, const ad::Var& x, MlrPath path) const {
  if (p.size() != params_.size()) throw UsageError("forward needs one Var per parameter tensor");
  if (x.shape().size() != 2 || x.shape()[1] != input_width()) {
    throw UsageError(std::string(to_string(spec_.kind)) + " expects input rows of width " +
                     std::to_string(input_width()) + ", got " + ad::shape_string(x.shape()));
  }
  const double k = k_.value();
  const double kap = k_.kappa();
  const auto model = layer_model(spec_.kind);

  Var y;
  switch (spec_.kind) {
    case LayerKind::euclidean_mlr:
      return ad::matmul(x, ad::transpose(p[0])) + p[1];
    case LayerKind::ganea_mlr:
      return ganea_logits(x, p[0], p[1], k, kap, path, tape);
    case LayerKind::pbmlr:
      return pbmlr_logits(x, p[0], p[1], k, kap, path);
    case LayerKind::bdeir_mlr:
      return bdeir_logits(x, p[0], p[1], kap, tape);
    case LayerKind::shimizu_mlr:
      return shimizu_logits(x, p[0], p[1], p[2], kap);
    case LayerKind::bmlr_p:
    case LayerKind::bmlr_l:
      return p[2] - alpha_of(p[0]) * busemann_rows(*model, x, ad::row_normalize(p[1]), kap);
    case LayerKind::bfc_p:
    case LayerKind::bfc_l: {
      const Var u = p[2] - alpha_of(p[0]) * busemann_rows(*model, x, ad::row_normalize(p[1]), kap);
      y = from_responses(*model, saturate(activate(u, spec_.activation), kap, saturated_), kap);
      break;
    }
    case LayerKind::poincare_fc: {
      const Var u = shimizu_logits(x, p[0], p[1], p[2], kap);
      y = from_responses(Model::poincare, saturate(u, kap, saturated_), kap);
      break;
    }
    case LayerKind::mobius_fc: {
      const Var wx = ad::matmul(x, ad::transpose(p[0]));
      const Var scale = ad::atanhc(ad::norm(x, 1, true) * kap);
      const Var arg = ad::norm(wx, 1, true) * kap * scale;
      y = project_ball(wx * ad::tanhc(arg) * scale, kap, 1);
      break;
    }
    case LayerKind::lorentz_fc: {
      const std::size_t n1 = x.shape()[1];
      const Var h = ad::matmul(x, ad::transpose(p[0])) + p[1];
      const Var gate = ad::sigmoid(ad::matmul(x, ad::reshape(p[2], {n1, 1})) + p[3]);
      y = lift(ad::row_normalize(h) * gate * alpha_of(p[4]), kap);
      break;
    }
    case LayerKind::ltfc: {
      const Var xs = cols(x, 1, x.shape()[1]);
      const Var tangent = xs * ad::asinhc(ad::norm(xs, 1, true) * kap);
      y = lift(exp0_lorentz_spatial(ad::matmul(tangent, ad::transpose(p[0])), kap), kap);
      break;
    }
  }

  if (spec_.gyro_bias) {
    const Var t = ad::reshape(p.back(), {1, spec_.out_dim});
    if (*model == Model::poincare) {
      y = mobius_add_rows(y, exp0_ball(t, kap), k, kap);
    } else {
      y = lorentz_add_rows(y, lift(exp0_lorentz_spatial(t, kap), kap), k, kap);
    }
  }
  return y;
}

}  // namespace hbnn
