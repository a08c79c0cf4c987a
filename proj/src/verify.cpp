#include "hbnn/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>

#include "hbnn/busemann.hpp"
#include "hbnn/error.hpp"
#include "hbnn/gyrovector.hpp"
#include "hbnn/layers.hpp"
#include "hbnn/sampling.hpp"

namespace hbnn {

namespace {

constexpr Model kModels[] = {Model::poincare, Model::lorentz};
constexpr double kCurvatures[] = {-0.25, -1.0, -4.0};

double rel_error(ConstSpan a, ConstSpan b) {
  double scale = 1.0;
  for (double x : b) scale = std::max(scale, std::abs(x));
  return max_abs_diff(a, b) / scale;
}

class Suite {
 public:
  Suite(std::string name, std::vector<PropertyResult>& out) : name_(std::move(name)), out_(out) {}

  void check(std::string name, std::string anchor, double tolerance, const std::function<double()>& run) {
    const auto start = std::chrono::steady_clock::now();
    PropertyResult r{name_, std::move(name), std::move(anchor), 0.0, tolerance, 0.0};
    try {
      r.error = run();
      if (std::isnan(r.error)) r.error = INFINITY;
    } catch (const std::exception&) {
      r.error = INFINITY;
    }
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out_.push_back(std::move(r));
  }

 private:
  std::string name_;
  std::vector<PropertyResult>& out_;
};

void manifold_suite(std::vector<PropertyResult>& out, std::uint64_t seed) {
  Suite s("manifold", out);
  const std::size_t n = 4;
  const int trials = 200;
  s.check("exp/log round trip", "log_x(exp_x(v)) = v", 1e-8, [&] {
    Rng rng(seed + 1);
    double worst = 0.0;
    for (Model m : kModels)
      for (double k : kCurvatures) {
        const Space sp(m, Curvature(k), n);
        for (int i = 0; i < trials; ++i) {
          const Vec x = random_point(sp, rng, 2.0);
          const Vec v = random_tangent(sp, rng, x, 2.0 * std::uniform_real_distribution<double>()(rng));
          worst = std::max(worst, rel_error(sp.log(x, sp.exp(x, v)), v));
        }
      }
    return worst;
  });
  s.check("geodesic length", "d(x, exp_x(v)) = |v|_x", 1e-8, [&] {
    Rng rng(seed + 2);
    double worst = 0.0;
    for (Model m : kModels)
      for (double k : kCurvatures) {
        const Space sp(m, Curvature(k), n);
        for (int i = 0; i < trials; ++i) {
          const Vec x = random_point(sp, rng, 2.0);
          const double speed = 3.0 * std::uniform_real_distribution<double>()(rng);
          const Vec v = random_tangent(sp, rng, x, speed);
          worst = std::max(worst, std::abs(sp.distance(x, sp.exp(x, v)) - speed) / std::max(1.0, speed));
        }
      }
    return worst;
  });
  s.check("ball/hyperboloid isometry", "d_ball(p, q) = d_hyperboloid(L(p), L(q))", 1e-8, [&] {
    Rng rng(seed + 3);
    double worst = 0.0;
    for (double k : kCurvatures) {
      const Curvature c(k);
      const Space ball(Model::poincare, c, n);
      const Space hyp(Model::lorentz, c, n);
      for (int i = 0; i < trials; ++i) {
        const Vec p = random_point(ball, rng, 3.0);
        const Vec q = random_point(ball, rng, 3.0);
        const double d = ball.distance(p, q);
        worst = std::max(worst, std::abs(d - hyp.distance(to_lorentz(c, p), to_lorentz(c, q))) / std::max(1.0, d));
      }
    }
    return worst;
  });
  s.check("parallel transport isometry", "|P_{x->y} v|_y = |v|_x", 1e-8, [&] {
    Rng rng(seed + 4);
    double worst = 0.0;
    for (Model m : kModels)
      for (double k : kCurvatures) {
        const Space sp(m, Curvature(k), n);
        for (int i = 0; i < trials; ++i) {
          const Vec x = random_point(sp, rng, 2.0);
          const Vec y = random_point(sp, rng, 2.0);
          const Vec v = random_tangent(sp, rng, x, 1.0);
          worst = std::max(worst, std::abs(sp.tangent_norm(y, sp.transport(x, y, v)) - 1.0));
        }
      }
    return worst;
  });
  s.check("projection lands on the model", "projected points meet the containment invariant (violations)", 0.5, [&] {
    Rng rng(seed + 5);
    double bad = 0.0;
    for (Model m : kModels)
      for (double k : kCurvatures) {
        const Space sp(m, Curvature(k), n);
        for (int i = 0; i < 10000 / 6; ++i) {
          const Vec raw = gaussian(rng, sp.ambient_dim(), 3.0 / sp.kappa());
          if (!sp.contains(sp.project(raw))) bad += 1.0;
        }
      }
    return bad;
  });
  s.check("distance symmetry and triangle", "d(x,y) = d(y,x), d(x,z) <= d(x,y) + d(y,z) (excess)", 1e-9, [&] {
    Rng rng(seed + 6);
    double worst = 0.0;
    for (Model m : kModels)
      for (double k : kCurvatures) {
        const Space sp(m, Curvature(k), n);
        for (int i = 0; i < trials; ++i) {
          const Vec x = random_point(sp, rng, 3.0);
          const Vec y = random_point(sp, rng, 3.0);
          const Vec z = random_point(sp, rng, 3.0);
          const double dxy = sp.distance(x, y);
          worst = std::max({worst, std::abs(dxy - sp.distance(y, x)),
                            sp.distance(x, z) - dxy - sp.distance(y, z)});
        }
      }
    return worst;
  });
}

void gyro_suite(std::vector<PropertyResult>& out, std::uint64_t seed) {
  Suite s("gyro", out);
  const int trials = 1000;
  const std::size_t n = 3;
  using Triple = std::function<double(const Space&, const Vec&, const Vec&, const Vec&, double, double)>;
  auto over_models = [&](std::uint64_t salt, const Triple& f) {
    Rng rng(seed + salt);
    std::uniform_real_distribution<double> scal(-3.0, 3.0);
    double worst = 0.0;
    for (Model m : kModels) {
      const Space sp(m, Curvature(-1.0), n);
      for (int i = 0; i < trials; ++i) {
        const Vec x = random_point(sp, rng, 1.5);
        const Vec y = random_point(sp, rng, 1.5);
        const Vec z = random_point(sp, rng, 1.5);
        worst = std::max(worst, f(sp, x, y, z, scal(rng), scal(rng)));
      }
    }
    return worst;
  };
  s.check("G1 left identity", "0 + x = x", 1e-7, [&] {
    return over_models(11, [](const Space& sp, const Vec& x, const Vec&, const Vec&, double, double) {
      return rel_error(gyro_add(sp, sp.origin(), x), x);
    });
  });
  s.check("G2 left inverse", "(-x) + x = 0", 1e-7, [&] {
    return over_models(12, [](const Space& sp, const Vec& x, const Vec&, const Vec&, double, double) {
      return rel_error(gyro_add(sp, gyro_inverse(sp, x), x), sp.origin());
    });
  });
  s.check("G3 left gyroassociativity", "x + (y + z) = (x + y) + gyr[x,y]z", 1e-7, [&] {
    return over_models(13, [](const Space& sp, const Vec& x, const Vec& y, const Vec& z, double, double) {
      return rel_error(gyro_add(sp, x, gyro_add(sp, y, z)), gyro_add(sp, gyro_add(sp, x, y), gyration(sp, x, y, z)));
    });
  });
  s.check("G4 left loop property", "gyr[x + y, y] = gyr[x, y]", 1e-7, [&] {
    return over_models(14, [](const Space& sp, const Vec& x, const Vec& y, const Vec& z, double, double) {
      return rel_error(gyration(sp, gyro_add(sp, x, y), y, z), gyration(sp, x, y, z));
    });
  });
  s.check("gyrocommutativity", "x + y = gyr[x, y](y + x)", 1e-7, [&] {
    return over_models(15, [](const Space& sp, const Vec& x, const Vec& y, const Vec&, double, double) {
      return rel_error(gyro_add(sp, x, y), gyration(sp, x, y, gyro_add(sp, y, x)));
    });
  });
  s.check("V1 unit scalar", "1 * x = x", 1e-7, [&] {
    return over_models(16, [](const Space& sp, const Vec& x, const Vec&, const Vec&, double, double) {
      return rel_error(gyro_scalar(sp, 1.0, x), x);
    });
  });
  s.check("V2 scalar distributivity", "(r1 + r2) * x = r1 * x + r2 * x", 1e-7, [&] {
    return over_models(17, [](const Space& sp, const Vec& x, const Vec&, const Vec&, double a, double b) {
      return rel_error(gyro_scalar(sp, a + b, x), gyro_add(sp, gyro_scalar(sp, a, x), gyro_scalar(sp, b, x)));
    });
  });
  s.check("V3 scalar associativity", "(r1 r2) * x = r1 * (r2 * x)", 1e-7, [&] {
    return over_models(18, [](const Space& sp, const Vec& x, const Vec&, const Vec&, double a, double b) {
      return rel_error(gyro_scalar(sp, a * b, x), gyro_scalar(sp, a, gyro_scalar(sp, b, x)));
    });
  });
}

void busemann_suite(std::vector<PropertyResult>& out, std::uint64_t seed) {
  Suite s("busemann", out);
  s.check("closed form vs ray limit", "B(x) = lim d(x, gamma(t)) - t, t = 20", 1e-6, [&] {
    Rng rng(seed + 21);
    double worst = 0.0;
    for (Model m : kModels)
      for (double k : kCurvatures) {
        const Space sp(m, Curvature(k), 3);
        for (int i = 0; i < 500; ++i) {
          const Direction v = random_direction(rng, 3);
          const Vec x = random_point(sp, rng, 2.0);
          worst = std::max(worst, std::abs(busemann(sp, v, x) - busemann_ray_oracle(sp, v, x, 20.0)));
        }
      }
    return worst;
  });
  s.check("horosphere equidistance", "d(H_tau1, H_tau2) = |tau2 - tau1|", 1e-3, [&] {
    Rng rng(seed + 22);
    std::uniform_real_distribution<double> tau(-3.0, 3.0);
    double worst = 0.0;
    for (Model m : kModels) {
      const Space sp(m, Curvature(-1.0), 2);
      for (int i = 0; i < 20; ++i) {
        const Direction v = random_direction(rng, 2);
        const double t1 = tau(rng);
        const double t2 = tau(rng);
        const auto r = horosphere_distance_check(sp, Horosphere(v, 1.0, t1), Horosphere(v, 1.0, t2), 16, seed + i);
        worst = std::max({worst, r.max_deviation, std::abs(r.measured - std::abs(t2 - t1))});
      }
    }
    return worst;
  });
  s.check("1-Lipschitz", "|B(x) - B(y)| <= d(x, y) (excess)", 1e-9, [&] {
    Rng rng(seed + 23);
    double worst = 0.0;
    for (Model m : kModels)
      for (double k : kCurvatures) {
        const Space sp(m, Curvature(k), 4);
        for (int i = 0; i < 200; ++i) {
          const Direction v = random_direction(rng, 4);
          const Vec x = random_point(sp, rng, 3.0);
          const Vec y = random_point(sp, rng, 3.0);
          const double excess = std::abs(busemann(sp, v, x) - busemann(sp, v, y)) - sp.distance(x, y);
          worst = std::max(worst, excess);
        }
      }
    return worst;
  });
  s.check("unit gradient", "|grad B(x)|_x = 1", 1e-9, [&] {
    Rng rng(seed + 24);
    double worst = 0.0;
    for (Model m : kModels)
      for (double k : kCurvatures) {
        const Space sp(m, Curvature(k), 4);
        for (int i = 0; i < 200; ++i) {
          const Direction v = random_direction(rng, 4);
          const Vec x = random_point(sp, rng, 3.0);
          worst = std::max(worst, std::abs(sp.tangent_norm(x, busemann_gradient(sp, v, x)) - 1.0));
        }
      }
    return worst;
  });
  s.check("feasibility discriminant", "T^2 - (m-1)(1+q): u=(0,0) -> 1; u=(1,1) -> 2/e^2 - 1", 1e-9, [&] {
    const Curvature unit(-1.0);
    double worst = 0.0;
    for (Model m : kModels) {
      worst = std::max(worst, std::abs(bfc_horosphere_feasibility(Vec{0.0, 0.0}, unit, m).discriminant - 1.0));
      worst = std::max(worst, std::abs(bfc_horosphere_feasibility(Vec{1.0, 1.0}, unit, m).discriminant -
                                       (2.0 * std::exp(-2.0) - 1.0)));
    }
    return worst;
  });
}

Activation bfc_activation(std::size_t i) {
  constexpr Activation acts[] = {Activation::identity, Activation::tanh, Activation::relu};
  return acts[i % 3];
}

void layers_suite(std::vector<PropertyResult>& out, std::uint64_t seed) {
  Suite s("layers", out);
  s.check("BFC outputs on the manifold", "hyperboloid residual / ball containment", 1e-9, [&] {
    Rng rng(seed + 31);
    double worst = 0.0;
    for (std::size_t call = 0; call < 1000; ++call) {
      const LayerKind kind = call % 2 == 0 ? LayerKind::bfc_p : LayerKind::bfc_l;
      Layer layer(LayerSpec{kind, -std::uniform_real_distribution<double>(0.25, 4.0)(rng), 5, 4,
                            bfc_activation(call / 2), (call / 6) % 2 == 1},
                  call);
      randomize_params(layer, rng, 1.0);
      const ad::Tensor y = layer.forward(random_input(layer, 4, rng, 3.0));
      const Space sp = *layer.output_space();
      for (std::size_t i = 0; i < 4; ++i) {
        const Vec p = y.row(i);
        if (sp.model() == Model::lorentz) {
          worst = std::max(worst, std::abs(lorentz_inner(p, p) - 1.0 / sp.k()) / std::max(1.0, p[0] * p[0]));
          if (!(p[0] > 0.0)) worst = INFINITY;
        } else if (!(sp.k() * -sq_norm(p) < 1.0)) {
          worst = INFINITY;
        }
      }
    }
    return worst;
  });
  s.check("logits as signed horosphere distances", "-alpha B(x) + b = sign * alpha * d(x, foot)", 1e-10, [&] {
    Rng rng(seed + 32);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
      const LayerKind kind = i % 2 == 0 ? LayerKind::bmlr_p : LayerKind::bmlr_l;
      Layer layer(LayerSpec{kind, -std::uniform_real_distribution<double>(0.25, 2.0)(rng), 5, 3}, i);
      randomize_params(layer, rng);
      const Vec x = random_point(*layer.input_space(), rng, 2.0);
      worst = std::max(worst, max_abs_diff(bmlr_logits_via_distance(layer, x), layer.reference(x)));
    }
    return worst;
  });
  s.check("batched forward vs per-sample", "tape forward = scalar geometry routines", 1e-10, [&] {
    Rng rng(seed + 33);
    double worst = 0.0;
    for (LayerKind kind : all_layer_kinds()) {
      const bool fc = !is_head(kind);
      const bool bfc = kind == LayerKind::bfc_p || kind == LayerKind::bfc_l;
      Layer layer(LayerSpec{kind, -0.8, 5, 4, bfc ? Activation::tanh : Activation::identity, fc}, 3);
      randomize_params(layer, rng);
      const ad::Tensor x = random_input(layer, 16, rng);
      const ad::Tensor y = layer.forward(x);
      for (std::size_t i = 0; i < 16; ++i) worst = std::max(worst, rel_error(y.row(i), layer.reference(x.row(i))));
    }
    return worst;
  });
  s.check("FLOP and parameter tables", "published examples (mismatches)", 0.5, [&] {
    double bad = 0.0;
    bad += flop_count(LayerKind::euclidean_mlr, 512, 10) != 10240;
    bad += flop_count(LayerKind::bmlr_l, 512, 10) != 10360;
    bad += flop_count(LayerKind::bfc_l, 512, 16) != 16866;
    bad += param_count(LayerKind::bmlr_p, 512, 1000) != 514000;
    bad += param_count(LayerKind::ganea_mlr, 512, 100) != 102400;
    bad += param_count(LayerKind::euclidean_mlr, 512, 10) != 5130;
    for (LayerKind kind : all_layer_kinds()) {
      const Layer layer(LayerSpec{kind, -1.0, 7, 3}, 0);
      bad += static_cast<std::int64_t>(layer.params().scalar_count()) != param_count(kind, 7, 3);
    }
    return bad;
  });
}

void grads_suite(std::vector<PropertyResult>& out, std::uint64_t seed) {
  Suite s("grads", out);
  for (LayerKind kind : all_layer_kinds()) {
    s.check(std::string(to_string(kind)) + " + cross-entropy", "autodiff = central differences (5 seeds)", 1e-5, [&] {
      double worst = 0.0;
      const bool head = is_head(kind);
      for (std::uint64_t sd = 0; sd < 5; ++sd) {
        Rng rng(seed + 41 + sd);
        const bool bfc = kind == LayerKind::bfc_p || kind == LayerKind::bfc_l;
        Layer layer(LayerSpec{kind, -1.0, 6, head ? 4u : 5u, bfc ? Activation::tanh : Activation::identity, !head}, sd);
        randomize_params(layer, rng);
        const Layer top(LayerSpec{LayerKind::euclidean_mlr, -1.0, layer.output_width(), 4}, sd + 100);
        const ad::Tensor x = random_input(layer, 8, rng);
        const std::vector<int> labels{0, 1, 2, 3, 0, 1, 2, 3};
        std::vector<ad::Tensor> params = layer.params().tensors();
        const std::size_t own = params.size();
        if (!head) {
          for (const auto& t : top.params().tensors()) params.push_back(t);
        }
        const ad::LossBuilder loss = [&](ad::Tape& tape, std::span<const ad::Var> p) {
          ad::Var o = layer.forward(tape, p.subspan(0, own), tape.constant(x));
          if (!head) o = top.forward(tape, p.subspan(own), o);
          return ad::softmax_cross_entropy(o, labels);
        };
        worst = std::max(worst, ad::finite_diff_check(loss, params).max_rel_error);
      }
      return worst;
    });
  }
}

// Euclidean counterparts of the Busemann layers as K -> 0^-.
double limit_error(LayerKind kind, std::uint64_t seed) {
  const double k = -1e-8;
  Rng rng(seed);
  double worst = 0.0;
  const bool lorentz = kind == LayerKind::bmlr_l || kind == LayerKind::bfc_l;
  const bool head = is_head(kind);
  for (int trial = 0; trial < 200; ++trial) {
    Layer layer(LayerSpec{kind, k, 4, 3}, trial);
    randomize_params(layer, rng);
    Vec xe = gaussian(rng, 4);
    xe = scaled(xe, std::uniform_real_distribution<double>(0.0, 1.0)(rng) / norm(xe));
    Vec x = xe;
    if (lorentz) {
      x.insert(x.begin(), 0.0);
      x = layer.input_space()->project(x);
    }
    const Vec y = head ? layer.reference(x) : layer.forward(stack_rows({x})).values();
    const auto hs = horospheres(layer);
    for (std::size_t c = 0; c < 3; ++c) {
      const double inner = hs[c].alpha * dot(hs[c].v.vec(), xe);
      double expected = 0.0;
      switch (kind) {
        case LayerKind::bmlr_p: expected = 2.0 * inner + hs[c].b; break;
        case LayerKind::bmlr_l: expected = inner + hs[c].b; break;
        case LayerKind::bfc_p: expected = inner + hs[c].b / 2.0; break;
        default: expected = inner + hs[c].b; break;
      }
      const double got = kind == LayerKind::bfc_l ? y[c + 1] : y[c];
      worst = std::max(worst, std::abs(got - expected));
    }
  }
  return worst;
}

void limits_suite(std::vector<PropertyResult>& out, std::uint64_t seed) {
  Suite s("limits", out);
  s.check("BMLR-P at K = -1e-8", "logit -> 2 alpha <v, x> + b", 1e-3, [&] { return limit_error(LayerKind::bmlr_p, seed + 51); });
  s.check("BMLR-L at K = -1e-8", "logit -> alpha <v, x_s> + b", 1e-3, [&] { return limit_error(LayerKind::bmlr_l, seed + 52); });
  s.check("BFC-P at K = -1e-8", "y -> alpha <v, x> + b / 2", 1e-3, [&] { return limit_error(LayerKind::bfc_p, seed + 53); });
  s.check("BFC-L at K = -1e-8", "y_s -> alpha <v, x_s> + b", 1e-3, [&] { return limit_error(LayerKind::bfc_l, seed + 54); });
}

}  // namespace

const std::vector<std::string>& verify_suites() {
  static const std::vector<std::string> names{"manifold", "gyro", "busemann", "layers", "grads", "limits"};
  return names;
}

std::vector<PropertyResult> run_verify(std::string_view selector, std::uint64_t seed) {
  using Runner = void (*)(std::vector<PropertyResult>&, std::uint64_t);
  const std::pair<std::string_view, Runner> suites[] = {
      {"manifold", manifold_suite}, {"gyro", gyro_suite},   {"busemann", busemann_suite},
      {"layers", layers_suite},     {"grads", grads_suite}, {"limits", limits_suite},
  };
  std::vector<PropertyResult> out;
  bool matched = false;
  for (const auto& [name, run] : suites) {
    if (selector == "all" || selector == name) {
      run(out, seed);
      matched = true;
    }
  }
  if (!matched) {
    throw UsageError("unknown verify selector '" + std::string(selector) +
                     "' (expected manifold, gyro, busemann, layers, grads, limits or all)");
  }
  return out;
}

std::string format_verify_report(const std::vector<PropertyResult>& results) {
  std::string out;
  char line[512];
  std::snprintf(line, sizeof line, "%-9s %-38s %-12s %-9s %-6s %s\n", "suite", "property", "max error", "tolerance",
                "status", "statement");
  out += line;
  std::size_t failed = 0;
  for (const PropertyResult& r : results) {
    std::snprintf(line, sizeof line, "%-9s %-38s %-12.3e %-9.0e %-6s %s\n", r.suite.c_str(), r.name.c_str(), r.error,
                  r.tolerance, r.pass() ? "pass" : "FAIL", r.anchor.c_str());
    out += line;
    failed += r.pass() ? 0 : 1;
  }
  std::snprintf(line, sizeof line, "%zu properties, %zu failed\n", results.size(), failed);
  out += line;
  return out;
}

}  // namespace hbnn
