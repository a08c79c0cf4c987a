#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hbnn/error.hpp"
#include "hbnn/gyrovector.hpp"
#include "hbnn/manifold.hpp"
#include "test_support.hpp"

namespace hbnn {
namespace {

using testing::random_point;
using testing::random_tangent;

const Curvature kUnit{-1.0};

TEST(Curvature, RejectsNonNegativeAndNonFinite) {
  EXPECT_THROW(Curvature(0.0), UsageError);
  EXPECT_THROW(Curvature(0.5), UsageError);
  EXPECT_THROW(Curvature(std::nan("")), UsageError);
  EXPECT_DOUBLE_EQ(Curvature(-4.0).kappa(), 2.0);
}

TEST(Origin, MatchesModelDefinitions) {
  EXPECT_EQ(origin(Model::lorentz, kUnit, 2), (Vec{1.0, 0.0, 0.0}));
  EXPECT_EQ(origin(Model::poincare, kUnit, 3), (Vec{0.0, 0.0, 0.0}));
  EXPECT_EQ(origin(Model::lorentz, Curvature(-4.0), 1), (Vec{0.5, 0.0}));
  EXPECT_THROW(origin(Model::poincare, kUnit, 0), UsageError);
}

TEST(Distance, PoincareRadialMatchesQuadratureOfMetric) {
  const Space ball(Model::poincare, kUnit, 2);
  // Length of the radial segment [0, 0.5] under ds = 2 dr / (1 - r^2), composite Simpson.
  const int steps = 2000;
  const double h = 0.5 / steps;
  double integral = 0.0;
  for (int i = 0; i <= steps; ++i) {
    const double r = i * h;
    const double w = (i == 0 || i == steps) ? 1.0 : (i % 2 ? 4.0 : 2.0);
    integral += w * 2.0 / (1.0 - r * r);
  }
  integral *= h / 3.0;
  const double d = ball.distance(Vec{0.0, 0.0}, Vec{0.5, 0.0});
  EXPECT_NEAR(d, 1.0986123, 1e-7);
  EXPECT_NEAR(d, integral, 1e-10);
}

TEST(Distance, ZeroOnCoincidentPoints) {
  const Space hyp(Model::lorentz, kUnit, 2);
  EXPECT_EQ(hyp.distance(hyp.origin(), hyp.origin()), 0.0);
  const Space ball(Model::poincare, kUnit, 2);
  EXPECT_NEAR(ball.distance(Vec{0.3, 0.0}, Vec{0.3, 0.0}), 0.0, 1e-15);
}

TEST(Distance, RejectsMismatchedDimensions) {
  const Space ball(Model::poincare, kUnit, 2);
  EXPECT_THROW(ball.distance(Vec{0.1, 0.0}, Vec{0.1, 0.0, 0.0}), UsageError);
  const Space hyp(Model::lorentz, kUnit, 2);
  EXPECT_THROW(hyp.distance(Vec{1.0, 0.0}, Vec{1.0, 0.0}), UsageError);
}

TEST(ExpMap, ZeroVelocityAndLorentzUnitGeodesic) {
  std::mt19937_64 rng(1);
  for (Model m : {Model::poincare, Model::lorentz}) {
    const Space s(m, kUnit, 3);
    const Vec x = random_point(s, rng, 2.0);
    EXPECT_EQ(s.exp(x, Vec(s.ambient_dim(), 0.0)), x);
  }
  const Space hyp(Model::lorentz, kUnit, 2);
  const Vec y = hyp.exp(hyp.origin(), Vec{0.0, 1.0, 0.0});
  EXPECT_NEAR(y[0], 1.5430806, 1e-7);
  EXPECT_NEAR(y[1], 1.1752012, 1e-7);
  EXPECT_NEAR(y[2], 0.0, 1e-15);
  EXPECT_NEAR(lorentz_inner(y, y), -1.0, 1e-12);
}

TEST(ExpMap, DistanceEqualsSpeed) {
  std::mt19937_64 rng(2);
  for (double k : {-0.25, -1.0, -4.0})
    for (Model m : {Model::poincare, Model::lorentz}) {
      const Space s(m, Curvature(k), 4);
      for (int i = 0; i < 50; ++i) {
        const Vec x = random_point(s, rng, 2.0);
        const double speed = 0.1 + 0.05 * i;
        const Vec v = random_tangent(s, rng, x, speed);
        EXPECT_NEAR(s.distance(x, s.exp(x, v)), speed, 1e-9);
      }
    }
}

TEST(LogMap, IdentityNormAndRoundTrip) {
  const Space ball(Model::poincare, kUnit, 2);
  EXPECT_EQ(ball.log(Vec{0.2, 0.1}, Vec{0.2, 0.1}), (Vec{0.0, 0.0}));
  const Vec l = ball.log(Vec{0.0, 0.0}, Vec{0.5, 0.0});
  EXPECT_NEAR(ball.tangent_norm(Vec{0.0, 0.0}, l), ball.distance(Vec{0.0, 0.0}, Vec{0.5, 0.0}), 1e-14);

  std::mt19937_64 rng(3);
  for (Model m : {Model::poincare, Model::lorentz}) {
    const Space s(m, kUnit, 3);
    double worst = 0.0;
    for (int i = 0; i < 100; ++i) {
      const Vec x = random_point(s, rng, 2.5);
      const Vec y = random_point(s, rng, 2.5);
      worst = std::max(worst, testing::rel_coord_error(s.exp(x, s.log(x, y)), y));
    }
    EXPECT_LT(worst, 1e-8) << to_string(m);
  }
}

TEST(Transport, IdentityIsometryAndTangency) {
  std::mt19937_64 rng(4);
  for (double k : {-0.25, -1.0, -4.0})
    for (Model m : {Model::poincare, Model::lorentz}) {
      const Space s(m, Curvature(k), 3);
      for (int i = 0; i < 100; ++i) {
        const Vec x = random_point(s, rng, 2.0);
        const Vec y = random_point(s, rng, 2.0);
        const Vec v = random_tangent(s, rng, x, 1.3);
        EXPECT_LT(testing::rel_coord_error(s.transport(x, x, v), v), 1e-10);
        const Vec w = s.transport(x, y, v);
        EXPECT_NEAR(s.tangent_norm(y, w), 1.3, 1e-9);
        if (m == Model::lorentz) {
          EXPECT_NEAR(lorentz_inner(y, w), 0.0, 1e-9 * (1.0 + norm(w)));
        }
      }
    }
}

TEST(ConformalFactor, Examples) {
  const Space ball(Model::poincare, kUnit, 2);
  EXPECT_DOUBLE_EQ(conformal_factor(ball, Vec{0.0, 0.0}), 2.0);
  EXPECT_NEAR(conformal_factor(ball, Vec{0.5, 0.0}), 2.6666667, 1e-7);
  const Space ball4(Model::poincare, Curvature(-4.0), 2);
  EXPECT_NEAR(conformal_factor(ball4, Vec{0.25, 0.0}), 2.6666667, 1e-7);
}

TEST(CrossModel, ExamplesRoundTripAndIsometry) {
  const Vec x = to_lorentz(kUnit, Vec{0.5, 0.0});
  EXPECT_NEAR(x[0], 5.0 / 3.0, 1e-15);
  EXPECT_NEAR(x[1], 4.0 / 3.0, 1e-15);
  EXPECT_NEAR(lorentz_inner(x, x), -1.0, 1e-14);
  EXPECT_EQ(to_lorentz(kUnit, Vec{0.0, 0.0}), origin(Model::lorentz, kUnit, 2));

  std::mt19937_64 rng(5);
  for (double k : {-0.25, -1.0, -4.0}) {
    const Curvature c(k);
    const Space ball(Model::poincare, c, 5);
    const Space hyp(Model::lorentz, c, 5);
    for (int i = 0; i < 200; ++i) {
      const Vec p = random_point(ball, rng, 4.0);
      const Vec q = random_point(ball, rng, 4.0);
      EXPECT_LT(max_abs_diff(to_poincare(c, to_lorentz(c, p)), p), 1e-10);
      EXPECT_NEAR(ball.distance(p, q), hyp.distance(to_lorentz(c, p), to_lorentz(c, q)), 1e-8);
    }
  }
}

TEST(Project, Examples) {
  const Space ball(Model::poincare, kUnit, 2);
  const Vec p = ball.project(Vec{2.0, 0.0});
  EXPECT_NEAR(p[0], 1.0 - 1e-5, 1e-15);
  EXPECT_EQ(p[1], 0.0);
  EXPECT_EQ(ball.project(Vec{0.3, -0.2}), (Vec{0.3, -0.2}));

  const Space hyp(Model::lorentz, kUnit, 2);
  EXPECT_NEAR(hyp.project(Vec{42.0, 0.5, 0.0})[0], 1.1180340, 1e-7);
  EXPECT_THROW(hyp.project(Vec{1.0, INFINITY, 0.0}), NumericError);
}

TEST(Invariants, ProjectedPointsSatisfyModelConstraints) {
  std::mt19937_64 rng(6);
  std::normal_distribution<double> g(0.0, 3.0);
  for (double k : {-0.25, -1.0, -4.0})
    for (Model m : {Model::poincare, Model::lorentz}) {
      const Space s(m, Curvature(k), 3);
      for (int i = 0; i < 10000; ++i) {
        Vec raw(s.ambient_dim());
        for (double& c : raw) c = g(rng);
        const Vec x = s.project(raw);
        ASSERT_TRUE(s.contains(x));
        if (m == Model::poincare) {
          ASSERT_LE(norm(x), (1.0 - kBallEps) / s.kappa() * (1.0 + 1e-15));
        }
      }
    }
}

TEST(Invariants, SymmetryAndTriangleInequality) {
  std::mt19937_64 rng(7);
  for (double k : {-0.25, -1.0, -4.0})
    for (Model m : {Model::poincare, Model::lorentz}) {
      const Space s(m, Curvature(k), 4);
      for (int i = 0; i < 300; ++i) {
        const Vec x = random_point(s, rng, 3.0);
        const Vec y = random_point(s, rng, 3.0);
        const Vec z = random_point(s, rng, 3.0);
        EXPECT_NEAR(s.distance(x, y), s.distance(y, x), 1e-9);
        EXPECT_LE(s.distance(x, z), s.distance(x, y) + s.distance(y, z) + 1e-9);
      }
    }
}

TEST(Gyration, ClosedFormMatchesDefiningComposition) {
  std::mt19937_64 rng(8);
  for (double k : {-0.25, -1.0}) {
    const Space ball(Model::poincare, Curvature(k), 4);
    for (int i = 0; i < 100; ++i) {
      const Vec u = random_point(ball, rng, 2.0);
      const Vec v = random_point(ball, rng, 2.0);
      const Vec w = random_point(ball, rng, 2.0);
      EXPECT_LT(max_abs_diff(detail::mobius_gyration(k, u, v, w), gyration(ball, u, v, w)), 1e-10);
    }
  }
}

}  // namespace
}  // namespace hbnn
