#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hbnn/busemann.hpp"
#include "hbnn/error.hpp"
#include "test_support.hpp"

namespace hbnn {
namespace {

using testing::random_direction;
using testing::random_point;

const Curvature kUnit{-1.0};
const Direction kE1{Vec{1.0, 0.0}};

TEST(Direction, NormalizesAndValidates) {
  EXPECT_NEAR(norm(Direction::normalized(Vec{3.0, 4.0}).vec()), 1.0, 1e-15);
  EXPECT_THROW(Direction::normalized(Vec{0.0, 0.0}), UsageError);
  EXPECT_THROW(Direction(Vec{1.0, 1.0}), UsageError);
}

TEST(Busemann, PoincareExamples) {
  const Space ball(Model::poincare, kUnit, 2);
  EXPECT_NEAR(busemann_poincare(ball, kE1, Vec{0.0, 0.0}), 0.0, 1e-15);
  EXPECT_NEAR(busemann_poincare(ball, kE1, Vec{0.5, 0.0}), -1.0986123, 1e-7);
  EXPECT_NEAR(busemann_poincare(ball, kE1, Vec{-0.5, 0.0}), 1.0986123, 1e-7);
}

TEST(Busemann, LorentzExamples) {
  const Space hyp(Model::lorentz, kUnit, 2);
  EXPECT_NEAR(busemann_lorentz(hyp, kE1, hyp.origin()), 0.0, 1e-15);
  EXPECT_NEAR(busemann_lorentz(hyp, kE1, Vec{std::sqrt(1.25), 0.5, 0.0}), -0.4812118, 1e-7);
  EXPECT_NEAR(busemann_lorentz(hyp, kE1, Vec{5.0 / 3.0, 4.0 / 3.0, 0.0}), std::log(1.0 / 3.0), 1e-14);
  const Space ball(Model::poincare, kUnit, 2);
  EXPECT_NEAR(busemann_lorentz(hyp, kE1, to_lorentz(kUnit, Vec{0.5, 0.0})),
              busemann_poincare(ball, kE1, Vec{0.5, 0.0}), 1e-14);
}

TEST(Busemann, RayOracleConvergesToClosedForm) {
  std::mt19937_64 rng(21);
  for (double k : {-0.25, -1.0, -4.0})
    for (Model m : {Model::poincare, Model::lorentz}) {
      const Space s(m, Curvature(k), 3);
      for (int i = 0; i < 100; ++i) {
        const Direction v = random_direction(rng, 3);
        const Vec x = random_point(s, rng, 2.0);
        const double closed = busemann(s, v, x);
        const double o10 = busemann_ray_oracle(s, v, x, 10.0);
        const double o20 = busemann_ray_oracle(s, v, x, 20.0);
        EXPECT_NEAR(o20, closed, 1e-6) << to_string(m) << " K=" << k;
        EXPECT_GE(o10, o20 - 1e-12);
      }
    }
}

TEST(Busemann, RayOracleIsZeroOnTheOrigin) {
  for (Model m : {Model::poincare, Model::lorentz}) {
    const Space s(m, kUnit, 2);
    for (double t : {0.5, 3.0, 15.0}) EXPECT_NEAR(busemann_ray_oracle(s, kE1, s.origin(), t), 0.0, 1e-12);
    EXPECT_THROW(busemann_ray_oracle(s, kE1, s.origin(), 0.0), UsageError);
  }
}

TEST(Busemann, OneLipschitzAndCrossModel) {
  std::mt19937_64 rng(22);
  for (double k : {-0.25, -1.0, -4.0}) {
    const Curvature c(k);
    const Space ball(Model::poincare, c, 4);
    const Space hyp(Model::lorentz, c, 4);
    for (int i = 0; i < 300; ++i) {
      const Direction v = random_direction(rng, 4);
      const Vec p = random_point(ball, rng, 3.0);
      const Vec q = random_point(ball, rng, 3.0);
      EXPECT_LE(std::abs(busemann(ball, v, p) - busemann(ball, v, q)), ball.distance(p, q) + 1e-9);
      EXPECT_NEAR(busemann(ball, v, p), busemann(hyp, v, to_lorentz(c, p)), 1e-8);
    }
  }
}

TEST(Busemann, FlatLimit) {
  const Curvature tiny(-1e-8);
  const Space ball(Model::poincare, tiny, 3);
  const Space hyp(Model::lorentz, tiny, 3);
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> r(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    const Direction v = random_direction(rng, 3);
    const Vec x = scaled(random_direction(rng, 3).vec(), r(rng));
    EXPECT_LT(std::abs(busemann(ball, v, x) + 2.0 * dot(v.vec(), x)), 1e-3);
    const Vec xl = hyp.project(Vec{0.0, x[0], x[1], x[2]});
    EXPECT_LT(std::abs(busemann(hyp, v, xl) + dot(v.vec(), x)), 1e-3);
  }
}

TEST(Busemann, GradientIsUnitAndIncreasesAtUnitRate) {
  std::mt19937_64 rng(24);
  for (Model m : {Model::poincare, Model::lorentz}) {
    const Space s(m, Curvature(-0.5), 3);
    for (int i = 0; i < 50; ++i) {
      const Direction v = random_direction(rng, 3);
      const Vec x = random_point(s, rng, 2.0);
      const Vec g = busemann_gradient(s, v, x);
      EXPECT_NEAR(s.tangent_norm(x, g), 1.0, 1e-10);
      const Vec y = s.exp(x, scaled(g, 0.7));
      EXPECT_NEAR(busemann(s, v, y) - busemann(s, v, x), 0.7, 1e-9);
    }
  }
}

TEST(PointToHorosphere, Examples) {
  const Space hyp(Model::lorentz, kUnit, 2);
  const Horosphere h(kE1, 1.0, 0.0);
  EXPECT_NEAR(point_to_horosphere(hyp, Vec{std::sqrt(1.25), 0.5, 0.0}, h), 0.4812118, 1e-7);

  std::mt19937_64 rng(25);
  for (Model m : {Model::poincare, Model::lorentz}) {
    const Space s(m, kUnit, 3);
    for (int i = 0; i < 50; ++i) {
      const Horosphere hh(random_direction(rng, 3), 0.3 + i * 0.05, -1.0 + i * 0.04);
      for (const Vec& x : horosphere_sample(s, hh, 4, i)) EXPECT_LT(point_to_horosphere(s, x, hh), 1e-10);
      const Vec x = random_point(s, rng, 2.0);
      const Horosphere scaled_h(hh.v, 2.5 * hh.alpha, 2.5 * hh.b);
      EXPECT_NEAR(point_to_horosphere(s, x, hh), point_to_horosphere(s, x, scaled_h), 1e-12);
    }
  }
}

TEST(HorosphereSample, WorkedCasesAndLevelIdentity) {
  const Space hyp(Model::lorentz, kUnit, 2);
  // tau = 0, w = (0, 1): a = (1 + 1 - 1) / 2, x = (1.5, 0.5, 1).
  const Vec x = hyp.project(Vec{0.0, 0.5, 1.0});
  EXPECT_NEAR(x[0], 1.5, 1e-15);
  EXPECT_NEAR(busemann(hyp, kE1, x), 0.0, 1e-15);

  std::mt19937_64 rng(26);
  for (double k : {-0.25, -1.0, -4.0})
    for (Model m : {Model::poincare, Model::lorentz}) {
      const Space s(m, Curvature(k), 4);
      const Horosphere h(random_direction(rng, 4), 1.7, -2.1);
      const auto pts = horosphere_sample(s, h, 200, 99);
      ASSERT_EQ(pts.size(), 200u);
      for (const Vec& p : pts) {
        ASSERT_TRUE(s.contains(p));
        EXPECT_NEAR(busemann(s, h.v, p), h.level(), 1e-10);
      }
      EXPECT_EQ(horosphere_sample(s, h, 200, 99), pts);
      EXPECT_TRUE(horosphere_sample(s, h, 0, 99).empty());
    }
}

TEST(HorosphereDistance, EquidistanceWorkedCases) {
  for (Model m : {Model::poincare, Model::lorentz}) {
    const Space s(m, kUnit, 2);
    const auto r = horosphere_distance_check(s, Horosphere(kE1, 1.0, 0.0), Horosphere(kE1, 1.0, 1.0), 30);
    EXPECT_NEAR(r.measured, 1.0, 1e-3);
    EXPECT_LT(r.max_deviation, 1e-3);
    EXPECT_GT(r.min_lower_slack, -1e-9);

    const auto same = horosphere_distance_check(s, Horosphere(kE1, 2.0, 1.0), Horosphere(kE1, 1.0, 0.5), 10);
    EXPECT_NEAR(same.measured, 0.0, 1e-9);

    const auto wide = horosphere_distance_check(s, Horosphere(kE1, 2.0, -1.0), Horosphere(kE1, 1.0, 1.5), 30);
    EXPECT_NEAR(wide.measured, 2.0, 1e-3);
  }
}

TEST(Feasibility, WorkedDiscriminants) {
  const auto f0 = bfc_horosphere_feasibility(Vec{0.0, 0.0}, kUnit, Model::poincare);
  EXPECT_NEAR(f0.discriminant, 1.0, 1e-12);
  EXPECT_TRUE(f0.feasible);

  const auto f1 = bfc_horosphere_feasibility(Vec{1.0, 1.0}, kUnit, Model::lorentz);
  EXPECT_NEAR(f1.discriminant, 2.0 * std::exp(-2.0) - 1.0, 1e-12);
  EXPECT_NEAR(f1.discriminant, -0.7293294, 1e-7);
  EXPECT_FALSE(f1.feasible);

  std::mt19937_64 rng(27);
  std::normal_distribution<double> g(0.0, 2.0);
  for (int i = 0; i < 50; ++i) {
    const Vec u{g(rng)};
    for (Model m : {Model::poincare, Model::lorentz}) {
      const auto f = bfc_horosphere_feasibility(u, kUnit, m);
      const double t = std::exp(-u[0]);
      EXPECT_NEAR(f.discriminant, t * t, 1e-12 * (1.0 + t * t));
    }
  }
  EXPECT_THROW(bfc_horosphere_feasibility(Vec{}, kUnit, Model::poincare), UsageError);
}

TEST(Feasibility, FeasibleRootsSolveTheBusemannSystem) {
  // When a ball root R exists, y_k = c_k + d_k R must reproduce B^{e_k}(y) = -u_k.
  const Curvature c(-1.0);
  const Vec u{0.1, -0.2};
  const auto f = bfc_horosphere_feasibility(u, c, Model::poincare);
  ASSERT_TRUE(f.feasible);
  const Space ball(Model::poincare, c, 2);
  bool matched = false;
  for (double r : f.roots) {
    if (!(r >= 0.0 && r < 1.0)) continue;
    Vec y(2);
    for (int k = 0; k < 2; ++k) {
      const double t = std::exp(-u[k]);
      y[k] = (1.0 - t) / 2.0 + (1.0 + t) / 2.0 * r;
    }
    if (std::abs(sq_norm(y) - r) > 1e-9) continue;
    matched = true;
    for (int k = 0; k < 2; ++k) {
      Vec ek(2, 0.0);
      ek[k] = 1.0;
      EXPECT_NEAR(busemann(ball, Direction(ek), y), -u[k], 1e-9);
    }
  }
  EXPECT_TRUE(matched);
}

}  // namespace
}  // namespace hbnn
