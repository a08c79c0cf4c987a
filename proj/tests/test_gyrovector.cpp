#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "hbnn/error.hpp"
#include "hbnn/gyrovector.hpp"
#include "test_support.hpp"

namespace hbnn {
namespace {

using testing::random_point;
using testing::rel_coord_error;

const Curvature kUnit{-1.0};

TEST(MobiusAdd, IdentityCollinearAndInverse) {
  const Space ball(Model::poincare, kUnit, 2);
  EXPECT_EQ(mobius_add(ball, Vec{0.0, 0.0}, Vec{0.3, -0.1}), (Vec{0.3, -0.1}));
  const Vec s = mobius_add(ball, Vec{0.3, 0.0}, Vec{0.4, 0.0});
  EXPECT_NEAR(s[0], 0.625, 1e-15);
  EXPECT_EQ(s[1], 0.0);

  std::mt19937_64 rng(11);
  for (int i = 0; i < 100; ++i) {
    const Vec x = random_point(ball, rng, 3.0);
    EXPECT_LT(norm(mobius_add(ball, negated(x), x)), 1e-12);
  }
}

TEST(MobiusScalar, Examples) {
  const Space ball(Model::poincare, kUnit, 2);
  EXPECT_EQ(mobius_scalar(ball, 0.0, Vec{0.2, 0.1}), (Vec{0.0, 0.0}));
  EXPECT_EQ(mobius_scalar(ball, 3.0, Vec{0.0, 0.0}), (Vec{0.0, 0.0}));
  const Vec h = mobius_scalar(ball, 0.5, Vec{0.6, 0.0});
  EXPECT_NEAR(h[0], 0.3333333, 1e-7);

  std::mt19937_64 rng(12);
  for (int i = 0; i < 100; ++i) {
    const Vec x = random_point(ball, rng, 2.0);
    EXPECT_LT(max_abs_diff(mobius_scalar(ball, 1.0, x), x), 1e-12);
    EXPECT_LT(max_abs_diff(mobius_scalar(ball, 2.0, x), mobius_add(ball, x, x)), 1e-12);
  }
}

TEST(LorentzGyroAdd, CaseBranchesAndInverse) {
  const Space hyp(Model::lorentz, kUnit, 3);
  std::mt19937_64 rng(13);
  for (int i = 0; i < 100; ++i) {
    const Vec x = random_point(hyp, rng, 3.0);
    EXPECT_EQ(lorentz_gyro_add(hyp, hyp.origin(), x), x);
    EXPECT_EQ(lorentz_gyro_add(hyp, x, hyp.origin()), x);
    EXPECT_LT(rel_coord_error(lorentz_gyro_add(hyp, gyro_inverse(hyp, x), x), hyp.origin()), 1e-10);
  }
}

TEST(LorentzGyroAdd, AgreesWithRiemannianDefinition) {
  // x + y = exp_x(PT_{e->x}(log_e y))
  std::mt19937_64 rng(14);
  for (double k : {-0.25, -1.0, -4.0}) {
    const Space hyp(Model::lorentz, Curvature(k), 4);
    const Vec e = hyp.origin();
    for (int i = 0; i < 200; ++i) {
      const Vec x = random_point(hyp, rng, 2.5);
      const Vec y = random_point(hyp, rng, 2.5);
      const Vec ref = hyp.exp(x, hyp.transport(e, x, hyp.log(e, y)));
      EXPECT_LT(rel_coord_error(lorentz_gyro_add(hyp, x, y), ref), 1e-7);
    }
  }
}

TEST(MobiusAdd, AgreesWithRiemannianDefinition) {
  std::mt19937_64 rng(15);
  const Space ball(Model::poincare, kUnit, 4);
  const Vec e = ball.origin();
  for (int i = 0; i < 200; ++i) {
    const Vec x = random_point(ball, rng, 2.5);
    const Vec y = random_point(ball, rng, 2.5);
    const Vec ref = ball.exp(x, ball.transport(e, x, ball.log(e, y)));
    EXPECT_LT(max_abs_diff(mobius_add(ball, x, y), ref), 1e-9);
  }
}

TEST(LorentzGyroScalar, Examples) {
  const Space hyp(Model::lorentz, kUnit, 3);
  std::mt19937_64 rng(16);
  for (int i = 0; i < 100; ++i) {
    const Vec x = random_point(hyp, rng, 2.0);
    EXPECT_EQ(lorentz_gyro_scalar(hyp, 0.0, x), hyp.origin());
    EXPECT_LT(rel_coord_error(lorentz_gyro_scalar(hyp, 1.0, x), x), 1e-12);
    EXPECT_LT(rel_coord_error(lorentz_gyro_scalar(hyp, 2.0, x), lorentz_gyro_add(hyp, x, x)), 1e-8);
  }
  EXPECT_EQ(lorentz_gyro_scalar(hyp, 2.0, hyp.origin()), hyp.origin());
}

TEST(Gyration, TrivialCases) {
  std::mt19937_64 rng(17);
  for (Model m : {Model::poincare, Model::lorentz}) {
    const Space s(m, kUnit, 3);
    for (int i = 0; i < 50; ++i) {
      const Vec x = random_point(s, rng, 2.0);
      const Vec y = random_point(s, rng, 2.0);
      const Vec z = random_point(s, rng, 2.0);
      EXPECT_LT(rel_coord_error(gyration(s, x, x, z), z), 1e-9);
      EXPECT_LT(rel_coord_error(gyration(s, s.origin(), y, z), z), 1e-9);
    }
  }
}

TEST(GyroAxioms, HoldOnRandomTriples) {
  std::mt19937_64 rng(18);
  std::uniform_real_distribution<double> scal(-3.0, 3.0);
  for (double k : {-0.25, -1.0})
    for (std::size_t n : {2u, 8u})
      for (Model m : {Model::poincare, Model::lorentz}) {
        const Space s(m, Curvature(k), n);
        const Vec e = s.origin();
        double worst = 0.0;
        for (int i = 0; i < 200; ++i) {
          const Vec x = random_point(s, rng, 1.5);
          const Vec y = random_point(s, rng, 1.5);
          const Vec z = random_point(s, rng, 1.5);
          const Vec xy = gyro_add(s, x, y);
          const Vec gz = gyration(s, x, y, z);
          worst = std::max({worst, rel_coord_error(gyro_add(s, e, x), x),
                            rel_coord_error(gyro_add(s, gyro_inverse(s, x), x), e),
                            rel_coord_error(gyro_add(s, x, gyro_add(s, y, z)), gyro_add(s, xy, gz)),
                            rel_coord_error(gyration(s, xy, y, z), gz),
                            rel_coord_error(xy, gyration(s, x, y, gyro_add(s, y, x)))});
        }
        EXPECT_LT(worst, 1e-8) << to_string(m) << " K=" << k << " n=" << n;

        double worst_scalar = 0.0;
        for (int i = 0; i < 200; ++i) {
          const Vec x = random_point(s, rng, 1.5);
          const double a = scal(rng);
          const double b = scal(rng);
          worst_scalar = std::max(
              {worst_scalar, rel_coord_error(gyro_scalar(s, 1.0, x), x),
               rel_coord_error(gyro_scalar(s, a + b, x), gyro_add(s, gyro_scalar(s, a, x), gyro_scalar(s, b, x))),
               rel_coord_error(gyro_scalar(s, a * b, x), gyro_scalar(s, a, gyro_scalar(s, b, x)))});
        }
        EXPECT_LT(worst_scalar, 1e-7) << to_string(m) << " K=" << k << " n=" << n;
      }
}

TEST(GyroOps, CommuteWithCrossModelIsometry) {
  std::mt19937_64 rng(19);
  for (double k : {-0.25, -1.0, -4.0}) {
    const Curvature c(k);
    const Space ball(Model::poincare, c, 3);
    const Space hyp(Model::lorentz, c, 3);
    for (int i = 0; i < 200; ++i) {
      const Vec p = random_point(ball, rng, 2.0);
      const Vec q = random_point(ball, rng, 2.0);
      const Vec lhs = to_lorentz(c, mobius_add(ball, p, q));
      const Vec rhs = lorentz_gyro_add(hyp, to_lorentz(c, p), to_lorentz(c, q));
      EXPECT_LT(rel_coord_error(lhs, rhs), 1e-7);
      EXPECT_LT(rel_coord_error(to_lorentz(c, mobius_scalar(ball, 1.7, p)),
                                lorentz_gyro_scalar(hyp, 1.7, to_lorentz(c, p))),
                1e-7);
    }
  }
}

TEST(GyroOps, RejectWrongModel) {
  const Space hyp(Model::lorentz, kUnit, 2);
  EXPECT_THROW(mobius_add(hyp, hyp.origin(), hyp.origin()), UsageError);
  const Space ball(Model::poincare, kUnit, 2);
  EXPECT_THROW(lorentz_gyro_scalar(ball, 1.0, Vec{0.0, 0.0}), UsageError);
}

}  // namespace
}  // namespace hbnn
