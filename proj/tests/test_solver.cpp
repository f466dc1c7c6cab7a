#include <gtest/gtest.h>

#include <random>

#include <Eigen/Cholesky>

#include "oracles.hpp"
#include "spherecal/dogleg.hpp"
#include "spherecal/errors.hpp"
#include "spherecal/robust.hpp"

using namespace spherecal;
using Eigen::MatrixXd;
using Eigen::VectorXd;

TEST(Huber, WeightAndLoss) {
  EXPECT_EQ(huber_weight(0.0, 1.345), 1.0);
  EXPECT_EQ(huber_weight(1.345, 1.345), 1.0);
  EXPECT_NEAR(huber_weight(-2.69, 1.345), 0.5, 1e-15);
  EXPECT_NEAR(huber_loss(0.5, 1.345), 0.25, 1e-15);
  EXPECT_NEAR(huber_loss(3.0, 1.345), 2.0 * 1.345 * 3.0 - 1.345 * 1.345, 1e-14);
  // Loss is continuous with a continuous slope at the threshold.
  const double c = 1.345, h = 1e-7;
  EXPECT_NEAR(huber_loss(c + h, c) - huber_loss(c - h, c), 2.0 * c * 2.0 * h, 1e-12);
}

TEST(Dogleg, CauchyPointMinimisesAlongGradient) {
  MatrixXd h(2, 2);
  h << 4.0, 1.0, 1.0, 3.0;
  VectorXd g(2);
  g << 1.0, 2.0;
  const VectorXd p = cauchy_point(g, h);
  // d/dt of m(-t g) at the returned t is zero.
  const double t = -p.dot(g) / g.squaredNorm();
  EXPECT_NEAR(g.squaredNorm() - t * g.dot(h * g), 0.0, 1e-12);
  EXPECT_EQ(cauchy_point(VectorXd::Zero(2), h), VectorXd::Zero(2));
  MatrixXd neg = -h;
  EXPECT_THROW(cauchy_point(g, neg), SolverError);
}

TEST(Dogleg, StepCases) {
  VectorXd g(2), gn(2), cp(2);
  g << 1.0, 0.0;
  gn << -3.0, -4.0;
  cp << -1.0, 0.0;
  EXPECT_EQ(dogleg_step(g, gn, cp, 10.0), gn);              // inside
  EXPECT_LT((dogleg_step(g, gn, cp, 0.5) - VectorXd::Unit(2, 0) * -0.5).norm(), 1e-15);  // steepest
  const VectorXd mid = dogleg_step(g, gn, cp, 2.0);          // on the dogleg
  EXPECT_NEAR(mid.norm(), 2.0, 1e-12);
  const VectorXd d = gn - cp;
  const VectorXd off = mid - cp;
  EXPECT_NEAR(off.x() * d.y() - off.y() * d.x(), 0.0, 1e-12);
  EXPECT_THROW(dogleg_step(g, gn, cp, 0.0), ConfigError);
}

TEST(Dogleg, RadiusUpdate) {
  const TrustRegionRule rule;
  EXPECT_EQ(update_radius(rule, 0.1, 1.0, 1.0), 0.25);
  EXPECT_EQ(update_radius(rule, 0.9, 1.0, 1.0), 2.0);
  EXPECT_EQ(update_radius(rule, 0.9, 0.5, 1.0), 1.0);  // interior step: no growth
  EXPECT_EQ(update_radius(rule, 0.5, 1.0, 1.0), 1.0);
}

// Trust-region iteration on f(x) = 1/2 x'Ax - b'x, whose minimiser A^-1 b is
// known in closed form.
TEST(Dogleg, ConvergesOnQuadraticFrom100Starts) {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 100; ++trial) {
    const spherecal::testing::QuadraticRun run = spherecal::testing::dogleg_on_quadratic(rng, trial);
    EXPECT_LT(run.error, 1e-8) << "trial " << trial;
    EXPECT_LT(run.iterations, 500);
    EXPECT_TRUE(run.monotone);
  }
}
