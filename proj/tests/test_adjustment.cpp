#include <gtest/gtest.h>

#include <numbers>
#include <random>

#include "oracles.hpp"
#include "spherecal/adjustment.hpp"
#include "spherecal/assessment.hpp"
#include "spherecal/errors.hpp"
#include "test_support.hpp"

using namespace spherecal;
using spherecal::testing::check_linearization;
using spherecal::testing::JacobianCheck;
using spherecal::testing::make_dataset;
using spherecal::testing::random_linearization_case;
using spherecal::testing::perturbed;
using spherecal::testing::truth_network;

TEST(Linearization, MatchesCentralDifferencesOn100Configurations) {
  std::mt19937_64 rng(51);
  for (int i = 0; i < 100; ++i) {
    const JacobianCheck check = check_linearization(random_linearization_case(rng, i));
    EXPECT_TRUE(check.prediction_ok) << "case " << i;
    EXPECT_LT(check.worst, 1.0) << check.where << " case " << i;
  }
}

TEST(Adjustment, ExactDataAtTruthHasZeroCost) {
  const SimulatedDataset d = make_dataset("ortho160", 3, 0.0);
  Network truth = truth_network(d);
  AdjustmentConfig cfg;
  cfg.estimate.brown = truth.brown.mask;
  const AdjustmentResult r = solve(truth, d.sim.observations, {}, cfg);
  EXPECT_LT(r.raw_cost, 1e-16);
  for (const auto& v : r.residuals) EXPECT_LT(v.norm(), 1e-9);
}

TEST(Adjustment, RecoversTruthWithControlDatum) {
  const SimulatedDataset d = make_dataset("ortho160", 4, 0.0);
  const Network truth = truth_network(d);
  AdjustmentConfig cfg;
  cfg.datum.kind = DatumKind::ControlPoints;
  for (std::size_t i = 0; i < truth.points.size(); i += 20) cfg.datum.control_points.push_back(truth.points[i].id);
  Network start = perturbed(truth, 5, 0.01, 0.02, 2.0);
  for (std::size_t i = 0; i < truth.points.size(); i += 20) start.points[i] = truth.points[i];
  const AdjustmentResult r = solve(start, d.sim.observations, {}, cfg);
  EXPECT_TRUE(r.converged);
  EXPECT_NEAR(r.network.iop.c, truth.iop.c, 1e-6);
  EXPECT_NEAR(r.network.iop.xp, truth.iop.xp, 1e-6);
  EXPECT_NEAR(r.network.iop.yp, truth.iop.yp, 1e-6);
  for (std::size_t j = 0; j < truth.poses.size(); ++j)
    EXPECT_LT((r.network.poses[j].position - truth.poses[j].position).norm(), 1e-8);
  for (std::size_t i = 0; i < truth.points.size(); ++i)
    EXPECT_LT((r.network.points[i].coords - truth.points[i].coords).norm(), 1e-8);
}

// The free-network datum follows the initial values, so a similarity
// transform of the start must carry over to the solution unchanged.
TEST(Adjustment, FreeNetworkIsInvariantToSimilarityOfStart) {
  const SimulatedDataset d = make_dataset("ortho160", 12, 0.5);
  const Network a0 = perturbed(truth_network(d), 13, 0.01, 0.02, 2.0);
  const double s = 1.7;
  const Quat q(Eigen::AngleAxisd(0.8, Vec3(1.0, -2.0, 0.5).normalized()));
  const Vec3 t(12.0, -3.0, 40.0);
  Network b0 = a0;
  for (auto& p : b0.points) p.coords = s * (q * p.coords) + t;
  for (auto& pose : b0.poses) {
    pose.position = s * (q * pose.position) + t;
    pose.orientation = (pose.orientation * q.conjugate()).normalized();
  }
  AdjustmentConfig cfg;
  const AdjustmentResult a = solve(a0, d.sim.observations, {}, cfg);
  const AdjustmentResult b = solve(b0, d.sim.observations, {}, cfg);
  ASSERT_TRUE(a.converged);
  ASSERT_TRUE(b.converged);
  EXPECT_NEAR(b.cost, a.cost, 1e-10 * a.cost);
  std::vector<Vec3> pa, pb;
  for (std::size_t i = 0; i < a.network.points.size(); ++i) {
    pa.push_back(a.network.points[i].coords);
    pb.push_back(b.network.points[i].coords);
  }
  const Alignment al = rigid_align(pb, pa, true);
  double worst = 0.0;
  for (std::size_t i = 0; i < pa.size(); ++i)
    worst = std::max(worst, (apply_alignment(al, pb[i]) - pa[i]).norm());
  EXPECT_LT(worst, 1e-8);
  EXPECT_NEAR(al.scale, 1.0 / s, 1e-9);
}

TEST(Adjustment, AcceptedCostsNeverIncrease) {
  const SimulatedDataset d = make_dataset("nikon75", 6, 0.5);
  const Network truth = truth_network(d);
  AdjustmentConfig cfg;
  cfg.estimate.brown = BrownMask::parse("K1K2");
  const AdjustmentResult r = solve(perturbed(truth, 7, 0.005, 0.01, 3.0), d.sim.observations, {}, cfg);
  double last = std::numeric_limits<double>::infinity();
  int accepted = 0;
  for (const auto& rec : r.trace) {
    if (!rec.accepted) continue;
    EXPECT_LE(rec.cost, last);
    last = rec.cost;
    ++accepted;
  }
  EXPECT_GT(accepted, 0);
  EXPECT_EQ(r.redundancy, 2 * static_cast<long>(d.sim.observations.size()) -
                              (6 * static_cast<long>(truth.poses.size()) +
                               3 * static_cast<long>(truth.points.size()) + 3 + 2 - 7));
  EXPECT_NEAR(r.variance_factor, r.cost / static_cast<double>(r.redundancy), 1e-15 * r.cost);
}

TEST(Adjustment, FixedCorrectionEqualsShiftedObservations) {
  const SimulatedDataset d = make_dataset("ortho160", 8, 0.5);
  const Network truth = truth_network(d);
  std::vector<Vec2> fixed;
  std::vector<ImageObservation> shifted = d.sim.observations;
  for (std::size_t k = 0; k < shifted.size(); ++k) {
    fixed.emplace_back(0.3 * std::sin(static_cast<double>(k)), -0.2);
    shifted[k].x -= fixed.back().x();
    shifted[k].y -= fixed.back().y();
  }
  AdjustmentConfig cfg;
  const AdjustmentResult a = solve(truth, d.sim.observations, fixed, cfg);
  const AdjustmentResult b = solve(truth, shifted, {}, cfg);
  EXPECT_NEAR(a.cost, b.cost, 1e-8 * b.cost);
  EXPECT_NEAR(a.network.iop.c, b.network.iop.c, 1e-6);
}

TEST(Adjustment, HuberDownweightsGrossError) {
  SimulatedDataset d = make_dataset("ortho160", 9, 0.5);
  d.sim.observations[10].x += 40.0;
  const AdjustmentResult r = solve(truth_network(d), d.sim.observations, {}, AdjustmentConfig{});
  EXPECT_LT(r.weights[10], 0.1);
  AdjustmentConfig plain;
  plain.robust = false;
  const AdjustmentResult q = solve(truth_network(d), d.sim.observations, {}, plain);
  for (double w : q.weights) EXPECT_EQ(w, 1.0);
}

TEST(Adjustment, ErrorsAreReported) {
  const SimulatedDataset d = make_dataset("ortho160", 10, 0.5);
  const Network truth = truth_network(d);
  AdjustmentConfig bad;
  bad.huber_k = 0.0;
  EXPECT_THROW(solve(truth, d.sim.observations, {}, bad), ConfigError);
  EXPECT_THROW(solve(truth, d.sim.observations, {Vec2::Zero()}, AdjustmentConfig{}), ConfigError);
  auto obs = d.sim.observations;
  obs[0].target = "nope";
  EXPECT_THROW(solve(truth, obs, {}, AdjustmentConfig{}), DataError);
  obs = d.sim.observations;
  obs.push_back(obs[0]);
  EXPECT_THROW(solve(truth, obs, {}, AdjustmentConfig{}), DataError);
}

TEST(Adjustment, UnobservedPoseIsDatumDeficiency) {
  const SimulatedDataset d = make_dataset("ortho160", 11, 0.5);
  Network net = truth_network(d);
  net.exposures.push_back("EXTRA");
  net.poses.push_back(net.poses[0]);
  try {
    solve(net, d.sim.observations, {}, AdjustmentConfig{});
    FAIL() << "expected a datum deficiency";
  } catch (const SolverError& e) {
    EXPECT_EQ(e.kind(), SolverError::Kind::DatumDeficiency);
  }
}
