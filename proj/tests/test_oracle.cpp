#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <set>

#include "spherecal/adjustment.hpp"
#include "spherecal/errors.hpp"
#include "spherecal/initialization.hpp"
#include "spherecal/oracle.hpp"
#include "test_support.hpp"

using namespace spherecal;
using spherecal::testing::make_dataset;
using spherecal::testing::truth_network;

TEST(Scene, TargetCountsAndBounds) {
  const SceneSpec spec;
  const Scene s = generate_scene(spec);
  ASSERT_EQ(s.points.size(), 191u);
  std::set<std::string> ids;
  for (std::size_t i = 0; i < s.points.size(); ++i) {
    const Vec3& p = s.points[i].coords;
    ids.insert(s.points[i].id);
    EXPECT_GE(p.x(), 0.0);
    EXPECT_LE(p.x(), spec.length);
    EXPECT_GE(p.y(), 0.0);
    EXPECT_LE(p.y(), spec.width);
    EXPECT_GE(p.z(), 0.0);
    EXPECT_LE(p.z(), spec.height);
    // Every target lies on a surface of the room.
    const double d = std::min({p.x(), spec.length - p.x(), p.y(), spec.width - p.y(), p.z(),
                               spec.height - p.z()});
    EXPECT_NEAR(d, 0.0, 1e-12);
  }
  EXPECT_EQ(ids.size(), 191u);
}

TEST(Warp, InverseRoundTrip) {
  Warp w;
  w.ripple_amplitude = 2.2;
  w.ripple_period = 220.0;
  w.trend_slope = 0.004;
  w.trend_r0 = 50.0;
  for (double x = -600.0; x <= 600.0; x += 37.0)
    for (double y = -450.0; y <= 450.0; y += 41.0) {
      const Vec2 u(x, y);
      EXPECT_LT((invert_warp(w, apply_warp(w, u)) - u).norm(), 1e-10);
    }
}

TEST(Observe, NoiseFreeObservationsLieOnTheModel) {
  const SimulatedDataset d = make_dataset("nikon75", 2, 0.0);
  const auto& t = d.sim.truth;
  std::map<std::string, std::size_t> pose_of, point_of;
  for (std::size_t j = 0; j < t.rig.exposures.size(); ++j) pose_of[t.rig.exposures[j]] = j;
  for (std::size_t i = 0; i < t.scene.points.size(); ++i) point_of[t.scene.points[i].id] = i;
  for (const auto& o : d.sim.observations) {
    const Vec3 ray = to_camera_frame(t.scene.points[point_of[o.target]].coords,
                                     t.rig.poses[pose_of[o.exposure]]);
    const Vec3 back = back_project(Vec2(o.x, o.y), t.model);
    EXPECT_LT((back - ray.normalized()).norm(), 1e-12);
  }
}

TEST(Observe, SphericalCameraMatchesAdjustmentModelExactly) {
  const SimulatedDataset d = make_dataset("ortho160", 2, 0.0);
  AdjustmentConfig cfg;
  const AdjustmentResult r = solve(truth_network(d), d.sim.observations, {}, cfg);
  EXPECT_LT(r.raw_cost, 1e-16);
}

TEST(Observe, DeterministicPerSeed) {
  const SimulatedDataset a = make_dataset("gopro150", 7, 0.5);
  const SimulatedDataset b = make_dataset("gopro150", 7, 0.5);
  ASSERT_EQ(a.sim.observations.size(), b.sim.observations.size());
  for (std::size_t k = 0; k < a.sim.observations.size(); ++k) {
    EXPECT_EQ(a.sim.observations[k].x, b.sim.observations[k].x);
    EXPECT_EQ(a.sim.observations[k].y, b.sim.observations[k].y);
  }
  const SimulatedDataset c = make_dataset("gopro150", 8, 0.5);
  EXPECT_NE(a.sim.observations[0].x, c.sim.observations[0].x);
}

TEST(Observe, OutlierFractionWithinBinomialBounds) {
  Preset p = make_preset("fisheye250", 5);
  p.noise.outlier_rate = 0.05;
  p.noise.outlier_magnitude = 50.0;
  const SimulatedDataset d = simulate(p);
  const double n = static_cast<double>(d.sim.observations.size());
  ASSERT_GE(n, 3000.0);
  std::size_t flagged = 0;
  for (bool f : d.sim.truth.outlier) flagged += f;
  const double sd = std::sqrt(n * 0.05 * 0.95);
  EXPECT_LT(std::abs(static_cast<double>(flagged) - 0.05 * n), 4.0 * sd);
}

TEST(Observe, WideFieldProducesBehindCameraObservations) {
  const SimulatedDataset d = make_dataset("fisheye250", 1, 0.5);
  std::size_t behind = 0;
  for (std::size_t k = 0; k < d.sim.observations.size(); ++k) {
    EXPECT_EQ(d.sim.truth.hemisphere[k] < 0.0, d.sim.truth.incidence[k] > std::numbers::pi / 2.0);
    behind += d.sim.truth.hemisphere[k] < 0.0;
  }
  EXPECT_GT(behind, 100u);
}

TEST(Presets, WideAngleScaleMatchesTarget) {
  const SimulatedDataset d = make_dataset("gopro150", 1, 0.5);
  EXPECT_EQ(d.sim.truth.rig.exposures.size(), 52u);
  const InitializationResult init =
      initialize_network(d.sim.approx_targets, d.sim.observations, d.preset.nominal);
  const long unknowns = 6 * static_cast<long>(init.network.poses.size()) +
                        3 * static_cast<long>(init.network.points.size()) + 3 - 7;
  EXPECT_GE(2 * static_cast<long>(init.observations.size()) - unknowns, 3000);
}

TEST(Presets, NormalAngleRig) {
  const SimulatedDataset d = make_dataset("nikon75", 1, 0.5);
  EXPECT_EQ(d.sim.truth.rig.exposures.size(), 44u);
  EXPECT_EQ(d.sim.truth.model.kind, ProjectionKind::Pinhole);
  EXPECT_THROW(make_preset("unknown", 1), ConfigError);
}

TEST(Observe, RejectsBadNoise) {
  Preset p = make_preset("ortho160", 1);
  p.noise.sigma = -1.0;
  EXPECT_THROW(simulate(p), ConfigError);
}
