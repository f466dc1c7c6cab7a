#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>

#include "spherecal/errors.hpp"
#include "spherecal/initialization.hpp"
#include "test_support.hpp"

using namespace spherecal;
using spherecal::testing::make_dataset;

namespace {

// Median angle (degrees) between nominal bearings and the directions to the
// approximate targets under the chosen poses, per exposure.
std::vector<double> median_bearing_errors(const InitializationResult& init,
                                          const std::vector<ObjectPoint>& targets,
                                          const InteriorOrientation& nominal,
                                          double max_radius_fraction) {
  std::map<std::string, Vec3> where;
  for (const auto& t : targets) where[t.id] = t.coords;
  std::vector<double> out;
  for (std::size_t j = 0; j < init.network.poses.size(); ++j) {
    std::vector<double> err;
    for (const auto& o : init.observations) {
      if (o.exposure != init.network.exposures[j]) continue;
      if (std::hypot(o.x - nominal.xp, o.y - nominal.yp) > max_radius_fraction * nominal.c) continue;
      Vec3 b;
      if (!nominal_bearing(o, nominal, b)) continue;
      const Vec3 ray = to_camera_frame(where[o.target], init.network.poses[j]).normalized();
      err.push_back(std::acos(std::clamp(b.dot(ray), -1.0, 1.0)) * 180.0 / std::numbers::pi);
    }
    EXPECT_GE(err.size(), 4u);
    std::nth_element(err.begin(), err.begin() + err.size() / 2, err.end());
    out.push_back(err[err.size() / 2]);
  }
  return out;
}

}  // namespace

TEST(Initialization, PosesNearTruthOnSphericalCamera) {
  // The orthographic camera is the spherical image itself, so nominal
  // bearings are exact up to noise and survey error.
  const SimulatedDataset d = make_dataset("ortho160", 1, 0.5);
  const InitializationResult init =
      initialize_network(d.sim.approx_targets, d.sim.observations, d.preset.nominal);
  EXPECT_TRUE(init.excluded.empty());
  ASSERT_EQ(init.network.poses.size(), d.sim.truth.rig.poses.size());
  for (std::size_t j = 0; j < init.network.poses.size(); ++j) {
    EXPECT_EQ(init.network.exposures[j], d.sim.truth.rig.exposures[j]);
    // A single triple without refinement: degrees and decimetres, not better.
    EXPECT_LT(init.network.poses[j].orientation.angularDistance(
                  d.sim.truth.rig.poses[j].orientation),
              0.05);
    EXPECT_LT((init.network.poses[j].position - d.sim.truth.rig.poses[j].position).norm(), 0.1);
  }
  for (double m : median_bearing_errors(init, d.sim.approx_targets, d.preset.nominal, 0.8))
    EXPECT_LT(m, 1.0);
  EXPECT_EQ(init.network.iop.c, d.preset.nominal.c);
  for (double v : init.network.brown.value) EXPECT_EQ(v, 0.0);
  EXPECT_EQ(init.observations.size(), d.sim.observations.size());
}

TEST(Initialization, WideAngleLensWithinGate) {
  const SimulatedDataset d = make_dataset("gopro150", 1, 0.5);
  const InitializationConfig cfg;
  const InitializationResult init =
      initialize_network(d.sim.approx_targets, d.sim.observations, d.preset.nominal, cfg);
  EXPECT_TRUE(init.excluded.empty());
  for (double m : median_bearing_errors(init, d.sim.approx_targets, d.preset.nominal,
                                        cfg.max_radius_fraction))
    EXPECT_LE(m, cfg.gate_deg);
}

TEST(Initialization, ExcludesSparseExposuresAndDropsSingleRayTargets) {
  const SimulatedDataset d = make_dataset("ortho160", 2, 0.5);
  std::vector<ImageObservation> obs;
  int kept_for_first = 0;
  const std::string first = d.sim.observations.front().exposure;
  for (const auto& o : d.sim.observations) {
    if (o.exposure == first && kept_for_first++ >= 3) continue;
    obs.push_back(o);
  }
  const InitializationResult init =
      initialize_network(d.sim.approx_targets, obs, d.preset.nominal);
  ASSERT_EQ(init.excluded.size(), 1u);
  EXPECT_EQ(init.excluded[0].exposure, first);
  EXPECT_NE(init.excluded[0].reason.find("fewer than 4"), std::string::npos);
  for (const auto& o : init.observations) EXPECT_NE(o.exposure, first);

  // A target seen only once is dropped together with its observation.
  std::vector<ImageObservation> single;
  std::map<std::string, int> seen;
  for (const auto& o : d.sim.observations) {
    if (o.target == "T001" && seen[o.target]++ >= 1) continue;
    single.push_back(o);
  }
  const InitializationResult s =
      initialize_network(d.sim.approx_targets, single, d.preset.nominal);
  ASSERT_EQ(s.dropped_targets, std::vector<std::string>{"T001"});
  for (const auto& o : s.observations) EXPECT_NE(o.target, "T001");
}

TEST(Initialization, InputErrors) {
  const SimulatedDataset d = make_dataset("ortho160", 3, 0.5);
  auto targets = d.sim.approx_targets;
  targets.push_back(targets.front());
  EXPECT_THROW(initialize_network(targets, d.sim.observations, d.preset.nominal), DataError);
  auto obs = d.sim.observations;
  obs[0].target = "missing";
  EXPECT_THROW(initialize_network(d.sim.approx_targets, obs, d.preset.nominal), DataError);
  EXPECT_THROW(initialize_network(d.sim.approx_targets, d.sim.observations, {0.0, 0.0, 0.0}),
               ConfigError);
}

TEST(Initialization, NominalBearingRejectsPointsOffTheSphere) {
  ImageObservation o;
  o.x = 3.0;
  o.y = 4.0;
  Vec3 b;
  EXPECT_FALSE(nominal_bearing(o, {5.0, 0.0, 0.0}, b));
  ASSERT_TRUE(nominal_bearing(o, {13.0, 0.0, 0.0}, b));
  EXPECT_LT((b - Vec3(3.0, 4.0, 12.0) / 13.0).norm(), 1e-15);
}
