#include "spherecal/presets.hpp"

#include <cmath>
#include <numbers>

#include "spherecal/errors.hpp"

namespace spherecal {

namespace {

void seed_all(Preset& p, std::uint64_t seed) {
  p.scene.seed = seed;
  p.rig.seed = seed + 1;
  p.noise.seed = seed + 2;
}

}  // namespace

std::vector<std::string> preset_names() { return {"nikon75", "gopro150", "fisheye250", "ortho160"}; }

Preset make_preset(const std::string& name, std::uint64_t seed) {
  constexpr double deg = std::numbers::pi / 180.0;
  Preset p;
  p.name = name;
  if (name == "nikon75") {
    // 28 mm lens on a 3:2 sensor, 1200 x 800 px
    const double cc = std::hypot(600.0, 400.0) / std::tan(37.5 * deg);
    p.model.kind = ProjectionKind::Pinhole;
    p.model.iop = {cc, 3.1, -2.4};
    p.model.brown.mask = BrownMask::all();
    p.model.brown[BrownTerm::K1] = 0.025 / (cc * cc);
    p.model.brown[BrownTerm::K2] = -0.005 / std::pow(cc, 4);
    p.model.brown[BrownTerm::P1] = 3e-7;
    p.model.brown[BrownTerm::P2] = -2e-7;
    p.model.brown[BrownTerm::A1] = 1e-4;
    p.model.brown[BrownTerm::A2] = 5e-5;
    p.model.sensor_width = 1200.0;
    p.model.sensor_height = 800.0;
    p.rig.exposures = 44;
    p.rig.convergent = true;
    p.rig.station_half_x = 2.6;
    p.rig.station_half_y = 2.1;
    p.rig.elevation_min_deg = -20.0;
    p.rig.elevation_max_deg = 30.0;
    p.nominal = {std::round(cc), 0.0, 0.0};
  } else if (name == "gopro150") {
    // 150 deg diagonal on a 4:3 sensor, 1280 x 960 px
    const double c = 800.0 / (75.0 * deg);
    p.model.kind = ProjectionKind::Equidistant;
    p.model.iop = {c, 2.2, 1.7};
    p.model.warp.ripple_amplitude = 2.2;
    p.model.warp.ripple_period = 220.0;
    p.model.warp.trend_slope = 0.004;
    p.model.warp.trend_r0 = 50.0;
    p.model.sensor_width = 1280.0;
    p.model.sensor_height = 960.0;
    p.rig.exposures = 52;
    p.nominal = {std::round(c), 0.0, 0.0};
  } else if (name == "fisheye250") {
    const double c = 480.0 / (125.0 * deg);
    p.model.kind = ProjectionKind::Equidistant;
    p.model.iop = {c, 1.5, -1.0};
    p.model.half_fov = 125.0 * deg;
    p.model.sensor_width = 1000.0;
    p.model.sensor_height = 1000.0;
    p.rig.exposures = 24;
    p.nominal = {std::round(c), 0.0, 0.0};
  } else if (name == "ortho160") {
    const double c = 600.0;
    p.model.kind = ProjectionKind::Orthographic;
    p.model.iop = {c, 0.0, 0.0};
    p.model.half_fov = 80.0 * deg;
    p.model.sensor_width = 1200.0;
    p.model.sensor_height = 1200.0;
    p.rig.exposures = 24;
    p.nominal = {c, 0.0, 0.0};
  } else {
    throw ConfigError("unknown preset '" + name + "'");
  }
  seed_all(p, seed);
  return p;
}

SimulatedDataset simulate(const Preset& preset) {
  SimulatedDataset d{preset, {}};
  const Scene scene = generate_scene(preset.scene);
  const Rig rig = generate_rig(preset.scene, scene, preset.rig, preset.model);
  d.sim = observe(scene, rig, preset.model, preset.noise);
  return d;
}

}  // namespace spherecal
