#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spherecal/oracle.hpp"

namespace spherecal {

// A complete simulated experiment: room, stations, camera and noise.
struct Preset {
  std::string name;
  std::string units = "px";
  SceneSpec scene;
  RigSpec rig;
  ProjectionModel model;
  NoiseSpec noise;
  InteriorOrientation nominal;  // what the dataset header declares
};

// nikon75   44 exposures, pinhole with Brown distortion, 75 deg diagonal FOV
// gopro150  52 exposures, equidistant with radial ripple and y trend, 150 deg
// fisheye250  equidistant, 250 deg circular field (targets behind the camera)
// ortho160  orthographic mapping (the spherical image itself), no distortion
// Every generator seed is derived from `seed`. Throws ConfigError for an
// unknown name.
Preset make_preset(const std::string& name, std::uint64_t seed);
std::vector<std::string> preset_names();

struct SimulatedDataset {
  Preset preset;
  Simulation sim;
};

SimulatedDataset simulate(const Preset& preset);

}  // namespace spherecal
