#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "spherecal/brown.hpp"
#include "spherecal/geometry.hpp"

namespace spherecal {

enum class ProjectionKind { Pinhole, Equidistant, Equisolid, Stereographic, Orthographic };

const char* projection_name(ProjectionKind k);
ProjectionKind parse_projection(const std::string& name);  // throws ConfigError

// Radius on the image for incidence angle alpha, and its inverse.
double radial_mapping(ProjectionKind k, double c, double alpha);
double inverse_radial_mapping(ProjectionKind k, double c, double r);
// Largest incidence angle the mapping accepts (exclusive bound).
double mapping_limit(ProjectionKind k);

// Smooth non-polynomial warp applied to the ideal image point (reduced
// coordinates): a radial sinusoidal ripple and a y offset growing almost
// linearly with radius.
struct Warp {
  double ripple_amplitude = 0.0;  // image units
  double ripple_period = 1.0;     // image units of radius
  double trend_slope = 0.0;       // dy = slope * (sqrt(r^2 + r0^2) - r0)
  double trend_r0 = 1.0;
  bool active() const { return ripple_amplitude != 0.0 || trend_slope != 0.0; }
};

Vec2 apply_warp(const Warp& w, const Vec2& u);
Vec2 invert_warp(const Warp& w, const Vec2& u);  // Newton; exact to rounding

struct ProjectionModel {
  ProjectionKind kind = ProjectionKind::Pinhole;
  InteriorOrientation iop;
  BrownParams brown;  // forward overlay: measured u satisfies u - brown(u) = ideal
  Warp warp;
  double half_fov = 0.0;           // radians; 0 means the mapping limit
  double sensor_width = 0.0;       // image units; 0 means unbounded
  double sensor_height = 0.0;
};

// Observed image point of a camera-frame ray, or nothing when it is outside
// the field of view or the sensor.
std::optional<Vec2> project_ray(const Vec3& v, const ProjectionModel& m);
std::optional<Vec2> project(const Vec3& point, const CameraPose& pose, const ProjectionModel& m);

// Exact inverse of project_ray: unit ray of an observed point.
Vec3 back_project(const Vec2& observed, const ProjectionModel& m);

// The correction field (dx, dy) that maps an observation of this camera onto
// the spherical image of radius c_sphere: x_true = x - xp - d equals
// c_sphere (Xc, Yc)/|V| for the generating ray.
Vec2 exact_sphere_correction(const Vec2& observed, const ProjectionModel& m, double c_sphere);

struct SceneSpec {
  double length = 6.0, width = 5.0, height = 3.0;  // metres
  int ceiling = 32, floor = 32, walls = 127;        // 191 in total
  double margin = 0.1;                               // from edges, metres
  double size_mean = 0.04, size_jitter = 0.01;       // target diameter, metres
  std::uint64_t seed = 1;
};

struct Scene {
  std::vector<ObjectPoint> points;
  std::vector<double> sizes;
  std::vector<std::string> surfaces;  // ceiling, floor, wall
};

Scene generate_scene(const SceneSpec& spec);

struct RigSpec {
  int exposures = 44;
  double station_half_x = 1.2, station_half_y = 1.0;  // around the room centre
  double station_z_min = 1.0, station_z_max = 2.0;
  double elevation_min_deg = -40.0, elevation_max_deg = 50.0;
  double roll_jitter_deg = 5.0;
  // Convergent: stations on a ring of the half extents, looking back across
  // the room within the azimuth jitter. Otherwise stations fill the box and
  // look outwards.
  bool convergent = false;
  double azimuth_jitter_deg = 30.0;
  int min_targets = 12;
  int max_attempts = 200;
  std::uint64_t seed = 2;
};

struct Rig {
  std::vector<std::string> exposures;
  std::vector<CameraPose> poses;
};

// Inside-out stations with alternating landscape and portrait rolls. Throws
// DataError if an exposure cannot reach rig.min_targets.
Rig generate_rig(const SceneSpec& scene_spec, const Scene& scene, const RigSpec& spec,
                 const ProjectionModel& model);

struct NoiseSpec {
  double sigma = 0.5;           // image units, per coordinate
  double outlier_rate = 0.0;
  double outlier_magnitude = 0.0;  // offset length, image units
  double survey_sigma = 0.0005;    // metres, perturbation of approximate targets
  std::uint64_t seed = 3;
};

struct TruthRecord {
  Scene scene;
  Rig rig;
  ProjectionModel model;
  std::vector<bool> outlier;       // per observation
  std::vector<double> hemisphere;  // sgn(Zc) per observation
  std::vector<double> incidence;   // alpha per observation, radians
};

struct Simulation {
  std::vector<ImageObservation> observations;
  std::vector<ObjectPoint> approx_targets;
  TruthRecord truth;
};

Simulation observe(const Scene& scene, const Rig& rig, const ProjectionModel& model,
                   const NoiseSpec& noise);

}  // namespace spherecal
