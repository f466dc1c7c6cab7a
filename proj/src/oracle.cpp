#include "spherecal/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

#include <Eigen/LU>

#include "spherecal/errors.hpp"

namespace spherecal {

namespace {

constexpr double kPi = std::numbers::pi;

std::mt19937_64 stream(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

Eigen::Matrix2d warp_jacobian(const Warp& w, const Vec2& u) {
  Eigen::Matrix2d j = Eigen::Matrix2d::Identity();
  const double r = u.norm();
  const double k = 2.0 * kPi / w.ripple_period;
  if (w.ripple_amplitude != 0.0) {
    if (r < 1e-12) {
      j += w.ripple_amplitude * k * Eigen::Matrix2d::Identity();
    } else {
      const double f = w.ripple_amplitude * std::sin(k * r) / r;
      const double df = w.ripple_amplitude * (k * std::cos(k * r) * r - std::sin(k * r)) / (r * r);
      j += f * Eigen::Matrix2d::Identity() + (df / r) * u * u.transpose();
    }
  }
  if (w.trend_slope != 0.0) {
    const double s = std::sqrt(r * r + w.trend_r0 * w.trend_r0);
    j.row(1) += (w.trend_slope / s) * u.transpose();
  }
  return j;
}

Mat3 look_rotation(const Vec3& dir, double roll) {
  const Vec3 z = dir.normalized();
  Vec3 x = z.cross(Vec3::UnitZ());
  if (x.norm() < 1e-9) x = Vec3::UnitX();
  x.normalize();
  const Vec3 y = z.cross(x);
  const Vec3 xr = std::cos(roll) * x + std::sin(roll) * y;
  const Vec3 yr = -std::sin(roll) * x + std::cos(roll) * y;
  Mat3 r;
  r.row(0) = xr.transpose();
  r.row(1) = yr.transpose();
  r.row(2) = z.transpose();
  return r;
}

}  // namespace

const char* projection_name(ProjectionKind k) {
  switch (k) {
    case ProjectionKind::Pinhole: return "pinhole";
    case ProjectionKind::Equidistant: return "equidistant";
    case ProjectionKind::Equisolid: return "equisolid";
    case ProjectionKind::Stereographic: return "stereographic";
    case ProjectionKind::Orthographic: return "orthographic";
  }
  return "?";
}

ProjectionKind parse_projection(const std::string& name) {
  for (auto k : {ProjectionKind::Pinhole, ProjectionKind::Equidistant, ProjectionKind::Equisolid,
                 ProjectionKind::Stereographic, ProjectionKind::Orthographic})
    if (name == projection_name(k)) return k;
  throw ConfigError("unknown projection model '" + name + "'");
}

double radial_mapping(ProjectionKind k, double c, double a) {
  switch (k) {
    case ProjectionKind::Pinhole: return c * std::tan(a);
    case ProjectionKind::Equidistant: return c * a;
    case ProjectionKind::Equisolid: return 2.0 * c * std::sin(0.5 * a);
    case ProjectionKind::Stereographic: return 2.0 * c * std::tan(0.5 * a);
    case ProjectionKind::Orthographic: return c * std::sin(a);
  }
  return 0.0;
}

double inverse_radial_mapping(ProjectionKind k, double c, double r) {
  switch (k) {
    case ProjectionKind::Pinhole: return std::atan(r / c);
    case ProjectionKind::Equidistant: return r / c;
    case ProjectionKind::Equisolid: return 2.0 * std::asin(std::min(1.0, r / (2.0 * c)));
    case ProjectionKind::Stereographic: return 2.0 * std::atan(r / (2.0 * c));
    case ProjectionKind::Orthographic: return std::asin(std::min(1.0, r / c));
  }
  return 0.0;
}

double mapping_limit(ProjectionKind k) {
  switch (k) {
    case ProjectionKind::Pinhole:
    case ProjectionKind::Orthographic: return 0.5 * kPi;
    default: return kPi;
  }
}

Vec2 apply_warp(const Warp& w, const Vec2& u) {
  Vec2 out = u;
  const double r = u.norm();
  if (w.ripple_amplitude != 0.0) {
    const double k = 2.0 * kPi / w.ripple_period;
    out += r < 1e-12 ? Vec2(w.ripple_amplitude * k * u)
                     : Vec2((w.ripple_amplitude * std::sin(k * r) / r) * u);
  }
  if (w.trend_slope != 0.0)
    out.y() += w.trend_slope * (std::sqrt(r * r + w.trend_r0 * w.trend_r0) - w.trend_r0);
  return out;
}

Vec2 invert_warp(const Warp& w, const Vec2& target) {
  if (!w.active()) return target;
  Vec2 u = target;
  for (int it = 0; it < 60; ++it) {
    const Vec2 f = apply_warp(w, u) - target;
    if (f.norm() <= 1e-15 * (1.0 + target.norm())) break;
    u -= warp_jacobian(w, u).partialPivLu().solve(f);
  }
  return u;
}

std::optional<Vec2> project_ray(const Vec3& v, const ProjectionModel& m) {
  const double alpha = incidence_angle(v);
  const double limit = m.half_fov > 0.0 ? std::min(m.half_fov, mapping_limit(m.kind))
                                        : mapping_limit(m.kind);
  const bool inclusive = m.half_fov > 0.0 && m.half_fov < mapping_limit(m.kind);
  if (inclusive ? alpha > limit : alpha >= limit) return std::nullopt;
  const double rho = std::hypot(v.x(), v.y());
  const double r = radial_mapping(m.kind, m.iop.c, alpha);
  const Vec2 ideal = rho > 0.0 ? Vec2(r * v.x() / rho, r * v.y() / rho) : Vec2::Zero();
  const Vec2 w = apply_warp(m.warp, ideal);
  Vec2 u = w;
  if (!m.brown.mask.empty() || std::any_of(m.brown.value.begin(), m.brown.value.end(),
                                          [](double x) { return x != 0.0; })) {
    if (!invert_brown(w, m.brown, w, u)) return std::nullopt;
  }
  const Vec2 x(m.iop.xp + u.x(), m.iop.yp + u.y());
  if (m.sensor_width > 0.0 && std::abs(x.x()) > 0.5 * m.sensor_width) return std::nullopt;
  if (m.sensor_height > 0.0 && std::abs(x.y()) > 0.5 * m.sensor_height) return std::nullopt;
  return x;
}

std::optional<Vec2> project(const Vec3& point, const CameraPose& pose, const ProjectionModel& m) {
  return project_ray(to_camera_frame(point, pose), m);
}

Vec3 back_project(const Vec2& observed, const ProjectionModel& m) {
  const InteriorOrientation origin{1.0, 0.0, 0.0};
  const Vec2 u(observed.x() - m.iop.xp, observed.y() - m.iop.yp);
  const Vec2 w = u - brown_correction(u.x(), u.y(), origin, m.brown);
  const Vec2 ideal = invert_warp(m.warp, w);
  const double r = ideal.norm();
  const double alpha = inverse_radial_mapping(m.kind, m.iop.c, r);
  if (r == 0.0) return Vec3::UnitZ();
  const double s = std::sin(alpha);
  return Vec3(s * ideal.x() / r, s * ideal.y() / r, std::cos(alpha));
}

Vec2 exact_sphere_correction(const Vec2& observed, const ProjectionModel& m, double c_sphere) {
  const Vec3 ray = back_project(observed, m);
  return Vec2(observed.x() - m.iop.xp - c_sphere * ray.x(),
              observed.y() - m.iop.yp - c_sphere * ray.y());
}

Scene generate_scene(const SceneSpec& s) {
  if (!(s.length > 0.0 && s.width > 0.0 && s.height > 0.0))
    throw ConfigError("room dimensions must be positive");
  if (s.ceiling < 0 || s.floor < 0 || s.walls < 0 || s.ceiling + s.floor + s.walls == 0)
    throw ConfigError("target counts must be non-negative and not all zero");
  auto rng = stream(s.seed, 0x5ce7e);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto in = [&](double lo, double hi) { return lo + s.margin + (hi - lo - 2.0 * s.margin) * unit(rng); };

  Scene scene;
  auto add = [&](const Vec3& p, const char* surface) {
    const std::size_t i = scene.points.size() + 1;
    char id[16];
    std::snprintf(id, sizeof id, "T%03zu", i);
    scene.points.push_back({id, p});
    scene.sizes.push_back(s.size_mean + s.size_jitter * (2.0 * unit(rng) - 1.0));
    scene.surfaces.emplace_back(surface);
  };
  for (int i = 0; i < s.ceiling; ++i) add(Vec3(in(0, s.length), in(0, s.width), s.height), "ceiling");
  for (int i = 0; i < s.floor; ++i) add(Vec3(in(0, s.length), in(0, s.width), 0.0), "floor");

  // walls in proportion to their area: y = 0, x = L, y = W, x = 0
  const double area[4] = {s.length, s.width, s.length, s.width};
  const double total = 2.0 * (s.length + s.width);
  int count[4];
  int assigned = 0;
  for (int w = 0; w < 4; ++w) {
    count[w] = static_cast<int>(std::floor(s.walls * area[w] / total));
    assigned += count[w];
  }
  for (int w = 0; assigned < s.walls; w = (w + 1) % 4, ++assigned) ++count[w];
  for (int w = 0; w < 4; ++w)
    for (int i = 0; i < count[w]; ++i) {
      const double z = in(0, s.height);
      switch (w) {
        case 0: add(Vec3(in(0, s.length), 0.0, z), "wall"); break;
        case 1: add(Vec3(s.length, in(0, s.width), z), "wall"); break;
        case 2: add(Vec3(in(0, s.length), s.width, z), "wall"); break;
        default: add(Vec3(0.0, in(0, s.width), z), "wall"); break;
      }
    }
  return scene;
}

Rig generate_rig(const SceneSpec& room, const Scene& scene, const RigSpec& spec,
                 const ProjectionModel& model) {
  if (spec.exposures < 1) throw ConfigError("rig needs at least one exposure");
  Rig rig;
  const Vec3 centre(0.5 * room.length, 0.5 * room.width, 0.0);
  const double deg = kPi / 180.0;
  for (int e = 0; e < spec.exposures; ++e) {
    auto rng = stream(spec.seed, 0x816, static_cast<std::uint64_t>(e));
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    bool ok = false;
    for (int attempt = 0; attempt < spec.max_attempts && !ok; ++attempt) {
      Vec3 station;
      double az;
      if (spec.convergent) {
        // on a ring near the walls, looking back across the room
        const double phi = 2.0 * kPi * (e + unit(rng)) / spec.exposures;
        const double reach = 0.75 + 0.25 * unit(rng);
        station = Vec3(centre.x() + reach * spec.station_half_x * std::cos(phi),
                       centre.y() + reach * spec.station_half_y * std::sin(phi),
                       spec.station_z_min + (spec.station_z_max - spec.station_z_min) * unit(rng));
        az = phi + kPi + spec.azimuth_jitter_deg * deg * (2.0 * unit(rng) - 1.0);
      } else {
        station = Vec3(centre.x() + spec.station_half_x * (2.0 * unit(rng) - 1.0),
                       centre.y() + spec.station_half_y * (2.0 * unit(rng) - 1.0),
                       spec.station_z_min + (spec.station_z_max - spec.station_z_min) * unit(rng));
        az = 2.0 * kPi * (e + unit(rng)) / spec.exposures;
      }
      const double el = (spec.elevation_min_deg +
                         (spec.elevation_max_deg - spec.elevation_min_deg) * unit(rng)) * deg;
      const double roll = ((e % 2) * 90.0 + spec.roll_jitter_deg * (2.0 * unit(rng) - 1.0)) * deg;
      const Vec3 dir(std::cos(el) * std::cos(az), std::cos(el) * std::sin(az), std::sin(el));
      CameraPose pose;
      pose.orientation = Quat(look_rotation(dir, roll));
      normalize(pose.orientation);
      pose.position = station;
      int seen = 0;
      for (const auto& p : scene.points)
        if (project(p.coords, pose, model)) ++seen;
      if (seen >= spec.min_targets) {
        char id[16];
        std::snprintf(id, sizeof id, "E%03d", e + 1);
        rig.exposures.emplace_back(id);
        rig.poses.push_back(pose);
        ok = true;
      }
    }
    if (!ok)
      throw DataError("exposure " + std::to_string(e + 1) + " cannot see " +
                      std::to_string(spec.min_targets) + " targets");
  }
  return rig;
}

Simulation observe(const Scene& scene, const Rig& rig, const ProjectionModel& model,
                   const NoiseSpec& noise) {
  if (noise.sigma < 0.0) throw ConfigError("noise sigma must be non-negative");
  if (noise.outlier_rate < 0.0 || noise.outlier_rate >= 1.0)
    throw ConfigError("outlier rate must be in [0, 1)");
  Simulation sim;
  sim.truth.scene = scene;
  sim.truth.rig = rig;
  sim.truth.model = model;
  const double apriori = noise.sigma > 0.0 ? noise.sigma : 1.0;
  for (std::size_t e = 0; e < rig.poses.size(); ++e) {
    auto rng = stream(noise.seed, 0x0b5, e);
    std::normal_distribution<double> gauss(0.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (const auto& p : scene.points) {
      const Vec3 v = to_camera_frame(p.coords, rig.poses[e]);
      const auto x = project_ray(v, model);
      if (!x) continue;
      // draw every variate for every visible point so streams stay aligned
      const double nx = gauss(rng), ny = gauss(rng);
      const double flag = unit(rng), theta = 2.0 * kPi * unit(rng);
      ImageObservation o;
      o.exposure = rig.exposures[e];
      o.target = p.id;
      o.x = x->x() + noise.sigma * nx;
      o.y = x->y() + noise.sigma * ny;
      const bool outlier = flag < noise.outlier_rate;
      if (outlier) {
        o.x += noise.outlier_magnitude * std::cos(theta);
        o.y += noise.outlier_magnitude * std::sin(theta);
      }
      o.sigma_x = o.sigma_y = apriori;
      sim.observations.push_back(o);
      sim.truth.outlier.push_back(outlier);
      sim.truth.hemisphere.push_back(hemisphere_sign(v.z()));
      sim.truth.incidence.push_back(incidence_angle(v));
    }
  }
  auto rng = stream(noise.seed, 0x5e7);
  std::normal_distribution<double> gauss(0.0, 1.0);
  for (const auto& p : scene.points) {
    ObjectPoint a = p;
    for (int k = 0; k < 3; ++k) a.coords[k] += noise.survey_sigma * gauss(rng);
    sim.approx_targets.push_back(a);
  }
  return sim;
}

}  // namespace spherecal
