#pragma once

// Camera geometry on a spherical image surface.
//
// Conventions used throughout the library:
//   * World to camera: V = R(q) (P - T), where R(q) is the rotation the unit
//     quaternion q applies by q v q*. Eigen's toRotationMatrix() implements
//     exactly that action.
//   * The optical axis is +Z of the camera frame. A target is "in front" when
//     Z_c > 0. Image x runs along +X_c and image y along +Y_c (no inversion).
//   * A corrected image point (x, y) is lifted onto the sphere of radius c as
//     (x, y, z) with z = sgn(Z_c) sqrt(c^2 - x^2 - y^2).

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <string>

namespace spherecal {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Mat3 = Eigen::Matrix3d;
using Quat = Eigen::Quaterniond;

struct CameraPose {
  Quat orientation = Quat::Identity();
  Vec3 position = Vec3::Zero();
};

struct ObjectPoint {
  std::string id;
  Vec3 coords = Vec3::Zero();
};

struct ImageObservation {
  std::string exposure;
  std::string target;
  double x = 0.0;
  double y = 0.0;
  double sigma_x = 1.0;
  double sigma_y = 1.0;
};

struct InteriorOrientation {
  double c = 1.0;   // principal distance, image units
  double xp = 0.0;  // principal point offset
  double yp = 0.0;
};

// Renormalises in place; throws DegenerateInput on a zero quaternion.
void normalize(Quat& q);

// Quaternion for the rotation vector `omega` (axis * angle).
Quat quat_from_rotation_vector(const Vec3& omega);

// Left-multiplicative retraction: exp(omega) * q, renormalised.
Quat retract(const Quat& q, const Vec3& omega);

Vec3 to_camera_frame(const Vec3& point, const CameraPose& pose);

// Angle between the ray V and the optical axis, in [0, pi).
double incidence_angle(const Vec3& v);

// +1 for Z_c >= 0, -1 otherwise.
inline double hemisphere_sign(double zc) { return zc < 0.0 ? -1.0 : 1.0; }

Vec2 corrected_coords(const ImageObservation& obs, const InteriorOrientation& iop,
                      const Vec2& correction);

double sphere_z(double x_true, double y_true, double c, double sign);

double refraction_angle(double x_true, double y_true, double c, double sign);

// Product form of the incidence/refraction angle equality:
//   g = sqrt(Xc^2 + Yc^2) * sgn(Zc) sqrt(c^2 - r^2) - Zc * r,  r = |(x, y)|.
// Zero exactly when the incidence and refraction angles agree. Unlike the
// quotient form it stays finite at 90 degrees incidence.
double collinearity_residual(const Vec3& v, double x_true, double y_true, double c);

// Quotient form as usually printed (tan(alpha) - tan(beta)). Only for
// reporting; undefined at Z_c = 0 or on the equator of the sphere.
double collinearity_residual_quotient(const Vec3& v, double x_true, double y_true,
                                      double c);

// Tangential companion condition h = Xc * y - Yc * x; zero when the image
// point and the ray share an azimuth (or are exactly opposite).
double azimuth_residual(const Vec3& v, double x_true, double y_true);

// Both conditions (g, h) and their partial derivatives with respect to the
// camera-frame vector, the corrected image point and c. Requires the ray and
// the image point off the optical axis and strictly inside the sphere;
// throws DegenerateInput otherwise.
struct ConditionJacobian {
  Vec2 value;                       // (g, h)
  Eigen::Matrix<double, 2, 3> d_v;  // d/d(Xc, Yc, Zc)
  Eigen::Matrix2d d_xt;             // d/d(x_true, y_true)
  Vec2 d_c;                         // d/dc
};
ConditionJacobian condition_jacobian(const Vec3& v, double x_true, double y_true, double c);

// Ideal corrected image point of a ray on the spherical image surface:
// c * (Xc, Yc) / |V|. Satisfies both conditions above by construction.
Vec2 sphere_projection(const Vec3& v, double c);

// Unit bearing of a corrected image point lifted to the sphere.
Vec3 sphere_bearing(double x_true, double y_true, double c, double sign);

Mat3 skew(const Vec3& v);

}  // namespace spherecal
