#include "spherecal/geometry.hpp"

#include <cmath>
#include <limits>

#include "spherecal/errors.hpp"

namespace spherecal {

void normalize(Quat& q) {
  const double n = q.norm();
  if (!(n > 0.0) || !std::isfinite(n)) throw DegenerateInput("zero-norm quaternion");
  q.coeffs() /= n;
}

Quat quat_from_rotation_vector(const Vec3& omega) {
  const double angle = omega.norm();
  if (angle < 1e-12) {
    // second order series keeps the retraction smooth at zero
    Quat q(1.0, 0.5 * omega.x(), 0.5 * omega.y(), 0.5 * omega.z());
    normalize(q);
    return q;
  }
  return Quat(Eigen::AngleAxisd(angle, omega / angle));
}

Quat retract(const Quat& q, const Vec3& omega) {
  Quat out = quat_from_rotation_vector(omega) * q;
  normalize(out);
  return out;
}

Vec3 to_camera_frame(const Vec3& point, const CameraPose& pose) {
  return pose.orientation.toRotationMatrix() * (point - pose.position);
}

double incidence_angle(const Vec3& v) {
  const double rho = std::hypot(v.x(), v.y());
  if (rho == 0.0 && v.z() == 0.0) throw DegenerateInput("degenerate ray");
  return std::atan2(rho, v.z());
}

Vec2 corrected_coords(const ImageObservation& obs, const InteriorOrientation& iop,
                      const Vec2& correction) {
  return {obs.x - iop.xp - correction.x(), obs.y - iop.yp - correction.y()};
}

double sphere_z(double x_true, double y_true, double c, double sign) {
  // (c - r)(c + r) keeps the relative accuracy of r near the equator; a
  // radius a few ulps past c is the equator itself.
  const double r = std::hypot(x_true, y_true);
  const double ac = std::abs(c);
  if (r > ac * (1.0 + 4.0 * std::numeric_limits<double>::epsilon()))
    throw DegenerateInput("observation outside spherical image plane");
  const double radicand = std::max((ac - r) * (ac + r), 0.0);
  return (sign < 0.0 ? -1.0 : 1.0) * std::sqrt(radicand);
}

double refraction_angle(double x_true, double y_true, double c, double sign) {
  const double z = sphere_z(x_true, y_true, c, sign);
  return std::atan2(std::hypot(x_true, y_true), z);
}

double collinearity_residual(const Vec3& v, double x_true, double y_true, double c) {
  const double rho = std::hypot(v.x(), v.y());
  if (rho == 0.0 && v.z() == 0.0) throw DegenerateInput("degenerate ray");
  const double z = sphere_z(x_true, y_true, c, hemisphere_sign(v.z()));
  return rho * z - v.z() * std::hypot(x_true, y_true);
}

double collinearity_residual_quotient(const Vec3& v, double x_true, double y_true,
                                      double c) {
  const double rho = std::hypot(v.x(), v.y());
  const double z = sphere_z(x_true, y_true, c, 1.0);
  return rho / v.z() - std::hypot(x_true, y_true) / (hemisphere_sign(v.z()) * z);
}

double azimuth_residual(const Vec3& v, double x_true, double y_true) {
  return v.x() * y_true - v.y() * x_true;
}

ConditionJacobian condition_jacobian(const Vec3& v, double x_true, double y_true, double c) {
  const double rho = std::hypot(v.x(), v.y());
  const double r = std::hypot(x_true, y_true);
  const double q2 = c * c - r * r;
  if (rho == 0.0 || r == 0.0 || !(q2 > 0.0))
    throw DegenerateInput("condition derivatives undefined on the axis or the equator");
  const double q = std::sqrt(q2);
  const double s = hemisphere_sign(v.z());

  ConditionJacobian j;
  j.value << rho * s * q - v.z() * r, azimuth_residual(v, x_true, y_true);
  j.d_v << s * q * v.x() / rho, s * q * v.y() / rho, -r,  //
      y_true, -x_true, 0.0;
  const double k = -(rho * s / q + v.z() / r);
  j.d_xt << k * x_true, k * y_true,  //
      -v.y(), v.x();
  j.d_c << rho * s * c / q, 0.0;
  return j;
}

Vec2 sphere_projection(const Vec3& v, double c) {
  const double n = v.norm();
  if (n == 0.0) throw DegenerateInput("degenerate ray");
  return {c * v.x() / n, c * v.y() / n};
}

Vec3 sphere_bearing(double x_true, double y_true, double c, double sign) {
  const double z = sphere_z(x_true, y_true, c, sign);
  return Vec3(x_true, y_true, z) / c;
}

Mat3 skew(const Vec3& v) {
  Mat3 m;
  m << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return m;
}

}  // namespace spherecal
