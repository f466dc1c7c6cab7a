#include "spherecal/dogleg.hpp"

#include <algorithm>
#include <cmath>

#include "spherecal/errors.hpp"

namespace spherecal {

Eigen::VectorXd cauchy_point(const Eigen::VectorXd& gradient, const Eigen::MatrixXd& hessian) {
  const double gg = gradient.squaredNorm();
  if (gg == 0.0) return Eigen::VectorXd::Zero(gradient.size());
  const double gHg = gradient.dot(hessian * gradient);
  if (!(gHg > 0.0) || !std::isfinite(gHg))
    throw SolverError(SolverError::Kind::NonFinite, "non-positive curvature along gradient");
  return -(gg / gHg) * gradient;
}

Eigen::VectorXd dogleg_step(const Eigen::VectorXd& gradient, const Eigen::VectorXd& gn,
                            const Eigen::VectorXd& cauchy, double radius) {
  if (!(radius > 0.0)) throw ConfigError("trust radius must be positive");
  if (!gradient.allFinite() || !gn.allFinite() || !cauchy.allFinite() ||
      !std::isfinite(radius))
    throw SolverError(SolverError::Kind::NonFinite, "non-finite dogleg input");

  if (gn.norm() <= radius) return gn;
  const double cn = cauchy.norm();
  if (cn >= radius) {
    const double g = gradient.norm();
    if (g == 0.0) return gn * (radius / gn.norm());
    return -(radius / g) * gradient;
  }
  // |cauchy + t d| = radius, t in [0, 1]
  const Eigen::VectorXd d = gn - cauchy;
  const double a = d.squaredNorm();
  const double b = 2.0 * cauchy.dot(d);
  const double c = cn * cn - radius * radius;  // < 0
  const double disc = std::sqrt(b * b - 4.0 * a * c);
  // numerically stable positive root
  const double t = b >= 0.0 ? (-2.0 * c) / (b + disc) : (-b + disc) / (2.0 * a);
  Eigen::VectorXd step = cauchy + std::clamp(t, 0.0, 1.0) * d;
  const double n = step.norm();
  if (n > radius) step *= radius / n;
  return step;
}

double update_radius(const TrustRegionRule& rule, double ratio, double step_norm,
                     double radius) {
  if (ratio < rule.shrink_below) return rule.shrink_factor * std::min(radius, step_norm);
  if (ratio > rule.grow_above && step_norm >= 0.99 * radius)
    return std::min(rule.grow_factor * radius, rule.max_radius);
  return radius;
}

}  // namespace spherecal
