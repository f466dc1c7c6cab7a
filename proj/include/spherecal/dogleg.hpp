#pragma once

#include <Eigen/Core>

namespace spherecal {

// Minimiser of the quadratic model along -gradient:
// -(g'g / g'Hg) g, or a zero vector for a zero gradient. Throws SolverError
// (NonFinite) if the curvature along g is not positive.
Eigen::VectorXd cauchy_point(const Eigen::VectorXd& gradient, const Eigen::MatrixXd& hessian);

// Dogleg step inside a trust region of radius `radius`:
//   |gn| <= radius     -> gn
//   |cauchy| >= radius -> -radius * gradient / |gradient|
//   otherwise          -> the point on cauchy -> gn at distance radius.
// Throws SolverError (NonFinite) on non-finite input, ConfigError on radius <= 0.
Eigen::VectorXd dogleg_step(const Eigen::VectorXd& gradient, const Eigen::VectorXd& gn,
                            const Eigen::VectorXd& cauchy, double radius);

struct TrustRegionRule {
  double shrink_below = 0.25;
  double shrink_factor = 0.25;
  double grow_above = 0.75;
  double grow_factor = 2.0;
  double max_radius = 1e6;
};

// Radius after a step with gain ratio `ratio` and norm `step_norm`. Growth
// only applies when the step reached the boundary.
double update_radius(const TrustRegionRule& rule, double ratio, double step_norm,
                     double radius);

}  // namespace spherecal
