#pragma once

#include <array>
#include <cstddef>
#include <iosfwd>
#include <vector>

#include <Eigen/Core>

#include "spherecal/dogleg.hpp"
#include "spherecal/network.hpp"
#include "spherecal/robust.hpp"

namespace spherecal {

struct AdjustmentConfig {
  int max_iterations = 200;
  double cost_tolerance = 1e-10;  // relative decrease of the objective
  double step_tolerance = 1e-8;   // |delta| relative to |parameters|
  int converged_iterations = 2;   // consecutive iterations meeting both
  double initial_radius = 1e3;    // in Jacobi-scaled parameter units
  double min_radius = 1e-14;
  double accept_ratio = 1e-4;
  TrustRegionRule trust;
  double huber_k = kHuberDefault;
  bool robust = true;  // false forces all Huber weights to one
  CalibrationFlags estimate;
  DatumSpec datum;
};

struct IterationRecord {
  int iteration = 0;
  double cost = 0.0;  // robust objective after the iteration
  double radius = 0.0;
  double max_step = 0.0;  // max |delta| over unscaled parameters
  bool accepted = false;
};

struct AdjustmentResult {
  Network network;
  std::vector<Vec2> residuals;  // v = adjusted - observed, per observation
  std::vector<double> weights;  // Huber weight per observation
  std::vector<double> standardized;  // sqrt(v'Pv / 2) per observation
  double cost = 0.0;        // Huber-weighted sum of v'Pv
  double raw_cost = 0.0;    // unweighted sum of v'Pv
  double objective = 0.0;   // robust objective that the solver minimises
  double variance_factor = 0.0;
  long redundancy = 0;
  int iterations = 0;
  bool converged = false;
  std::vector<IterationRecord> trace;
  // A-posteriori standard deviations (0 when not estimated).
  double sigma_c = 0.0, sigma_xp = 0.0, sigma_yp = 0.0;
  std::array<double, kBrownTermCount> sigma_brown{};
  // Observations whose corrected point lies outside the image sphere.
  std::vector<std::size_t> outside_sphere;
};

// Adjusted observation predicted by the model: x^ = xp + u with
// u - brown(u) = c (Xc, Yc) / |V| + fixed correction. Returns false if the
// Brown inversion does not converge.
bool predict_observation(const Network& net, const ResolvedObservation& ro,
                         const ImageObservation& obs, const Vec2& fixed_correction,
                         Vec2& predicted);

// Per-observation linearisation of the two condition equations in the scaled
// form used by the solver: radial  u . x_true - c rho / |V|  and tangential
// t . x_true, with u the unit azimuth of (Xc, Yc) and t its left normal.
// At the predicted observation these rows equal the product-form condition
// and the azimuth condition each divided by the norm of its observation
// gradient, and they stay finite at 90 degrees incidence.
struct ObservationLinearization {
  Vec2 predicted = Vec2::Zero();   // adjusted observation L^
  Eigen::Matrix2d b;               // d(conditions)/d(x, y)
  Eigen::Matrix<double, 2, 6> pose;   // rotation(3) translation(3)
  Eigen::Matrix<double, 2, 3> point;
  Eigen::Matrix<double, 2, 3> iop;    // c xp yp
  Eigen::Matrix<double, 2, kBrownTermCount> brown;
  Vec2 misclosure = Vec2::Zero();  // w = B (L_obs - L^)
};

ObservationLinearization linearize_observation(const Network& net,
                                               const ResolvedObservation& ro,
                                               const ImageObservation& obs,
                                               const Vec2& fixed_correction);

// Scaled conditions evaluated at an arbitrary observation value (x, y). Zero at
// the predicted observation; used to check the analytic rows above.
Vec2 scaled_conditions(const Network& net, const ResolvedObservation& ro,
                       const Vec2& observation, const Vec2& fixed_correction);

// Gauss-Helmert adjustment with Huber IRLS and a dogleg trust region.
// `fixed_corrections` is empty or holds one correction per observation.
// Throws SolverError on datum deficiency, lack of progress or non-finite
// values, DataError on inconsistent input.
AdjustmentResult solve(const Network& initial, const std::vector<ImageObservation>& obs,
                       const std::vector<Vec2>& fixed_corrections,
                       const AdjustmentConfig& config);

void write_trace(std::ostream& out, const std::vector<IterationRecord>& trace);

}  // namespace spherecal
