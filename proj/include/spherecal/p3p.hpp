#pragma once

#include <array>
#include <vector>

#include "spherecal/geometry.hpp"

namespace spherecal {

struct P3PCandidate {
  CameraPose pose;
  double score = 0.0;  // filled by disambiguate(): summed angular error, rad
};

// All real poses consistent with three world points and their unit bearings
// in the camera frame (the camera sees point i along bearings[i]). Follows the
// length-ratio formulation of Gao et al.: a quartic in |PA|/|PC| from the two
// cosine-law conics, then lengths, then the rigid transform by SVD.
// Throws DegenerateInput("degenerate triple") for collinear points and
// DegenerateInput("no valid pose") when no candidate survives.
std::vector<P3PCandidate> p3p_solve(const std::array<Vec3, 3>& points,
                                    const std::array<Vec3, 3>& bearings);

// Angle between a bearing and the direction of `point` seen from `pose`.
double angular_error(const CameraPose& pose, const Vec3& point, const Vec3& bearing);

// Scores every candidate by the summed angular error over the extra
// correspondences and returns the index of the best (smallest index on
// ties). Throws DegenerateInput("initialization failed for exposure") when
// the median angular error of every candidate exceeds `gate_rad`, ConfigError
// without extra correspondences.
std::size_t disambiguate(std::vector<P3PCandidate>& candidates,
                         const std::vector<Vec3>& points, const std::vector<Vec3>& bearings,
                         double gate_rad);

// Real roots of c[0] + c[1] x + ... + c[n] x^n, polished by Newton steps.
std::vector<double> real_polynomial_roots(const std::vector<double>& coeffs);

}  // namespace spherecal
