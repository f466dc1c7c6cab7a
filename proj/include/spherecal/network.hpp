#pragma once

#include <cstddef>
#include <string>
#include <unordered_map>
#include <vector>

#include <Eigen/Core>

#include "spherecal/brown.hpp"
#include "spherecal/geometry.hpp"

namespace spherecal {

// Unknowns of a calibration network.
struct Network {
  std::vector<std::string> exposures;  // id per pose, same order as poses
  std::vector<CameraPose> poses;
  std::vector<ObjectPoint> points;
  InteriorOrientation iop;
  BrownParams brown;
};

// Observation with exposure and point resolved to indices into a Network.
struct ResolvedObservation {
  std::size_t exposure;
  std::size_t point;
};

// Maps every observation onto the network. Throws DataError for unknown ids,
// duplicate (exposure, target) pairs or non-positive sigmas.
std::vector<ResolvedObservation> resolve_observations(
    const Network& net, const std::vector<ImageObservation>& obs);

enum class DatumKind { FreeNetwork, ControlPoints };

struct DatumSpec {
  DatumKind kind = DatumKind::FreeNetwork;
  std::vector<std::string> control_points;  // ControlPoints: held fixed, >= 3
};

// Which calibration quantities are estimated.
struct CalibrationFlags {
  bool c = true;
  bool principal_point = true;
  BrownMask brown;
};

// Column layout of the parameter vector:
//   [pose 0: rotation(3) translation(3)] ... [free points: xyz] [c xp yp] [Brown]
class ParameterLayout {
 public:
  ParameterLayout(const Network& net, const CalibrationFlags& flags, const DatumSpec& datum);

  std::size_t size() const { return size_; }
  std::size_t pose_col(std::size_t j) const { return 6 * j; }
  int point_col(std::size_t i) const { return point_col_[i]; }
  int c_col() const { return c_col_; }
  int xp_col() const { return xp_col_; }
  int yp_col() const { return yp_col_; }
  int brown_col(BrownTerm t) const { return brown_col_[static_cast<int>(t)]; }
  std::size_t calibration_begin() const { return cal_begin_; }
  std::size_t calibration_count() const { return size_ - cal_begin_; }
  std::size_t free_point_count() const { return free_points_; }
  bool free_network() const { return free_network_; }
  // Degrees of freedom removed by the datum (7 for a free network, else 0).
  int datum_rank() const { return free_network_ ? 7 : 0; }

  // Applies an update vector, using the rotation retraction for poses.
  void apply(Network& net, const Eigen::VectorXd& delta) const;

 private:
  std::size_t size_ = 0;
  std::size_t cal_begin_ = 0;
  std::size_t free_points_ = 0;
  bool free_network_ = true;
  std::vector<int> point_col_;
  int c_col_ = -1, xp_col_ = -1, yp_col_ = -1;
  std::array<int, kBrownTermCount> brown_col_{};
};

// Inner constraints (7 x layout.size()) on the free points at their current
// coordinates: centroid shift, mean rotation and mean scale of the
// corrections are zero.
Eigen::MatrixXd inner_constraints(const Network& net, const ParameterLayout& layout);

}  // namespace spherecal
