#include "spherecal/network.hpp"

#include <set>
#include <utility>

#include "spherecal/errors.hpp"

namespace spherecal {

std::vector<ResolvedObservation> resolve_observations(
    const Network& net, const std::vector<ImageObservation>& obs) {
  std::unordered_map<std::string, std::size_t> exp_index, pt_index;
  for (std::size_t j = 0; j < net.exposures.size(); ++j) exp_index.emplace(net.exposures[j], j);
  for (std::size_t i = 0; i < net.points.size(); ++i) pt_index.emplace(net.points[i].id, i);

  std::vector<ResolvedObservation> out;
  out.reserve(obs.size());
  std::set<std::pair<std::size_t, std::size_t>> seen;
  for (const auto& o : obs) {
    const auto e = exp_index.find(o.exposure);
    if (e == exp_index.end()) throw DataError("observation references unknown exposure " + o.exposure);
    const auto p = pt_index.find(o.target);
    if (p == pt_index.end()) throw DataError("observation references unknown target " + o.target);
    if (!(o.sigma_x > 0.0) || !(o.sigma_y > 0.0))
      throw DataError("non-positive sigma for " + o.exposure + "/" + o.target);
    if (!seen.emplace(e->second, p->second).second)
      throw DataError("duplicate observation " + o.exposure + "/" + o.target);
    out.push_back({e->second, p->second});
  }
  return out;
}

ParameterLayout::ParameterLayout(const Network& net, const CalibrationFlags& flags,
                                 const DatumSpec& datum) {
  free_network_ = datum.kind == DatumKind::FreeNetwork;
  std::set<std::string> fixed;
  if (!free_network_) {
    fixed.insert(datum.control_points.begin(), datum.control_points.end());
    if (fixed.size() < 3) throw ConfigError("control-point datum needs at least 3 points");
    std::size_t found = 0;
    for (const auto& p : net.points) found += fixed.count(p.id);
    if (found != fixed.size()) throw ConfigError("control point not present in the network");
  }
  std::size_t col = 6 * net.poses.size();
  point_col_.assign(net.points.size(), -1);
  for (std::size_t i = 0; i < net.points.size(); ++i) {
    if (fixed.count(net.points[i].id)) continue;
    point_col_[i] = static_cast<int>(col);
    col += 3;
    ++free_points_;
  }
  cal_begin_ = col;
  if (flags.c) c_col_ = static_cast<int>(col++);
  if (flags.principal_point) {
    xp_col_ = static_cast<int>(col++);
    yp_col_ = static_cast<int>(col++);
  }
  brown_col_.fill(-1);
  for (int t = 0; t < kBrownTermCount; ++t)
    if (flags.brown.active(static_cast<BrownTerm>(t))) brown_col_[t] = static_cast<int>(col++);
  size_ = col;
}

void ParameterLayout::apply(Network& net, const Eigen::VectorXd& d) const {
  for (std::size_t j = 0; j < net.poses.size(); ++j) {
    const std::size_t k = pose_col(j);
    auto& pose = net.poses[j];
    pose.orientation = retract(pose.orientation, d.segment<3>(k));
    pose.position += d.segment<3>(k + 3);
  }
  for (std::size_t i = 0; i < net.points.size(); ++i)
    if (point_col_[i] >= 0) net.points[i].coords += d.segment<3>(point_col_[i]);
  if (c_col_ >= 0) net.iop.c += d[c_col_];
  if (xp_col_ >= 0) net.iop.xp += d[xp_col_];
  if (yp_col_ >= 0) net.iop.yp += d[yp_col_];
  for (int t = 0; t < kBrownTermCount; ++t)
    if (brown_col_[t] >= 0) net.brown.value[t] += d[brown_col_[t]];
}

Eigen::MatrixXd inner_constraints(const Network& net, const ParameterLayout& layout) {
  Eigen::MatrixXd c = Eigen::MatrixXd::Zero(7, layout.size());
  Vec3 centroid = Vec3::Zero();
  std::size_t n = 0;
  for (std::size_t i = 0; i < net.points.size(); ++i)
    if (layout.point_col(i) >= 0) {
      centroid += net.points[i].coords;
      ++n;
    }
  if (n == 0) return c;
  centroid /= static_cast<double>(n);
  for (std::size_t i = 0; i < net.points.size(); ++i) {
    const int col = layout.point_col(i);
    if (col < 0) continue;
    const Vec3 d = net.points[i].coords - centroid;
    c.block<3, 3>(0, col).setIdentity();
    c.block<3, 3>(3, col) = skew(d);
    c.block<1, 3>(6, col) = d.transpose();
  }
  return c;
}

}  // namespace spherecal
