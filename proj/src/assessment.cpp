#include "spherecal/assessment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <unordered_map>

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include "spherecal/errors.hpp"

namespace spherecal {

Vec3 apply_alignment(const Alignment& a, const Vec3& p) {
  return a.scale * (a.rotation * p) + a.translation;
}

Alignment rigid_align(const std::vector<Vec3>& estimated, const std::vector<Vec3>& truth,
                      bool with_scale) {
  if (estimated.size() != truth.size()) throw DataError("alignment sets differ in size");
  const std::size_t n = estimated.size();
  if (n < 3) throw DegenerateInput("alignment underdetermined");
  Vec3 me = Vec3::Zero(), mt = Vec3::Zero();
  for (std::size_t i = 0; i < n; ++i) {
    me += estimated[i];
    mt += truth[i];
  }
  me /= static_cast<double>(n);
  mt /= static_cast<double>(n);
  Mat3 cov = Mat3::Zero();
  Mat3 spread_e = Mat3::Zero(), spread_t = Mat3::Zero();
  double var_e = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    const Vec3 de = estimated[i] - me, dt = truth[i] - mt;
    cov += dt * de.transpose();
    spread_e += de * de.transpose();
    spread_t += dt * dt.transpose();
    var_e += de.squaredNorm();
  }
  // Collinear (or coincident) points leave a rotation about the line free.
  for (const Mat3* s : {&spread_e, &spread_t}) {
    const Eigen::SelfAdjointEigenSolver<Mat3> es(*s);
    const Vec3 ev = es.eigenvalues();
    if (!(ev(1) > 1e-12 * std::max(ev(2), 1e-300))) throw DegenerateInput("alignment underdetermined");
  }

  const Eigen::JacobiSVD<Mat3> svd(cov, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  Alignment a;
  a.rotation = svd.matrixU() * d * svd.matrixV().transpose();
  if (with_scale) a.scale = (svd.singularValues().asDiagonal() * d).trace() / var_e;
  a.translation = mt - a.scale * (a.rotation * me);
  double ss = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    ss += (apply_alignment(a, estimated[i]) - truth[i]).squaredNorm();
  a.rms_residual = std::sqrt(ss / static_cast<double>(n));
  return a;
}

Rmse rmse_xyz(const std::vector<Vec3>& aligned, const std::vector<Vec3>& truth) {
  if (aligned.empty()) throw DataError("RMSE of an empty point set");
  if (aligned.size() != truth.size()) throw DataError("RMSE sets differ in size");
  Vec3 ss = Vec3::Zero();
  for (std::size_t i = 0; i < aligned.size(); ++i)
    ss += (aligned[i] - truth[i]).cwiseAbs2();
  ss /= static_cast<double>(aligned.size());
  Rmse r;
  r.x = 1000.0 * std::sqrt(ss.x());
  r.y = 1000.0 * std::sqrt(ss.y());
  r.z = 1000.0 * std::sqrt(ss.z());
  r.total = 1000.0 * std::sqrt(ss.sum());
  return r;
}

namespace {

Line ols(const std::vector<double>& r, const std::vector<double>& v) {
  const double n = static_cast<double>(r.size());
  double mr = 0.0, mv = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    mr += r[i];
    mv += v[i];
  }
  mr /= n;
  mv /= n;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) {
    sxx += (r[i] - mr) * (r[i] - mr);
    sxy += (r[i] - mr) * (v[i] - mv);
  }
  Line l;
  l.slope = sxy / sxx;
  l.intercept = mv - l.slope * mr;
  return l;
}

}  // namespace

RadialTrend radial_trend(const std::vector<Vec2>& residuals, const std::vector<double>& radius) {
  if (residuals.size() != radius.size()) throw DataError("trend inputs differ in size");
  if (radius.size() < 2 ||
      std::all_of(radius.begin(), radius.end(), [&](double r) { return r == radius[0]; }))
    throw DegenerateInput("radial trend needs two distinct radii");
  std::vector<double> vx(residuals.size()), vy(residuals.size());
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    vx[i] = residuals[i].x();
    vy[i] = residuals[i].y();
  }
  return {ols(radius, vx), ols(radius, vy)};
}

Histogram residual_histogram(const std::vector<double>& values, double bin_width) {
  if (!(bin_width > 0.0)) throw ConfigError("histogram bin width must be positive");
  Histogram h;
  h.bin_width = bin_width;
  h.n = values.size();
  if (values.empty()) return h;
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  const double first = std::floor(*lo / bin_width);
  const double last = std::floor(*hi / bin_width);
  h.origin = first * bin_width;
  h.counts.assign(static_cast<std::size_t>(last - first) + 1, 0);
  double sum = 0.0;
  for (double v : values) {
    const auto bin = static_cast<std::size_t>(std::floor(v / bin_width) - first);
    ++h.counts[std::min(bin, h.counts.size() - 1)];
    sum += v;
  }
  const double n = static_cast<double>(values.size());
  h.mean = sum / n;
  double m2 = 0.0, m3 = 0.0;
  for (double v : values) {
    const double d = v - h.mean;
    m2 += d * d;
    m3 += d * d * d;
  }
  m2 /= n;
  m3 /= n;
  h.stddev = std::sqrt(m2);
  h.skewness = m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0;
  return h;
}

AssessmentReport assess(const AssessmentInput& in, const std::vector<ObjectPoint>& truth,
                        const AssessmentConfig& cfg) {
  if (in.residuals.size() != in.observations.size())
    throw DataError("residual count does not match observation count");
  std::unordered_map<std::string, const Vec3*> by_id;
  for (const auto& p : truth) by_id[p.id] = &p.coords;
  std::vector<Vec3> est, tru;
  std::string missing;
  for (const auto& p : in.estimated) {
    const auto it = by_id.find(p.id);
    if (it == by_id.end()) {
      missing += (missing.empty() ? "" : ", ") + p.id;
      continue;
    }
    est.push_back(p.coords);
    tru.push_back(*it->second);
  }
  if (!missing.empty()) throw DataError("targets missing from truth: " + missing);

  AssessmentReport rep;
  rep.label = in.label;
  rep.cost = in.cost;
  rep.variance_factor = in.variance_factor;
  rep.points = est.size();
  rep.alignment = rigid_align(est, tru, cfg.with_scale);
  for (auto& p : est) p = apply_alignment(rep.alignment, p);
  rep.rmse = rmse_xyz(est, tru);

  std::vector<double> vx, vy, radius;
  for (std::size_t k = 0; k < in.observations.size(); ++k) {
    vx.push_back(in.residuals[k].x());
    vy.push_back(in.residuals[k].y());
    radius.push_back(std::hypot(in.observations[k].x - in.iop.xp, in.observations[k].y - in.iop.yp));
  }
  rep.hist_x = residual_histogram(vx, cfg.bin_width);
  rep.hist_y = residual_histogram(vy, cfg.bin_width);
  if (radius.size() >= 2) rep.trend = radial_trend(in.residuals, radius);
  return rep;
}

void write_table(std::ostream& out, const std::vector<AssessmentReport>& rows) {
  std::size_t w = 5;
  for (const auto& r : rows) w = std::max(w, r.label.size());
  char buf[256];
  std::snprintf(buf, sizeof buf, "%-*s  %17s  %6s %6s %6s %6s\n", static_cast<int>(w), "Model",
                "Image space error", "X", "Y", "Z", "3D");
  out << buf;
  std::snprintf(buf, sizeof buf, "%-*s  %17s  %27s\n", static_cast<int>(w), "", "",
                "RMSE [mm]");
  out << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%-*s  %17.1E  %6.1f %6.1f %6.1f %6.1f\n",
                  static_cast<int>(w), r.label.c_str(), r.cost, r.rmse.x, r.rmse.y, r.rmse.z,
                  r.rmse.total);
    out << buf;
  }
}

void write_table_csv(std::ostream& out, const std::vector<AssessmentReport>& rows) {
  out << "model;cost;variance_factor;rmse_x_mm;rmse_y_mm;rmse_z_mm;rmse_3d_mm;points;"
         "trend_x_slope;trend_x_intercept;trend_y_slope;trend_y_intercept;"
         "skew_x;skew_y\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf,
                  "%s;%.17g;%.17g;%.17g;%.17g;%.17g;%.17g;%zu;%.17g;%.17g;%.17g;%.17g;%.17g;%.17g\n",
                  r.label.c_str(), r.cost, r.variance_factor, r.rmse.x, r.rmse.y, r.rmse.z,
                  r.rmse.total, r.points, r.trend.x.slope, r.trend.x.intercept, r.trend.y.slope,
                  r.trend.y.intercept, r.hist_x.skewness, r.hist_y.skewness);
    out << buf;
  }
}

void write_histogram(std::ostream& out, const Histogram& h) {
  char buf[128];
  std::snprintf(buf, sizeof buf, "# n=%zu mean=%.17g stddev=%.17g skewness=%.17g\n", h.n, h.mean,
                h.stddev, h.skewness);
  out << buf << "# bin_centre count\n";
  for (std::size_t i = 0; i < h.counts.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g %zu\n",
                  h.origin + (static_cast<double>(i) + 0.5) * h.bin_width, h.counts[i]);
    out << buf;
  }
}

void write_residual_radius(std::ostream& out, const std::vector<Vec2>& residuals,
                           const std::vector<double>& radius, int coordinate) {
  char buf[128];
  out << "# radius residual_" << (coordinate == 0 ? 'x' : 'y') << '\n';
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g %.17g\n", radius[i], residuals[i][coordinate]);
    out << buf;
  }
}

}  // namespace spherecal
