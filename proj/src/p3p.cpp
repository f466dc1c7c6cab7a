#include "spherecal/p3p.hpp"

#include <algorithm>
#include <cmath>

#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/SVD>

#include "spherecal/errors.hpp"

namespace spherecal {

namespace {

using Poly = std::vector<double>;  // ascending powers

Poly mul(const Poly& a, const Poly& b) {
  Poly r(a.size() + b.size() - 1, 0.0);
  for (std::size_t i = 0; i < a.size(); ++i)
    for (std::size_t j = 0; j < b.size(); ++j) r[i + j] += a[i] * b[j];
  return r;
}

Poly sub(const Poly& a, const Poly& b) {
  Poly r(std::max(a.size(), b.size()), 0.0);
  for (std::size_t i = 0; i < a.size(); ++i) r[i] += a[i];
  for (std::size_t i = 0; i < b.size(); ++i) r[i] -= b[i];
  return r;
}

double horner(const Poly& p, double x, double* deriv) {
  double v = 0.0, d = 0.0;
  for (std::size_t i = p.size(); i-- > 0;) {
    d = d * x + v;
    v = v * x + p[i];
  }
  if (deriv) *deriv = d;
  return v;
}

// Rigid transform with Q_i = R (P_i - T) from three exact pairs.
CameraPose align_triplet(const std::array<Vec3, 3>& p, const std::array<Vec3, 3>& q) {
  const Vec3 pc = (p[0] + p[1] + p[2]) / 3.0;
  const Vec3 qc = (q[0] + q[1] + q[2]) / 3.0;
  Mat3 h = Mat3::Zero();
  for (int i = 0; i < 3; ++i) h += (q[i] - qc) * (p[i] - pc).transpose();
  const Eigen::JacobiSVD<Mat3> svd(h, Eigen::ComputeFullU | Eigen::ComputeFullV);
  Mat3 d = Mat3::Identity();
  if ((svd.matrixU() * svd.matrixV().transpose()).determinant() < 0.0) d(2, 2) = -1.0;
  const Mat3 r = svd.matrixU() * d * svd.matrixV().transpose();
  CameraPose pose;
  pose.orientation = Quat(r);
  normalize(pose.orientation);
  pose.position = pc - r.transpose() * qc;
  return pose;
}

}  // namespace

std::vector<double> real_polynomial_roots(const std::vector<double>& coeffs) {
  Poly p = coeffs;
  double scale = 0.0;
  for (double c : p) scale = std::max(scale, std::abs(c));
  if (scale == 0.0) return {};
  while (!p.empty() && std::abs(p.back()) <= 1e-14 * scale) p.pop_back();
  if (p.size() < 2) return {};
  const auto n = static_cast<Eigen::Index>(p.size() - 1);
  Eigen::MatrixXd comp = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index i = 1; i < n; ++i) comp(i, i - 1) = 1.0;
  for (Eigen::Index i = 0; i < n; ++i) comp(i, n - 1) = -p[i] / p[n];
  const Eigen::EigenSolver<Eigen::MatrixXd> es(comp, false);
  std::vector<double> roots;
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto z = es.eigenvalues()[i];
    if (std::abs(z.imag()) > 1e-6 * (1.0 + std::abs(z.real()))) continue;
    double x = z.real();
    for (int it = 0; it < 8; ++it) {
      double d;
      const double v = horner(p, x, &d);
      if (d == 0.0) break;
      const double dx = v / d;
      x -= dx;
      if (std::abs(dx) <= 1e-16 * (1.0 + std::abs(x))) break;
    }
    roots.push_back(x);
  }
  std::sort(roots.begin(), roots.end());
  return roots;
}

std::vector<P3PCandidate> p3p_solve(const std::array<Vec3, 3>& pts,
                                    const std::array<Vec3, 3>& bearings) {
  // A = pts[0], B = pts[1], C = pts[2]
  const double ab2 = (pts[0] - pts[1]).squaredNorm();
  const double bc2 = (pts[1] - pts[2]).squaredNorm();
  const double ac2 = (pts[0] - pts[2]).squaredNorm();
  const double span = std::max({ab2, bc2, ac2});
  if (!(span > 0.0) || (pts[1] - pts[0]).cross(pts[2] - pts[0]).norm() <= 1e-10 * span)
    throw DegenerateInput("degenerate triple");

  std::array<Vec3, 3> f;
  for (int i = 0; i < 3; ++i) {
    const double n = bearings[i].norm();
    if (!(n > 0.0)) throw DegenerateInput("degenerate triple");
    f[i] = bearings[i] / n;
  }
  const double cab = f[0].dot(f[1]), cbc = f[1].dot(f[2]), cac = f[0].dot(f[2]);
  const double p = 2.0 * cbc, q = 2.0 * cac, r = 2.0 * cab;
  const double a = bc2 / ab2, b = ac2 / ab2;

  // conics in y with coefficients polynomial in x
  const Poly A1{1.0 - a}, B1{-p, a * r}, C1{1.0, 0.0, -a};
  const Poly A2{-b}, B2{0.0, b * r}, C2{1.0, -q, 1.0 - b};
  const Poly t1 = sub(mul(A1, C2), mul(A2, C1));
  const Poly t2 = sub(mul(A1, B2), mul(A2, B1));
  const Poly t3 = sub(mul(B1, C2), mul(B2, C1));
  const Poly res = sub(mul(t1, t1), mul(t2, t3));

  auto e1 = [&](double x, double y) {
    return (1.0 - a) * y * y - a * x * x - p * y + a * r * x * y + 1.0;
  };
  auto e2 = [&](double x, double y) {
    return (1.0 - b) * x * x - b * y * y - q * x + b * r * x * y + 1.0;
  };

  std::vector<P3PCandidate> out;
  for (double x : real_polynomial_roots(res)) {
    if (!(x > 0.0)) continue;
    std::vector<double> ys;
    const double den = horner(A2, x, nullptr) * horner(B1, x, nullptr) -
                       horner(A1, x, nullptr) * horner(B2, x, nullptr);
    const double num = horner(A1, x, nullptr) * horner(C2, x, nullptr) -
                       horner(A2, x, nullptr) * horner(C1, x, nullptr);
    if (std::abs(den) > 1e-10 * (std::abs(num) + 1.0)) {
      ys.push_back(num / den);
    } else {
      // the linear elimination degenerates: take both roots of the first conic
      const double qa = 1.0 - a, qb = a * r * x - p, qc = 1.0 - a * x * x;
      if (std::abs(qa) < 1e-14) {
        if (std::abs(qb) > 0.0) ys.push_back(-qc / qb);
      } else {
        const double disc = qb * qb - 4.0 * qa * qc;
        if (disc >= 0.0) {
          const double sq = std::sqrt(disc);
          ys.push_back((-qb + sq) / (2.0 * qa));
          ys.push_back((-qb - sq) / (2.0 * qa));
        }
      }
    }
    for (double y : ys) {
      double xx = x;
      for (int it = 0; it < 10; ++it) {
        const Vec2 fv(e1(xx, y), e2(xx, y));
        Eigen::Matrix2d j;
        j << -2.0 * a * xx + a * r * y, 2.0 * (1.0 - a) * y - p + a * r * xx,
            2.0 * (1.0 - b) * xx - q + b * r * y, -2.0 * b * y + b * r * xx;
        if (std::abs(j.determinant()) < 1e-300) break;
        const Vec2 d = j.partialPivLu().solve(fv);
        xx -= d.x();
        y -= d.y();
        if (d.norm() < 1e-16 * (1.0 + std::abs(xx) + std::abs(y))) break;
      }
      if (!(xx > 0.0) || !(y > 0.0)) continue;
      if (std::abs(e1(xx, y)) > 1e-8 || std::abs(e2(xx, y)) > 1e-8) continue;
      const double den2 = xx * xx + y * y - xx * y * r;
      if (!(den2 > 0.0)) continue;
      const double zc = std::sqrt(ab2 / den2);
      Vec3 d(xx * zc, y * zc, zc);

      // polish the three lengths on the cosine laws directly
      const std::array<std::pair<int, int>, 3> pairs{{{0, 1}, {1, 2}, {0, 2}}};
      const std::array<double, 3> cosv{cab, cbc, cac};
      const std::array<double, 3> dist2{ab2, bc2, ac2};
      for (int it = 0; it < 5; ++it) {
        Vec3 fv;
        Mat3 j = Mat3::Zero();
        for (int k = 0; k < 3; ++k) {
          const int i0 = pairs[k].first, i1 = pairs[k].second;
          fv[k] = d[i0] * d[i0] + d[i1] * d[i1] - 2.0 * d[i0] * d[i1] * cosv[k] - dist2[k];
          j(k, i0) = 2.0 * d[i0] - 2.0 * d[i1] * cosv[k];
          j(k, i1) = 2.0 * d[i1] - 2.0 * d[i0] * cosv[k];
        }
        const Eigen::FullPivLU<Mat3> lu(j);
        if (!lu.isInvertible()) break;
        const Vec3 step = lu.solve(fv);
        if (!step.allFinite()) break;
        d -= step;
        if (step.norm() < 1e-16 * d.norm()) break;
      }
      if (!(d.minCoeff() > 0.0)) continue;

      std::array<Vec3, 3> cam;
      for (int i = 0; i < 3; ++i) cam[i] = d[i] * f[i];
      P3PCandidate cand;
      cand.pose = align_triplet(pts, cam);
      bool dup = false;
      for (const auto& o : out)
        if (o.pose.orientation.angularDistance(cand.pose.orientation) < 1e-9 &&
            (o.pose.position - cand.pose.position).norm() < 1e-9 * (1.0 + std::sqrt(span)))
          dup = true;
      if (!dup) out.push_back(cand);
    }
  }
  if (out.empty()) throw DegenerateInput("no valid pose");
  return out;
}

double angular_error(const CameraPose& pose, const Vec3& point, const Vec3& bearing) {
  const Vec3 v = to_camera_frame(point, pose);
  return std::atan2(v.cross(bearing).norm(), v.dot(bearing));
}

std::size_t disambiguate(std::vector<P3PCandidate>& candidates,
                         const std::vector<Vec3>& points, const std::vector<Vec3>& bearings,
                         double gate_rad) {
  if (points.empty() || points.size() != bearings.size())
    throw ConfigError("disambiguation needs at least one extra correspondence");
  if (candidates.empty()) throw DegenerateInput("no valid pose");
  std::size_t best = 0;
  bool any = false;
  std::vector<double> errs(points.size());
  for (std::size_t c = 0; c < candidates.size(); ++c) {
    double sum = 0.0;
    for (std::size_t i = 0; i < points.size(); ++i) {
      errs[i] = angular_error(candidates[c].pose, points[i], bearings[i]);
      sum += errs[i];
    }
    candidates[c].score = sum;
    auto mid = errs.begin() + static_cast<std::ptrdiff_t>(errs.size() / 2);
    std::nth_element(errs.begin(), mid, errs.end());
    if (*mid > gate_rad) continue;
    if (!any || sum < candidates[best].score) best = c;
    any = true;
  }
  if (!any) throw DegenerateInput("initialization failed for exposure");
  return best;
}

}  // namespace spherecal
