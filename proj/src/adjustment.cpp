#include "spherecal/adjustment.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/LU>
#include <Eigen/QR>

#include "spherecal/errors.hpp"

namespace spherecal {

namespace {

// Unit azimuth of (Xc, Yc); an arbitrary fixed direction on the optical axis.
Vec2 azimuth(const Vec3& v, double& rho) {
  rho = std::hypot(v.x(), v.y());
  if (rho > 0.0) return Vec2(v.x() / rho, v.y() / rho);
  return Vec2(1.0, 0.0);
}

Vec2 correction_at(const std::vector<Vec2>& fixed, std::size_t k) {
  return fixed.empty() ? Vec2::Zero() : fixed[k];
}

struct Evaluation {
  bool ok = true;
  double objective = 0.0;
  double cost = 0.0;
  double raw_cost = 0.0;
  std::vector<Vec2> predicted;
  std::vector<double> standardized;
  std::vector<double> weights;
};

Evaluation evaluate(const Network& net, const std::vector<ResolvedObservation>& ro,
                    const std::vector<ImageObservation>& obs, const std::vector<Vec2>& fixed,
                    const AdjustmentConfig& cfg) {
  Evaluation ev;
  ev.predicted.resize(obs.size());
  ev.standardized.resize(obs.size());
  ev.weights.resize(obs.size());
  for (std::size_t k = 0; k < obs.size(); ++k) {
    Vec2 pred;
    if (!predict_observation(net, ro[k], obs[k], correction_at(fixed, k), pred) ||
        !pred.allFinite()) {
      ev.ok = false;
      ev.objective = std::numeric_limits<double>::infinity();
      return ev;
    }
    const double ex = (obs[k].x - pred.x()) / obs[k].sigma_x;
    const double ey = (obs[k].y - pred.y()) / obs[k].sigma_y;
    const double vpv = ex * ex + ey * ey;
    const double r = std::sqrt(0.5 * vpv);
    const double w = cfg.robust ? huber_weight(r, cfg.huber_k) : 1.0;
    ev.predicted[k] = pred;
    ev.standardized[k] = r;
    ev.weights[k] = w;
    ev.raw_cost += vpv;
    ev.cost += w * vpv;
    ev.objective += cfg.robust ? 2.0 * huber_loss(r, cfg.huber_k) : vpv;
  }
  if (!std::isfinite(ev.objective)) ev.ok = false;
  return ev;
}

// Normal equations N delta = b of the weighted, linearised problem.
struct NormalSystem {
  Eigen::MatrixXd n;
  Eigen::VectorXd b;
};

NormalSystem assemble(const Network& net, const ParameterLayout& layout,
                      const std::vector<ResolvedObservation>& ro,
                      const std::vector<ImageObservation>& obs, const std::vector<Vec2>& fixed,
                      const std::vector<double>& weights) {
  const auto n = static_cast<Eigen::Index>(layout.size());
  NormalSystem sys{Eigen::MatrixXd::Zero(n, n), Eigen::VectorXd::Zero(n)};
  std::vector<int> cols;
  Eigen::Matrix<double, 2, Eigen::Dynamic> j(2, 24);
  for (std::size_t k = 0; k < obs.size(); ++k) {
    const auto lin = linearize_observation(net, ro[k], obs[k], correction_at(fixed, k));
    Eigen::Matrix2d sigma = Eigen::Matrix2d::Zero();
    sigma(0, 0) = obs[k].sigma_x * obs[k].sigma_x;
    sigma(1, 1) = obs[k].sigma_y * obs[k].sigma_y;
    const Eigen::Matrix2d m = lin.b * sigma * lin.b.transpose();
    Eigen::Matrix2d minv;
    if (std::abs(m.determinant()) > 1e-300 * (1.0 + m.squaredNorm()))
      minv = m.inverse();
    else
      minv = m.completeOrthogonalDecomposition().pseudoInverse();
    const Eigen::Matrix2d w = weights[k] * minv;

    cols.clear();
    int m_cols = 0;
    auto push = [&](int col, const Vec2& v) {
      if (col < 0) return;
      cols.push_back(col);
      j.col(m_cols++) = v;
    };
    const std::size_t pc = layout.pose_col(ro[k].exposure);
    for (int a = 0; a < 6; ++a) push(static_cast<int>(pc) + a, lin.pose.col(a));
    const int ptc = layout.point_col(ro[k].point);
    if (ptc >= 0)
      for (int a = 0; a < 3; ++a) push(ptc + a, lin.point.col(a));
    push(layout.c_col(), lin.iop.col(0));
    push(layout.xp_col(), lin.iop.col(1));
    push(layout.yp_col(), lin.iop.col(2));
    for (int t = 0; t < kBrownTermCount; ++t)
      push(layout.brown_col(static_cast<BrownTerm>(t)), lin.brown.col(t));

    const auto jm = j.leftCols(m_cols);
    const Eigen::MatrixXd jtw = jm.transpose() * w;
    const Eigen::MatrixXd block = jtw * jm;
    const Eigen::VectorXd rhs = -jtw * lin.misclosure;
    for (int a = 0; a < m_cols; ++a) {
      sys.b[cols[a]] += rhs[a];
      for (int c = 0; c < m_cols; ++c) sys.n(cols[a], cols[c]) += block(a, c);
    }
  }
  return sys;
}

// Jacobi-scaled system with the datum penalty folded in.
struct ScaledSystem {
  Eigen::VectorXd d;       // scaling, delta = step / d
  Eigen::MatrixXd ns;      // D^-1 N D^-1
  Eigen::VectorXd bs;      // D^-1 b
  Eigen::MatrixXd cs;      // datum rows in scaled space (may be empty)
  Eigen::LLT<Eigen::MatrixXd> factor;  // of ns + cs' cs
};

ScaledSystem scale_and_factor(const NormalSystem& sys, const Network& net,
                              const ParameterLayout& layout) {
  ScaledSystem s;
  const Eigen::Index n = sys.n.rows();
  s.d.resize(n);
  double dmax = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) dmax = std::max(dmax, sys.n(i, i));
  for (Eigen::Index i = 0; i < n; ++i) {
    const double v = sys.n(i, i);
    s.d[i] = v > 1e-300 ? std::sqrt(v) : 1.0;
  }
  const Eigen::VectorXd dinv = s.d.cwiseInverse();
  s.ns = dinv.asDiagonal() * sys.n * dinv.asDiagonal();
  s.bs = dinv.cwiseProduct(sys.b);
  Eigen::MatrixXd k = s.ns;
  if (layout.free_network()) {
    s.cs = inner_constraints(net, layout) * dinv.asDiagonal();
    for (Eigen::Index r = 0; r < s.cs.rows(); ++r) {
      const double nr = s.cs.row(r).norm();
      if (nr > 0.0) s.cs.row(r) /= nr;
    }
    k.noalias() += s.cs.transpose() * s.cs;
  }
  s.factor.compute(k);
  bool singular = s.factor.info() != Eigen::Success;
  if (!singular) {
    const Eigen::VectorXd diag = s.factor.matrixLLT().diagonal();
    singular = diag.minCoeff() < 1e-7 * diag.maxCoeff();
  }
  if (singular) {
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(k, Eigen::EigenvaluesOnly);
    const double top = eig.eigenvalues().cwiseAbs().maxCoeff();
    long nullity = 0;
    for (Eigen::Index i = 0; i < n; ++i)
      if (eig.eigenvalues()[i] < 1e-12 * top) ++nullity;
    throw SolverError(SolverError::Kind::DatumDeficiency,
                      "datum deficiency: normal matrix has a null space of dimension " +
                          std::to_string(std::max(nullity, 1L)));
  }
  (void)dmax;
  return s;
}

double parameter_step_measure(const Network& net, const ParameterLayout& layout,
                              const Eigen::VectorXd& delta) {
  // max |delta_i| / (|x_i| + 1); rotation increments are compared with 1 rad
  double worst = 0.0;
  auto upd = [&](double d, double x) { worst = std::max(worst, std::abs(d) / (std::abs(x) + 1.0)); };
  for (std::size_t j = 0; j < net.poses.size(); ++j) {
    const std::size_t c = layout.pose_col(j);
    for (int a = 0; a < 3; ++a) upd(delta[c + a], 0.0);
    for (int a = 0; a < 3; ++a) upd(delta[c + 3 + a], net.poses[j].position[a]);
  }
  for (std::size_t i = 0; i < net.points.size(); ++i) {
    const int c = layout.point_col(i);
    if (c >= 0)
      for (int a = 0; a < 3; ++a) upd(delta[c + a], net.points[i].coords[a]);
  }
  if (layout.c_col() >= 0) upd(delta[layout.c_col()], net.iop.c);
  if (layout.xp_col() >= 0) upd(delta[layout.xp_col()], net.iop.xp);
  if (layout.yp_col() >= 0) upd(delta[layout.yp_col()], net.iop.yp);
  for (int t = 0; t < kBrownTermCount; ++t) {
    const int c = layout.brown_col(static_cast<BrownTerm>(t));
    if (c >= 0) upd(delta[c], net.brown.value[t]);
  }
  return worst;
}

}  // namespace

bool predict_observation(const Network& net, const ResolvedObservation& ro,
                         const ImageObservation& obs, const Vec2& fixed_correction,
                         Vec2& predicted) {
  const Vec3 v = to_camera_frame(net.points[ro.point].coords, net.poses[ro.exposure]);
  const Vec2 target = sphere_projection(v, net.iop.c) + fixed_correction;
  Vec2 u;
  bool ok = true;
  if (net.brown.mask.empty()) {
    u = target;
  } else {
    ok = invert_brown(target, net.brown, Vec2(obs.x - net.iop.xp, obs.y - net.iop.yp), u);
  }
  predicted = Vec2(net.iop.xp + u.x(), net.iop.yp + u.y());
  return ok;
}

ObservationLinearization linearize_observation(const Network& net,
                                               const ResolvedObservation& ro,
                                               const ImageObservation& obs,
                                               const Vec2& fixed_correction) {
  ObservationLinearization lin;
  if (!predict_observation(net, ro, obs, fixed_correction, lin.predicted))
    throw SolverError(SolverError::Kind::NonFinite,
                      "Brown correction not invertible at observation " + obs.exposure + "/" +
                          obs.target);
  const CameraPose& pose = net.poses[ro.exposure];
  const Mat3 rot = pose.orientation.toRotationMatrix();
  const Vec3 v = rot * (net.points[ro.point].coords - pose.position);
  const double c = net.iop.c;
  const double n = v.norm();
  double rho;
  const Vec2 u = azimuth(v, rho);
  const Vec2 t(-u.y(), u.x());

  Eigen::Matrix2d bxt;
  bxt << u.transpose(), t.transpose();
  const Vec2 ub(lin.predicted.x() - net.iop.xp, lin.predicted.y() - net.iop.yp);
  const BrownJacobian bj = brown_jacobian(ub.x(), ub.y(), net.brown);
  Eigen::Matrix2d jd = Eigen::Matrix2d::Zero();
  Eigen::Matrix<double, 2, kBrownTermCount> jp = Eigen::Matrix<double, 2, kBrownTermCount>::Zero();
  if (!net.brown.mask.empty()) {
    jd = bj.d_bar;
    for (int k = 0; k < kBrownTermCount; ++k)
      if (net.brown.mask.active(static_cast<BrownTerm>(k))) jp.col(k) = bj.d_params.col(k);
  }
  lin.b = bxt * (Eigen::Matrix2d::Identity() - jd);

  Eigen::Matrix<double, 2, 3> dv;
  const double n3 = n * n * n;
  const double z = v.z();
  dv << -(c / n3) * z * z * u.x(), -(c / n3) * z * z * u.y(), (c / n3) * rho * z,  //
      -(c / n) * t.x(), -(c / n) * t.y(), 0.0;

  lin.pose.leftCols<3>() = -dv * skew(v);
  lin.pose.rightCols<3>() = -dv * rot;
  lin.point = dv * rot;
  lin.iop.col(0) << -rho / n, 0.0;
  lin.iop.col(1) = -lin.b.col(0);
  lin.iop.col(2) = -lin.b.col(1);
  lin.brown = -bxt * jp;
  lin.misclosure = lin.b * (Vec2(obs.x, obs.y) - lin.predicted);
  return lin;
}

Vec2 scaled_conditions(const Network& net, const ResolvedObservation& ro,
                       const Vec2& observation, const Vec2& fixed_correction) {
  const Vec3 v = to_camera_frame(net.points[ro.point].coords, net.poses[ro.exposure]);
  double rho;
  const Vec2 u = azimuth(v, rho);
  const Vec2 t(-u.y(), u.x());
  const Vec2 xt =
      Vec2(observation.x() - net.iop.xp, observation.y() - net.iop.yp) -
      brown_correction(observation.x(), observation.y(), net.iop, net.brown) - fixed_correction;
  return Vec2(u.dot(xt) - net.iop.c * rho / v.norm(), t.dot(xt));
}

AdjustmentResult solve(const Network& initial, const std::vector<ImageObservation>& obs,
                       const std::vector<Vec2>& fixed, const AdjustmentConfig& cfg) {
  if (cfg.max_iterations < 1) throw ConfigError("max iterations must be at least 1");
  if (!(cfg.cost_tolerance > 0.0) || !(cfg.step_tolerance > 0.0) || !(cfg.initial_radius > 0.0) ||
      !(cfg.min_radius > 0.0) || !(cfg.huber_k > 0.0))
    throw ConfigError("solver tolerances must be positive");
  if (!fixed.empty() && fixed.size() != obs.size())
    throw ConfigError("fixed correction count does not match observation count");

  Network x = initial;
  x.brown.mask = cfg.estimate.brown;
  x.brown.enforce_mask();
  const auto ro = resolve_observations(x, obs);
  const ParameterLayout layout(x, cfg.estimate, cfg.datum);

  AdjustmentResult res;
  res.redundancy = 2 * static_cast<long>(obs.size()) - static_cast<long>(layout.size()) +
                   layout.datum_rank();
  if (res.redundancy <= 0)
    throw DataError("network has no redundancy (" + std::to_string(res.redundancy) + ")");

  Evaluation ev = evaluate(x, ro, obs, fixed, cfg);
  if (!ev.ok) throw SolverError(SolverError::Kind::NonFinite, "initial cost is not finite");

  // Round-off level of the objective: each scaled residual carries an error
  // of a few ulps of c / sigma, so decreases below this are not measurable.
  double sigma_min = std::numeric_limits<double>::infinity();
  for (const auto& o : obs) sigma_min = std::min({sigma_min, o.sigma_x, o.sigma_y});
  const double ulp = 16.0 * std::numeric_limits<double>::epsilon() *
                     std::max(std::abs(x.iop.c), 1.0) / sigma_min;
  const double terms = 2.0 * static_cast<double>(obs.size());
  const auto roundoff = [&](double objective) {
    return ulp * (2.0 * std::sqrt(terms * objective) + std::sqrt(terms) * ulp);
  };

  double radius = cfg.initial_radius;
  int streak = 0;
  int iter = 0;
  for (iter = 1; iter <= cfg.max_iterations && !res.converged; ++iter) {
    if (ev.objective < 1e-30) {
      res.converged = true;
      break;
    }
    const NormalSystem sys = assemble(x, layout, ro, obs, fixed, ev.weights);
    if (!sys.n.allFinite() || !sys.b.allFinite())
      throw SolverError(SolverError::Kind::NonFinite, "non-finite normal equations");
    const ScaledSystem s = scale_and_factor(sys, x, layout);
    const Eigen::VectorXd gn = s.factor.solve(s.bs);

    Eigen::VectorXd dir = s.bs;
    if (s.cs.rows() > 0) {
      const Eigen::MatrixXd cct = s.cs * s.cs.transpose();
      dir -= s.cs.transpose() * cct.ldlt().solve(s.cs * s.bs);
    }
    Eigen::VectorXd cauchy = Eigen::VectorXd::Zero(dir.size());
    const double curv = dir.dot(s.ns * dir);
    if (dir.squaredNorm() > 0.0 && curv > 0.0) cauchy = (dir.squaredNorm() / curv) * dir;

    while (true) {
      const Eigen::VectorXd step = dogleg_step(-2.0 * dir, gn, cauchy, radius);
      const double pred = 2.0 * s.bs.dot(step) - step.dot(s.ns * step);
      const Eigen::VectorXd delta = step.cwiseQuotient(s.d);

      IterationRecord rec;
      rec.iteration = iter;
      rec.max_step = delta.cwiseAbs().maxCoeff();

      if (!(pred > std::max(1e-15 * ev.objective, roundoff(ev.objective)))) {
        // the model promises nothing measurable: stationary point
        rec.cost = ev.objective;
        rec.radius = radius;
        res.trace.push_back(rec);
        res.converged = true;
        break;
      }
      Network trial = x;
      layout.apply(trial, delta);
      Evaluation tev = evaluate(trial, ro, obs, fixed, cfg);
      const double actual = tev.ok ? ev.objective - tev.objective
                                   : -std::numeric_limits<double>::infinity();
      const double ratio = actual / pred;
      const double step_norm = step.norm();
      const bool accept = tev.ok && ratio > cfg.accept_ratio;
      radius = update_radius(cfg.trust, tev.ok ? ratio : -1.0, step_norm, radius);
      rec.accepted = accept;
      rec.radius = radius;
      rec.cost = accept ? tev.objective : ev.objective;
      res.trace.push_back(rec);

      if (accept) {
        const double rel = actual / std::max(ev.objective, 1e-300);
        const double meas = parameter_step_measure(x, layout, delta);
        streak = (rel < cfg.cost_tolerance && meas < cfg.step_tolerance) ? streak + 1 : 0;
        x = std::move(trial);
        ev = std::move(tev);
        if (streak >= cfg.converged_iterations) res.converged = true;
        break;
      }
      if (pred < std::max(cfg.cost_tolerance * ev.objective, roundoff(ev.objective))) {
        // rejected step that could not have mattered anyway
        res.converged = true;
        break;
      }
      if (radius < cfg.min_radius)
      {
        std::ostringstream msg;
        msg << "no progress: trust radius fell below " << cfg.min_radius << " at iteration " << iter
            << ", cost " << ev.objective << ", predicted decrease " << pred;
        throw SolverError(SolverError::Kind::NoProgress, msg.str());
      }
    }
  }
  res.iterations = std::min(iter, cfg.max_iterations);

  // statistics at the final estimate
  res.network = x;
  res.objective = ev.objective;
  res.cost = ev.cost;
  res.raw_cost = ev.raw_cost;
  res.variance_factor = ev.cost / static_cast<double>(res.redundancy);
  res.weights = ev.weights;
  res.standardized = ev.standardized;
  res.residuals.resize(obs.size());
  for (std::size_t k = 0; k < obs.size(); ++k) {
    res.residuals[k] = ev.predicted[k] - Vec2(obs[k].x, obs[k].y);
    const Vec2 xt = Vec2(obs[k].x - x.iop.xp, obs[k].y - x.iop.yp) -
                    brown_correction(obs[k].x, obs[k].y, x.iop, x.brown) -
                    correction_at(fixed, k);
    if (xt.squaredNorm() > x.iop.c * x.iop.c) res.outside_sphere.push_back(k);
  }

  if (layout.calibration_count() > 0) {
    const NormalSystem sys = assemble(x, layout, ro, obs, fixed, ev.weights);
    const ScaledSystem s = scale_and_factor(sys, x, layout);
    const Eigen::Index b0 = static_cast<Eigen::Index>(layout.calibration_begin());
    const Eigen::Index nc = static_cast<Eigen::Index>(layout.calibration_count());
    Eigen::MatrixXd e = Eigen::MatrixXd::Zero(s.ns.rows(), nc);
    for (Eigen::Index i = 0; i < nc; ++i) e(b0 + i, i) = 1.0;
    const Eigen::MatrixXd q = s.factor.solve(e);
    auto sigma = [&](int col) {
      if (col < 0) return 0.0;
      const double qii = q(col, col - b0) / (s.d[col] * s.d[col]);
      return std::sqrt(std::max(0.0, res.variance_factor * qii));
    };
    res.sigma_c = sigma(layout.c_col());
    res.sigma_xp = sigma(layout.xp_col());
    res.sigma_yp = sigma(layout.yp_col());
    for (int t = 0; t < kBrownTermCount; ++t)
      res.sigma_brown[t] = sigma(layout.brown_col(static_cast<BrownTerm>(t)));
  }
  return res;
}

void write_trace(std::ostream& out, const std::vector<IterationRecord>& trace) {
  out << "# iteration cost radius max_step accepted\n";
  char buf[160];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%d %.17g %.17g %.17g %d\n", r.iteration, r.cost, r.radius,
                  r.max_step, r.accepted ? 1 : 0);
    out << buf;
  }
}

}  // namespace spherecal
