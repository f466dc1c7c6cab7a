#include "spherecal/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include <Eigen/Dense>

#include "spherecal/errors.hpp"
#include "spherecal/robust.hpp"

namespace spherecal {

namespace {

InitializationResult initialize_or_throw(const std::vector<ImageObservation>& obs,
                                         const std::vector<ObjectPoint>& targets,
                                         const InteriorOrientation& nominal,
                                         const PipelineConfig& cfg) {
  InitializationResult init = initialize_network(targets, obs, nominal, cfg.initialization);
  if (init.network.poses.empty()) throw DataError("no exposure could be initialised");
  return init;
}

double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  const auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
  std::nth_element(v.begin(), mid, v.end());
  double m = *mid;
  if (v.size() % 2 == 0) m = 0.5 * (m + *std::max_element(v.begin(), mid));
  return m;
}

double relative_change(double now, double before) {
  return std::abs(now - before) / std::max(std::abs(before), 1e-300);
}

// Label expected at sample k from a plane fitted to its nearest unflagged
// neighbours. A plane follows the steep fields near the image border, where a
// weighted mean of one-sided neighbours is biased. Falls back to the weighted
// mean when the neighbours do not span the plane.
Vec2 local_trend(const KdTree2& tree, const std::vector<KnnSample>& all, std::size_t k,
                 std::size_t kt, const std::vector<bool>& flagged) {
  auto nn = tree.nearest(all[k].feature, 3 * kt, k);
  std::erase_if(nn, [&](const KdTree2::Neighbour& m) { return flagged[m.index]; });
  if (nn.size() > kt) nn.resize(kt);
  if (nn.size() >= 4) {
    Eigen::MatrixXd a(nn.size(), 3);
    Eigen::MatrixXd b(nn.size(), 2);
    for (std::size_t i = 0; i < nn.size(); ++i) {
      const KnnSample& s = all[nn[i].index];
      a.row(i) << 1.0, (s.feature - all[k].feature).transpose();
      b.row(i) = s.label.transpose();
    }
    const Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(a);
    if (qr.rank() == 3) return qr.solve(b).row(0).transpose();
  }
  return idw_combine(nn, all, nn.size());
}

// Flags samples whose label departs from the local trend by a Huber weight
// below the threshold, standardised by max(a-priori sigma, robust spread).
std::vector<bool> screen(const KdTree2& tree, const std::vector<KnnSample>& all,
                         const std::vector<ImageObservation>& obs, const std::vector<bool>& flagged,
                         const AdjustmentConfig& adj, const KnnLoopConfig& cfg) {
  const std::size_t n = all.size();
  const std::size_t kt = std::min(cfg.trend_k, n > 1 ? n - 1 : 0);
  std::vector<Vec2> dev(n);
  std::vector<double> pooled;
  pooled.reserve(2 * n);
  for (std::size_t k = 0; k < n; ++k) {
    dev[k] = all[k].label - local_trend(tree, all, k, kt, flagged);
    pooled.push_back(dev[k].x());
    pooled.push_back(dev[k].y());
  }
  const double med = median(pooled);
  for (double& v : pooled) v = std::abs(v - med);
  const double robust_sigma = 1.4826 * median(pooled);
  std::vector<bool> out(n);
  for (std::size_t k = 0; k < n; ++k) {
    const double apriori =
        std::sqrt(0.5 * (obs[k].sigma_x * obs[k].sigma_x + obs[k].sigma_y * obs[k].sigma_y));
    const double r = std::sqrt(0.5 * dev[k].squaredNorm()) / std::max(apriori, robust_sigma);
    out[k] = huber_weight(r, adj.huber_k) < cfg.outlier_weight;
  }
  return out;
}

// Samples for the next correction map: the current correction of each
// observation plus its new residual. Screening runs twice so that trends of
// the second pass no longer lean on blunders found by the first.
struct Training {
  std::vector<KnnSample> samples;
  std::vector<std::string> keys;
  double keep_score = 0.0;  // CV metric of keeping the current corrections
};

Training training_samples(const AdjustmentResult& res, const std::vector<ImageObservation>& obs,
                          const std::vector<Vec2>& corrections, const AdjustmentConfig& adj,
                          const KnnLoopConfig& cfg) {
  const std::size_t n = obs.size();
  const double xp = res.network.iop.xp, yp = res.network.iop.yp;
  std::vector<KnnSample> all(n);
  std::vector<Vec2> pts(n);
  for (std::size_t k = 0; k < n; ++k) {
    all[k].feature = Vec2(obs[k].x - xp, obs[k].y - yp);
    all[k].label = corrections[k] - res.residuals[k];
    all[k].weight = 2.0 / (obs[k].sigma_x * obs[k].sigma_x + obs[k].sigma_y * obs[k].sigma_y);
    pts[k] = all[k].feature;
  }
  const KdTree2 tree(pts);
  const std::vector<bool> first = screen(tree, all, obs, std::vector<bool>(n, false), adj, cfg);
  const std::vector<bool> flagged = screen(tree, all, obs, first, adj, cfg);

  Training t;
  double wsum = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    if (flagged[k]) continue;
    t.samples.push_back(all[k]);
    t.keys.push_back(observation_key(obs[k].exposure, obs[k].target));
    t.keep_score += all[k].weight * 0.5 * res.residuals[k].squaredNorm();
    wsum += all[k].weight;
  }
  if (wsum > 0.0) t.keep_score /= wsum;
  return t;
}

}  // namespace

std::string model_label(const BrownMask& mask) {
  std::string s = "XYZ, EOP, IOP";
  for (int t = 0; t < kBrownTermCount; ++t)
    if (mask.active(static_cast<BrownTerm>(t)))
      s += std::string(", ") + brown_term_name(static_cast<BrownTerm>(t));
  return s;
}

CalibrationRun calibrate_conventional(const std::vector<ImageObservation>& obs,
                                      const std::vector<ObjectPoint>& targets,
                                      const InteriorOrientation& nominal, const BrownMask& mask,
                                      const PipelineConfig& cfg) {
  const InitializationResult init = initialize_or_throw(obs, targets, nominal, cfg);
  AdjustmentConfig adj = cfg.adjustment;
  adj.estimate.brown = mask;
  CalibrationRun run;
  run.label = model_label(mask);
  run.result = solve(init.network, init.observations, {}, adj);
  run.observations = init.observations;
  run.excluded = init.excluded;
  return run;
}

std::vector<CalibrationRun> calibrate_ladder(const std::vector<ImageObservation>& obs,
                                             const std::vector<ObjectPoint>& targets,
                                             const InteriorOrientation& nominal,
                                             const PipelineConfig& cfg) {
  const InitializationResult init = initialize_or_throw(obs, targets, nominal, cfg);
  std::vector<CalibrationRun> rows;
  for (int row = 0; row < kLadderRows; ++row) {
    AdjustmentConfig adj = cfg.adjustment;
    adj.estimate.brown = BrownMask::ladder(row);
    CalibrationRun run;
    run.label = model_label(adj.estimate.brown);
    run.result = solve(init.network, init.observations, {}, adj);
    // Each row nests the previous one, so the previous solution is a valid
    // start as well; keep whichever reaches the lower objective.
    if (!rows.empty() && rows.back().result.objective < run.result.objective) {
      try {
        AdjustmentResult warm = solve(rows.back().result.network, init.observations, {}, adj);
        if (warm.objective < run.result.objective) run.result = std::move(warm);
      } catch (const SolverError&) {
      }
    }
    run.observations = init.observations;
    run.excluded = init.excluded;
    rows.push_back(std::move(run));
  }
  return rows;
}

std::vector<Vec2> map_corrections(const CorrectionMap& map,
                                  const std::vector<ImageObservation>& obs) {
  std::vector<Vec2> out(obs.size(), Vec2::Zero());
  if (map.empty()) return out;
  for (std::size_t k = 0; k < obs.size(); ++k)
    out[k] = map.correction_for(observation_key(obs[k].exposure, obs[k].target), obs[k].x,
                                obs[k].y);
  return out;
}

KnnRun calibrate_knn(const std::vector<ImageObservation>& obs_in,
                     const std::vector<ObjectPoint>& targets,
                     const InteriorOrientation& nominal, const PipelineConfig& cfg) {
  if (cfg.knn.max_outer < 1) throw ConfigError("kNN loop needs at least one outer iteration");
  const InitializationResult init = initialize_or_throw(obs_in, targets, nominal, cfg);
  const auto& obs = init.observations;
  AdjustmentConfig adj = cfg.adjustment;
  adj.estimate.brown = BrownMask::none();

  KnnRun best;
  double best_cost = std::numeric_limits<double>::infinity();
  CorrectionMap map;
  std::vector<Vec2> corrections(obs.size(), Vec2::Zero());
  Network start = init.network;
  double prev_cost = 0.0, prev_cv = 0.0;
  int increases = 0;
  std::vector<OuterRecord> trace;
  bool oscillation = false;

  for (int t = 1; t <= cfg.knn.max_outer; ++t) {
    AdjustmentResult res = solve(start, obs, corrections, adj);
    start = res.network;
    OuterRecord rec;
    rec.outer = t;
    rec.cost = res.cost;
    if (t > 1) {
      increases = res.cost > prev_cost ? increases + 1 : 0;
      if (increases >= 2) {
        oscillation = true;
        trace.push_back(rec);
        break;
      }
    }
    if (res.cost < best_cost) {
      best_cost = res.cost;
      best.run.label = kKnnLabel;
      best.run.result = res;
      best.run.observations = obs;
      best.run.excluded = init.excluded;
      best.map = map;
      best.corrections = corrections;
      best.best_outer = t;
    }

    Training train = training_samples(res, obs, corrections, adj, cfg.knn);
    rec.samples = train.samples.size();
    if (train.samples.size() < static_cast<std::size_t>(kCvFolds)) {
      trace.push_back(rec);
      break;
    }
    const CvResult cv = knn_cross_validate(train.samples, cfg.knn.k_ladder, cfg.knn.cv_seed);
    rec.cv_score = cv.best_score;
    rec.zero_score = train.keep_score;
    rec.k = cv.best_k;
    const bool stable = t > 1 && relative_change(res.cost, prev_cost) < cfg.knn.stability_tolerance &&
                        relative_change(cv.best_score, prev_cv) < cfg.knn.stability_tolerance;
    if (stable || t == cfg.knn.max_outer) {
      trace.push_back(rec);
      break;
    }
    CorrectionLayer layer;
    layer.regressor = KnnRegressor(std::move(train.samples), cv.best_k);
    layer.keys = std::move(train.keys);
    layer.xp = res.network.iop.xp;
    layer.yp = res.network.iop.yp;
    layer.cv_score = cv.best_score;
    map = CorrectionMap();
    map.add_layer(std::move(layer));
    rec.layer_added = true;
    trace.push_back(rec);
    corrections = map_corrections(map, obs);
    prev_cost = res.cost;
    prev_cv = cv.best_score;
  }
  best.trace = std::move(trace);
  best.oscillation = oscillation;
  return best;
}

void write_outer_trace(std::ostream& out, const std::vector<OuterRecord>& trace) {
  out << "# outer cost cv_score zero_score k samples layer_added\n";
  char buf[200];
  for (const auto& r : trace) {
    std::snprintf(buf, sizeof buf, "%d %.17g %.17g %.17g %zu %zu %d\n", r.outer, r.cost,
                  r.cv_score, r.zero_score, r.k, r.samples, r.layer_added ? 1 : 0);
    out << buf;
  }
}

}  // namespace spherecal
