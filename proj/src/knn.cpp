#include "spherecal/knn.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "spherecal/errors.hpp"

namespace spherecal {

namespace {

constexpr std::uint32_t kLeafSize = 8;

bool closer(const KdTree2::Neighbour& a, const KdTree2::Neighbour& b) {
  return a.dist2 < b.dist2 || (a.dist2 == b.dist2 && a.index < b.index);
}

}  // namespace

KdTree2::KdTree2(std::vector<Vec2> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0u);
  if (!points_.empty()) build(0, static_cast<std::uint32_t>(points_.size()));
}

std::int32_t KdTree2::build(std::uint32_t begin, std::uint32_t end) {
  const auto id = static_cast<std::int32_t>(nodes_.size());
  nodes_.push_back({begin, end, -1, 0.0, -1, -1});
  if (end - begin <= kLeafSize) return id;

  Vec2 lo = points_[order_[begin]], hi = lo;
  for (std::uint32_t i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  const int axis = (hi.x() - lo.x() >= hi.y() - lo.y()) ? 0 : 1;
  if (hi[axis] == lo[axis]) return id;  // all points coincide

  const std::uint32_t mid = begin + (end - begin) / 2;
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](std::uint32_t a, std::uint32_t b) {
                     const double pa = points_[a][axis], pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });
  const double split = points_[order_[mid]][axis];
  const std::int32_t left = build(begin, mid);
  const std::int32_t right = build(mid, end);
  Node& node = nodes_[id];
  node.axis = axis;
  node.split = split;
  node.left = left;
  node.right = right;
  return id;
}

void KdTree2::search(std::int32_t id, const Vec2& q, std::size_t k, std::size_t exclude,
                     std::vector<Neighbour>& heap) const {
  const Node& node = nodes_[id];
  if (node.axis < 0) {
    for (std::uint32_t i = node.begin; i < node.end; ++i) {
      const std::size_t idx = order_[i];
      if (idx == exclude) continue;
      const Neighbour cand{(points_[idx] - q).squaredNorm(), idx};
      if (heap.size() < k) {
        heap.push_back(cand);
        std::push_heap(heap.begin(), heap.end(), closer);
      } else if (closer(cand, heap.front())) {
        std::pop_heap(heap.begin(), heap.end(), closer);
        heap.back() = cand;
        std::push_heap(heap.begin(), heap.end(), closer);
      }
    }
    return;
  }
  const double diff = q[node.axis] - node.split;
  const std::int32_t near = diff < 0.0 ? node.left : node.right;
  const std::int32_t far = diff < 0.0 ? node.right : node.left;
  search(near, q, k, exclude, heap);
  if (heap.size() < k || diff * diff <= heap.front().dist2) search(far, q, k, exclude, heap);
}

std::vector<KdTree2::Neighbour> KdTree2::nearest(const Vec2& query, std::size_t k,
                                                 std::size_t exclude) const {
  std::vector<Neighbour> heap;
  if (points_.empty() || k == 0) return heap;
  heap.reserve(k + 1);
  search(0, query, k, exclude, heap);
  std::sort_heap(heap.begin(), heap.end(), closer);
  return heap;
}

Vec2 idw_combine(const std::vector<KdTree2::Neighbour>& nn,
                 const std::vector<KnnSample>& samples, std::size_t k) {
  const std::size_t m = std::min(k, nn.size());
  if (m == 0) return Vec2::Zero();
  if (nn[0].dist2 < KnnRegressor::kExactMatch * KnnRegressor::kExactMatch)
    return samples[nn[0].index].label;
  Vec2 sum = Vec2::Zero();
  double wsum = 0.0;
  for (std::size_t i = 0; i < m; ++i) {
    const double w = 1.0 / std::sqrt(nn[i].dist2);
    sum += w * samples[nn[i].index].label;
    wsum += w;
  }
  return sum / wsum;
}

KnnRegressor::KnnRegressor(std::vector<KnnSample> samples, std::size_t k)
    : samples_(std::move(samples)), k_(k) {
  if (samples_.empty()) throw ConfigError("kNN fit needs at least one sample");
  if (k_ < 1 || k_ > samples_.size())
    throw ConfigError("kNN k must be in [1, " + std::to_string(samples_.size()) + "]");
  std::vector<Vec2> pts;
  pts.reserve(samples_.size());
  for (const auto& s : samples_) pts.push_back(s.feature);
  tree_ = KdTree2(std::move(pts));
}

Vec2 KnnRegressor::predict(const Vec2& feature) const {
  return idw_combine(tree_.nearest(feature, k_), samples_, k_);
}

Vec2 KnnRegressor::predict_excluding(const Vec2& feature, std::size_t index) const {
  if (index >= samples_.size()) return predict(feature);
  const std::size_t k = std::min(k_, samples_.size() - 1);
  return idw_combine(tree_.nearest(feature, k, index), samples_, k);
}

std::vector<std::size_t> default_k_ladder() { return {1, 2, 4, 8, 16, 32, 64}; }

std::vector<int> cv_fold_ids(std::size_t n, int n_folds, std::uint64_t seed) {
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  for (std::size_t i = n; i > 1; --i) {
    const std::size_t j = static_cast<std::size_t>(rng() % i);
    std::swap(perm[i - 1], perm[j]);
  }
  std::vector<int> folds(n);
  for (std::size_t rank = 0; rank < n; ++rank)
    folds[perm[rank]] = static_cast<int>(rank % static_cast<std::size_t>(n_folds));
  return folds;
}

CvResult knn_cross_validate(const std::vector<KnnSample>& samples,
                            const std::vector<std::size_t>& k_candidates,
                            std::uint64_t seed) {
  if (samples.size() < static_cast<std::size_t>(kCvFolds))
    throw ConfigError("cross-validation needs at least 10 samples");
  return knn_cross_validate(samples, k_candidates,
                            cv_fold_ids(samples.size(), kCvFolds, seed));
}

CvResult knn_cross_validate(const std::vector<KnnSample>& samples,
                            const std::vector<std::size_t>& k_candidates,
                            const std::vector<int>& fold_ids) {
  if (samples.size() < static_cast<std::size_t>(kCvFolds))
    throw ConfigError("cross-validation needs at least 10 samples");
  if (fold_ids.size() != samples.size())
    throw ConfigError("fold id count does not match sample count");
  const int n_folds = *std::max_element(fold_ids.begin(), fold_ids.end()) + 1;

  std::vector<std::size_t> fold_size(n_folds, 0);
  for (int f : fold_ids) {
    if (f < 0) throw ConfigError("negative fold id");
    ++fold_size[f];
  }
  std::size_t min_train = samples.size();
  for (std::size_t s : fold_size) min_train = std::min(min_train, samples.size() - s);

  CvResult res;
  for (std::size_t k : k_candidates)
    if (k >= 1 && k <= min_train) res.k_values.push_back(k);
  std::sort(res.k_values.begin(), res.k_values.end());
  res.k_values.erase(std::unique(res.k_values.begin(), res.k_values.end()),
                     res.k_values.end());
  if (res.k_values.empty()) throw ConfigError("no admissible k candidate");
  const std::size_t k_max = res.k_values.back();

  std::vector<double> err(res.k_values.size(), 0.0);
  double wsum = 0.0, zero = 0.0;
  for (int f = 0; f < n_folds; ++f) {
    std::vector<KnnSample> train;
    std::vector<Vec2> pts;
    for (std::size_t i = 0; i < samples.size(); ++i)
      if (fold_ids[i] != f) {
        train.push_back(samples[i]);
        pts.push_back(samples[i].feature);
      }
    if (train.size() == samples.size()) continue;
    const KdTree2 tree(std::move(pts));
    for (std::size_t i = 0; i < samples.size(); ++i) {
      if (fold_ids[i] != f) continue;
      const auto nn = tree.nearest(samples[i].feature, k_max);
      const double w = samples[i].weight;
      for (std::size_t j = 0; j < res.k_values.size(); ++j) {
        const Vec2 pred = idw_combine(nn, train, res.k_values[j]);
        err[j] += w * 0.5 * (pred - samples[i].label).squaredNorm();
      }
      zero += w * 0.5 * samples[i].label.squaredNorm();
      wsum += w;
    }
  }
  res.scores.resize(err.size());
  for (std::size_t j = 0; j < err.size(); ++j) res.scores[j] = err[j] / wsum;
  res.zero_score = zero / wsum;
  std::size_t best = 0;
  for (std::size_t j = 1; j < res.scores.size(); ++j)
    if (res.scores[j] < res.scores[best]) best = j;
  res.best_k = res.k_values[best];
  res.best_score = res.scores[best];
  return res;
}

std::string observation_key(const std::string& exposure, const std::string& target) {
  return exposure + '\x1f' + target;
}

void CorrectionMap::add_layer(CorrectionLayer layer) {
  if (!layer.regressor.fitted()) throw ConfigError("correction layer is not fitted");
  if (!layer.keys.empty() && layer.keys.size() != layer.regressor.samples().size())
    throw ConfigError("correction layer key count does not match its samples");
  std::unordered_map<std::string, std::size_t> idx;
  for (std::size_t i = 0; i < layer.keys.size(); ++i)
    if (!idx.emplace(layer.keys[i], i).second)
      throw ConfigError("duplicate sample key in correction layer");
  layers_.push_back(std::move(layer));
  index_.push_back(std::move(idx));
}

Vec2 CorrectionMap::correction(double x, double y) const {
  Vec2 sum = Vec2::Zero();
  for (const auto& l : layers_) sum += l.regressor.predict(Vec2(x - l.xp, y - l.yp));
  return sum;
}

Vec2 CorrectionMap::correction_for(const std::string& key, double x, double y) const {
  Vec2 sum = Vec2::Zero();
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const Vec2 q(x - l.xp, y - l.yp);
    const auto it = index_[i].find(key);
    sum += it == index_[i].end() ? l.regressor.predict(q)
                                 : l.regressor.predict_excluding(q, it->second);
  }
  return sum;
}

}  // namespace spherecal
