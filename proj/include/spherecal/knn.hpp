#pragma once

#include <cstddef>
#include <cstdint>
#include <limits>
#include <string>
#include <unordered_map>
#include <vector>

#include "spherecal/geometry.hpp"

namespace spherecal {

struct KnnSample {
  Vec2 feature = Vec2::Zero();  // (xbar, ybar)
  Vec2 label = Vec2::Zero();    // (dx, dy)
  double weight = 1.0;          // observation weight, used by cross-validation
};

// Static 2-D kd-tree with exact k-nearest queries. Neighbours are ordered by
// (squared distance, index) so results are deterministic under ties.
class KdTree2 {
 public:
  static constexpr std::size_t npos = std::numeric_limits<std::size_t>::max();

  struct Neighbour {
    double dist2;
    std::size_t index;
  };

  KdTree2() = default;
  explicit KdTree2(std::vector<Vec2> points);

  std::size_t size() const { return points_.size(); }
  const Vec2& point(std::size_t i) const { return points_[i]; }

  // Up to k nearest points, nearest first. `exclude` is skipped.
  std::vector<Neighbour> nearest(const Vec2& query, std::size_t k,
                                 std::size_t exclude = npos) const;

 private:
  struct Node {
    std::uint32_t begin, end;  // range in order_
    int axis;                  // -1 for a leaf
    double split;
    std::int32_t left, right;
  };

  std::int32_t build(std::uint32_t begin, std::uint32_t end);
  void search(std::int32_t node, const Vec2& q, std::size_t k, std::size_t exclude,
              std::vector<Neighbour>& heap) const;

  std::vector<Vec2> points_;
  std::vector<std::uint32_t> order_;
  std::vector<Node> nodes_;
};

// Inverse-distance weighted kNN regressor on (dx, dy) jointly.
class KnnRegressor {
 public:
  static constexpr double kExactMatch = 1e-12;

  KnnRegressor() = default;
  // Throws ConfigError for empty samples, k < 1 or k > samples.size().
  KnnRegressor(std::vector<KnnSample> samples, std::size_t k);

  Vec2 predict(const Vec2& feature) const;
  // Prediction with training sample `index` left out (leave-one-out). Uses
  // min(k, n - 1) neighbours; returns zero when nothing is left.
  Vec2 predict_excluding(const Vec2& feature, std::size_t index) const;

  std::size_t k() const { return k_; }
  const std::vector<KnnSample>& samples() const { return samples_; }
  bool fitted() const { return !samples_.empty(); }

 private:
  std::vector<KnnSample> samples_;
  KdTree2 tree_;
  std::size_t k_ = 0;
};

// Inverse-distance combination of `nn` (sorted nearest first) with the
// exact-match short-circuit; shared by the regressor and cross-validation.
Vec2 idw_combine(const std::vector<KdTree2::Neighbour>& nn,
                 const std::vector<KnnSample>& samples, std::size_t k);

inline constexpr std::uint64_t kDefaultCvSeed = 0x5eed;
inline constexpr int kCvFolds = 10;

std::vector<std::size_t> default_k_ladder();

// Fold id per sample: a seeded Fisher-Yates permutation, fold = rank mod n_folds.
// Fold sizes differ by at most one.
std::vector<int> cv_fold_ids(std::size_t n, int n_folds, std::uint64_t seed);

struct CvResult {
  std::vector<std::size_t> k_values;
  std::vector<double> scores;  // weighted MSE per coordinate, one per k
  std::size_t best_k = 0;
  double best_score = 0.0;
  double zero_score = 0.0;  // same metric for the all-zero predictor
};

// 10-fold cross-validation. Candidates larger than the smallest training fold
// are dropped. Throws ConfigError for fewer than 10 samples.
CvResult knn_cross_validate(const std::vector<KnnSample>& samples,
                            const std::vector<std::size_t>& k_candidates,
                            std::uint64_t seed = kDefaultCvSeed);

// Same with caller-supplied fold ids in [0, max id].
CvResult knn_cross_validate(const std::vector<KnnSample>& samples,
                            const std::vector<std::size_t>& k_candidates,
                            const std::vector<int>& fold_ids);

// Sum of kNN layers, each fitted on residuals of one outer iteration and
// queried at image coordinates reduced by the layer's principal point.
// Samples carry the key of the observation they came from; a query for the
// same observation leaves that sample out, so a map never reproduces an
// observation's own residual.
struct CorrectionLayer {
  KnnRegressor regressor;
  std::vector<std::string> keys;  // one per sample, may be empty
  double xp = 0.0;
  double yp = 0.0;
  double cv_score = 0.0;
};

std::string observation_key(const std::string& exposure, const std::string& target);

class CorrectionMap {
 public:
  bool empty() const { return layers_.empty(); }
  std::size_t layer_count() const { return layers_.size(); }
  const CorrectionLayer& layer(std::size_t i) const { return layers_[i]; }
  // Throws ConfigError if keys are present but do not match the samples.
  void add_layer(CorrectionLayer layer);

  // Correction (dx, dy) at raw image coordinates (x, y).
  Vec2 correction(double x, double y) const;

  // Same, leaving out samples whose key equals `key`.
  Vec2 correction_for(const std::string& key, double x, double y) const;

 private:
  std::vector<CorrectionLayer> layers_;
  std::vector<std::unordered_map<std::string, std::size_t>> index_;
};

}  // namespace spherecal
