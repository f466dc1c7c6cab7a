#include <gtest/gtest.h>

#include <algorithm>
#include <numeric>
#include <random>

#include "oracles.hpp"
#include "spherecal/errors.hpp"
#include "spherecal/knn.hpp"

using namespace spherecal;
using spherecal::testing::brute_idw;
using spherecal::testing::brute_nearest;

namespace {

std::vector<KnnSample> random_samples(std::mt19937_64& rng, std::size_t n, bool grid) {
  std::uniform_real_distribution<double> u(-500.0, 500.0);
  std::vector<KnnSample> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    // A coarse grid produces many distance ties.
    s[i].feature = grid ? Vec2(std::round(u(rng) / 50.0) * 50.0, std::round(u(rng) / 50.0) * 50.0)
                        : Vec2(u(rng), u(rng));
    s[i].label = Vec2(std::sin(s[i].feature.x() / 90.0), std::cos(s[i].feature.y() / 70.0));
    s[i].weight = 1.0 + 0.5 * std::sin(static_cast<double>(i));
  }
  return s;
}

}  // namespace

TEST(KdTree, MatchesLinearScanOn10000Queries) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(-600.0, 600.0);
  for (bool grid : {false, true}) {
    const auto samples = random_samples(rng, 2000, grid);
    std::vector<Vec2> pts;
    for (const auto& s : samples) pts.push_back(s.feature);
    const KdTree2 tree(pts);
    for (int i = 0; i < 5000; ++i) {
      const Vec2 q(u(rng), u(rng));
      const std::size_t k = 1 + static_cast<std::size_t>(rng() % 64);
      const auto got = tree.nearest(q, k);
      const auto want = brute_nearest(pts, q, k);
      ASSERT_EQ(got.size(), want.size());
      for (std::size_t j = 0; j < got.size(); ++j) ASSERT_EQ(got[j].index, want[j]);
    }
  }
}

TEST(KnnRegressor, PredictionsMatchBruteForce) {
  std::mt19937_64 rng(32);
  std::uniform_real_distribution<double> u(-600.0, 600.0);
  const auto samples = random_samples(rng, 1500, false);
  for (std::size_t k : {1u, 4u, 16u, 64u}) {
    const KnnRegressor reg(samples, k);
    for (int i = 0; i < 2500; ++i) {
      const Vec2 q(u(rng), u(rng));
      EXPECT_LT((reg.predict(q) - brute_idw(samples, q, k)).norm(), 1e-12);
    }
  }
}

TEST(KnnRegressor, ExactMatchReturnsSampleLabel) {
  std::mt19937_64 rng(33);
  const auto samples = random_samples(rng, 100, false);
  const KnnRegressor reg(samples, 8);
  for (const auto& s : samples) EXPECT_EQ(reg.predict(s.feature), s.label);
}

TEST(KnnRegressor, LeaveOneOutMatchesBruteForce) {
  std::mt19937_64 rng(34);
  const auto samples = random_samples(rng, 300, true);
  const KnnRegressor reg(samples, 6);
  for (std::size_t i = 0; i < samples.size(); ++i)
    EXPECT_LT((reg.predict_excluding(samples[i].feature, i) -
               brute_idw(samples, samples[i].feature, 6, i)).norm(),
              1e-12);
}

TEST(KnnRegressor, RejectsBadK) {
  std::mt19937_64 rng(35);
  const auto samples = random_samples(rng, 5, false);
  EXPECT_THROW(KnnRegressor(samples, 0), ConfigError);
  EXPECT_THROW(KnnRegressor(samples, 6), ConfigError);
  EXPECT_THROW(KnnRegressor({}, 1), ConfigError);
}

TEST(CrossValidation, FoldsArePartitionOfEqualSize) {
  for (std::size_t n : {10u, 37u, 1000u}) {
    const auto folds = cv_fold_ids(n, 10, kDefaultCvSeed);
    std::vector<int> count(10, 0);
    for (int f : folds) ++count[f];
    const auto [lo, hi] = std::minmax_element(count.begin(), count.end());
    EXPECT_LE(*hi - *lo, 1);
    EXPECT_EQ(std::accumulate(count.begin(), count.end(), 0), static_cast<int>(n));
    EXPECT_EQ(folds, cv_fold_ids(n, 10, kDefaultCvSeed));
  }
}

TEST(CrossValidation, ScoresMatchBruteForce) {
  std::mt19937_64 rng(36);
  const auto samples = random_samples(rng, 400, false);
  const auto folds = cv_fold_ids(samples.size(), 10, kDefaultCvSeed);
  const CvResult cv = knn_cross_validate(samples, default_k_ladder());
  ASSERT_EQ(cv.k_values, default_k_ladder());
  double best = 1e300;
  std::size_t best_k = 0;
  for (std::size_t j = 0; j < cv.k_values.size(); ++j) {
    double err = 0.0, wsum = 0.0;
    for (int f = 0; f < 10; ++f) {
      std::vector<KnnSample> train;
      for (std::size_t i = 0; i < samples.size(); ++i)
        if (folds[i] != f) train.push_back(samples[i]);
      for (std::size_t i = 0; i < samples.size(); ++i) {
        if (folds[i] != f) continue;
        const Vec2 p = brute_idw(train, samples[i].feature, cv.k_values[j]);
        err += samples[i].weight * 0.5 * (p - samples[i].label).squaredNorm();
        wsum += samples[i].weight;
      }
    }
    EXPECT_NEAR(cv.scores[j], err / wsum, 1e-12 * err / wsum);
    if (err / wsum < best) {
      best = err / wsum;
      best_k = cv.k_values[j];
    }
  }
  EXPECT_EQ(cv.best_k, best_k);
  EXPECT_LT(cv.best_score, cv.zero_score);
}

TEST(CrossValidation, DropsCandidatesLargerThanTrainingFold) {
  std::mt19937_64 rng(37);
  const auto samples = random_samples(rng, 20, false);
  const CvResult cv = knn_cross_validate(samples, {1, 2, 4, 8, 16, 32});
  EXPECT_EQ(cv.k_values, (std::vector<std::size_t>{1, 2, 4, 8, 16}));
  EXPECT_THROW(knn_cross_validate(random_samples(rng, 9, false), {1}), ConfigError);
}

TEST(CorrectionMap, LayersAddAndOwnSampleIsLeftOut) {
  std::mt19937_64 rng(38);
  auto s1 = random_samples(rng, 200, false);
  auto s2 = random_samples(rng, 200, false);
  CorrectionLayer l1, l2;
  for (std::size_t i = 0; i < s1.size(); ++i) l1.keys.push_back(observation_key("E1", std::to_string(i)));
  l1.regressor = KnnRegressor(s1, 4);
  l1.xp = 2.0;
  l1.yp = -1.0;
  l2.regressor = KnnRegressor(s2, 8);
  CorrectionMap map;
  map.add_layer(l1);
  map.add_layer(l2);

  const Vec2 q(31.0, -47.0);
  const Vec2 expected = brute_idw(s1, q - Vec2(2.0, -1.0), 4) + brute_idw(s2, q, 8);
  EXPECT_LT((map.correction(q.x(), q.y()) - expected).norm(), 1e-12);

  // Querying a training observation by its key leaves its own sample out.
  const Vec2 at = s1[7].feature + Vec2(2.0, -1.0);
  const Vec2 loo = brute_idw(s1, s1[7].feature, 4, 7) + brute_idw(s2, at, 8);
  EXPECT_LT((map.correction_for(observation_key("E1", "7"), at.x(), at.y()) - loo).norm(), 1e-12);
  EXPECT_LT((map.correction_for("unknown", at.x(), at.y()) - map.correction(at.x(), at.y())).norm(),
            1e-15);
}

TEST(CorrectionMap, RejectsMismatchedKeys) {
  std::mt19937_64 rng(39);
  CorrectionLayer l;
  l.regressor = KnnRegressor(random_samples(rng, 10, false), 2);
  l.keys = {"a"};
  CorrectionMap map;
  EXPECT_THROW(map.add_layer(l), ConfigError);
  l.keys.assign(10, "same");
  EXPECT_THROW(map.add_layer(l), ConfigError);
}
