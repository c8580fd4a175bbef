#include <gtest/gtest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "oracles.hpp"
#include "osp/errors.hpp"
#include "osp/geometry.hpp"
#include "osp/metrics.hpp"

TEST(Auroc, MatchesPairwiseOracle) {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const int n = 5 + trial * 7;
    std::vector<double> scores(n);
    std::vector<int> pos(n);
    std::uniform_int_distribution<int> level(0, 9);  // plenty of ties
    for (int i = 0; i < n; ++i) {
      scores[i] = level(rng) * 0.1;
      pos[i] = (i % 3 == 0) ? 1 : 0;
    }
    EXPECT_NEAR(osp::auroc(scores, pos), oracle::auroc_pairwise(scores, pos), 1e-12);
  }
}

TEST(Auroc, FixedValuesAndMonotoneInvariance) {
  const std::vector<double> s = {0.1, 0.4, 0.35, 0.8};
  const std::vector<int> p = {0, 0, 1, 1};
  EXPECT_DOUBLE_EQ(osp::auroc(s, p), 0.75);
  std::vector<double> t;
  for (double v : s) t.push_back(std::exp(3.0 * v) - 7.0);
  EXPECT_DOUBLE_EQ(osp::auroc(t, p), 0.75);
  const std::vector<double> tied = {0.5, 0.5};
  EXPECT_DOUBLE_EQ(osp::auroc(tied, std::vector<int>{1, 0}), 0.5);
  EXPECT_THROW(osp::auroc(s, std::vector<int>{1, 1, 1, 1}), osp::DataError);
  EXPECT_THROW(osp::auroc(s, std::vector<int>{1, 0}), osp::ShapeError);
}

TEST(Accuracy, PredictAndScore) {
  Eigen::MatrixXd probs(3, 3);
  probs << 0.2, 0.5, 0.3, 0.4, 0.4, 0.2, 0.1, 0.1, 0.8;
  const auto pred = osp::predict(probs);
  EXPECT_EQ(pred, (std::vector<int>{1, 0, 2}));
  EXPECT_DOUBLE_EQ(osp::accuracy(pred, std::vector<int>{1, 1, 2}), 2.0 / 3.0);
}

TEST(AngleAnalysis, FullDecompositionIsOrthogonal) {
  std::mt19937_64 rng(4);
  std::normal_distribution<double> g;
  Eigen::MatrixXd id(50, 6), ood(50, 6);
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 6; ++j) {
      id(i, j) = g(rng);
      ood(i, j) = g(rng);
    }
  Eigen::MatrixXd decomposed(50, 6);
  for (int i = 0; i < 50; ++i) {
    decomposed.row(i) =
        osp::soft_orthogonal_decompose(id.row(i).transpose(), ood.row(i).transpose(), 1.0).pruned.transpose();
  }
  const auto summary = osp::angle_analysis(decomposed, ood);
  EXPECT_NEAR(summary.mean_deg, 90.0, 0.01);
  EXPECT_LT(summary.mean_abs_cosine, 1e-9);
  EXPECT_EQ(summary.count, 50u);
  EXPECT_EQ(summary.histogram[osp::kAngleBins / 2 - 1] + summary.histogram[osp::kAngleBins / 2], 50u);
}

TEST(AngleAnalysis, KnownAnglesAndErrors) {
  Eigen::MatrixXd id(2, 2), ood(2, 2);
  id << 1, 0, 1, 0;
  ood << 1, 1, -1, 0;
  const auto s = osp::angle_analysis(id, ood);
  EXPECT_NEAR(s.mean_deg, (45.0 + 180.0) / 2.0, 1e-9);
  EXPECT_NEAR(s.mean_abs_cosine, (std::sqrt(0.5) + 1.0) / 2.0, 1e-12);
  EXPECT_THROW(osp::angle_analysis(Eigen::MatrixXd(0, 2), Eigen::MatrixXd(0, 2)), osp::DataError);
}

TEST(InterclassVariance, AntipodalClassesAndScaleInvariance) {
  Eigen::MatrixXd f(4, 3);
  f << 1, 0, 0, 2, 0, 0, -1, 0, 0, -5, 0, 0;
  const std::vector<int> y = {0, 0, 1, 1};
  EXPECT_NEAR(osp::interclass_variance(f, y), 1.0, 1e-12);
  EXPECT_NEAR(osp::interclass_variance(3.0 * f, y), 1.0, 1e-12);
  // identical class directions give no spread
  Eigen::MatrixXd same(2, 2);
  same << 1, 1, 2, 2;
  EXPECT_NEAR(osp::interclass_variance(same, std::vector<int>{0, 1}), 0.0, 1e-12);
}
