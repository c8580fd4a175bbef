#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "osp/detector.hpp"
#include "osp/errors.hpp"
#include "osp/model.hpp"
#include "oracles.hpp"

TEST(Otsu, BimodalExample) {
  std::vector<double> s(50, 0.1);
  s.insert(s.end(), 50, 0.9);
  const double t = osp::otsu_threshold(s);
  EXPECT_GT(t, 0.1);
  EXPECT_LE(t, 0.9);
  const auto split = osp::split_unlabeled(s, t);
  EXPECT_EQ(split.id_indices.size(), 50u);
  EXPECT_EQ(split.ood_indices.size(), 50u);
}

TEST(Otsu, Degenerate) {
  EXPECT_THROW(osp::otsu_threshold(std::vector<double>{0.3}), osp::DegenerateDistributionError);
  EXPECT_THROW(osp::otsu_threshold(std::vector<double>(10, 0.4)), osp::DegenerateDistributionError);
  EXPECT_THROW(osp::otsu_threshold(std::vector<double>{}), osp::DegenerateDistributionError);
}

TEST(Otsu, MatchesExhaustiveOracle) {
  std::mt19937_64 rng(7);
  for (int set = 0; set < 300; ++set) {
    const auto scores = oracle::random_scores(rng, set);
    EXPECT_EQ(osp::otsu_threshold(scores), oracle::otsu_exhaustive(scores)) << "set " << set;
  }
}

TEST(Otsu, PermutationInvariant) {
  std::mt19937_64 rng(8);
  for (int set = 0; set < 50; ++set) {
    auto scores = oracle::random_scores(rng, set);
    const double t = osp::otsu_threshold(scores);
    std::shuffle(scores.begin(), scores.end(), rng);
    EXPECT_EQ(osp::otsu_threshold(scores), t);
  }
}

TEST(Split, Examples) {
  const std::vector<double> s = {0.2, 0.9};
  const auto split = osp::split_unlabeled(s, 0.5);
  EXPECT_EQ(split.ood_indices, std::vector<std::size_t>{0});
  EXPECT_EQ(split.id_indices, std::vector<std::size_t>{1});
  EXPECT_TRUE(osp::split_unlabeled(s, 0.1).ood_indices.empty());
  EXPECT_THROW(osp::split_unlabeled(s, std::nan("")), std::invalid_argument);
}

TEST(Split, PartitionMatchesElementwiseOracle) {
  std::mt19937_64 rng(9);
  std::uniform_real_distribution<double> u(0, 1);
  for (int t = 0; t < 200; ++t) {
    std::vector<double> s(1 + rng() % 300);
    for (auto& v : s) v = std::round(u(rng) * 20) / 20;  // many exact ties with the threshold
    const double thr = std::round(u(rng) * 20) / 20;
    const auto split = osp::split_unlabeled(s, thr, 3);
    EXPECT_EQ(split.id_indices.size() + split.ood_indices.size(), s.size());
    for (auto i : split.id_indices) EXPECT_GE(s[i], thr);
    for (auto i : split.ood_indices) EXPECT_LT(s[i], thr);
    const auto flags = split.ood_flags(s.size());
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(flags[i], s[i] < thr);
  }
}

TEST(Split, CsvAndBinaryRoundTrip) {
  const std::vector<double> s = {0.2, 0.9, 0.5};
  const auto split = osp::split_unlabeled(s, 0.5, 10);
  std::ostringstream csv;
  osp::write_split_csv(csv, split, s);
  EXPECT_EQ(csv.str(), "index,score,assignment\n0,0.20000000000000001,ood\n1,0.90000000000000002,id\n2,0.5,id\n");
  std::stringstream bin;
  osp::save_split(bin, split);
  EXPECT_EQ(osp::load_split(bin), split);
}

TEST(OodScore, ZeroHeadGivesHalf) {
  osp::ModelSpec spec;
  spec.hidden = 8;
  spec.feature_dim = 4;
  osp::Model m(spec, 1);
  const auto& b = m.block("ood.w");
  m.params().segment(b.offset, b.rows * b.cols).setZero();
  Eigen::MatrixXd x = Eigen::MatrixXd::Random(6, 2);
  const Eigen::VectorXd s = osp::ood_score(m, x);
  for (Eigen::Index i = 0; i < s.size(); ++i) EXPECT_DOUBLE_EQ(s(i), 0.5);
}

TEST(OodScore, InUnitInterval) {
  osp::ModelSpec spec;
  osp::Model m(spec, 2);
  const Eigen::MatrixXd x = 50.0 * Eigen::MatrixXd::Random(64, 2);
  const Eigen::VectorXd s = osp::ood_score(m, x);
  EXPECT_GE(s.minCoeff(), 0.0);
  EXPECT_LE(s.maxCoeff(), 1.0);
}
