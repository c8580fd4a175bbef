#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include "osp/errors.hpp"
#include "osp/selection.hpp"

namespace {

Eigen::MatrixXd random_simplex(std::mt19937_64& rng, int n, int k, double sharpness) {
  std::gamma_distribution<double> g(sharpness, 1.0);
  Eigen::MatrixXd p(n, k);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < k; ++j) p(i, j) = g(rng) + 1e-300;
    p.row(i) /= p.row(i).sum();
  }
  return p;
}

Eigen::MatrixXd features_for(int n, int d) {
  Eigen::MatrixXd f(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) f(i, j) = i * 100 + j;
  return f;
}

osp::FeatureVector feat(double a, double b) {
  osp::FeatureVector f(2);
  f << a, b;
  return f;
}

} // namespace

TEST(Argmax, LowestIndexWinsTies) {
  Eigen::VectorXd p(4);
  p << 0.1, 0.4, 0.4, 0.1;
  EXPECT_EQ(osp::argmax(p), 1);
}

TEST(LabeledAnchors, PaperExampleAndUniform) {
  Eigen::MatrixXd probs(1, 3);
  probs << 0.05, 0.05, 0.9;
  const int label = 2;
  const auto a = osp::collect_labeled_anchors(features_for(1, 2), probs, std::span<const int>(&label, 1), 0.8);
  ASSERT_EQ(a.per_class[2].size(), 1u);
  EXPECT_EQ(a.per_class[2][0].label, 2);
  EXPECT_EQ(a.per_class[2][0].source, osp::AnchorSource::Labeled);

  const Eigen::MatrixXd uniform = Eigen::MatrixXd::Constant(5, 10, 0.1);
  const std::vector<int> labels(5, 3);
  EXPECT_EQ(osp::collect_labeled_anchors(features_for(5, 2), uniform, labels, 0.8).size(), 0u);
}

TEST(UnlabeledAnchors, Examples) {
  Eigen::MatrixXd probs(2, 2);
  probs << 0.05, 0.95, 0.5, 0.5;
  const auto a = osp::collect_unlabeled_anchors(features_for(2, 2), probs, 0.8);
  EXPECT_EQ(a.size(), 1u);
  ASSERT_EQ(a.per_class[1].size(), 1u);
  EXPECT_EQ(a.per_class[1][0].row, 0u);
  EXPECT_EQ(a.per_class[1][0].source, osp::AnchorSource::Unlabeled);
}

TEST(Anchors, MatchBruteForceFilters) {
  std::mt19937_64 rng(42);
  for (int batch = 0; batch < 1000; ++batch) {
    const int n = 1 + static_cast<int>(rng() % 64), k = 2 + static_cast<int>(rng() % 6);
    const Eigen::MatrixXd probs = random_simplex(rng, n, k, 0.3);
    const Eigen::MatrixXd feats = features_for(n, 3);
    std::vector<int> labels(static_cast<std::size_t>(n));
    for (auto& l : labels) l = static_cast<int>(rng() % static_cast<unsigned>(k));

    const auto lab = osp::collect_labeled_anchors(feats, probs, labels, 0.8);
    const auto unl = osp::collect_unlabeled_anchors(feats, probs, 0.8);
    std::vector<std::vector<std::size_t>> want_lab(static_cast<std::size_t>(k)), want_unl(static_cast<std::size_t>(k));
    for (int i = 0; i < n; ++i) {
      if (probs(i, labels[static_cast<std::size_t>(i)]) > 0.8) want_lab[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])].push_back(static_cast<std::size_t>(i));
      int best = 0;
      for (int c = 1; c < k; ++c)
        if (probs(i, c) > probs(i, best)) best = c;
      if (probs(i, best) > 0.8) want_unl[static_cast<std::size_t>(best)].push_back(static_cast<std::size_t>(i));
    }
    for (int c = 0; c < k; ++c) {
      const auto uc = static_cast<std::size_t>(c);
      ASSERT_EQ(lab.per_class[uc].size(), want_lab[uc].size());
      ASSERT_EQ(unl.per_class[uc].size(), want_unl[uc].size());
      for (std::size_t j = 0; j < want_lab[uc].size(); ++j) {
        EXPECT_EQ(lab.per_class[uc][j].row, want_lab[uc][j]);
        EXPECT_TRUE(lab.per_class[uc][j].feature.isApprox(feats.row(static_cast<Eigen::Index>(want_lab[uc][j])).transpose()));
      }
      for (std::size_t j = 0; j < want_unl[uc].size(); ++j) EXPECT_EQ(unl.per_class[uc][j].row, want_unl[uc][j]);
    }
  }
}

TEST(UnionAnchors, ConcatenatesPerClass) {
  osp::AnchorSet empty(3);
  EXPECT_EQ(osp::union_anchors(empty, empty).size(), 0u);

  osp::AnchorSet a(3), b(3);
  a.per_class[1].push_back({feat(1, 0), osp::AnchorSource::Labeled, 0.9, 1, 0});
  b.per_class[1].push_back({feat(0, 1), osp::AnchorSource::Unlabeled, 0.95, 1, 4});
  b.per_class[2].push_back({feat(1, 1), osp::AnchorSource::Unlabeled, 0.85, 2, 5});
  const auto u = osp::union_anchors(a, b);
  ASSERT_EQ(u.per_class[1].size(), 2u);
  EXPECT_EQ(u.per_class[1][0].source, osp::AnchorSource::Labeled);
  EXPECT_EQ(u.per_class[1][1].source, osp::AnchorSource::Unlabeled);
  EXPECT_EQ(u.per_class[2].size(), 1u);
  EXPECT_EQ(u.count(osp::AnchorSource::Unlabeled), 2u);
}

TEST(Recyclable, TruthTable) {
  const double gamma = 0.2;
  for (int mask = 0; mask < 8; ++mask) {
    const bool is_argmax = mask & 1, flag = mask & 2, low = mask & 4;
    Eigen::VectorXd p(10);
    if (low) {
      p.setConstant(0.85 / 9.0);
      p(3) = 0.15;
    } else {
      p.setConstant(0.05 / 9.0);
      p(3) = 0.95;
    }
    const int c = is_argmax ? osp::argmax(p) : (osp::argmax(p) + 1) % 10;
    const bool expect = is_argmax && flag && p(c) < gamma;
    EXPECT_EQ(osp::is_recyclable_ood(p, c, flag, gamma), expect) << "mask " << mask;
    if (is_argmax) {
      EXPECT_EQ(p(c) < gamma, low);
    }
  }
}

TEST(Recyclable, PaperExample) {
  Eigen::VectorXd p = Eigen::VectorXd::Constant(10, 0.85 / 9.0);
  p(0) = 0.15;
  p /= p.sum();
  EXPECT_TRUE(osp::is_recyclable_ood(p, 0, true, 0.2));
  EXPECT_FALSE(osp::is_recyclable_ood(p, 0, false, 0.2));
}

TEST(Bank, FifoAndIsolation) {
  osp::RecyclableOodBank bank(3, 2);
  bank.push(0, feat(1, 0));
  bank.push(0, feat(2, 0));
  bank.push(0, feat(3, 0));
  ASSERT_EQ(bank.size(0), 2u);
  EXPECT_EQ(bank.queue(0)[0](0), 2.0);
  EXPECT_EQ(bank.queue(0)[1](0), 3.0);
  EXPECT_EQ(bank.size(1), 0u);
  EXPECT_THROW(bank.push(3, feat(1, 1)), osp::ShapeError);
}

TEST(Bank, LengthIsMinOfPushesAndCapacity) {
  for (std::size_t cap : {1u, 5u, 17u}) {
    osp::RecyclableOodBank bank(2, cap);
    for (std::size_t n = 1; n <= 40; ++n) {
      bank.push(1, feat(static_cast<double>(n), 0));
      EXPECT_EQ(bank.size(1), std::min(n, cap));
      EXPECT_EQ(bank.queue(1).back()(0), static_cast<double>(n));
    }
  }
}

TEST(Bank, SaveLoadRoundTrip) {
  osp::RecyclableOodBank bank(2, 3);
  bank.push(0, feat(1.5, -2));
  bank.push(1, feat(0.25, 9));
  std::stringstream ss;
  bank.save(ss);
  EXPECT_EQ(osp::RecyclableOodBank::load(ss), bank);
}

TEST(MatchPairs, MembershipAndEmptyQueues) {
  osp::RecyclableOodBank bank(3, 10);
  for (int i = 0; i < 5; ++i) bank.push(1, feat(i, 0));
  osp::AnchorSet anchors(3);
  for (int i = 0; i < 3; ++i) anchors.per_class[1].push_back({feat(0, 1), osp::AnchorSource::Labeled, 0.9, 1, static_cast<std::size_t>(i)});
  anchors.per_class[2].push_back({feat(1, 1), osp::AnchorSource::Unlabeled, 0.9, 2, 7});
  const auto pairs = osp::match_pairs(anchors, bank, 5);
  ASSERT_EQ(pairs.size(), 3u);
  for (const auto& p : pairs) {
    EXPECT_EQ(p.class_id, 1);
    const auto& q = bank.queue(1);
    EXPECT_TRUE(std::any_of(q.begin(), q.end(), [&](const osp::FeatureVector& f) { return f == p.ood_feature; }));
  }
  const auto again = osp::match_pairs(anchors, bank, 5);
  for (std::size_t i = 0; i < pairs.size(); ++i) EXPECT_EQ(pairs[i].ood_feature, again[i].ood_feature);
}

TEST(MatchPairs, UniformDraws) {
  osp::RecyclableOodBank bank(1, 4);
  for (int i = 0; i < 4; ++i) bank.push(0, feat(i, 0));
  osp::AnchorSet anchors(1);
  for (int i = 0; i < 10000; ++i) anchors.per_class[0].push_back({feat(0, 1), osp::AnchorSource::Unlabeled, 0.9, 0, 0});
  std::vector<int> counts(4, 0);
  for (const auto& p : osp::match_pairs(anchors, bank, 2024)) ++counts[static_cast<std::size_t>(p.ood_feature(0))];
  const double mean = 2500.0, sigma = std::sqrt(10000 * 0.25 * 0.75);
  for (int c : counts) EXPECT_LT(std::abs(c - mean), 4 * sigma);
}
