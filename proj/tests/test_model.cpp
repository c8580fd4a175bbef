#include <gtest/gtest.h>

#include <random>

#include "gradcheck.hpp"
#include "osp/errors.hpp"
#include "osp/model.hpp"

namespace {

osp::Model small_mlp(std::uint64_t seed) {
  osp::ModelSpec spec;
  spec.hidden = 12;
  spec.feature_dim = 16;
  return osp::Model(spec, seed);
}

} // namespace

TEST(Model, ProbabilitiesOnSimplex) {
  const osp::Model m = small_mlp(1);
  const Eigen::MatrixXd x = 3.0 * Eigen::MatrixXd::Random(20, 2);
  const auto p = m.forward(x);
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    EXPECT_NEAR(p.class_probs.row(i).sum(), 1.0, 1e-12);
    EXPECT_NEAR(p.rotation_probs.row(i).sum(), 1.0, 1e-12);
  }
  EXPECT_EQ(p.features.cols(), 16);
  EXPECT_EQ(p.class_probs.cols(), 4);
  EXPECT_EQ(p.rotation_probs.cols(), 4);
}

TEST(Model, CleanPathDeterministic) {
  const osp::Model m = small_mlp(2);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(5, 2);
  EXPECT_EQ(m.forward(x).class_probs, m.forward(x).class_probs);
}

TEST(Model, NoiseContinuity) {
  const osp::Model m = small_mlp(3);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(10, 2);
  std::mt19937_64 rng(5);
  const auto noisy = m.forward(x, 1e-4, &rng);
  EXPECT_LT((noisy.class_probs - m.forward(x).class_probs).cwiseAbs().maxCoeff(), 1e-3);
  EXPECT_THROW(m.forward(x, 0.1, nullptr), std::invalid_argument);
}

TEST(Model, SeededNoiseIsReproducible) {
  const osp::Model m = small_mlp(3);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(10, 2);
  std::mt19937_64 a(9), b(9);
  EXPECT_EQ(m.forward(x, 0.1, &a).features, m.forward(x, 0.1, &b).features);
}

TEST(Model, ClassifyFeatureMatchesForward) {
  const osp::Model m = small_mlp(4);
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(7, 2);
  const auto p = m.forward(x);
  EXPECT_TRUE(m.classify_feature(p.features).isApprox(p.class_probs, 1e-14));
  EXPECT_THROW(m.classify_feature(Eigen::MatrixXd::Zero(2, 3)), osp::ShapeError);
  EXPECT_THROW(m.forward(Eigen::MatrixXd::Zero(2, 3)), osp::ShapeError);
}

TEST(Model, SeededInitialization) {
  EXPECT_EQ(small_mlp(10).params(), small_mlp(10).params());
  EXPECT_NE(small_mlp(10).params(), small_mlp(11).params());
  const osp::Model m = small_mlp(10);
  for (const auto& b : m.blocks()) {
    if (b.name.size() > 2 && b.name.substr(b.name.size() - 2) == ".b") {
      EXPECT_TRUE(m.params().segment(b.offset, b.rows * b.cols).isZero()) << b.name;
    }
  }
}

TEST(Model, CnnShapesAndValidation) {
  osp::ModelSpec spec;
  spec.arch = osp::Architecture::Cnn;
  spec.input = osp::InputShape::image(8, 8, 3);
  spec.feature_dim = 16;
  const osp::Model m(spec, 1);
  const auto p = m.forward(Eigen::MatrixXd::Random(3, 8 * 8 * 3));
  EXPECT_EQ(p.features.rows(), 3);
  EXPECT_EQ(p.features.cols(), 16);
  spec.input = osp::InputShape::image(6, 6, 1);
  EXPECT_THROW(osp::Model(spec, 1), osp::ConfigError);
}

TEST(Gradients, MlpObjectivesMatchFiniteDifferences) {
  for (std::uint64_t seed : {1u, 2u}) {
    for (const auto& r : gradcheck::run_all(seed)) {
      EXPECT_LT(r.max_rel_error, gradcheck::kTolerance) << r.name << " seed " << seed;
      EXPECT_GT(r.grad_norm, 0.0) << r.name;
    }
  }
}

TEST(Gradients, CnnObjectivesMatchFiniteDifferences) {
  for (std::uint64_t seed : {3u, 4u, 5u}) {
    for (const auto& r : gradcheck::run_all(seed, osp::Architecture::Cnn)) {
      EXPECT_LT(r.max_rel_error, gradcheck::kTolerance) << r.name << " seed " << seed;
      EXPECT_GT(r.grad_norm, 0.0) << r.name;
    }
  }
}

TEST(Gradients, ClassifyFeatureInput) {
  const osp::Model m0 = small_mlp(5);
  osp::Model m = m0;
  Eigen::MatrixXd z = Eigen::MatrixXd::Random(1, 16);
  const int c = 2;
  auto f = [&](const Eigen::MatrixXd& zz) { return -std::log(m.classify_feature(zz)(0, c)); };
  const Eigen::MatrixXd p = m.classify_feature(z);
  Eigen::MatrixXd d_probs = Eigen::MatrixXd::Zero(1, 4);
  d_probs(0, c) = -1.0 / p(0, c);
  const Eigen::MatrixXd dz = m.classifier_backward(z, osp::softmax_backward(p, d_probs));
  for (int j = 0; j < 16; ++j) {
    Eigen::MatrixXd up = z, down = z;
    up(0, j) += 1e-5;
    down(0, j) -= 1e-5;
    const double numeric = (f(up) - f(down)) / 2e-5;
    EXPECT_LT(std::abs(numeric - dz(0, j)) / std::max({std::abs(numeric), std::abs(dz(0, j)), 1e-8}), 1e-4);
  }
}
