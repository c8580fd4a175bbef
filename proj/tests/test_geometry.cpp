#include <gtest/gtest.h>

#include <random>

#include "osp/errors.hpp"
#include "osp/geometry.hpp"

using osp::FeatureVector;

namespace {

FeatureVector vec(std::initializer_list<double> v) {
  FeatureVector out(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) out(i++) = x;
  return out;
}

FeatureVector random_vec(std::mt19937_64& rng, int d) {
  std::normal_distribution<double> n(0.0, 1.0);
  FeatureVector v(d);
  for (int i = 0; i < d; ++i) v(i) = n(rng);
  return v;
}

} // namespace

TEST(Cosine, Examples) {
  EXPECT_DOUBLE_EQ(osp::cosine(vec({1, 0}), vec({0, 1})), 0.0);
  EXPECT_DOUBLE_EQ(osp::cosine(vec({2, 0}), vec({5, 0})), 1.0);
  EXPECT_NEAR(osp::cosine(vec({3, 4}), vec({1, 0})), 0.6, 1e-15);
}

TEST(Cosine, ZeroNormThrows) {
  EXPECT_THROW(osp::cosine(vec({0, 0}), vec({1, 0})), osp::DegenerateVectorError);
  EXPECT_THROW(osp::cosine(vec({1, 0}), vec({0, 0})), osp::DegenerateVectorError);
}

TEST(Cosine, ClampedForNearlyParallel) {
  const FeatureVector a = vec({1e-3, 1e-3, 1e-3});
  const double c = osp::cosine(a, 7.0 * a);
  EXPECT_LE(c, 1.0);
  EXPECT_GE(c, -1.0);
}

TEST(ProjectParallel, Examples) {
  EXPECT_TRUE(osp::project_parallel(vec({3, 4}), vec({1, 0})).isApprox(vec({3, 0})));
  EXPECT_TRUE(osp::project_parallel(vec({0, 1}), vec({1, 0})).isZero());
  EXPECT_TRUE(osp::project_parallel(vec({1, 1}), vec({2, 2})).isApprox(vec({1, 1})));
  EXPECT_THROW(osp::project_parallel(vec({1, 1}), vec({0, 0})), osp::DegenerateVectorError);
}

TEST(SoftOrthogonalDecompose, Examples) {
  const auto d = osp::soft_orthogonal_decompose(vec({3, 4}), vec({1, 0}), 0.8);
  EXPECT_NEAR(d.pruned(0), 0.6, 1e-12);
  EXPECT_NEAR(d.pruned(1), 4.0, 1e-12);
  EXPECT_NEAR(d.cosine, 0.6, 1e-12);

  const auto orth = osp::soft_orthogonal_decompose(vec({0, 2}), vec({5, 0}), 0.37);
  EXPECT_TRUE(orth.pruned.isApprox(vec({0, 2})));

  const auto par = osp::soft_orthogonal_decompose(vec({1, 1}), vec({1, 1}), 0.8);
  EXPECT_NEAR(par.pruned(0), 0.2, 1e-12);
  EXPECT_NEAR(par.pruned(1), 0.2, 1e-12);
}

TEST(SoftOrthogonalDecompose, RejectsBadInputs) {
  EXPECT_THROW(osp::soft_orthogonal_decompose(vec({1, 2}), vec({0, 0}), 0.5), osp::DegenerateVectorError);
  EXPECT_THROW(osp::soft_orthogonal_decompose(vec({1, 2}), vec({1, 0}), 1.5), std::invalid_argument);
  EXPECT_THROW(osp::soft_orthogonal_decompose(vec({1, 2}), vec({1, 0}), -0.1), std::invalid_argument);
  EXPECT_THROW(osp::soft_orthogonal_decompose(vec({1, 2}), vec({1, 0, 0}), 0.5), osp::ShapeError);
}

TEST(SoftOrthogonalDecompose, HomogeneousInFeature) {
  std::mt19937_64 rng(3);
  for (int t = 0; t < 200; ++t) {
    const FeatureVector z = random_vec(rng, 16), o = random_vec(rng, 16);
    const double c = std::uniform_real_distribution<double>(-5, 5)(rng);
    const auto a = osp::soft_orthogonal_decompose(c * z, o, 0.8).pruned;
    const auto b = osp::soft_orthogonal_decompose(z, o, 0.8).pruned;
    EXPECT_LT((a - c * b).lpNorm<Eigen::Infinity>(), 1e-12 * (1 + std::abs(c) * z.lpNorm<Eigen::Infinity>()));
  }
}

TEST(SoftOrthogonalBackward, MatchesFiniteDifferences) {
  std::mt19937_64 rng(11);
  const int d = 6;
  const double h = 1e-6;
  for (int t = 0; t < 20; ++t) {
    const FeatureVector z = random_vec(rng, d), o = random_vec(rng, d), g = random_vec(rng, d);
    const double alpha = std::uniform_real_distribution<double>(0, 1)(rng);
    const auto grad = osp::soft_orthogonal_backward(z, o, alpha, g);
    auto f = [&](const FeatureVector& zz, const FeatureVector& oo) {
      return g.dot(osp::soft_orthogonal_decompose(zz, oo, alpha).pruned);
    };
    for (int i = 0; i < d; ++i) {
      FeatureVector zp = z, zm = z, op = o, om = o;
      zp(i) += h; zm(i) -= h; op(i) += h; om(i) -= h;
      EXPECT_NEAR(grad.d_feature(i), (f(zp, o) - f(zm, o)) / (2 * h), 1e-7);
      EXPECT_NEAR(grad.d_reference(i), (f(z, op) - f(z, om)) / (2 * h), 1e-7);
    }
  }
}
