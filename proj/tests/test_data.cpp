#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

#include "osp/data.hpp"
#include "osp/errors.hpp"

namespace {

/// Every sample carries a unique id in its first coordinate.
osp::LabeledCorpus tagged_corpus(int classes, int per_class) {
  osp::LabeledCorpus c;
  c.shape = osp::InputShape::points(2);
  c.inputs.resize(classes * per_class, 2);
  for (int k = 0; k < classes; ++k) {
    for (int i = 0; i < per_class; ++i) {
      const int r = k * per_class + i;
      c.inputs(r, 0) = r;
      c.inputs(r, 1) = k;
      c.labels.push_back(k);
    }
  }
  return c;
}

osp::DatasetSpec blob_like_spec(double ratio) {
  osp::DatasetSpec s;
  s.id_classes = {0, 1, 2, 3};
  s.ood_classes = {4, 5, 6, 7};
  s.labeled_per_class = 10;
  s.unlabeled_total = 800;
  s.mismatch_ratio = ratio;
  s.seed = 5;
  return s;
}

} // namespace

TEST(SynthesizeSplit, ExactOodCountsAcrossRatios) {
  const auto corpus = tagged_corpus(8, 900);
  for (double ratio : {0.0, 0.3, 0.6, 0.9}) {
    const auto spec = blob_like_spec(ratio);
    const auto split = osp::synthesize_split(corpus, spec);
    const auto tally = std::count(split.truth.ood_mask.begin(), split.truth.ood_mask.end(), true);
    EXPECT_EQ(tally, std::lround(ratio * 800)) << ratio;
    EXPECT_EQ(split.unlabeled.size(), 800u);
    EXPECT_EQ(split.labeled.size(), 40u);
  }
}

TEST(SynthesizeSplit, MnistStyleSpec) {
  const auto corpus = tagged_corpus(10, 4000);
  osp::DatasetSpec spec;
  spec.id_classes = {0, 1, 2, 3, 4, 5};
  spec.ood_classes = {6, 7, 8, 9};
  spec.labeled_per_class = 10;
  spec.unlabeled_total = 30000;
  spec.mismatch_ratio = 0.3;
  EXPECT_EQ(spec.ood_count(), 9000);
  const auto split = osp::synthesize_split(corpus, spec);
  EXPECT_EQ(std::count(split.truth.ood_mask.begin(), split.truth.ood_mask.end(), true), 9000);
  EXPECT_EQ(split.labeled.size(), 60u);
}

TEST(SynthesizeSplit, BalancedDisjointAndLabeledFromIdOnly) {
  const auto corpus = tagged_corpus(8, 900);
  auto spec = blob_like_spec(0.3);
  spec.unlabeled_total = 803;  // 562 ID samples: 141, 141, 140, 140
  const auto split = osp::synthesize_split(corpus, spec);

  std::set<int> labeled_ids;
  for (Eigen::Index i = 0; i < split.labeled.inputs.rows(); ++i) {
    labeled_ids.insert(static_cast<int>(split.labeled.inputs(i, 0)));
    EXPECT_LT(split.labeled.inputs(i, 1), 4);
    EXPECT_EQ(split.labeled.labels[static_cast<std::size_t>(i)], static_cast<int>(split.labeled.inputs(i, 1)));
  }
  std::map<int, int> per_class;
  std::set<int> unlabeled_ids;
  for (Eigen::Index i = 0; i < split.unlabeled.inputs.rows(); ++i) {
    const int id = static_cast<int>(split.unlabeled.inputs(i, 0));
    EXPECT_FALSE(labeled_ids.count(id));
    EXPECT_TRUE(unlabeled_ids.insert(id).second);
    const int cls = static_cast<int>(split.unlabeled.inputs(i, 1));
    EXPECT_EQ(split.truth.source_class[static_cast<std::size_t>(i)], cls);
    EXPECT_EQ(split.truth.ood_mask[static_cast<std::size_t>(i)], cls >= 4);
    ++per_class[cls];
  }
  EXPECT_EQ(per_class[0], 141);
  EXPECT_EQ(per_class[1], 141);
  EXPECT_EQ(per_class[2], 140);
  EXPECT_EQ(per_class[3], 140);
}

TEST(SynthesizeSplit, Errors) {
  const auto corpus = tagged_corpus(8, 50);
  EXPECT_THROW(osp::synthesize_split(corpus, blob_like_spec(0.6)), osp::DataError);
  auto spec = blob_like_spec(0.5);
  spec.ood_classes = {3, 4};
  EXPECT_THROW(osp::synthesize_split(tagged_corpus(8, 900), spec), osp::DataError);
}

TEST(SynthesizeSplit, NoiseSource) {
  osp::LabeledCorpus corpus = tagged_corpus(4, 300);
  corpus.shape = osp::InputShape::image(1, 2, 1);
  auto spec = blob_like_spec(0.5);
  spec.ood_classes = {};
  spec.ood_source = osp::OodSource::UniformNoise;
  const auto split = osp::synthesize_split(corpus, spec);
  int noise = 0;
  for (std::size_t i = 0; i < split.truth.ood_mask.size(); ++i) {
    if (split.truth.ood_mask[i]) {
      ++noise;
      EXPECT_EQ(split.truth.source_class[i], -1);
    }
  }
  EXPECT_EQ(noise, 400);
}

TEST(Manifest, RowsAndHeader) {
  const auto split = osp::synthesize_split(tagged_corpus(8, 900), blob_like_spec(0.6));
  std::ostringstream os;
  osp::write_manifest_csv(os, split);
  std::istringstream is(os.str());
  std::string line;
  std::getline(is, line);
  EXPECT_EQ(line, "index,split,class,is_ood");
  int rows = 0, ood = 0;
  while (std::getline(is, line)) {
    ++rows;
    if (line.substr(line.size() - 2) == ",1") ++ood;
  }
  EXPECT_EQ(rows, 840);
  EXPECT_EQ(ood, 480);
}

TEST(Rotation, ImageMatchesCoordinateMap) {
  const int n = 5, channels = 2;
  const auto shape = osp::InputShape::image(n, n, channels);
  Eigen::VectorXd img(n * n * channels);
  for (Eigen::Index i = 0; i < img.size(); ++i) img(i) = static_cast<double>(i);
  const auto rots = osp::four_rotations(img, shape);
  EXPECT_EQ(rots[0], img);
  for (int k = 1; k < 4; ++k) {
    // pixel (y, x) of the k-th counter-clockwise rotation comes from applying
    // (y, x) -> (x, n-1-y) k times to the source coordinates
    for (int c = 0; c < channels; ++c)
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) {
          int sy = y, sx = x;
          for (int t = 0; t < k; ++t) {
            const int ny = sx, nx = n - 1 - sy;
            sy = ny;
            sx = nx;
          }
          EXPECT_EQ(rots[static_cast<std::size_t>(k)](c * n * n + y * n + x), img(c * n * n + sy * n + sx));
        }
  }
  // four quarter turns are the identity; two half turns equal one full turn
  EXPECT_EQ(osp::rotate_input(rots[3], shape, 1), img);
  EXPECT_EQ(osp::rotate_input(rots[2], shape, 2), img);
  EXPECT_EQ(osp::rotate_input(rots[1], shape, 1), rots[2]);
}

TEST(Rotation, CounterClockwiseConvention) {
  // a marked top-right pixel moves to the top-left after one quarter turn
  const auto shape = osp::InputShape::image(3, 3, 1);
  Eigen::VectorXd img = Eigen::VectorXd::Zero(9);
  img(2) = 1.0;
  EXPECT_EQ(osp::rotate_input(img, shape, 1)(0), 1.0);
}

TEST(Rotation, PointsAndErrors) {
  Eigen::Vector2d p(1.0, 2.0);
  const auto r = osp::four_rotations(p, osp::InputShape::points(2));
  EXPECT_EQ(r[1], Eigen::Vector2d(-2.0, 1.0));
  EXPECT_EQ(r[2], Eigen::Vector2d(-1.0, -2.0));
  EXPECT_EQ(r[3], Eigen::Vector2d(2.0, -1.0));
  EXPECT_THROW(osp::rotate_input(Eigen::VectorXd::Zero(6), osp::InputShape::image(2, 3, 1), 1), osp::ShapeError);
}

TEST(Rotation, BatchLayout) {
  Eigen::MatrixXd x(2, 2);
  x << 1, 0, 0, 1;
  const auto rb = osp::make_rotation_batch(x, osp::InputShape::points(2));
  ASSERT_EQ(rb.inputs.rows(), 8);
  for (int i = 0; i < 8; ++i) EXPECT_EQ(rb.labels[static_cast<std::size_t>(i)], i % 4);
  EXPECT_EQ(rb.inputs.row(5), Eigen::RowVector2d(-1, 0));
}

TEST(NoiseOod, RangeSeedAndMean) {
  const auto shape = osp::InputShape::image(10, 10, 1);
  EXPECT_EQ(osp::noise_ood(0, shape, osp::NoiseKind::Uniform, 1).rows(), 0);
  const auto g1 = osp::noise_ood(20, shape, osp::NoiseKind::Gaussian, 3);
  EXPECT_EQ(g1, osp::noise_ood(20, shape, osp::NoiseKind::Gaussian, 3));
  EXPECT_GE(g1.minCoeff(), 0.0);
  EXPECT_LE(g1.maxCoeff(), 1.0);
  const auto u = osp::noise_ood(10000, shape, osp::NoiseKind::Uniform, 4);
  EXPECT_NEAR(u.mean(), 0.5, 0.01);
  EXPECT_GE(u.minCoeff(), 0.0);
  EXPECT_LE(u.maxCoeff(), 1.0);
}

TEST(BatchSampler, EpochCoverageBeforeRepeats) {
  osp::BatchSampler s(37, 11);
  std::vector<std::size_t> seen;
  for (int b = 0; b < 8; ++b) {
    const auto idx = s.next(5);
    seen.insert(seen.end(), idx.begin(), idx.end());
  }
  // the first 37 draws are a permutation of the pool
  std::vector<std::size_t> first(seen.begin(), seen.begin() + 37);
  std::sort(first.begin(), first.end());
  for (std::size_t i = 0; i < 37; ++i) EXPECT_EQ(first[i], i);
}

TEST(BatchSampler, PoolSmallerThanBatchWrapsAround) {
  osp::BatchSampler s(3, 2);
  const auto idx = s.next(10);
  EXPECT_EQ(idx.size(), 10u);
  for (int e = 0; e < 3; ++e) {
    std::vector<std::size_t> chunk(idx.begin() + 3 * e, idx.begin() + 3 * e + 3);
    std::sort(chunk.begin(), chunk.end());
    EXPECT_EQ(chunk, (std::vector<std::size_t>{0, 1, 2}));
  }
  EXPECT_THROW(osp::BatchSampler(0, 1), osp::DataError);
}

TEST(BatchSampler, DeterministicAndSerializable) {
  osp::BatchSampler a(50, 9), b(50, 9);
  EXPECT_EQ(a.next(17), b.next(17));
  std::stringstream ss;
  a.save(ss);
  osp::BatchSampler c = osp::BatchSampler::load(ss);
  EXPECT_TRUE(c == a);
  EXPECT_EQ(a.next(40), c.next(40));
}

TEST(SampleBatch, Sizes) {
  const auto split = osp::synthesize_split(tagged_corpus(8, 900), blob_like_spec(0.6));
  osp::BatchSampler ls(split.labeled.size(), 1), us(split.unlabeled.size(), 2);
  const auto batch = osp::sample_batch(split.labeled, split.unlabeled, ls, us, 64, 320);
  EXPECT_EQ(batch.labeled_inputs.rows(), 64);
  EXPECT_EQ(batch.labels.size(), 64u);
  EXPECT_EQ(batch.unlabeled_inputs.rows(), 320);
  for (std::size_t i = 0; i < batch.unlabeled_indices.size(); ++i) {
    EXPECT_EQ(batch.unlabeled_inputs.row(static_cast<Eigen::Index>(i)),
              split.unlabeled.inputs.row(static_cast<Eigen::Index>(batch.unlabeled_indices[i])));
  }
}

TEST(Blobs, LabelsAndDeterminism) {
  const auto layout = osp::BlobLayout::standard();
  const auto a = osp::make_blobs(layout, 20, 3), b = osp::make_blobs(layout, 20, 3);
  EXPECT_EQ(a.inputs, b.inputs);
  EXPECT_EQ(a.size(), 20 * (layout.id_centers.size() + layout.ood_centers.size()));
  EXPECT_EQ(a.labels.front(), 0);
  EXPECT_EQ(a.labels.back(), static_cast<int>(layout.id_centers.size() + layout.ood_centers.size()) - 1);
}

TEST(Ospdata, RoundTripAndBadMagic) {
  osp::LabeledCorpus c;
  c.shape = osp::InputShape::image(2, 2, 1);
  c.inputs.resize(3, 4);
  c.inputs << 0, 0.25, 0.5, 1, 1, 0.5, 0.25, 0, 0.125, 0.375, 0.625, 0.875;
  c.labels = {0, 2, 1};
  std::stringstream ss;
  osp::write_ospdata(ss, c, 3);
  const auto back = osp::read_ospdata(ss);
  EXPECT_EQ(back.shape, c.shape);
  EXPECT_EQ(back.inputs, c.inputs);
  EXPECT_EQ(back.labels, c.labels);

  std::stringstream bad("NOTDATA!xxxxxxxxxxxx");
  EXPECT_THROW(osp::read_ospdata(bad), osp::FormatError);
}
