#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "osp/shape.hpp"

namespace osp {

/// A class-labeled source corpus, one flattened sample per row.
struct LabeledCorpus {
  InputShape shape;
  Eigen::MatrixXd inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

enum class OodSource { Intra, GaussianNoise, UniformNoise };
enum class NoiseKind { Gaussian, Uniform };

std::string to_string(OodSource source);
OodSource parse_ood_source(const std::string& name);

struct DatasetSpec {
  std::vector<int> id_classes;
  std::vector<int> ood_classes;
  int labeled_per_class = 10;
  int unlabeled_total = 800;
  double mismatch_ratio = 0.0;
  OodSource ood_source = OodSource::Intra;
  std::uint64_t seed = 0;
  double noise_mean = 0.5;
  double noise_std = 0.25;

  /// Number of OOD samples in the unlabeled set: round(ratio * N_u).
  int ood_count() const;
};

/// Labeled training set; labels are positions in DatasetSpec::id_classes.
struct LabeledSet {
  InputShape shape;
  Eigen::MatrixXd inputs;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
};

/// Training-facing view of the unlabeled data. Carries no OOD ground truth.
struct UnlabeledPool {
  InputShape shape;
  Eigen::MatrixXd inputs;

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
};

/// Evaluation-only facts about the unlabeled pool.
struct GroundTruth {
  std::vector<bool> ood_mask;
  /// Source corpus class, or -1 for synthesized noise.
  std::vector<int> source_class;
};

struct SplitResult {
  LabeledSet labeled;
  UnlabeledPool unlabeled;
  GroundTruth truth;
  std::vector<int> labeled_source_class;
};

/// Builds the labeled / unlabeled split with exactly round(ratio * N_u) OOD
/// samples. ID unlabeled samples are balanced over id_classes (remainder to
/// the first classes) and disjoint from the labeled ones.
SplitResult synthesize_split(const LabeledCorpus& source, const DatasetSpec& spec);

/// CSV `index,split,class,is_ood`; `index` is the row within its split.
void write_manifest_csv(std::ostream& os, const SplitResult& split);

/// `quarter_turns` counter-clockwise 90 degree rotations of one sample.
/// Images must be square; points rotate their two coordinates in the plane.
Eigen::VectorXd rotate_input(const Eigen::Ref<const Eigen::VectorXd>& sample, const InputShape& shape,
                             int quarter_turns);

/// The four rotated copies of `sample`, index k rotated by k * 90 degrees.
std::array<Eigen::VectorXd, 4> four_rotations(const Eigen::Ref<const Eigen::VectorXd>& sample,
                                              const InputShape& shape);

struct RotationBatch {
  Eigen::MatrixXd inputs;   // row 4*i + k is sample i rotated k times
  std::vector<int> labels;  // k
};

RotationBatch make_rotation_batch(const Eigen::MatrixXd& inputs, const InputShape& shape);

/// Noise images in [0, 1]: Gaussian N(mean, std^2) clipped, or U[0, 1].
Eigen::MatrixXd noise_ood(int count, const InputShape& shape, NoiseKind kind, std::uint64_t seed,
                          double gaussian_mean = 0.5, double gaussian_std = 0.25);

/// Uniform sampling without replacement inside an epoch; a fresh permutation
/// is drawn whenever the pool is exhausted, also mid-batch.
class BatchSampler {
public:
  BatchSampler() = default;
  BatchSampler(std::size_t pool_size, std::uint64_t seed);

  std::vector<std::size_t> next(std::size_t count);
  std::size_t pool_size() const { return perm_.size(); }
  std::uint64_t epochs_started() const { return epoch_; }

  void save(std::ostream& os) const;
  static BatchSampler load(std::istream& is);

  bool operator==(const BatchSampler& other) const;

private:
  void reshuffle();

  std::mt19937_64 rng_;
  std::vector<std::size_t> perm_;
  std::size_t pos_ = 0;
  std::uint64_t epoch_ = 0;
};

struct Batch {
  Eigen::MatrixXd labeled_inputs;
  std::vector<int> labels;
  Eigen::MatrixXd unlabeled_inputs;
  std::vector<std::size_t> unlabeled_indices;
};

Batch sample_batch(const LabeledSet& labeled, const UnlabeledPool& unlabeled, BatchSampler& labeled_sampler,
                   BatchSampler& unlabeled_sampler, std::size_t batch_l, std::size_t batch_u);

/// Gaussian blobs in the plane: one blob per center, isotropic spread.
struct BlobLayout {
  std::vector<std::array<double, 2>> id_centers;
  std::vector<std::array<double, 2>> ood_centers;
  double spread = 0.5;
  /// Spread of the OOD blobs; negative means `spread`.
  double ood_spread = -1.0;

  /// The built-in desk-scale layout with four ID and four OOD blobs.
  static BlobLayout standard();
};

/// `per_class` points for every blob. ID blobs get classes 0..K-1, OOD blobs
/// K..K+J-1.
LabeledCorpus make_blobs(const BlobLayout& layout, int per_class, std::uint64_t seed);

/// Binary corpus format "OSPDATA1": magic, u32 height, width, channels,
/// class count, dtype (1 = float32), u64 sample count, then per sample an i32
/// label and the float32 little-endian values.
void write_ospdata(std::ostream& os, const LabeledCorpus& corpus, int class_count);
LabeledCorpus read_ospdata(std::istream& is);
LabeledCorpus read_ospdata_file(const std::string& path);
void write_ospdata_file(const std::string& path, const LabeledCorpus& corpus, int class_count);

} // namespace osp
