#pragma once

#include <cstddef>
#include <cstdint>
#include <deque>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "osp/geometry.hpp"

namespace osp {

// Class ids are 0-based throughout: 0 .. num_classes-1.

enum class AnchorSource { Labeled, Unlabeled };

struct Anchor {
  FeatureVector feature;
  AnchorSource source = AnchorSource::Labeled;
  double class_prob = 0.0;
  int label = 0;
  /// Row of the feature in the batch it was collected from.
  std::size_t row = 0;
};

/// High-confidence ID features grouped by (pseudo-)class.
struct AnchorSet {
  std::vector<std::vector<Anchor>> per_class;

  AnchorSet() = default;
  explicit AnchorSet(int num_classes) : per_class(static_cast<std::size_t>(num_classes)) {}

  int num_classes() const { return static_cast<int>(per_class.size()); }
  std::size_t size() const;
  std::size_t count(AnchorSource source) const;
};

/// Labeled rows whose probability on their true class exceeds `delta`.
AnchorSet collect_labeled_anchors(const Eigen::MatrixXd& features, const Eigen::MatrixXd& probs,
                                  std::span<const int> labels, double delta);

/// Unlabeled rows whose maximum class probability exceeds `delta`, grouped by
/// argmax (lowest index on ties).
AnchorSet collect_unlabeled_anchors(const Eigen::MatrixXd& features, const Eigen::MatrixXd& probs,
                                    double delta);

AnchorSet union_anchors(const AnchorSet& labeled, const AnchorSet& unlabeled);

/// Index of the largest entry; ties go to the lowest index.
int argmax(const Eigen::Ref<const Eigen::VectorXd>& row);

/// True iff the row predicts `predicted_class`, the sample is flagged OOD and
/// its confidence on that class stays below `gamma_ood`.
bool is_recyclable_ood(const Eigen::Ref<const Eigen::VectorXd>& prob_row, int predicted_class,
                       bool ood_flag, double gamma_ood);

/// Per-class bounded FIFO queues of detached OOD features.
class RecyclableOodBank {
public:
  RecyclableOodBank() = default;
  RecyclableOodBank(int num_classes, std::size_t capacity);

  void push(int class_id, FeatureVector feature);

  const std::deque<FeatureVector>& queue(int class_id) const;
  std::size_t size(int class_id) const { return queue(class_id).size(); }
  std::size_t total_size() const;
  std::size_t capacity() const { return capacity_; }
  int num_classes() const { return static_cast<int>(queues_.size()); }

  void save(std::ostream& os) const;
  static RecyclableOodBank load(std::istream& is);

  bool operator==(const RecyclableOodBank&) const = default;

private:
  std::size_t capacity_ = 0;
  std::vector<std::deque<FeatureVector>> queues_;
};

struct IdOodPair {
  FeatureVector id_feature;
  FeatureVector ood_feature;
  int class_id = 0;
  AnchorSource source = AnchorSource::Labeled;
  std::size_t anchor_row = 0;
  double class_prob = 0.0;
};

/// Pair every anchor with a uniformly drawn feature from the queue of its
/// class. Anchors whose queue is empty are skipped. Deterministic in `seed`.
std::vector<IdOodPair> match_pairs(const AnchorSet& anchors, const RecyclableOodBank& bank,
                                   std::uint64_t seed);

} // namespace osp
