#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <vector>

#include <Eigen/Dense>

namespace osp {

class Model;

inline constexpr int kOtsuBins = 256;

/// Partition of the unlabeled pool into presumed-ID and presumed-OOD indices.
/// A sample is ID iff its score is >= threshold.
struct SplitState {
  std::vector<std::size_t> id_indices;
  std::vector<std::size_t> ood_indices;
  double threshold = 0.0;
  long epoch_computed = -1;

  /// Per-pool-index flag, true for presumed OOD.
  std::vector<bool> ood_flags(std::size_t pool_size) const;
  bool empty() const { return id_indices.empty() && ood_indices.empty(); }

  bool operator==(const SplitState&) const = default;
};

/// Per-sample ID-likeness in [0, 1] from the model's OOD head (higher = ID).
Eigen::VectorXd ood_score(const Model& model, const Eigen::MatrixXd& inputs);

/// Otsu threshold over a 256-bin histogram spanning [min, max] of the scores.
///
/// Candidates are the 255 inner bin boundaries; the one maximizing the
/// between-class variance wins, the lowest on ties. Throws
/// DegenerateDistributionError for fewer than two scores or a constant input.
double otsu_threshold(std::span<const double> scores);

/// Bin of `score` in the histogram used by otsu_threshold.
int otsu_bin(double score, double lo, double hi);

SplitState split_unlabeled(std::span<const double> scores, double threshold, long epoch = -1);

/// CSV with header `index,score,assignment`, one row per pool index.
void write_split_csv(std::ostream& os, const SplitState& split, std::span<const double> scores);

void save_split(std::ostream& os, const SplitState& split);
SplitState load_split(std::istream& is);

} // namespace osp
