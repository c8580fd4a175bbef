#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "osp/selection.hpp"

namespace osp {

/// Fraction of predictions equal to their label.
double accuracy(std::span<const int> predictions, std::span<const int> labels);

/// Argmax of each row.
std::vector<int> predict(const Eigen::MatrixXd& probs);

/// Mann-Whitney AUROC: probability that a positive (ID, label 1) outscores a
/// negative (label 0), ties counted one half. Throws unless both are present.
double auroc(std::span<const double> scores, std::span<const int> is_positive);

inline constexpr int kAngleBins = 18;  // 10 degree bins over [0, 180]

struct AngleSummary {
  double mean_deg = 0.0;
  double mean_abs_cosine = 0.0;
  std::size_t count = 0;
  std::vector<std::size_t> histogram = std::vector<std::size_t>(kAngleBins, 0);
};

/// Angles between each pair's ID and OOD features. Throws on no pairs.
AngleSummary angle_analysis(const std::vector<IdOodPair>& pairs);
AngleSummary angle_analysis(const Eigen::MatrixXd& id_features, const Eigen::MatrixXd& ood_features);

/// Count-weighted trace of the between-class scatter of the L2-normalized
/// class-mean features around their weighted mean. Needs two classes.
double interclass_variance(const Eigen::MatrixXd& features, std::span<const int> labels);

} // namespace osp
