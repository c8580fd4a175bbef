#pragma once

#include <cstddef>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace osp {

inline constexpr double kProbFloor = 1e-12;

/// A batch loss and its gradient w.r.t. the probabilities it consumed.
struct LossValue {
  double value = 0.0;
  Eigen::MatrixXd d_probs;
  std::size_t count = 0;
};

/// Loss over (clean, pruned) prediction pairs with gradients for both sides.
struct PairLossValue {
  double value = 0.0;
  Eigen::MatrixXd d_clean;
  Eigen::MatrixXd d_pruned;
  std::size_t count = 0;
};

struct ScoreLossValue {
  double value = 0.0;
  Eigen::VectorXd d_scores;
  std::size_t count = 0;
};

/// Mean negative log-likelihood of `labels` under `probs`.
LossValue ce_loss(const Eigen::MatrixXd& probs, std::span<const int> labels);

/// Cross-entropy over rotated copies; rows come in groups of four with
/// labels 0..3 (multiples of 90 degrees).
LossValue rot_loss(const Eigen::MatrixXd& rotation_probs, std::span<const int> rotation_labels);

/// KL(p || q) = sum p (log p - log q) with both sides floored at 1e-12.
double kl_div(const Eigen::Ref<const Eigen::RowVectorXd>& p, const Eigen::Ref<const Eigen::RowVectorXd>& q);

/// Labeled orthogonality consistency: mean KL(clean, pruned) plus the
/// cross-entropy of the pruned prediction against the label. Both terms are
/// normalized by the total anchor count, or the CE term per class and summed
/// when `ce_per_class` is set.
PairLossValue odc_labeled(const Eigen::MatrixXd& clean, const Eigen::MatrixXd& pruned,
                          std::span<const int> labels, bool ce_per_class = false);

/// Unlabeled orthogonality consistency: sum of KL(clean, pruned) over the
/// total unlabeled anchor count.
PairLossValue odc_unlabeled(const Eigen::MatrixXd& clean, const Eigen::MatrixXd& pruned);

/// Mean binary cross-entropy of ID-likeness scores against 0/1 targets.
ScoreLossValue ood_detection_loss(const Eigen::VectorXd& scores, std::span<const double> targets);

/// Pseudo-label cross-entropy over rows whose max probability exceeds `tau`.
LossValue ssl_unlabeled_loss(const Eigen::MatrixXd& probs, double tau);

struct LossWeights {
  double ce = 1.0;
  double u = 1.0;
  double ood_l = 1.0;
  double ood_u = 1.0;
  double rot = 1.0;
  double odc_l = 1.0;
  double odc_u = 1.0;

  bool operator==(const LossWeights&) const = default;
};

struct LossReport {
  double ce = 0.0;
  double rot = 0.0;
  double ood_l = 0.0;
  double ood_u = 0.0;
  double ssl_u = 0.0;
  double odc_l = 0.0;
  double odc_u = 0.0;
  /// Noise-consistency share already folded into ood_l during pre-training.
  double consistency = 0.0;
  double total = 0.0;

  std::size_t n_labeled = 0;
  std::size_t n_rotations = 0;
  std::size_t n_ssl = 0;
  std::size_t n_anchor_l = 0;
  std::size_t n_anchor_u = 0;
  std::size_t n_pairs = 0;

  bool all_finite() const;
};

/// ce + rot + ood_l.
double total_pretrain(const LossReport& report);
/// Weighted ce + u + ood_l + ood_u + rot + odc_l + odc_u.
double total_finetune(const LossReport& report, const LossWeights& weights);

void write_loss_csv_header(std::ostream& os);
void write_loss_csv_row(std::ostream& os, long iteration, const std::string& stage, const LossReport& report,
                        double lr, std::size_t bank_size);

} // namespace osp
