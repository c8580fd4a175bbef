#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>

#include <Eigen/Dense>

#include "osp/config.hpp"
#include "osp/data.hpp"
#include "osp/metrics.hpp"
#include "osp/model.hpp"
#include "osp/trainer.hpp"

namespace osp {

/// Held-out evaluation data: ID samples with 0-based labels plus OOD samples.
struct TestSet {
  InputShape shape;
  Eigen::MatrixXd id_inputs;
  std::vector<int> id_labels;
  Eigen::MatrixXd ood_inputs;
};

struct Experiment {
  SplitResult split;
  TestSet test;

  TrainingData training_data() const { return {split.labeled, split.unlabeled}; }
};

/// Builds the train split and held-out set the config describes: generated
/// blobs, or OSPDATA1 corpora from data_path / test_path.
Experiment build_experiment(const TrainConfig& config);
/// Blob experiment on an explicit layout; the config's blob spreads are ignored.
Experiment build_experiment(const TrainConfig& config, const BlobLayout& layout);

struct MetricsRecord {
  double id_accuracy = 0.0;
  std::optional<double> auroc;
  std::optional<double> mean_id_ood_angle_deg;
  std::optional<double> mean_abs_cosine;
  std::size_t angle_pairs = 0;
  double interclass_variance = 0.0;
  std::uint64_t config_hash = 0;
  std::uint64_t seed = 0;

  /// `key=value` lines; absent values are written as `na`.
  std::string to_text() const;
  bool operator==(const MetricsRecord&) const = default;
};

MetricsRecord parse_metrics(const std::string& text);

/// Held-out feature geometry: anchors are confident held-out ID features,
/// matched by predicted class against held-out OOD features.
struct HeldOutAnalysis {
  Eigen::MatrixXd id_features;
  Eigen::MatrixXd id_probs;
  Eigen::MatrixXd ood_features;
  Eigen::MatrixXd ood_probs;
  std::vector<IdOodPair> pairs;
};

HeldOutAnalysis analyze_held_out(const Model& model, const TestSet& test, const TrainConfig& config);

MetricsRecord evaluate(const Model& model, const TestSet& test, const TrainConfig& config);

/// Pre-training followed by fine-tuning, with optional per-iteration loss logs.
Trainer train(const TrainConfig& config, const Experiment& experiment, std::ostream* loss_log = nullptr);

/// The same run with pairing disabled and both orthogonality weights zeroed.
TrainConfig baseline_of(TrainConfig config);

} // namespace osp
