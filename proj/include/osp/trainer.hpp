#pragma once

#include <cstdint>
#include <iosfwd>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "osp/config.hpp"
#include "osp/data.hpp"
#include "osp/detector.hpp"
#include "osp/losses.hpp"
#include "osp/model.hpp"
#include "osp/selection.hpp"

namespace osp {

/// Cosine decay from lr0 at step 0 to 0 at `total_steps`.
double cosine_lr(long step, long total_steps, double lr0);

/// Independent, reproducible sub-seed for a named stream.
std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream);

namespace streams {
inline constexpr std::uint64_t kModel = 1;
inline constexpr std::uint64_t kLabeledSampler = 2;
inline constexpr std::uint64_t kUnlabeledSampler = 3;
inline constexpr std::uint64_t kNoise = 4;
inline constexpr std::uint64_t kPairing = 5;
inline constexpr std::uint64_t kData = 6;
inline constexpr std::uint64_t kTest = 7;
inline constexpr std::uint64_t kEval = 8;
} // namespace streams

/// Data the training loop may see: no OOD ground truth.
struct TrainingData {
  LabeledSet labeled;
  UnlabeledPool unlabeled;
};

/// Pre-training objective for one batch: ce + rot + ood_l, where ood_l holds
/// the OOD-head BCE (labeled as ID, optionally the unlabeled batch as
/// provisional negatives) and the clean-vs-noisy prediction KL on the
/// unlabeled batch. `feature_noise` is the perturbation added to the
/// unlabeled features. Gradients accumulate into `model.grads()`.
LossReport pretrain_objective(Model& model, const Batch& batch, const InputShape& shape, const TrainConfig& config,
                              const Eigen::MatrixXd& feature_noise);

struct FinetuneEval {
  LossReport report;
  Eigen::MatrixXd unlabeled_features;
  Eigen::MatrixXd unlabeled_probs;
  std::vector<IdOodPair> pairs;
};

/// Fine-tuning objective for one batch. `batch_ood` flags unlabeled rows the
/// current split marks OOD. Terms with zero weight are reported but not
/// differentiated; pairs are built only when config.pairing is set.
FinetuneEval finetune_objective(Model& model, const Batch& batch, const InputShape& shape,
                                const std::vector<bool>& batch_ood, const RecyclableOodBank& bank,
                                const TrainConfig& config, std::uint64_t pair_seed);

/// Owns all mutable training state: parameters, momentum, bank, split,
/// samplers and random streams.
class Trainer {
public:
  Trainer(TrainConfig config, TrainingData data);

  const TrainConfig& config() const { return config_; }
  const TrainingData& data() const { return data_; }
  const Model& model() const { return model_; }
  const RecyclableOodBank& bank() const { return bank_; }
  const SplitState& split() const { return split_; }
  long pretrain_iteration() const { return pre_iter_; }
  long finetune_iteration() const { return ft_iter_; }
  long iterations_per_epoch() const;

  /// Snapshot written before a DivergenceError is thrown; empty disables it.
  void set_snapshot_path(std::string path) { snapshot_path_ = std::move(path); }

  LossReport pretrain_step();
  LossReport finetune_step();

  /// Runs the remaining iterations of a stage, one CSV row per iteration.
  void run_pretrain(std::ostream* loss_log = nullptr);
  void run_finetune(std::ostream* loss_log = nullptr);

  /// Recomputes OOD scores on the whole pool and re-thresholds them.
  void resplit(long epoch);

  void save_checkpoint(std::ostream& os) const;
  void save_checkpoint_file(const std::string& path) const;
  /// Restores a trainer; `data` must be the split the checkpoint was made on.
  static Trainer load_checkpoint(std::istream& is, TrainingData data);
  static Trainer load_checkpoint_file(const std::string& path, TrainingData data);

private:
  Trainer() = default;
  void sgd_step(double lr);
  void check_finite(const LossReport& report, const char* stage);

  TrainConfig config_;
  TrainingData data_;
  Model model_;
  Eigen::VectorXd velocity_;
  RecyclableOodBank bank_;
  SplitState split_;
  std::vector<bool> split_ood_;
  BatchSampler labeled_sampler_;
  BatchSampler unlabeled_sampler_;
  std::mt19937_64 noise_rng_;
  long pre_iter_ = 0;
  long ft_iter_ = 0;
  std::string snapshot_path_;
};

/// The configuration stored in a checkpoint, for rebuilding its data.
TrainConfig read_checkpoint_config(std::istream& is);
TrainConfig read_checkpoint_config_file(const std::string& path);

} // namespace osp
