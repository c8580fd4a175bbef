#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "osp/data.hpp"
#include "osp/losses.hpp"
#include "osp/model.hpp"

namespace osp {

enum class DatasetKind { Blobs, File };

/// Every knob of a run. Defaults follow the published settings where they
/// exist; `blob_protocol()` holds the desk-scale overrides.
struct TrainConfig {
  // selection / decomposition
  double delta = 0.8;
  double gamma_ood = 0.2;
  double alpha = 0.8;
  std::size_t bank_capacity = 5000;
  bool pairing = true;
  bool odc_ce_per_class = false;
  bool odc_detach_clean = false;

  // optimization
  double lr_pre = 0.03;
  double lr_ft = 0.001;
  double momentum = 0.9;
  double weight_decay = 0.0;
  std::size_t batch_l = 64;
  std::size_t batch_u = 320;
  long iters_pre = 50000;
  long iters_ft = 200000;
  long resplit_period = 10;
  double noise_std = 0.1;
  double ssl_tau = 0.8;
  bool pretrain_unlabeled_negatives = true;
  LossWeights weights;

  // model
  Architecture arch = Architecture::Mlp;
  int hidden = 64;
  int feature_dim = 64;
  int conv1_channels = 8;
  int conv2_channels = 16;

  // data
  DatasetKind dataset = DatasetKind::Blobs;
  std::string data_path;
  std::string test_path;
  std::vector<int> id_classes = {0, 1, 2, 3};
  std::vector<int> ood_classes = {4, 5, 6, 7};
  int labeled_per_class = 10;
  int unlabeled_total = 800;
  double mismatch_ratio = 0.6;
  OodSource ood_source = OodSource::Intra;
  double ood_noise_mean = 0.5;
  double ood_noise_std = 0.25;
  double blob_spread = 0.7;
  double blob_ood_spread = 0.35;
  int blob_pool_per_class = 1000;
  int test_per_class = 250;

  std::uint64_t seed = 0;

  /// Desk-scale blob protocol used by the acceptance suite.
  static TrainConfig blob_protocol();

  /// Throws ConfigError on out-of-range values.
  void validate() const;

  /// Sets one key from its text form; unknown keys throw ConfigError.
  void set(const std::string& key, const std::string& value);
  /// Canonical `key=value` lines for every key, in a fixed order.
  std::vector<std::pair<std::string, std::string>> entries() const;
  std::string to_text() const;
  /// FNV-1a over the canonical text, excluding the seed.
  std::uint64_t hash() const;

  ModelSpec model_spec(const InputShape& input) const;
  DatasetSpec dataset_spec() const;

  bool operator==(const TrainConfig&) const = default;
};

/// All known keys with a one-line description, for documentation and usage.
const std::vector<std::pair<std::string, std::string>>& config_key_docs();

/// Parses `key=value` lines (blank lines and `#` comments allowed) on top of
/// `base`.
TrainConfig parse_config(std::istream& is, TrainConfig base = TrainConfig{});
TrainConfig load_config_file(const std::string& path, TrainConfig base = TrainConfig{});
/// Applies `key=value` overrides in order.
void apply_overrides(TrainConfig& config, const std::vector<std::string>& overrides);

std::string format_double(double v);
std::string hex64(std::uint64_t v);

} // namespace osp
