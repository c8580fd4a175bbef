#include "osp/evaluation.hpp"

#include <sstream>

#include "osp/errors.hpp"

namespace osp {

namespace {

TestSet test_from_corpus(const LabeledCorpus& corpus, const TrainConfig& config, std::uint64_t seed) {
  TestSet t;
  t.shape = corpus.shape;
  std::vector<Eigen::Index> id_rows, ood_rows;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    const int c = corpus.labels[i];
    for (std::size_t k = 0; k < config.id_classes.size(); ++k) {
      if (config.id_classes[k] == c) {
        id_rows.push_back(static_cast<Eigen::Index>(i));
        t.id_labels.push_back(static_cast<int>(k));
      }
    }
    for (int o : config.ood_classes) {
      if (o == c) ood_rows.push_back(static_cast<Eigen::Index>(i));
    }
  }
  if (id_rows.empty()) throw DataError("held-out set has no ID samples");
  t.id_inputs.resize(static_cast<Eigen::Index>(id_rows.size()), corpus.inputs.cols());
  for (std::size_t i = 0; i < id_rows.size(); ++i) t.id_inputs.row(static_cast<Eigen::Index>(i)) = corpus.inputs.row(id_rows[i]);

  if (config.ood_source == OodSource::Intra) {
    t.ood_inputs.resize(static_cast<Eigen::Index>(ood_rows.size()), corpus.inputs.cols());
    for (std::size_t i = 0; i < ood_rows.size(); ++i) t.ood_inputs.row(static_cast<Eigen::Index>(i)) = corpus.inputs.row(ood_rows[i]);
  } else {
    const auto kind = config.ood_source == OodSource::GaussianNoise ? NoiseKind::Gaussian : NoiseKind::Uniform;
    t.ood_inputs = noise_ood(static_cast<int>(id_rows.size()), corpus.shape, kind, seed, config.ood_noise_mean,
                             config.ood_noise_std);
  }
  return t;
}

std::string optional_text(const std::optional<double>& v) { return v ? format_double(*v) : std::string("na"); }

} // namespace

Experiment build_experiment(const TrainConfig& config) {
  config.validate();
  DatasetSpec spec = config.dataset_spec();
  spec.seed = derive_seed(config.seed, streams::kData);
  Experiment e;
  if (config.dataset == DatasetKind::Blobs) {
    BlobLayout layout = BlobLayout::standard();
    layout.spread = config.blob_spread;
    layout.ood_spread = config.blob_ood_spread;
    return build_experiment(config, layout);
  } else {
    if (config.data_path.empty() || config.test_path.empty()) {
      throw ConfigError("dataset=file needs data_path and test_path");
    }
    e.split = synthesize_split(read_ospdata_file(config.data_path), spec);
    e.test = test_from_corpus(read_ospdata_file(config.test_path), config, derive_seed(config.seed, streams::kTest));
  }
  return e;
}

Experiment build_experiment(const TrainConfig& config, const BlobLayout& layout) {
  config.validate();
  DatasetSpec spec = config.dataset_spec();
  spec.seed = derive_seed(config.seed, streams::kData);
  Experiment e;
  e.split = synthesize_split(make_blobs(layout, config.blob_pool_per_class, derive_seed(config.seed, streams::kData)), spec);
  e.test = test_from_corpus(make_blobs(layout, config.test_per_class, derive_seed(config.seed, streams::kTest)), config,
                            derive_seed(config.seed, streams::kTest));
  return e;
}

std::string MetricsRecord::to_text() const {
  std::ostringstream os;
  os << "id_accuracy=" << format_double(id_accuracy) << '\n'
     << "auroc=" << optional_text(auroc) << '\n'
     << "mean_id_ood_angle_deg=" << optional_text(mean_id_ood_angle_deg) << '\n'
     << "mean_abs_cosine=" << optional_text(mean_abs_cosine) << '\n'
     << "angle_pairs=" << angle_pairs << '\n'
     << "interclass_variance=" << format_double(interclass_variance) << '\n'
     << "config_hash=" << hex64(config_hash) << '\n'
     << "seed=" << seed << '\n';
  return os.str();
}

MetricsRecord parse_metrics(const std::string& text) {
  MetricsRecord m;
  std::istringstream is(text);
  std::string line;
  auto opt = [](const std::string& v) -> std::optional<double> {
    if (v == "na") return std::nullopt;
    return std::stod(v);
  };
  while (std::getline(is, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    const std::string k = line.substr(0, eq), v = line.substr(eq + 1);
    if (k == "id_accuracy") m.id_accuracy = std::stod(v);
    else if (k == "auroc") m.auroc = opt(v);
    else if (k == "mean_id_ood_angle_deg") m.mean_id_ood_angle_deg = opt(v);
    else if (k == "mean_abs_cosine") m.mean_abs_cosine = opt(v);
    else if (k == "angle_pairs") m.angle_pairs = std::stoull(v);
    else if (k == "interclass_variance") m.interclass_variance = std::stod(v);
    else if (k == "config_hash") m.config_hash = std::stoull(v, nullptr, 16);
    else if (k == "seed") m.seed = std::stoull(v);
    else throw FormatError("unknown metrics key " + k);
  }
  return m;
}

HeldOutAnalysis analyze_held_out(const Model& model, const TestSet& test, const TrainConfig& config) {
  HeldOutAnalysis a;
  a.id_features = model.encode(test.id_inputs);
  a.id_probs = model.classify_feature(a.id_features);
  if (test.ood_inputs.rows() == 0) return a;
  a.ood_features = model.encode(test.ood_inputs);
  a.ood_probs = model.classify_feature(a.ood_features);

  const AnchorSet anchors = collect_unlabeled_anchors(a.id_features, a.id_probs, config.delta);
  RecyclableOodBank bank(model.num_classes(), static_cast<std::size_t>(a.ood_features.rows()));
  for (Eigen::Index i = 0; i < a.ood_features.rows(); ++i) {
    bank.push(argmax(a.ood_probs.row(i).transpose()), a.ood_features.row(i).transpose());
  }
  a.pairs = match_pairs(anchors, bank, derive_seed(config.seed, streams::kEval));
  return a;
}

MetricsRecord evaluate(const Model& model, const TestSet& test, const TrainConfig& config) {
  MetricsRecord m;
  m.config_hash = config.hash();
  m.seed = config.seed;
  const HeldOutAnalysis a = analyze_held_out(model, test, config);
  m.id_accuracy = accuracy(predict(a.id_probs), test.id_labels);
  m.interclass_variance = interclass_variance(a.id_features, test.id_labels);

  if (test.ood_inputs.rows() > 0) {
    Eigen::MatrixXd all(test.id_inputs.rows() + test.ood_inputs.rows(), test.id_inputs.cols());
    all << test.id_inputs, test.ood_inputs;
    const Eigen::VectorXd scores = ood_score(model, all);
    std::vector<int> positive(static_cast<std::size_t>(all.rows()), 0);
    for (Eigen::Index i = 0; i < test.id_inputs.rows(); ++i) positive[static_cast<std::size_t>(i)] = 1;
    m.auroc = auroc(std::span<const double>(scores.data(), static_cast<std::size_t>(scores.size())), positive);
  }
  if (!a.pairs.empty()) {
    const AngleSummary s = angle_analysis(a.pairs);
    m.mean_id_ood_angle_deg = s.mean_deg;
    m.mean_abs_cosine = s.mean_abs_cosine;
    m.angle_pairs = s.count;
  }
  return m;
}

Trainer train(const TrainConfig& config, const Experiment& experiment, std::ostream* loss_log) {
  Trainer t(config, experiment.training_data());
  if (loss_log) write_loss_csv_header(*loss_log);
  t.run_pretrain(loss_log);
  t.run_finetune(loss_log);
  return t;
}

TrainConfig baseline_of(TrainConfig config) {
  config.pairing = false;
  config.weights.odc_l = 0.0;
  config.weights.odc_u = 0.0;
  return config;
}

} // namespace osp
