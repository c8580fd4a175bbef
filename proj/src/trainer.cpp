#include "osp/trainer.hpp"

#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include "osp/checkpoint.hpp"
#include "osp/errors.hpp"
#include "osp/geometry.hpp"
#include "osp/serialize.hpp"

namespace osp {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, const std::vector<Eigen::Index>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(rows[r]);
  return out;
}

// Accumulates the orthogonality-consistency gradients of one anchor group
// (labeled or unlabeled) into the clean-probability and feature gradients of
// the pass the anchors came from.
struct PairGroup {
  std::vector<Eigen::Index> rows;
  std::vector<int> labels;
  Eigen::MatrixXd ids;
  Eigen::MatrixXd oods;
};

void backprop_pairs(Model& model, const PairGroup& group, const Eigen::MatrixXd& pruned, const Eigen::MatrixXd& pruned_probs,
                    const PairLossValue& loss, double weight, double alpha, bool detach_clean,
                    Eigen::MatrixXd& d_clean_probs, Eigen::MatrixXd& d_features) {
  for (std::size_t i = 0; i < group.rows.size() && !detach_clean; ++i) {
    d_clean_probs.row(group.rows[i]) += weight * loss.d_clean.row(static_cast<Eigen::Index>(i));
  }
  const Eigen::MatrixXd d_logits = softmax_backward(pruned_probs, weight * loss.d_pruned);
  const Eigen::MatrixXd d_pruned = model.classifier_backward(pruned, d_logits);
  for (std::size_t i = 0; i < group.rows.size(); ++i) {
    const auto r = static_cast<Eigen::Index>(i);
    const auto g = soft_orthogonal_backward(group.ids.row(r).transpose(), group.oods.row(r).transpose(), alpha,
                                            d_pruned.row(r).transpose());
    d_features.row(group.rows[i]) += g.d_feature.transpose();
  }
}

} // namespace

double cosine_lr(long step, long total_steps, double lr0) {
  if (total_steps <= 0) return lr0;
  if (step < 0 || step > total_steps) throw std::invalid_argument("cosine_lr: step outside [0, total]");
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * static_cast<double>(step) / static_cast<double>(total_steps)));
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) {
  return splitmix64(splitmix64(seed) ^ splitmix64(stream * 0x632be59bd9b4e019ull));
}

LossReport pretrain_objective(Model& model, const Batch& batch, const InputShape& shape, const TrainConfig& config,
                              const Eigen::MatrixXd& feature_noise) {
  LossReport r;
  const ForwardPass lab = model.forward(batch.labeled_inputs);
  const ForwardPass unl = model.forward(batch.unlabeled_inputs);
  const RotationBatch rb = make_rotation_batch(batch.unlabeled_inputs, shape);
  const ForwardPass rot = model.forward(rb.inputs);

  const LossValue ce = ce_loss(lab.class_probs, batch.labels);
  const LossValue rl = rot_loss(rot.rotation_probs, rb.labels);
  const std::vector<double> ones(batch.labels.size(), 1.0);
  const ScoreLossValue ood_pos = ood_detection_loss(lab.ood_score, ones);

  ScoreLossValue ood_neg;
  if (config.pretrain_unlabeled_negatives) {
    const std::vector<double> zeros(static_cast<std::size_t>(unl.ood_score.size()), 0.0);
    ood_neg = ood_detection_loss(unl.ood_score, zeros);
  }

  if (feature_noise.rows() != unl.features.rows() || feature_noise.cols() != unl.features.cols()) {
    throw ShapeError("pretrain_objective: feature noise shape mismatch");
  }
  const Eigen::MatrixXd noisy = unl.features + feature_noise;
  const Eigen::MatrixXd noisy_probs = model.classify_feature(noisy);
  const PairLossValue cons = odc_unlabeled(unl.class_probs, noisy_probs);

  r.ce = ce.value;
  r.rot = rl.value;
  r.consistency = cons.value;
  r.ood_l = ood_pos.value + ood_neg.value + cons.value;
  r.total = total_pretrain(r);
  r.n_labeled = ce.count;
  r.n_rotations = rl.count;

  HeadGrads g_lab;
  g_lab.d_class_logits = softmax_backward(lab.class_probs, ce.d_probs);
  g_lab.d_ood_logit = sigmoid_backward(lab.ood_score, ood_pos.d_scores);
  model.backward(lab, g_lab);

  HeadGrads g_unl;
  g_unl.d_class_logits = softmax_backward(unl.class_probs, cons.d_clean);
  if (config.pretrain_unlabeled_negatives) g_unl.d_ood_logit = sigmoid_backward(unl.ood_score, ood_neg.d_scores);
  g_unl.d_features = model.classifier_backward(noisy, softmax_backward(noisy_probs, cons.d_pruned));
  model.backward(unl, g_unl);

  HeadGrads g_rot;
  g_rot.d_rotation_logits = softmax_backward(rot.rotation_probs, rl.d_probs);
  model.backward(rot, g_rot);
  return r;
}

FinetuneEval finetune_objective(Model& model, const Batch& batch, const InputShape& shape,
                                const std::vector<bool>& batch_ood, const RecyclableOodBank& bank,
                                const TrainConfig& config, std::uint64_t pair_seed) {
  const auto& w = config.weights;
  FinetuneEval out;
  LossReport& r = out.report;

  const ForwardPass lab = model.forward(batch.labeled_inputs);
  const ForwardPass unl = model.forward(batch.unlabeled_inputs);
  const RotationBatch rb = make_rotation_batch(batch.unlabeled_inputs, shape);
  const ForwardPass rot = model.forward(rb.inputs);
  if (batch_ood.size() != static_cast<std::size_t>(unl.features.rows())) {
    throw ShapeError("finetune_objective: split flags do not match the unlabeled batch");
  }

  const LossValue ce = ce_loss(lab.class_probs, batch.labels);
  const LossValue rl = rot_loss(rot.rotation_probs, rb.labels);
  const std::vector<double> ones(batch.labels.size(), 1.0);
  const ScoreLossValue ood_l = ood_detection_loss(lab.ood_score, ones);
  std::vector<double> split_targets;
  std::vector<Eigen::Index> id_rows;
  for (std::size_t i = 0; i < batch_ood.size(); ++i) {
    split_targets.push_back(batch_ood[i] ? 0.0 : 1.0);
    if (!batch_ood[i]) id_rows.push_back(static_cast<Eigen::Index>(i));
  }
  const ScoreLossValue ood_u = ood_detection_loss(unl.ood_score, split_targets);
  const LossValue ssl = ssl_unlabeled_loss(gather_rows(unl.class_probs, id_rows), config.ssl_tau);

  Eigen::MatrixXd d_lab_probs = w.ce * ce.d_probs;
  Eigen::MatrixXd d_unl_probs = Eigen::MatrixXd::Zero(unl.class_probs.rows(), unl.class_probs.cols());
  for (std::size_t k = 0; k < id_rows.size(); ++k) d_unl_probs.row(id_rows[k]) += w.u * ssl.d_probs.row(static_cast<Eigen::Index>(k));
  Eigen::MatrixXd d_lab_features = Eigen::MatrixXd::Zero(lab.features.rows(), lab.features.cols());
  Eigen::MatrixXd d_unl_features = Eigen::MatrixXd::Zero(unl.features.rows(), unl.features.cols());

  r.ce = ce.value;
  r.rot = rl.value;
  r.ood_l = ood_l.value;
  r.ood_u = ood_u.value;
  r.ssl_u = ssl.value;
  r.n_labeled = ce.count;
  r.n_rotations = rl.count;
  r.n_ssl = ssl.count;

  if (config.pairing) {
    const AnchorSet anchors =
        union_anchors(collect_labeled_anchors(lab.features, lab.class_probs, batch.labels, config.delta),
                      collect_unlabeled_anchors(unl.features, unl.class_probs, config.delta));
    r.n_anchor_l = anchors.count(AnchorSource::Labeled);
    r.n_anchor_u = anchors.count(AnchorSource::Unlabeled);
    out.pairs = match_pairs(anchors, bank, pair_seed);
    r.n_pairs = out.pairs.size();

    PairGroup groups[2];  // labeled, unlabeled
    for (const auto& p : out.pairs) {
      auto& g = groups[p.source == AnchorSource::Labeled ? 0 : 1];
      g.rows.push_back(static_cast<Eigen::Index>(p.anchor_row));
      g.labels.push_back(p.class_id);
    }
    for (auto& g : groups) {
      g.ids.resize(static_cast<Eigen::Index>(g.rows.size()), model.feature_dim());
      g.oods.resize(static_cast<Eigen::Index>(g.rows.size()), model.feature_dim());
    }
    std::size_t counters[2] = {0, 0};
    for (const auto& p : out.pairs) {
      const int gi = p.source == AnchorSource::Labeled ? 0 : 1;
      const auto r_idx = static_cast<Eigen::Index>(counters[gi]++);
      groups[gi].ids.row(r_idx) = p.id_feature.transpose();
      groups[gi].oods.row(r_idx) = p.ood_feature.transpose();
    }

    for (int gi = 0; gi < 2; ++gi) {
      const PairGroup& g = groups[gi];
      if (g.rows.empty()) continue;
      Eigen::MatrixXd pruned(g.ids.rows(), g.ids.cols());
      for (Eigen::Index i = 0; i < g.ids.rows(); ++i) {
        pruned.row(i) = soft_orthogonal_decompose(g.ids.row(i).transpose(), g.oods.row(i).transpose(), config.alpha)
                            .pruned.transpose();
      }
      const Eigen::MatrixXd pruned_probs = model.classify_feature(pruned);
      const Eigen::MatrixXd& clean_all = gi == 0 ? lab.class_probs : unl.class_probs;
      const Eigen::MatrixXd clean = gather_rows(clean_all, g.rows);
      if (gi == 0) {
        const PairLossValue loss = odc_labeled(clean, pruned_probs, g.labels, config.odc_ce_per_class);
        r.odc_l = loss.value;
        if (w.odc_l != 0.0) {
          backprop_pairs(model, g, pruned, pruned_probs, loss, w.odc_l, config.alpha, config.odc_detach_clean, d_lab_probs, d_lab_features);
        }
      } else {
        const PairLossValue loss = odc_unlabeled(clean, pruned_probs);
        r.odc_u = loss.value;
        if (w.odc_u != 0.0) {
          backprop_pairs(model, g, pruned, pruned_probs, loss, w.odc_u, config.alpha, config.odc_detach_clean, d_unl_probs, d_unl_features);
        }
      }
    }
  }
  r.total = total_finetune(r, w);

  HeadGrads g_lab;
  g_lab.d_class_logits = softmax_backward(lab.class_probs, d_lab_probs);
  g_lab.d_ood_logit = sigmoid_backward(lab.ood_score, w.ood_l * ood_l.d_scores);
  g_lab.d_features = std::move(d_lab_features);
  model.backward(lab, g_lab);

  HeadGrads g_unl;
  g_unl.d_class_logits = softmax_backward(unl.class_probs, d_unl_probs);
  g_unl.d_ood_logit = sigmoid_backward(unl.ood_score, w.ood_u * ood_u.d_scores);
  g_unl.d_features = std::move(d_unl_features);
  model.backward(unl, g_unl);

  HeadGrads g_rot;
  g_rot.d_rotation_logits = softmax_backward(rot.rotation_probs, w.rot * rl.d_probs);
  model.backward(rot, g_rot);

  out.unlabeled_features = unl.features;
  out.unlabeled_probs = unl.class_probs;
  return out;
}

Trainer::Trainer(TrainConfig config, TrainingData data) : config_(std::move(config)), data_(std::move(data)) {
  config_.validate();
  if (data_.labeled.size() == 0 || data_.unlabeled.size() == 0) throw DataError("trainer needs labeled and unlabeled data");
  model_ = Model(config_.model_spec(data_.labeled.shape), derive_seed(config_.seed, streams::kModel));
  velocity_ = Eigen::VectorXd::Zero(model_.params().size());
  bank_ = RecyclableOodBank(model_.num_classes(), config_.bank_capacity);
  labeled_sampler_ = BatchSampler(data_.labeled.size(), derive_seed(config_.seed, streams::kLabeledSampler));
  unlabeled_sampler_ = BatchSampler(data_.unlabeled.size(), derive_seed(config_.seed, streams::kUnlabeledSampler));
  noise_rng_.seed(derive_seed(config_.seed, streams::kNoise));
}

long Trainer::iterations_per_epoch() const {
  const auto n = static_cast<long>(data_.unlabeled.size());
  const auto b = static_cast<long>(config_.batch_u);
  return (n + b - 1) / b;
}

void Trainer::sgd_step(double lr) {
  Eigen::VectorXd g = model_.grads();
  if (config_.weight_decay != 0.0) g += config_.weight_decay * model_.params();
  velocity_ = config_.momentum * velocity_ + g;
  model_.params() -= lr * velocity_;
}

void Trainer::check_finite(const LossReport& report, const char* stage) {
  if (report.all_finite() && model_.all_finite()) return;
  if (!snapshot_path_.empty()) save_checkpoint_file(snapshot_path_);
  std::ostringstream msg;
  msg << stage << " diverged at iteration " << (std::string(stage) == "pretrain" ? pre_iter_ : ft_iter_)
      << ": ce=" << report.ce << " rot=" << report.rot << " ood_l=" << report.ood_l << " ood_u=" << report.ood_u
      << " ssl_u=" << report.ssl_u << " odc_l=" << report.odc_l << " odc_u=" << report.odc_u;
  if (!snapshot_path_.empty()) msg << " (snapshot: " << snapshot_path_ << ")";
  throw DivergenceError(msg.str());
}

LossReport Trainer::pretrain_step() {
  const Batch batch = sample_batch(data_.labeled, data_.unlabeled, labeled_sampler_, unlabeled_sampler_,
                                   config_.batch_l, config_.batch_u);
  Eigen::MatrixXd noise = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(config_.batch_u), model_.feature_dim());
  if (config_.noise_std > 0.0) {
    std::normal_distribution<double> n(0.0, config_.noise_std);
    for (Eigen::Index j = 0; j < noise.cols(); ++j)
      for (Eigen::Index i = 0; i < noise.rows(); ++i) noise(i, j) = n(noise_rng_);
  }
  model_.zero_grad();
  LossReport r = pretrain_objective(model_, batch, data_.labeled.shape, config_, noise);
  check_finite(r, "pretrain");
  sgd_step(cosine_lr(pre_iter_, config_.iters_pre, config_.lr_pre));
  check_finite(r, "pretrain");
  ++pre_iter_;
  return r;
}

void Trainer::resplit(long epoch) {
  const Eigen::VectorXd scores = ood_score(model_, data_.unlabeled.inputs);
  const std::span<const double> s(scores.data(), static_cast<std::size_t>(scores.size()));
  double threshold;
  try {
    threshold = otsu_threshold(s);
  } catch (const DegenerateDistributionError&) {
    // constant scores carry no ranking: keep everything as ID
    threshold = scores.minCoeff();
  }
  split_ = split_unlabeled(s, threshold, epoch);
  split_ood_ = split_.ood_flags(data_.unlabeled.size());
}

LossReport Trainer::finetune_step() {
  const long per_epoch = iterations_per_epoch();
  if (ft_iter_ % per_epoch == 0) {
    const long epoch = ft_iter_ / per_epoch;
    if (epoch % config_.resplit_period == 0 || split_ood_.empty()) resplit(epoch);
  }
  const Batch batch = sample_batch(data_.labeled, data_.unlabeled, labeled_sampler_, unlabeled_sampler_,
                                   config_.batch_l, config_.batch_u);
  std::vector<bool> batch_ood(batch.unlabeled_indices.size());
  for (std::size_t i = 0; i < batch_ood.size(); ++i) batch_ood[i] = split_ood_[batch.unlabeled_indices[i]];

  model_.zero_grad();
  const FinetuneEval eval = finetune_objective(model_, batch, data_.labeled.shape, batch_ood, bank_, config_,
                                               derive_seed(derive_seed(config_.seed, streams::kPairing),
                                                           static_cast<std::uint64_t>(ft_iter_)));
  check_finite(eval.report, "finetune");
  sgd_step(cosine_lr(ft_iter_, config_.iters_ft, config_.lr_ft));
  check_finite(eval.report, "finetune");

  // bank update at the end of the iteration, from this batch's features
  for (Eigen::Index i = 0; i < eval.unlabeled_probs.rows(); ++i) {
    const Eigen::VectorXd p = eval.unlabeled_probs.row(i).transpose();
    const int c = argmax(p);
    if (is_recyclable_ood(p, c, batch_ood[static_cast<std::size_t>(i)], config_.gamma_ood)) {
      bank_.push(c, eval.unlabeled_features.row(i).transpose());
    }
  }
  ++ft_iter_;
  return eval.report;
}

void Trainer::run_pretrain(std::ostream* log) {
  while (pre_iter_ < config_.iters_pre) {
    const double lr = cosine_lr(pre_iter_, config_.iters_pre, config_.lr_pre);
    const long it = pre_iter_;
    const LossReport r = pretrain_step();
    if (log) write_loss_csv_row(*log, it, "pretrain", r, lr, bank_.total_size());
  }
}

void Trainer::run_finetune(std::ostream* log) {
  while (ft_iter_ < config_.iters_ft) {
    const double lr = cosine_lr(ft_iter_, config_.iters_ft, config_.lr_ft);
    const long it = ft_iter_;
    const LossReport r = finetune_step();
    if (log) write_loss_csv_row(*log, it, "finetune", r, lr, bank_.total_size());
  }
}

void Trainer::save_checkpoint(std::ostream& os) const {
  CheckpointArchive ar;
  ar.put("CONF", config_.to_text());
  {
    std::ostringstream s;
    io::write_u64(s, config_.hash());
    ar.put("HASH", s.str());
  }
  {
    std::ostringstream s;
    save_model_spec(s, model_.spec());
    ar.put("SPEC", s.str());
  }
  {
    std::ostringstream s;
    io::write_vector(s, model_.params());
    ar.put("PARM", s.str());
  }
  {
    std::ostringstream s;
    io::write_vector(s, velocity_);
    ar.put("VELO", s.str());
  }
  {
    std::ostringstream s;
    bank_.save(s);
    ar.put("BANK", s.str());
  }
  {
    std::ostringstream s;
    io::write_u32(s, split_ood_.empty() ? 0u : 1u);
    save_split(s, split_);
    ar.put("SPLT", s.str());
  }
  {
    std::ostringstream s;
    labeled_sampler_.save(s);
    unlabeled_sampler_.save(s);
    std::ostringstream rng_text;
    rng_text << noise_rng_;
    io::write_string(s, rng_text.str());
    io::write_pod<std::int64_t>(s, pre_iter_);
    io::write_pod<std::int64_t>(s, ft_iter_);
    ar.put("STAT", s.str());
  }
  ar.write(os);
}

void Trainer::save_checkpoint_file(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw FormatError("cannot write checkpoint " + path);
  save_checkpoint(out);
}

Trainer Trainer::load_checkpoint(std::istream& is, TrainingData data) {
  const CheckpointArchive ar = CheckpointArchive::read(is);
  Trainer t;
  {
    std::istringstream s(ar.get("CONF"));
    t.config_ = parse_config(s);
  }
  {
    std::istringstream s(ar.get("HASH"));
    if (io::read_u64(s) != t.config_.hash()) throw FormatError("checkpoint config hash mismatch");
  }
  t.data_ = std::move(data);
  ModelSpec spec;
  {
    std::istringstream s(ar.get("SPEC"));
    spec = load_model_spec(s);
  }
  if (!(spec.input == t.data_.labeled.shape)) throw FormatError("checkpoint input shape does not match the data");
  t.model_ = Model(spec, 0);
  {
    std::istringstream s(ar.get("PARM"));
    Eigen::VectorXd p = io::read_vector(s);
    if (p.size() != t.model_.params().size()) throw FormatError("checkpoint parameter count mismatch");
    t.model_.params() = std::move(p);
  }
  {
    std::istringstream s(ar.get("VELO"));
    t.velocity_ = io::read_vector(s);
    if (t.velocity_.size() != t.model_.params().size()) throw FormatError("checkpoint momentum size mismatch");
  }
  {
    std::istringstream s(ar.get("BANK"));
    t.bank_ = RecyclableOodBank::load(s);
  }
  {
    std::istringstream s(ar.get("SPLT"));
    const bool has_split = io::read_u32(s) != 0;
    t.split_ = load_split(s);
    if (has_split) t.split_ood_ = t.split_.ood_flags(t.data_.unlabeled.size());
  }
  {
    std::istringstream s(ar.get("STAT"));
    t.labeled_sampler_ = BatchSampler::load(s);
    t.unlabeled_sampler_ = BatchSampler::load(s);
    std::istringstream rng_text(io::read_string(s));
    rng_text >> t.noise_rng_;
    t.pre_iter_ = io::read_pod<std::int64_t>(s);
    t.ft_iter_ = io::read_pod<std::int64_t>(s);
  }
  if (t.labeled_sampler_.pool_size() != t.data_.labeled.size() ||
      t.unlabeled_sampler_.pool_size() != t.data_.unlabeled.size()) {
    throw FormatError("checkpoint sampler state does not match the data");
  }
  return t;
}

Trainer Trainer::load_checkpoint_file(const std::string& path, TrainingData data) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  return load_checkpoint(in, std::move(data));
}

TrainConfig read_checkpoint_config(std::istream& is) {
  const CheckpointArchive ar = CheckpointArchive::read(is);
  std::istringstream s(ar.get("CONF"));
  return parse_config(s);
}

TrainConfig read_checkpoint_config_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path);
  return read_checkpoint_config(in);
}

} // namespace osp
