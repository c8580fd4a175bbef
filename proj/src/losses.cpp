#include "osp/losses.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>

#include "osp/errors.hpp"
#include "osp/selection.hpp"

namespace osp {

namespace {

double floored(double p) { return std::max(p, kProbFloor); }

// Derivative of log(floored(p)): zero where the clamp is active.
double dlog_floored(double p) { return p > kProbFloor ? 1.0 / p : 0.0; }

void check_labels(const Eigen::MatrixXd& probs, std::span<const int> labels, const char* what) {
  if (static_cast<std::size_t>(probs.rows()) != labels.size()) {
    throw ShapeError(std::string(what) + ": probs and labels differ in length");
  }
  for (int y : labels) {
    if (y < 0 || y >= probs.cols()) throw ShapeError(std::string(what) + ": label out of range");
  }
}

LossValue nll(const Eigen::MatrixXd& probs, std::span<const int> labels) {
  LossValue out;
  out.d_probs = Eigen::MatrixXd::Zero(probs.rows(), probs.cols());
  out.count = labels.size();
  if (out.count == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(out.count);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    out.value -= std::log(floored(probs(i, y))) * inv_n;
    out.d_probs(i, y) = -inv_n * dlog_floored(probs(i, y));
  }
  return out;
}

void check_pair_shapes(const Eigen::MatrixXd& clean, const Eigen::MatrixXd& pruned) {
  if (clean.rows() != pruned.rows() || clean.cols() != pruned.cols()) {
    throw ShapeError("odc: clean and pruned predictions differ in shape");
  }
}

// Sum over rows of KL(clean_i || pruned_i) scaled by `scale`, with gradients.
double add_kl_terms(const Eigen::MatrixXd& clean, const Eigen::MatrixXd& pruned, double scale,
                    PairLossValue& out) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < clean.rows(); ++i) {
    for (Eigen::Index c = 0; c < clean.cols(); ++c) {
      const double p = floored(clean(i, c));
      const double q = floored(pruned(i, c));
      total += scale * p * (std::log(p) - std::log(q));
      if (clean(i, c) > kProbFloor) out.d_clean(i, c) += scale * (std::log(p) - std::log(q) + 1.0);
      out.d_pruned(i, c) -= scale * p * dlog_floored(pruned(i, c));
    }
  }
  return total;
}

} // namespace

LossValue ce_loss(const Eigen::MatrixXd& probs, std::span<const int> labels) {
  check_labels(probs, labels, "ce_loss");
  return nll(probs, labels);
}

LossValue rot_loss(const Eigen::MatrixXd& rotation_probs, std::span<const int> rotation_labels) {
  check_labels(rotation_probs, rotation_labels, "rot_loss");
  if (rotation_labels.size() % 4 != 0) {
    throw ShapeError("rot_loss: rotated copy count must be a multiple of 4");
  }
  return nll(rotation_probs, rotation_labels);
}

double kl_div(const Eigen::Ref<const Eigen::RowVectorXd>& p, const Eigen::Ref<const Eigen::RowVectorXd>& q) {
  if (p.size() != q.size()) throw ShapeError("kl_div: size mismatch");
  double sum = 0.0;
  for (Eigen::Index c = 0; c < p.size(); ++c) {
    const double a = floored(p[c]);
    sum += a * (std::log(a) - std::log(floored(q[c])));
  }
  return sum;
}

PairLossValue odc_labeled(const Eigen::MatrixXd& clean, const Eigen::MatrixXd& pruned,
                          std::span<const int> labels, bool ce_per_class) {
  check_pair_shapes(clean, pruned);
  check_labels(pruned, labels, "odc_labeled");
  PairLossValue out;
  out.d_clean = Eigen::MatrixXd::Zero(clean.rows(), clean.cols());
  out.d_pruned = Eigen::MatrixXd::Zero(pruned.rows(), pruned.cols());
  out.count = labels.size();
  if (out.count == 0) return out;

  const double inv_n = 1.0 / static_cast<double>(out.count);
  out.value += add_kl_terms(clean, pruned, inv_n, out);

  std::vector<std::size_t> per_class(static_cast<std::size_t>(pruned.cols()), 0);
  for (int y : labels) ++per_class[static_cast<std::size_t>(y)];
  for (Eigen::Index i = 0; i < pruned.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    const double scale = ce_per_class ? 1.0 / static_cast<double>(per_class[static_cast<std::size_t>(y)]) : inv_n;
    const double q = floored(pruned(i, y));
    out.value -= scale * std::log(q);
    out.d_pruned(i, y) -= scale / q;
  }
  return out;
}

PairLossValue odc_unlabeled(const Eigen::MatrixXd& clean, const Eigen::MatrixXd& pruned) {
  check_pair_shapes(clean, pruned);
  PairLossValue out;
  out.d_clean = Eigen::MatrixXd::Zero(clean.rows(), clean.cols());
  out.d_pruned = Eigen::MatrixXd::Zero(pruned.rows(), pruned.cols());
  out.count = static_cast<std::size_t>(clean.rows());
  if (out.count == 0) return out;
  out.value = add_kl_terms(clean, pruned, 1.0 / static_cast<double>(out.count), out);
  return out;
}

ScoreLossValue ood_detection_loss(const Eigen::VectorXd& scores, std::span<const double> targets) {
  if (static_cast<std::size_t>(scores.size()) != targets.size()) {
    throw ShapeError("ood_detection_loss: scores and targets differ in length");
  }
  ScoreLossValue out;
  out.d_scores = Eigen::VectorXd::Zero(scores.size());
  out.count = targets.size();
  if (out.count == 0) return out;
  const double inv_n = 1.0 / static_cast<double>(out.count);
  for (Eigen::Index i = 0; i < scores.size(); ++i) {
    const double t = targets[static_cast<std::size_t>(i)];
    const double s = std::clamp(scores[i], kProbFloor, 1.0 - kProbFloor);
    out.value -= inv_n * (t * std::log(s) + (1.0 - t) * std::log(1.0 - s));
    if (s == scores[i]) out.d_scores[i] = -inv_n * (t / s - (1.0 - t) / (1.0 - s));
  }
  return out;
}

LossValue ssl_unlabeled_loss(const Eigen::MatrixXd& probs, double tau) {
  LossValue out;
  out.d_probs = Eigen::MatrixXd::Zero(probs.rows(), probs.cols());
  std::vector<Eigen::Index> kept;
  std::vector<int> targets;
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const int c = argmax(probs.row(i).transpose());
    if (probs(i, c) > tau) {
      kept.push_back(i);
      targets.push_back(c);
    }
  }
  out.count = kept.size();
  if (kept.empty()) return out;
  const double inv_n = 1.0 / static_cast<double>(kept.size());
  for (std::size_t k = 0; k < kept.size(); ++k) {
    const double p = probs(kept[k], targets[k]);
    out.value -= inv_n * std::log(floored(p));
    out.d_probs(kept[k], targets[k]) = -inv_n * dlog_floored(p);
  }
  return out;
}

bool LossReport::all_finite() const {
  for (double v : {ce, rot, ood_l, ood_u, ssl_u, odc_l, odc_u, consistency, total}) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

double total_pretrain(const LossReport& r) { return r.ce + r.rot + r.ood_l; }

double total_finetune(const LossReport& r, const LossWeights& w) {
  return w.ce * r.ce + w.u * r.ssl_u + w.ood_l * r.ood_l + w.ood_u * r.ood_u + w.rot * r.rot +
         w.odc_l * r.odc_l + w.odc_u * r.odc_u;
}

void write_loss_csv_header(std::ostream& os) {
  os << "iteration,stage,ce,rot,ood_l,ood_u,ssl_u,odc_l,odc_u,consistency,total,lr,"
        "n_anchor_l,n_anchor_u,n_pairs,bank_size\n";
}

void write_loss_csv_row(std::ostream& os, long iteration, const std::string& stage, const LossReport& r,
                        double lr, std::size_t bank_size) {
  os << std::setprecision(10) << iteration << ',' << stage << ',' << r.ce << ',' << r.rot << ',' << r.ood_l << ','
     << r.ood_u << ',' << r.ssl_u << ',' << r.odc_l << ',' << r.odc_u << ',' << r.consistency << ',' << r.total
     << ',' << lr << ',' << r.n_anchor_l << ',' << r.n_anchor_u << ',' << r.n_pairs << ',' << bank_size << '\n';
}

} // namespace osp
