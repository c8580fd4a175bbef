#include "osp/selection.hpp"

#include <istream>
#include <ostream>
#include <random>
#include <string>

#include "osp/errors.hpp"
#include "osp/serialize.hpp"

namespace osp {

std::size_t AnchorSet::size() const {
  std::size_t n = 0;
  for (const auto& v : per_class) n += v.size();
  return n;
}

std::size_t AnchorSet::count(AnchorSource source) const {
  std::size_t n = 0;
  for (const auto& v : per_class)
    for (const auto& a : v) n += (a.source == source);
  return n;
}

int argmax(const Eigen::Ref<const Eigen::VectorXd>& row) {
  if (row.size() == 0) throw ShapeError("argmax of empty row");
  int best = 0;
  for (int c = 1; c < row.size(); ++c) {
    if (row[c] > row[best]) best = c;
  }
  return best;
}

AnchorSet collect_labeled_anchors(const Eigen::MatrixXd& features, const Eigen::MatrixXd& probs,
                                  std::span<const int> labels, double delta) {
  if (features.rows() != probs.rows() || static_cast<std::size_t>(probs.rows()) != labels.size()) {
    throw ShapeError("collect_labeled_anchors: row count mismatch");
  }
  const int k = static_cast<int>(probs.cols());
  AnchorSet out(k);
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const int y = labels[static_cast<std::size_t>(i)];
    if (y < 0 || y >= k) throw ShapeError("collect_labeled_anchors: label out of range");
    const double p = probs(i, y);
    if (p > delta) {
      out.per_class[static_cast<std::size_t>(y)].push_back(
          Anchor{features.row(i).transpose(), AnchorSource::Labeled, p, y, static_cast<std::size_t>(i)});
    }
  }
  return out;
}

AnchorSet collect_unlabeled_anchors(const Eigen::MatrixXd& features, const Eigen::MatrixXd& probs,
                                    double delta) {
  if (features.rows() != probs.rows()) {
    throw ShapeError("collect_unlabeled_anchors: row count mismatch");
  }
  AnchorSet out(static_cast<int>(probs.cols()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) {
    const int c = argmax(probs.row(i).transpose());
    const double p = probs(i, c);
    if (p > delta) {
      out.per_class[static_cast<std::size_t>(c)].push_back(
          Anchor{features.row(i).transpose(), AnchorSource::Unlabeled, p, c, static_cast<std::size_t>(i)});
    }
  }
  return out;
}

AnchorSet union_anchors(const AnchorSet& labeled, const AnchorSet& unlabeled) {
  if (labeled.num_classes() != unlabeled.num_classes()) {
    throw ShapeError("union_anchors: class count mismatch");
  }
  AnchorSet out = labeled;
  for (std::size_t c = 0; c < out.per_class.size(); ++c) {
    const auto& extra = unlabeled.per_class[c];
    out.per_class[c].insert(out.per_class[c].end(), extra.begin(), extra.end());
  }
  return out;
}

bool is_recyclable_ood(const Eigen::Ref<const Eigen::VectorXd>& prob_row, int predicted_class,
                       bool ood_flag, double gamma_ood) {
  if (predicted_class < 0 || predicted_class >= prob_row.size()) {
    throw ShapeError("is_recyclable_ood: class out of range");
  }
  return argmax(prob_row) == predicted_class && ood_flag && prob_row[predicted_class] < gamma_ood;
}

RecyclableOodBank::RecyclableOodBank(int num_classes, std::size_t capacity)
    : capacity_(capacity), queues_(static_cast<std::size_t>(num_classes)) {
  if (num_classes <= 0) throw std::invalid_argument("RecyclableOodBank: num_classes must be positive");
  if (capacity == 0) throw std::invalid_argument("RecyclableOodBank: capacity must be positive");
}

void RecyclableOodBank::push(int class_id, FeatureVector feature) {
  if (class_id < 0 || class_id >= num_classes()) throw ShapeError("bank push: class out of range");
  auto& q = queues_[static_cast<std::size_t>(class_id)];
  q.push_back(std::move(feature));
  while (q.size() > capacity_) q.pop_front();
}

const std::deque<FeatureVector>& RecyclableOodBank::queue(int class_id) const {
  if (class_id < 0 || class_id >= num_classes()) throw ShapeError("bank queue: class out of range");
  return queues_[static_cast<std::size_t>(class_id)];
}

std::size_t RecyclableOodBank::total_size() const {
  std::size_t n = 0;
  for (const auto& q : queues_) n += q.size();
  return n;
}

void RecyclableOodBank::save(std::ostream& os) const {
  io::write_u64(os, capacity_);
  io::write_u64(os, queues_.size());
  for (const auto& q : queues_) {
    io::write_u64(os, q.size());
    for (const auto& f : q) io::write_vector(os, f);
  }
}

RecyclableOodBank RecyclableOodBank::load(std::istream& is) {
  RecyclableOodBank bank;
  bank.capacity_ = io::read_u64(is);
  const auto k = io::read_u64(is);
  bank.queues_.resize(k);
  for (auto& q : bank.queues_) {
    const auto n = io::read_u64(is);
    if (n > bank.capacity_) throw FormatError("bank queue longer than its capacity");
    for (std::uint64_t i = 0; i < n; ++i) q.push_back(io::read_vector(is));
  }
  return bank;
}

std::vector<IdOodPair> match_pairs(const AnchorSet& anchors, const RecyclableOodBank& bank,
                                   std::uint64_t seed) {
  if (anchors.num_classes() > bank.num_classes()) {
    throw ShapeError("match_pairs: anchor classes exceed bank classes");
  }
  std::mt19937_64 rng(seed);
  std::vector<IdOodPair> pairs;
  pairs.reserve(anchors.size());
  for (int c = 0; c < anchors.num_classes(); ++c) {
    const auto& q = bank.queue(c);
    if (q.empty()) continue;
    std::uniform_int_distribution<std::size_t> pick(0, q.size() - 1);
    for (const auto& a : anchors.per_class[static_cast<std::size_t>(c)]) {
      pairs.push_back(IdOodPair{a.feature, q[pick(rng)], c, a.source, a.row, a.class_prob});
    }
  }
  return pairs;
}

} // namespace osp
