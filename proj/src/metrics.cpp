#include "osp/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <numeric>

#include "osp/errors.hpp"
#include "osp/geometry.hpp"

namespace osp {

double accuracy(std::span<const int> predictions, std::span<const int> labels) {
  if (predictions.size() != labels.size()) throw ShapeError("accuracy: length mismatch");
  if (predictions.empty()) throw DataError("accuracy: empty input");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) hits += predictions[i] == labels[i] ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

std::vector<int> predict(const Eigen::MatrixXd& probs) {
  std::vector<int> out(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index i = 0; i < probs.rows(); ++i) out[static_cast<std::size_t>(i)] = argmax(probs.row(i).transpose());
  return out;
}

double auroc(std::span<const double> scores, std::span<const int> is_positive) {
  if (scores.size() != is_positive.size()) throw ShapeError("auroc: length mismatch");
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // twice the Mann-Whitney U, kept integral so the result is exact
  unsigned long long twice_u = 0, negatives_below = 0, positives = 0, negatives = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    unsigned long long pos = 0, neg = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (is_positive[order[j]]) ++pos; else ++neg;
      ++j;
    }
    twice_u += pos * (2 * negatives_below + neg);
    negatives_below += neg;
    positives += pos;
    negatives += neg;
    i = j;
  }
  if (positives == 0 || negatives == 0) throw DataError("auroc needs both positive and negative samples");
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

AngleSummary angle_analysis(const Eigen::MatrixXd& id_features, const Eigen::MatrixXd& ood_features) {
  if (id_features.rows() != ood_features.rows() || id_features.cols() != ood_features.cols()) {
    throw ShapeError("angle_analysis: feature shapes differ");
  }
  if (id_features.rows() == 0) throw DataError("angle_analysis: no pairs");
  AngleSummary s;
  double sum_deg = 0.0, sum_abs = 0.0;
  for (Eigen::Index i = 0; i < id_features.rows(); ++i) {
    const double c = cosine(id_features.row(i).transpose(), ood_features.row(i).transpose());
    const double deg = std::acos(c) * 180.0 / std::numbers::pi;
    sum_deg += deg;
    sum_abs += std::abs(c);
    const int bin = std::min(kAngleBins - 1, static_cast<int>(deg / (180.0 / kAngleBins)));
    ++s.histogram[static_cast<std::size_t>(bin)];
  }
  s.count = static_cast<std::size_t>(id_features.rows());
  s.mean_deg = sum_deg / static_cast<double>(s.count);
  s.mean_abs_cosine = sum_abs / static_cast<double>(s.count);
  return s;
}

AngleSummary angle_analysis(const std::vector<IdOodPair>& pairs) {
  if (pairs.empty()) throw DataError("angle_analysis: no pairs");
  const auto d = pairs.front().id_feature.size();
  Eigen::MatrixXd ids(static_cast<Eigen::Index>(pairs.size()), d), oods(static_cast<Eigen::Index>(pairs.size()), d);
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    ids.row(static_cast<Eigen::Index>(i)) = pairs[i].id_feature.transpose();
    oods.row(static_cast<Eigen::Index>(i)) = pairs[i].ood_feature.transpose();
  }
  return angle_analysis(ids, oods);
}

double interclass_variance(const Eigen::MatrixXd& features, std::span<const int> labels) {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) throw ShapeError("interclass_variance: length mismatch");
  std::map<int, std::pair<Eigen::VectorXd, std::size_t>> sums;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto [it, fresh] = sums.try_emplace(labels[i], Eigen::VectorXd::Zero(features.cols()), 0);
    it->second.first += features.row(static_cast<Eigen::Index>(i)).transpose();
    ++it->second.second;
  }
  if (sums.size() < 2) throw DataError("interclass_variance needs at least two classes");

  const double n = static_cast<double>(labels.size());
  std::vector<std::pair<Eigen::VectorXd, double>> means;
  Eigen::VectorXd global = Eigen::VectorXd::Zero(features.cols());
  for (const auto& [label, entry] : sums) {
    Eigen::VectorXd m = entry.first / static_cast<double>(entry.second);
    const double norm = m.norm();
    if (norm > 0.0) m /= norm;
    const double w = static_cast<double>(entry.second) / n;
    global += w * m;
    means.emplace_back(std::move(m), w);
  }
  double v = 0.0;
  for (const auto& [m, w] : means) v += w * (m - global).squaredNorm();
  return v;
}

} // namespace osp
