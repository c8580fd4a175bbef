#include "osp/detector.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iomanip>
#include <ostream>
#include <utility>

#include "osp/errors.hpp"
#include "osp/model.hpp"
#include "osp/serialize.hpp"

namespace osp {

std::vector<bool> SplitState::ood_flags(std::size_t pool_size) const {
  std::vector<bool> flags(pool_size, false);
  for (auto i : ood_indices) {
    if (i >= pool_size) throw ShapeError("split index outside pool");
    flags[i] = true;
  }
  return flags;
}

Eigen::VectorXd ood_score(const Model& model, const Eigen::MatrixXd& inputs) {
  return model.forward(inputs).ood_score;
}

namespace {

using U128 = unsigned __int128;

// 128 x 128 -> 256 bit product as (high, low).
std::pair<U128, U128> mul_wide(U128 a, U128 b) {
  const U128 mask = (static_cast<U128>(1) << 64) - 1;
  const U128 a0 = a & mask, a1 = a >> 64, b0 = b & mask, b1 = b >> 64;
  const U128 p00 = a0 * b0, p01 = a0 * b1, p10 = a1 * b0, p11 = a1 * b1;
  const U128 mid = (p00 >> 64) + (p01 & mask) + (p10 & mask);
  const U128 low = (p00 & mask) | (mid << 64);
  const U128 high = p11 + (p01 >> 64) + (p10 >> 64) + (mid >> 64);
  return {high, low};
}

// a/b > c/d for positive denominators.
bool fraction_greater(U128 a, U128 b, U128 c, U128 d) {
  return mul_wide(a, d) > mul_wide(c, b);
}

} // namespace

int otsu_bin(double score, double lo, double hi) {
  const double t = (score - lo) / (hi - lo) * kOtsuBins;
  return std::clamp(static_cast<int>(std::floor(t)), 0, kOtsuBins - 1);
}

double otsu_threshold(std::span<const double> scores) {
  if (scores.size() < 2) throw DegenerateDistributionError("otsu_threshold: need at least two scores");
  // keeps the squared moment difference inside 128 bits
  if (scores.size() > 50'000'000) throw std::invalid_argument("otsu_threshold: more than 5e7 scores");
  for (double s : scores) {
    if (!std::isfinite(s)) throw DegenerateDistributionError("otsu_threshold: non-finite score");
  }
  const auto [lo_it, hi_it] = std::minmax_element(scores.begin(), scores.end());
  const double lo = *lo_it;
  const double hi = *hi_it;
  if (!(hi > lo)) throw DegenerateDistributionError("otsu_threshold: all scores identical");

  std::array<std::int64_t, kOtsuBins> hist{};
  for (double s : scores) ++hist[static_cast<std::size_t>(otsu_bin(s, lo, hi))];

  std::int64_t total_n = 0;
  std::int64_t total_sum = 0;
  for (int b = 0; b < kOtsuBins; ++b) {
    total_n += hist[b];
    total_sum += hist[b] * b;
  }

  // Between-class variance with bin indices as levels:
  //   sigma_b^2 = (N*S0 - N0*S)^2 / (N^2 * N0 * N1)
  // Candidates are compared as exact fractions num/den (the common 1/N^2 is
  // dropped), so ties are real ties and resolve to the lowest k.
  std::int64_t n0 = 0;
  std::int64_t s0 = 0;
  U128 best_num = 0, best_den = 1;
  bool have_best = false;
  int best_k = 1;
  for (int k = 1; k < kOtsuBins; ++k) {
    n0 += hist[k - 1];
    s0 += hist[k - 1] * (k - 1);
    const std::int64_t n1 = total_n - n0;
    if (n0 == 0 || n1 == 0) continue;
    const __int128 diff = static_cast<__int128>(total_n) * s0 - static_cast<__int128>(n0) * total_sum;
    const U128 mag = static_cast<U128>(diff < 0 ? -diff : diff);
    const U128 num = mag * mag;
    const U128 den = static_cast<U128>(n0) * static_cast<U128>(n1);
    if (!have_best || fraction_greater(num, den, best_num, best_den)) {
      best_num = num;
      best_den = den;
      best_k = k;
      have_best = true;
    }
  }
  return lo + (hi - lo) * best_k / kOtsuBins;
}

SplitState split_unlabeled(std::span<const double> scores, double threshold, long epoch) {
  if (!std::isfinite(threshold)) throw std::invalid_argument("split_unlabeled: threshold must be finite");
  SplitState out;
  out.threshold = threshold;
  out.epoch_computed = epoch;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    (scores[i] >= threshold ? out.id_indices : out.ood_indices).push_back(i);
  }
  return out;
}

void write_split_csv(std::ostream& os, const SplitState& split, std::span<const double> scores) {
  const auto flags = split.ood_flags(scores.size());
  os << "index,score,assignment\n";
  os << std::setprecision(17);
  for (std::size_t i = 0; i < scores.size(); ++i) {
    os << i << ',' << scores[i] << ',' << (flags[i] ? "ood" : "id") << '\n';
  }
}

void save_split(std::ostream& os, const SplitState& split) {
  io::write_f64(os, split.threshold);
  io::write_pod<std::int64_t>(os, split.epoch_computed);
  io::write_u64(os, split.id_indices.size());
  for (auto i : split.id_indices) io::write_u64(os, i);
  io::write_u64(os, split.ood_indices.size());
  for (auto i : split.ood_indices) io::write_u64(os, i);
}

SplitState load_split(std::istream& is) {
  SplitState s;
  s.threshold = io::read_f64(is);
  s.epoch_computed = io::read_pod<std::int64_t>(is);
  const auto n_id = io::read_u64(is);
  s.id_indices.reserve(n_id);
  for (std::uint64_t i = 0; i < n_id; ++i) s.id_indices.push_back(io::read_u64(is));
  const auto n_ood = io::read_u64(is);
  s.ood_indices.reserve(n_ood);
  for (std::uint64_t i = 0; i < n_ood; ++i) s.ood_indices.push_back(io::read_u64(is));
  return s;
}

} // namespace osp
