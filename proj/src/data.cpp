#include "osp/data.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>
#include <set>
#include <sstream>

#include "osp/errors.hpp"
#include "osp/serialize.hpp"

namespace osp {

namespace {

constexpr char kDataMagic[8] = {'O', 'S', 'P', 'D', 'A', 'T', 'A', '1'};
constexpr std::uint32_t kDtypeFloat32 = 1;

// Sizes for `total` items spread over `buckets`, remainder to the first ones.
std::vector<int> balanced_counts(int total, std::size_t buckets) {
  std::vector<int> out(buckets, 0);
  if (buckets == 0) return out;
  const int base = total / static_cast<int>(buckets);
  const int extra = total % static_cast<int>(buckets);
  for (std::size_t i = 0; i < buckets; ++i) out[i] = base + (static_cast<int>(i) < extra ? 1 : 0);
  return out;
}

} // namespace

std::string to_string(OodSource source) {
  switch (source) {
    case OodSource::Intra: return "intra";
    case OodSource::GaussianNoise: return "gaussian_noise";
    case OodSource::UniformNoise: return "uniform_noise";
  }
  return "intra";
}

OodSource parse_ood_source(const std::string& name) {
  if (name == "intra") return OodSource::Intra;
  if (name == "gaussian_noise" || name == "gaussian") return OodSource::GaussianNoise;
  if (name == "uniform_noise" || name == "uniform") return OodSource::UniformNoise;
  throw ConfigError("unknown ood source '" + name + "'");
}

int DatasetSpec::ood_count() const {
  return static_cast<int>(std::lround(mismatch_ratio * static_cast<double>(unlabeled_total)));
}

SplitResult synthesize_split(const LabeledCorpus& source, const DatasetSpec& spec) {
  if (spec.id_classes.empty()) throw DataError("synthesize_split: no ID classes");
  if (!(spec.mismatch_ratio >= 0.0 && spec.mismatch_ratio <= 1.0)) {
    throw DataError("synthesize_split: mismatch ratio must lie in [0, 1]");
  }
  if (spec.labeled_per_class < 0 || spec.unlabeled_total < 0) {
    throw DataError("synthesize_split: negative sample counts");
  }
  const std::set<int> id_set(spec.id_classes.begin(), spec.id_classes.end());
  if (id_set.size() != spec.id_classes.size()) throw DataError("synthesize_split: duplicate ID class");
  for (int c : spec.ood_classes) {
    if (id_set.count(c)) throw DataError("synthesize_split: ID and OOD classes overlap");
  }

  std::mt19937_64 rng(spec.seed);
  std::map<int, std::vector<std::size_t>> buckets;
  for (std::size_t i = 0; i < source.size(); ++i) buckets[source.labels[i]].push_back(i);
  for (auto& [cls, idx] : buckets) std::shuffle(idx.begin(), idx.end(), rng);

  auto take = [&](int cls, std::size_t from, int n) {
    const auto it = buckets.find(cls);
    const std::size_t have = it == buckets.end() ? 0 : it->second.size();
    if (from + static_cast<std::size_t>(n) > have) {
      std::ostringstream msg;
      msg << "insufficient source samples for class " << cls << ": need " << from + static_cast<std::size_t>(n)
          << ", have " << have;
      throw DataError(msg.str());
    }
    return std::vector<std::size_t>(it->second.begin() + static_cast<std::ptrdiff_t>(from),
                                    it->second.begin() + static_cast<std::ptrdiff_t>(from + static_cast<std::size_t>(n)));
  };

  const int n_ood = spec.ood_count();
  const int n_id = spec.unlabeled_total - n_ood;
  const auto d = static_cast<Eigen::Index>(source.shape.size());
  const std::size_t k = spec.id_classes.size();

  SplitResult out;
  out.labeled.shape = source.shape;
  out.unlabeled.shape = source.shape;

  std::vector<std::size_t> labeled_rows;
  for (std::size_t c = 0; c < k; ++c) {
    for (auto i : take(spec.id_classes[c], 0, spec.labeled_per_class)) {
      labeled_rows.push_back(i);
      out.labeled.labels.push_back(static_cast<int>(c));
      out.labeled_source_class.push_back(spec.id_classes[c]);
    }
  }
  out.labeled.inputs.resize(static_cast<Eigen::Index>(labeled_rows.size()), d);
  for (std::size_t r = 0; r < labeled_rows.size(); ++r) {
    out.labeled.inputs.row(static_cast<Eigen::Index>(r)) = source.inputs.row(static_cast<Eigen::Index>(labeled_rows[r]));
  }

  struct Entry {
    Eigen::RowVectorXd x;
    int cls;
    bool ood;
  };
  std::vector<Entry> unl;
  unl.reserve(static_cast<std::size_t>(spec.unlabeled_total));

  const auto id_counts = balanced_counts(n_id, k);
  for (std::size_t c = 0; c < k; ++c) {
    for (auto i : take(spec.id_classes[c], static_cast<std::size_t>(spec.labeled_per_class), id_counts[c])) {
      unl.push_back({source.inputs.row(static_cast<Eigen::Index>(i)), spec.id_classes[c], false});
    }
  }

  if (n_ood > 0) {
    if (spec.ood_source == OodSource::Intra) {
      if (spec.ood_classes.empty()) throw DataError("synthesize_split: OOD samples requested but no OOD classes");
      const auto ood_counts = balanced_counts(n_ood, spec.ood_classes.size());
      for (std::size_t c = 0; c < spec.ood_classes.size(); ++c) {
        for (auto i : take(spec.ood_classes[c], 0, ood_counts[c])) {
          unl.push_back({source.inputs.row(static_cast<Eigen::Index>(i)), spec.ood_classes[c], true});
        }
      }
    } else {
      const auto kind = spec.ood_source == OodSource::GaussianNoise ? NoiseKind::Gaussian : NoiseKind::Uniform;
      const Eigen::MatrixXd noise = noise_ood(n_ood, source.shape, kind, rng(), spec.noise_mean, spec.noise_std);
      for (Eigen::Index i = 0; i < noise.rows(); ++i) unl.push_back({noise.row(i), -1, true});
    }
  }

  std::shuffle(unl.begin(), unl.end(), rng);
  out.unlabeled.inputs.resize(static_cast<Eigen::Index>(unl.size()), d);
  for (std::size_t r = 0; r < unl.size(); ++r) {
    out.unlabeled.inputs.row(static_cast<Eigen::Index>(r)) = unl[r].x;
    out.truth.ood_mask.push_back(unl[r].ood);
    out.truth.source_class.push_back(unl[r].cls);
  }
  return out;
}

void write_manifest_csv(std::ostream& os, const SplitResult& split) {
  os << "index,split,class,is_ood\n";
  for (std::size_t i = 0; i < split.labeled.size(); ++i) {
    os << i << ",labeled," << split.labeled_source_class[i] << ",0\n";
  }
  for (std::size_t i = 0; i < split.unlabeled.size(); ++i) {
    os << i << ",unlabeled," << split.truth.source_class[i] << ',' << (split.truth.ood_mask[i] ? 1 : 0) << '\n';
  }
}

Eigen::VectorXd rotate_input(const Eigen::Ref<const Eigen::VectorXd>& sample, const InputShape& shape,
                             int quarter_turns) {
  if (sample.size() != static_cast<Eigen::Index>(shape.size())) throw ShapeError("rotate_input: size mismatch");
  const int k = ((quarter_turns % 4) + 4) % 4;
  Eigen::VectorXd out = sample;
  if (shape.kind == InputKind::Points) {
    if (shape.size() != 2) throw ShapeError("rotate_input: point rotation needs 2-D points");
    for (int t = 0; t < k; ++t) out = Eigen::Vector2d(-out[1], out[0]);
    return out;
  }
  if (shape.height != shape.width) throw ShapeError("rotate_input: image must be square");
  const int n = shape.width;
  const int plane = n * n;
  for (int t = 0; t < k; ++t) {
    Eigen::VectorXd next(out.size());
    for (int ch = 0; ch < shape.channels; ++ch) {
      // counter-clockwise: out[y][x] = in[x][n - 1 - y]
      for (int y = 0; y < n; ++y)
        for (int x = 0; x < n; ++x) next[ch * plane + y * n + x] = out[ch * plane + x * n + (n - 1 - y)];
    }
    out = std::move(next);
  }
  return out;
}

std::array<Eigen::VectorXd, 4> four_rotations(const Eigen::Ref<const Eigen::VectorXd>& sample,
                                              const InputShape& shape) {
  return {rotate_input(sample, shape, 0), rotate_input(sample, shape, 1), rotate_input(sample, shape, 2),
          rotate_input(sample, shape, 3)};
}

RotationBatch make_rotation_batch(const Eigen::MatrixXd& inputs, const InputShape& shape) {
  RotationBatch out;
  out.inputs.resize(inputs.rows() * 4, inputs.cols());
  out.labels.resize(static_cast<std::size_t>(inputs.rows() * 4));
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    const auto rots = four_rotations(inputs.row(i).transpose(), shape);
    for (int k = 0; k < 4; ++k) {
      out.inputs.row(4 * i + k) = rots[static_cast<std::size_t>(k)].transpose();
      out.labels[static_cast<std::size_t>(4 * i + k)] = k;
    }
  }
  return out;
}

Eigen::MatrixXd noise_ood(int count, const InputShape& shape, NoiseKind kind, std::uint64_t seed,
                          double gaussian_mean, double gaussian_std) {
  if (count < 0) throw std::invalid_argument("noise_ood: count must be >= 0");
  std::mt19937_64 rng(seed);
  Eigen::MatrixXd out(count, static_cast<Eigen::Index>(shape.size()));
  std::normal_distribution<double> gauss(gaussian_mean, gaussian_std);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Eigen::Index i = 0; i < out.rows(); ++i) {
    for (Eigen::Index j = 0; j < out.cols(); ++j) {
      out(i, j) = kind == NoiseKind::Gaussian ? std::clamp(gauss(rng), 0.0, 1.0) : unif(rng);
    }
  }
  return out;
}

BatchSampler::BatchSampler(std::size_t pool_size, std::uint64_t seed) : rng_(seed), perm_(pool_size) {
  if (pool_size == 0) throw DataError("BatchSampler: empty pool");
  for (std::size_t i = 0; i < pool_size; ++i) perm_[i] = i;
  reshuffle();
}

void BatchSampler::reshuffle() {
  std::shuffle(perm_.begin(), perm_.end(), rng_);
  pos_ = 0;
  ++epoch_;
}

std::vector<std::size_t> BatchSampler::next(std::size_t count) {
  if (perm_.empty()) throw DataError("BatchSampler: empty pool");
  std::vector<std::size_t> out;
  out.reserve(count);
  while (out.size() < count) {
    if (pos_ == perm_.size()) reshuffle();
    out.push_back(perm_[pos_++]);
  }
  return out;
}

void BatchSampler::save(std::ostream& os) const {
  std::ostringstream rng_text;
  rng_text << rng_;
  io::write_string(os, rng_text.str());
  io::write_u64(os, perm_.size());
  for (auto p : perm_) io::write_u64(os, p);
  io::write_u64(os, pos_);
  io::write_u64(os, epoch_);
}

BatchSampler BatchSampler::load(std::istream& is) {
  BatchSampler s;
  std::istringstream rng_text(io::read_string(is));
  rng_text >> s.rng_;
  if (!rng_text) throw FormatError("sampler rng state unreadable");
  const auto n = io::read_u64(is);
  s.perm_.resize(n);
  for (auto& p : s.perm_) p = io::read_u64(is);
  s.pos_ = io::read_u64(is);
  s.epoch_ = io::read_u64(is);
  if (s.pos_ > s.perm_.size()) throw FormatError("sampler position out of range");
  return s;
}

bool BatchSampler::operator==(const BatchSampler& other) const {
  return rng_ == other.rng_ && perm_ == other.perm_ && pos_ == other.pos_ && epoch_ == other.epoch_;
}

Batch sample_batch(const LabeledSet& labeled, const UnlabeledPool& unlabeled, BatchSampler& labeled_sampler,
                   BatchSampler& unlabeled_sampler, std::size_t batch_l, std::size_t batch_u) {
  if (labeled.size() == 0 || unlabeled.size() == 0) throw DataError("sample_batch: empty pool");
  Batch b;
  const auto li = labeled_sampler.next(batch_l);
  b.labeled_inputs.resize(static_cast<Eigen::Index>(batch_l), labeled.inputs.cols());
  b.labels.reserve(batch_l);
  for (std::size_t r = 0; r < li.size(); ++r) {
    b.labeled_inputs.row(static_cast<Eigen::Index>(r)) = labeled.inputs.row(static_cast<Eigen::Index>(li[r]));
    b.labels.push_back(labeled.labels[li[r]]);
  }
  b.unlabeled_indices = unlabeled_sampler.next(batch_u);
  b.unlabeled_inputs.resize(static_cast<Eigen::Index>(batch_u), unlabeled.inputs.cols());
  for (std::size_t r = 0; r < b.unlabeled_indices.size(); ++r) {
    b.unlabeled_inputs.row(static_cast<Eigen::Index>(r)) =
        unlabeled.inputs.row(static_cast<Eigen::Index>(b.unlabeled_indices[r]));
  }
  return b;
}

BlobLayout BlobLayout::standard() {
  // ID blobs on the corners of a square; each tight OOD blob sits on an edge,
  // closer to one ID class than to its neighbour
  BlobLayout layout;
  layout.id_centers = {{{2.0, 2.0}}, {{5.0, 2.0}}, {{2.0, 5.0}}, {{5.0, 5.0}}};
  layout.ood_centers = {{{3.2, 2.0}}, {{5.0, 3.2}}, {{3.8, 5.0}}, {{2.0, 3.8}}};
  layout.spread = 0.7;
  layout.ood_spread = 0.35;
  return layout;
}

LabeledCorpus make_blobs(const BlobLayout& layout, int per_class, std::uint64_t seed) {
  if (per_class < 0) throw std::invalid_argument("make_blobs: per_class must be >= 0");
  std::mt19937_64 rng(seed);
  const double ood_spread = layout.ood_spread < 0.0 ? layout.spread : layout.ood_spread;
  LabeledCorpus out;
  out.shape = InputShape::points(2);
  const std::size_t blobs = layout.id_centers.size() + layout.ood_centers.size();
  out.inputs.resize(static_cast<Eigen::Index>(blobs) * per_class, 2);
  Eigen::Index row = 0;
  for (std::size_t b = 0; b < blobs; ++b) {
    const bool id = b < layout.id_centers.size();
    const auto& c = id ? layout.id_centers[b] : layout.ood_centers[b - layout.id_centers.size()];
    std::normal_distribution<double> noise(0.0, id ? layout.spread : ood_spread);
    for (int i = 0; i < per_class; ++i) {
      out.inputs(row, 0) = c[0] + noise(rng);
      out.inputs(row, 1) = c[1] + noise(rng);
      out.labels.push_back(static_cast<int>(b));
      ++row;
    }
  }
  return out;
}

void write_ospdata(std::ostream& os, const LabeledCorpus& corpus, int class_count) {
  os.write(kDataMagic, sizeof(kDataMagic));
  io::write_u32(os, static_cast<std::uint32_t>(corpus.shape.height));
  io::write_u32(os, static_cast<std::uint32_t>(corpus.shape.width));
  io::write_u32(os, static_cast<std::uint32_t>(corpus.shape.channels));
  io::write_u32(os, static_cast<std::uint32_t>(class_count));
  io::write_u32(os, kDtypeFloat32);
  io::write_u64(os, corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    io::write_pod<std::int32_t>(os, corpus.labels[i]);
    for (Eigen::Index j = 0; j < corpus.inputs.cols(); ++j) {
      io::write_pod<float>(os, static_cast<float>(corpus.inputs(static_cast<Eigen::Index>(i), j)));
    }
  }
}

LabeledCorpus read_ospdata(std::istream& is) {
  char magic[8];
  is.read(magic, sizeof(magic));
  if (!is || !std::equal(magic, magic + 8, kDataMagic)) throw FormatError("not an OSPDATA1 stream");
  LabeledCorpus out;
  const auto h = static_cast<int>(io::read_u32(is));
  const auto w = static_cast<int>(io::read_u32(is));
  const auto c = static_cast<int>(io::read_u32(is));
  const auto classes = static_cast<int>(io::read_u32(is));
  if (io::read_u32(is) != kDtypeFloat32) throw FormatError("OSPDATA1: unsupported dtype");
  if (h <= 0 || w <= 0 || c <= 0) throw FormatError("OSPDATA1: bad dimensions");
  out.shape = (h == 1 && c == 1) ? InputShape::points(w) : InputShape::image(h, w, c);
  const auto n = io::read_u64(is);
  out.inputs.resize(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(out.shape.size()));
  out.labels.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto label = io::read_pod<std::int32_t>(is);
    if (label < 0 || label >= classes) throw FormatError("OSPDATA1: label outside class count");
    out.labels.push_back(label);
    for (Eigen::Index j = 0; j < out.inputs.cols(); ++j) {
      out.inputs(static_cast<Eigen::Index>(i), j) = io::read_pod<float>(is);
    }
  }
  return out;
}

LabeledCorpus read_ospdata_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open corpus file " + path);
  return read_ospdata(in);
}

void write_ospdata_file(const std::string& path, const LabeledCorpus& corpus, int class_count) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write corpus file " + path);
  write_ospdata(out, corpus, class_count);
}

} // namespace osp
