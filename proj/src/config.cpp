#include "osp/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <iomanip>
#include <sstream>

#include "osp/errors.hpp"

namespace osp {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

double parse_double(const std::string& key, const std::string& v) {
  double out = 0.0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw ConfigError("key '" + key + "': not a number: '" + v + "'");
  return out;
}

long long parse_int(const std::string& key, const std::string& v) {
  long long out = 0;
  const auto* end = v.data() + v.size();
  const auto [ptr, ec] = std::from_chars(v.data(), end, out);
  if (ec != std::errc{} || ptr != end) throw ConfigError("key '" + key + "': not an integer: '" + v + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1" || v == "yes") return true;
  if (v == "false" || v == "0" || v == "no") return false;
  throw ConfigError("key '" + key + "': not a boolean: '" + v + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(static_cast<int>(parse_int(key, item)));
  }
  return out;
}

std::string join(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

struct KeyDef {
  std::string name;
  std::string doc;
  std::function<std::string(const TrainConfig&)> get;
  std::function<void(TrainConfig&, const std::string&)> set;
};

template <typename T>
KeyDef real_key(std::string name, std::string doc, T TrainConfig::*field) {
  return {name, std::move(doc), [field](const TrainConfig& c) { return format_double(c.*field); },
          [field, name](TrainConfig& c, const std::string& v) { c.*field = parse_double(name, v); }};
}

KeyDef weight_key(std::string name, std::string doc, double LossWeights::*field) {
  return {name, std::move(doc), [field](const TrainConfig& c) { return format_double(c.weights.*field); },
          [field, name](TrainConfig& c, const std::string& v) { c.weights.*field = parse_double(name, v); }};
}

template <typename T>
KeyDef int_key(std::string name, std::string doc, T TrainConfig::*field) {
  return {name, std::move(doc), [field](const TrainConfig& c) { return std::to_string(c.*field); },
          [field, name](TrainConfig& c, const std::string& v) {
            const auto n = parse_int(name, v);
            if constexpr (std::is_unsigned_v<T>) {
              if (n < 0) throw ConfigError("key '" + name + "' must be non-negative");
            }
            c.*field = static_cast<T>(n);
          }};
}

KeyDef bool_key(std::string name, std::string doc, bool TrainConfig::*field) {
  return {name, std::move(doc), [field](const TrainConfig& c) { return std::string(c.*field ? "true" : "false"); },
          [field, name](TrainConfig& c, const std::string& v) { c.*field = parse_bool(name, v); }};
}

const std::vector<KeyDef>& key_table() {
  static const std::vector<KeyDef> table = {
      real_key("delta", "anchor confidence threshold", &TrainConfig::delta),
      real_key("gamma_ood", "recyclable OOD confidence ceiling", &TrainConfig::gamma_ood),
      real_key("alpha", "soft decomposition strength in [0,1]", &TrainConfig::alpha),
      int_key("bank_capacity", "per-class FIFO capacity of the OOD bank", &TrainConfig::bank_capacity),
      bool_key("pairing", "build ID-OOD pairs during fine-tuning", &TrainConfig::pairing),
      bool_key("odc_ce_per_class", "normalize the labeled pruned-CE term per class", &TrainConfig::odc_ce_per_class),
      bool_key("odc_detach_clean", "treat clean predictions as constants in the orthogonality KL terms",
               &TrainConfig::odc_detach_clean),
      real_key("lr_pre", "initial pre-training learning rate", &TrainConfig::lr_pre),
      real_key("lr_ft", "initial fine-tuning learning rate", &TrainConfig::lr_ft),
      real_key("momentum", "SGD momentum", &TrainConfig::momentum),
      real_key("weight_decay", "L2 weight decay added to gradients", &TrainConfig::weight_decay),
      int_key("batch_l", "labeled batch size", &TrainConfig::batch_l),
      int_key("batch_u", "unlabeled batch size (before rotation copies)", &TrainConfig::batch_u),
      int_key("iters_pre", "pre-training iterations", &TrainConfig::iters_pre),
      int_key("iters_ft", "fine-tuning iterations", &TrainConfig::iters_ft),
      int_key("resplit_period", "epochs between ID/OOD re-splits", &TrainConfig::resplit_period),
      real_key("noise_std", "feature noise std for pre-training consistency", &TrainConfig::noise_std),
      real_key("ssl_tau", "pseudo-label confidence threshold", &TrainConfig::ssl_tau),
      bool_key("pretrain_unlabeled_negatives", "use the unlabeled batch as OOD-head negatives while pre-training",
               &TrainConfig::pretrain_unlabeled_negatives),
      weight_key("w_ce", "weight of labeled cross-entropy", &LossWeights::ce),
      weight_key("w_u", "weight of pseudo-label loss", &LossWeights::u),
      weight_key("w_ood_l", "weight of labeled OOD-head loss", &LossWeights::ood_l),
      weight_key("w_ood_u", "weight of unlabeled OOD-head loss", &LossWeights::ood_u),
      weight_key("w_rot", "weight of rotation loss", &LossWeights::rot),
      weight_key("w_odc_l", "weight of labeled orthogonality consistency", &LossWeights::odc_l),
      weight_key("w_odc_u", "weight of unlabeled orthogonality consistency", &LossWeights::odc_u),
      {"arch", "encoder architecture: mlp or cnn", [](const TrainConfig& c) { return to_string(c.arch); },
       [](TrainConfig& c, const std::string& v) { c.arch = parse_architecture(v); }},
      int_key("hidden", "hidden width of the mlp encoder", &TrainConfig::hidden),
      int_key("feature_dim", "encoder feature dimension", &TrainConfig::feature_dim),
      int_key("conv1_channels", "cnn first conv channels", &TrainConfig::conv1_channels),
      int_key("conv2_channels", "cnn second conv channels", &TrainConfig::conv2_channels),
      {"dataset", "blobs or file", [](const TrainConfig& c) { return std::string(c.dataset == DatasetKind::Blobs ? "blobs" : "file"); },
       [](TrainConfig& c, const std::string& v) {
         if (v == "blobs") c.dataset = DatasetKind::Blobs;
         else if (v == "file") c.dataset = DatasetKind::File;
         else throw ConfigError("key 'dataset': expected blobs or file");
       }},
      {"data_path", "OSPDATA1 training corpus (dataset=file)", [](const TrainConfig& c) { return c.data_path; },
       [](TrainConfig& c, const std::string& v) { c.data_path = v; }},
      {"test_path", "OSPDATA1 held-out corpus (dataset=file)", [](const TrainConfig& c) { return c.test_path; },
       [](TrainConfig& c, const std::string& v) { c.test_path = v; }},
      {"id_classes", "comma-separated source classes treated as ID", [](const TrainConfig& c) { return join(c.id_classes); },
       [](TrainConfig& c, const std::string& v) { c.id_classes = parse_int_list("id_classes", v); }},
      {"ood_classes", "comma-separated source classes treated as OOD", [](const TrainConfig& c) { return join(c.ood_classes); },
       [](TrainConfig& c, const std::string& v) { c.ood_classes = parse_int_list("ood_classes", v); }},
      int_key("labeled_per_class", "labeled samples per ID class", &TrainConfig::labeled_per_class),
      int_key("unlabeled_total", "unlabeled pool size", &TrainConfig::unlabeled_total),
      real_key("mismatch_ratio", "fraction of the unlabeled pool drawn from OOD", &TrainConfig::mismatch_ratio),
      {"ood_source", "intra, gaussian_noise or uniform_noise", [](const TrainConfig& c) { return to_string(c.ood_source); },
       [](TrainConfig& c, const std::string& v) { c.ood_source = parse_ood_source(v); }},
      real_key("ood_noise_mean", "mean of Gaussian noise OOD pixels", &TrainConfig::ood_noise_mean),
      real_key("ood_noise_std", "std of Gaussian noise OOD pixels", &TrainConfig::ood_noise_std),
      real_key("blob_spread", "std of each ID Gaussian blob", &TrainConfig::blob_spread),
      real_key("blob_ood_spread", "std of each OOD Gaussian blob", &TrainConfig::blob_ood_spread),
      int_key("blob_pool_per_class", "source points generated per blob", &TrainConfig::blob_pool_per_class),
      int_key("test_per_class", "held-out points per blob", &TrainConfig::test_per_class),
      int_key("seed", "master seed", &TrainConfig::seed),
  };
  return table;
}

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

} // namespace

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return ec == std::errc{} ? std::string(buf, ptr) : std::to_string(v);
}

std::string hex64(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

TrainConfig TrainConfig::blob_protocol() {
  TrainConfig c;
  c.dataset = DatasetKind::Blobs;
  c.id_classes = {0, 1, 2, 3};
  c.ood_classes = {4, 5, 6, 7};
  c.labeled_per_class = 10;
  c.unlabeled_total = 800;
  c.mismatch_ratio = 0.6;
  c.iters_pre = 500;
  c.iters_ft = 2000;
  c.bank_capacity = 500;
  c.batch_l = 32;
  c.batch_u = 128;
  c.hidden = 32;
  c.feature_dim = 32;
  c.gamma_ood = 0.8;
  c.lr_ft = 0.01;
  return c;
}

void TrainConfig::validate() const {
  auto open_unit = [](double v) { return v > 0.0 && v < 1.0; };
  if (!open_unit(delta)) throw ConfigError("delta must lie in (0, 1)");
  if (!open_unit(gamma_ood)) throw ConfigError("gamma_ood must lie in (0, 1)");
  if (!open_unit(ssl_tau)) throw ConfigError("ssl_tau must lie in (0, 1)");
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (!(mismatch_ratio >= 0.0 && mismatch_ratio <= 1.0)) throw ConfigError("mismatch_ratio must lie in [0, 1]");
  if (bank_capacity == 0) throw ConfigError("bank_capacity must be positive");
  if (iters_pre < 0 || iters_ft < 0) throw ConfigError("iteration counts must be non-negative");
  if (resplit_period <= 0) throw ConfigError("resplit_period must be positive");
  if (batch_l == 0 || batch_u == 0) throw ConfigError("batch sizes must be positive");
  if (!(lr_pre >= 0.0) || !(lr_ft >= 0.0)) throw ConfigError("learning rates must be non-negative");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
  if (noise_std < 0.0) throw ConfigError("noise_std must be non-negative");
  if (!(blob_spread > 0.0) || !(blob_ood_spread > 0.0)) throw ConfigError("blob spreads must be positive");
  if (id_classes.size() < 2) throw ConfigError("need at least two ID classes");
  if (hidden <= 0 || feature_dim <= 0) throw ConfigError("hidden and feature_dim must be positive");
  if (dataset == DatasetKind::File && data_path.empty()) throw ConfigError("dataset=file needs data_path");
}

void TrainConfig::set(const std::string& key, const std::string& value) {
  for (const auto& def : key_table()) {
    if (def.name == key) {
      def.set(*this, value);
      return;
    }
  }
  throw ConfigError("unknown config key '" + key + "'");
}

std::vector<std::pair<std::string, std::string>> TrainConfig::entries() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& def : key_table()) out.emplace_back(def.name, def.get(*this));
  return out;
}

std::string TrainConfig::to_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : entries()) os << k << '=' << v << '\n';
  return os.str();
}

std::uint64_t TrainConfig::hash() const {
  std::string text;
  for (const auto& [k, v] : entries()) {
    if (k == "seed") continue;
    text += k + '=' + v + '\n';
  }
  return fnv1a(text);
}

ModelSpec TrainConfig::model_spec(const InputShape& input) const {
  ModelSpec s;
  s.arch = arch;
  s.input = input;
  s.hidden = hidden;
  s.feature_dim = feature_dim;
  s.num_classes = static_cast<int>(id_classes.size());
  s.conv1_channels = conv1_channels;
  s.conv2_channels = conv2_channels;
  return s;
}

DatasetSpec TrainConfig::dataset_spec() const {
  DatasetSpec s;
  s.id_classes = id_classes;
  s.ood_classes = ood_classes;
  s.labeled_per_class = labeled_per_class;
  s.unlabeled_total = unlabeled_total;
  s.mismatch_ratio = mismatch_ratio;
  s.ood_source = ood_source;
  s.seed = seed;
  s.noise_mean = ood_noise_mean;
  s.noise_std = ood_noise_std;
  return s;
}

const std::vector<std::pair<std::string, std::string>>& config_key_docs() {
  static const auto docs = [] {
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& def : key_table()) out.emplace_back(def.name, def.doc);
    return out;
  }();
  return docs;
}

TrainConfig parse_config(std::istream& is, TrainConfig base) {
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash_pos = line.find('#');
    if (hash_pos != std::string::npos) line.erase(hash_pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key=value");
    }
    base.set(trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return base;
}

TrainConfig load_config_file(const std::string& path, TrainConfig base) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path);
  return parse_config(in, std::move(base));
}

void apply_overrides(TrainConfig& config, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    config.set(trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
}

} // namespace osp
