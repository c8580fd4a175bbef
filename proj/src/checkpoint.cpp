#include "osp/checkpoint.hpp"

#include <cstring>
#include <istream>
#include <ostream>

#include "osp/errors.hpp"
#include "osp/serialize.hpp"

namespace osp {

void CheckpointArchive::put(const std::string& tag, std::string payload) {
  if (tag.size() != 4) throw std::invalid_argument("checkpoint tags are four characters");
  sections_[tag] = std::move(payload);
}

const std::string& CheckpointArchive::get(const std::string& tag) const {
  const auto it = sections_.find(tag);
  if (it == sections_.end()) throw FormatError("checkpoint is missing section " + tag);
  return it->second;
}

void CheckpointArchive::write(std::ostream& os) const {
  os.write(kCheckpointMagic, 8);
  io::write_u32(os, kCheckpointVersion);
  io::write_u32(os, static_cast<std::uint32_t>(sections_.size()));
  for (const auto& [tag, payload] : sections_) {
    os.write(tag.data(), 4);
    io::write_u64(os, payload.size());
    os.write(payload.data(), static_cast<std::streamsize>(payload.size()));
  }
  if (!os) throw FormatError("failed writing checkpoint");
}

CheckpointArchive CheckpointArchive::read(std::istream& is) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw FormatError("not an OSPCKPT1 checkpoint");
  const auto version = io::read_u32(is);
  if (version != kCheckpointVersion) throw FormatError("unsupported checkpoint version " + std::to_string(version));
  const auto count = io::read_u32(is);
  CheckpointArchive ar;
  for (std::uint32_t i = 0; i < count; ++i) {
    std::string tag(4, '\0');
    is.read(tag.data(), 4);
    if (!is) throw FormatError("truncated checkpoint");
    const auto n = io::read_u64(is);
    std::string payload(n, '\0');
    is.read(payload.data(), static_cast<std::streamsize>(n));
    if (!is) throw FormatError("truncated checkpoint section " + tag);
    ar.sections_[tag] = std::move(payload);
  }
  return ar;
}

void save_model_spec(std::ostream& os, const ModelSpec& s) {
  io::write_u32(os, s.arch == Architecture::Mlp ? 0u : 1u);
  io::write_u32(os, s.input.kind == InputKind::Points ? 0u : 1u);
  for (int v : {s.input.height, s.input.width, s.input.channels, s.hidden, s.feature_dim, s.num_classes,
                s.conv1_channels, s.conv2_channels}) {
    io::write_u32(os, static_cast<std::uint32_t>(v));
  }
}

ModelSpec load_model_spec(std::istream& is) {
  ModelSpec s;
  s.arch = io::read_u32(is) == 0 ? Architecture::Mlp : Architecture::Cnn;
  s.input.kind = io::read_u32(is) == 0 ? InputKind::Points : InputKind::Image;
  int* fields[] = {&s.input.height, &s.input.width, &s.input.channels, &s.hidden, &s.feature_dim,
                   &s.num_classes, &s.conv1_channels, &s.conv2_channels};
  for (int* f : fields) *f = static_cast<int>(io::read_u32(is));
  return s;
}

} // namespace osp
