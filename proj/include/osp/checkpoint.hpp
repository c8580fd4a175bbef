#pragma once

#include <iosfwd>
#include <map>
#include <string>

#include "osp/model.hpp"

namespace osp {

inline constexpr char kCheckpointMagic[] = "OSPCKPT1";
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Tagged binary sections behind the "OSPCKPT1" magic:
///   magic[8] | u32 version | u32 section count |
///   per section: tag[4] | u64 length | payload
class CheckpointArchive {
public:
  void put(const std::string& tag, std::string payload);
  const std::string& get(const std::string& tag) const;
  bool has(const std::string& tag) const { return sections_.count(tag) != 0; }

  void write(std::ostream& os) const;
  static CheckpointArchive read(std::istream& is);

private:
  std::map<std::string, std::string> sections_;
};

void save_model_spec(std::ostream& os, const ModelSpec& spec);
ModelSpec load_model_spec(std::istream& is);

} // namespace osp
