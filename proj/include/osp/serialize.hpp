#pragma once

// Little-endian binary helpers shared by the checkpoint and dataset formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include <Eigen/Dense>

#include "osp/errors.hpp"

namespace osp::io {

static_assert(std::endian::native == std::endian::little, "binary formats assume a little-endian host");

template <typename T>
inline void write_pod(std::ostream& os, const T& v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
inline T read_pod(std::istream& is) {
  T v{};
  is.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!is) throw FormatError("unexpected end of stream");
  return v;
}

inline void write_u32(std::ostream& os, std::uint32_t v) { write_pod(os, v); }
inline void write_u64(std::ostream& os, std::uint64_t v) { write_pod(os, v); }
inline void write_f64(std::ostream& os, double v) { write_pod(os, v); }
inline std::uint32_t read_u32(std::istream& is) { return read_pod<std::uint32_t>(is); }
inline std::uint64_t read_u64(std::istream& is) { return read_pod<std::uint64_t>(is); }
inline double read_f64(std::istream& is) { return read_pod<double>(is); }

inline void write_string(std::ostream& os, const std::string& s) {
  write_u64(os, s.size());
  os.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string read_string(std::istream& is) {
  const auto n = read_u64(is);
  if (n > (1ull << 32)) throw FormatError("string length out of range");
  std::string s(n, '\0');
  is.read(s.data(), static_cast<std::streamsize>(n));
  if (!is) throw FormatError("unexpected end of stream");
  return s;
}

inline void write_vector(std::ostream& os, const Eigen::VectorXd& v) {
  write_u64(os, static_cast<std::uint64_t>(v.size()));
  os.write(reinterpret_cast<const char*>(v.data()), static_cast<std::streamsize>(v.size() * sizeof(double)));
}

inline Eigen::VectorXd read_vector(std::istream& is) {
  const auto n = read_u64(is);
  if (n > (1ull << 32)) throw FormatError("vector length out of range");
  Eigen::VectorXd v(static_cast<Eigen::Index>(n));
  is.read(reinterpret_cast<char*>(v.data()), static_cast<std::streamsize>(n * sizeof(double)));
  if (!is) throw FormatError("unexpected end of stream");
  return v;
}

} // namespace osp::io
