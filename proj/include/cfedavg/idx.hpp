#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "cfedavg/errors.hpp"

namespace cfedavg {

// IDX container (the MNIST distribution format): big-endian 32-bit magic,
// then one big-endian 32-bit extent per dimension, then the raw unsigned
// bytes. Only the two magics MNIST uses are accepted.

inline constexpr std::uint32_t kIdxMagicImages = 0x00000803;  // 3-D u8 tensor
inline constexpr std::uint32_t kIdxMagicLabels = 0x00000801;  // 1-D u8 vector

struct IdxTensor {
  std::uint32_t magic = 0;
  std::vector<std::uint32_t> dims;
  std::vector<std::uint8_t> data;

  std::size_t element_count() const {
    std::size_t n = 1;
    for (std::uint32_t d : dims) n *= d;
    return n;
  }
};

namespace detail {

inline std::uint32_t read_be32(std::span<const std::uint8_t> b, std::size_t off) {
  return (static_cast<std::uint32_t>(b[off]) << 24) |
         (static_cast<std::uint32_t>(b[off + 1]) << 16) |
         (static_cast<std::uint32_t>(b[off + 2]) << 8) |
         static_cast<std::uint32_t>(b[off + 3]);
}

inline void write_be32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  out.push_back(static_cast<std::uint8_t>(v >> 24));
  out.push_back(static_cast<std::uint8_t>(v >> 16));
  out.push_back(static_cast<std::uint8_t>(v >> 8));
  out.push_back(static_cast<std::uint8_t>(v));
}

inline std::string hex32(std::uint32_t v) {
  static const char* digits = "0123456789abcdef";
  std::string s = "0x";
  for (int shift = 28; shift >= 0; shift -= 4) s += digits[(v >> shift) & 0xf];
  return s;
}

}  // namespace detail

inline IdxTensor parse_idx(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < 4) {
    throw LengthError("idx: expected at least 4 header bytes, got " +
                      std::to_string(bytes.size()));
  }
  IdxTensor t;
  t.magic = detail::read_be32(bytes, 0);
  std::size_t ndim;
  if (t.magic == kIdxMagicImages) {
    ndim = 3;
  } else if (t.magic == kIdxMagicLabels) {
    ndim = 1;
  } else {
    throw FormatError("idx: unsupported magic " + detail::hex32(t.magic));
  }

  const std::size_t header = 4 + 4 * ndim;
  if (bytes.size() < header) {
    throw LengthError("idx: expected " + std::to_string(header) + " header bytes, got " +
                      std::to_string(bytes.size()));
  }
  t.dims.resize(ndim);
  for (std::size_t i = 0; i < ndim; ++i) t.dims[i] = detail::read_be32(bytes, 4 + 4 * i);

  const std::size_t expected = header + t.element_count();
  if (bytes.size() != expected) {
    throw LengthError("idx: expected " + std::to_string(expected) + " bytes total, got " +
                      std::to_string(bytes.size()));
  }
  t.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return t;
}

inline std::vector<std::uint8_t> serialize_idx(const IdxTensor& t) {
  std::vector<std::uint8_t> out;
  out.reserve(4 + 4 * t.dims.size() + t.data.size());
  detail::write_be32(out, t.magic);
  for (std::uint32_t d : t.dims) detail::write_be32(out, d);
  out.insert(out.end(), t.data.begin(), t.data.end());
  return out;
}

inline IdxTensor load_idx_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("idx: cannot open " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  return parse_idx(bytes);
}

}  // namespace cfedavg
