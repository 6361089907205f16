#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "affect/errors.hpp"

// Little-endian byte helpers shared by the FSQ1, LGT1 and checkpoint formats.
namespace affect::binary {

static_assert(std::endian::native == std::endian::little || std::endian::native == std::endian::big);

inline std::uint32_t to_le(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::little) return v;
  return ((v & 0xffu) << 24) | ((v & 0xff00u) << 8) | ((v >> 8) & 0xff00u) | (v >> 24);
}

inline void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<std::uint8_t>(v >> shift));
}

inline void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  put_u32(out, static_cast<std::uint32_t>(v & 0xffffffffu));
  put_u32(out, static_cast<std::uint32_t>(v >> 32));
}

inline void put_f32(std::vector<std::uint8_t>& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

inline void put_bytes(std::vector<std::uint8_t>& out, std::span<const std::uint8_t> bytes) {
  for (std::uint8_t b : bytes) out.push_back(b);
}

/// Bounds-checked sequential reader; errors name the byte offset.
class Reader {
 public:
  Reader(std::span<const std::uint8_t> bytes, std::string what) : bytes_(bytes), what_(std::move(what)) {}

  std::size_t offset() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

  void need(std::size_t n, const char* field) const {
    if (remaining() < n) {
      throw FormatError(what_ + ": truncated at byte offset " + std::to_string(pos_) + " reading " + field +
                        " (need " + std::to_string(n) + " bytes, have " + std::to_string(remaining()) + ")");
    }
  }

  std::uint32_t u32(const char* field) {
    need(4, field);
    std::uint32_t v;
    std::memcpy(&v, bytes_.data() + pos_, 4);
    pos_ += 4;
    return to_le(v);
  }

  std::uint64_t u64(const char* field) {
    const std::uint64_t lo = u32(field);
    const std::uint64_t hi = u32(field);
    return lo | (hi << 32);
  }

  float f32(const char* field) { return std::bit_cast<float>(u32(field)); }

  std::span<const std::uint8_t> bytes(std::size_t n, const char* field) {
    need(n, field);
    auto s = bytes_.subspan(pos_, n);
    pos_ += n;
    return s;
  }

  [[noreturn]] void fail(std::size_t at, const std::string& msg) const {
    throw FormatError(what_ + ": " + msg + " at byte offset " + std::to_string(at));
  }

 private:
  std::span<const std::uint8_t> bytes_;
  std::string what_;
  std::size_t pos_ = 0;
};

/// Rank-2 f32 container shared by FSQ1 and LGT1: 4-byte magic, u32 version,
/// u32 rows, u32 cols, then the row-major payload.
struct MatrixFormat {
  std::string_view magic;
  std::uint32_t version;
  const char* rows_field;
  const char* cols_field;
};

inline constexpr std::size_t kMatrixHeaderBytes = 16;

std::vector<std::uint8_t> encode_matrix(const MatrixFormat& format, std::size_t rows, std::size_t cols,
                                        std::span<const float> values);

/// Validates magic, version, non-zero extents, exact payload size and finiteness.
std::vector<float> decode_matrix(std::span<const std::uint8_t> bytes, const MatrixFormat& format,
                                 const std::string& what, std::size_t& rows, std::size_t& cols);

std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

}  // namespace affect::binary
