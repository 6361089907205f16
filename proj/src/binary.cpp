#include "affect/binary.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

namespace affect::binary {

std::vector<std::uint8_t> encode_matrix(const MatrixFormat& format, std::size_t rows, std::size_t cols,
                                        std::span<const float> values) {
  if (rows * cols != values.size()) throw DimensionError("encode_matrix: payload does not match extents");
  std::vector<std::uint8_t> out;
  out.reserve(kMatrixHeaderBytes + 4 * values.size());
  for (char c : format.magic) out.push_back(static_cast<std::uint8_t>(c));
  put_u32(out, format.version);
  put_u32(out, static_cast<std::uint32_t>(rows));
  put_u32(out, static_cast<std::uint32_t>(cols));
  for (float v : values) put_f32(out, v);
  return out;
}

std::vector<float> decode_matrix(std::span<const std::uint8_t> bytes, const MatrixFormat& format,
                                 const std::string& what, std::size_t& rows, std::size_t& cols) {
  Reader in(bytes, what);
  const auto magic = in.bytes(4, "magic");
  for (std::size_t i = 0; i < 4; ++i) {
    if (magic[i] != static_cast<std::uint8_t>(format.magic[i])) {
      in.fail(i, "bad magic (expected " + std::string(format.magic) + ")");
    }
  }
  const std::uint32_t version = in.u32("version");
  if (version != format.version) in.fail(4, "unsupported version " + std::to_string(version));
  const std::uint32_t r = in.u32(format.rows_field);
  const std::uint32_t c = in.u32(format.cols_field);
  if (r == 0) in.fail(8, std::string(format.rows_field) + " is zero");
  if (c == 0) in.fail(12, std::string(format.cols_field) + " is zero");
  const std::size_t payload = std::size_t{r} * c * 4;
  if (in.remaining() != payload) {
    in.fail(kMatrixHeaderBytes, "payload holds " + std::to_string(in.remaining()) + " bytes but header implies " +
                                    std::to_string(payload));
  }
  std::vector<float> data(std::size_t{r} * c);
  for (std::size_t i = 0; i < data.size(); ++i) {
    const std::size_t at = in.offset();
    data[i] = in.f32("payload");
    if (!std::isfinite(data[i])) {
      in.fail(at, "non-finite value at frame " + std::to_string(i / c) + " column " + std::to_string(i % c));
    }
  }
  rows = r;
  cols = c;
  return data;
}

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  // Write to a sibling and rename so readers never observe a partial file.
  const auto tmp = std::filesystem::path(path.string() + ".partial");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw FormatError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace affect::binary
