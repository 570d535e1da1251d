#include "patchbank/binary_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>

#include "patchbank/error.hpp"

namespace patchbank::io {

static_assert(std::numeric_limits<float>::is_iec559, "IEEE-754 floats required");

void ByteWriter::put_magic(std::string_view magic) { put_bytes(magic); }

void ByteWriter::put_u16(std::uint16_t v) {
  buf_.push_back(static_cast<std::uint8_t>(v & 0xff));
  buf_.push_back(static_cast<std::uint8_t>(v >> 8));
}

void ByteWriter::put_u32(std::uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
}

void ByteWriter::put_f32(float v) { put_u32(std::bit_cast<std::uint32_t>(v)); }

void ByteWriter::put_f32s(std::span<const float> values) {
  buf_.reserve(buf_.size() + 4 * values.size());
  for (float v : values) put_f32(v);
}

void ByteWriter::put_bytes(std::string_view bytes) { buf_.insert(buf_.end(), bytes.begin(), bytes.end()); }

std::vector<std::uint8_t> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kMissingFile, "cannot open: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open for writing: " + path.string());
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(ErrorCode::kIo, "write failed: " + path.string());
}

ByteReader ByteReader::from_file(const std::filesystem::path& path) { return ByteReader(read_file(path)); }

void ByteReader::require(std::size_t n, const char* what) const {
  if (remaining() < n) {
    fail(ErrorCode::kTruncated, std::string("need ") + std::to_string(n) + " bytes for " + what + ", have " +
                                    std::to_string(remaining()));
  }
}

void ByteReader::expect_magic(std::string_view magic) {
  if (remaining() < magic.size() || std::memcmp(buf_.data() + pos_, magic.data(), magic.size()) != 0) {
    fail(ErrorCode::kBadMagic, "expected magic \"" + std::string(magic) + "\"");
  }
  pos_ += magic.size();
}

std::uint16_t ByteReader::u16() {
  require(2, "u16");
  std::uint16_t v = static_cast<std::uint16_t>(buf_[pos_] | (buf_[pos_ + 1] << 8));
  pos_ += 2;
  return v;
}

std::uint32_t ByteReader::u32() {
  require(4, "u32");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
  pos_ += 4;
  return v;
}

float ByteReader::f32() { return std::bit_cast<float>(u32()); }

void ByteReader::f32s(std::span<float> out) {
  require(4 * out.size(), "f32 payload");
  for (float& v : out) v = f32();
}

std::string ByteReader::bytes(std::size_t n) {
  require(n, "byte string");
  std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
  pos_ += n;
  return s;
}

std::size_t checked_product(std::initializer_list<std::uint64_t> dims, const char* what) {
  // Capped well below SIZE_MAX so the byte count (x4) cannot overflow either.
  constexpr std::uint64_t kLimit = std::uint64_t{1} << 40;
  std::uint64_t total = 1;
  for (std::uint64_t d : dims) {
    if (d != 0 && total > kLimit / d) fail(ErrorCode::kDimensionOverflow, std::string(what) + " too large");
    total *= d;
  }
  return static_cast<std::size_t>(total);
}

}  // namespace patchbank::io
