#pragma once

// Little-endian readers and writers shared by the GCFT, GCWB and GCBK formats.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace patchbank::io {

// kMissingFile when absent, kIo on write failure.
std::vector<std::uint8_t> read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);

class ByteWriter {
 public:
  void put_magic(std::string_view magic);
  void put_u16(std::uint16_t v);
  void put_u32(std::uint32_t v);
  void put_f32(float v);
  void put_f32s(std::span<const float> values);
  void put_bytes(std::string_view bytes);

  const std::vector<std::uint8_t>& bytes() const { return buf_; }
  void write_file(const std::filesystem::path& path) const { io::write_file(path, buf_); }

 private:
  std::vector<std::uint8_t> buf_;
};

// Every read is bounds-checked; running past the end throws kTruncated.
class ByteReader {
 public:
  explicit ByteReader(std::vector<std::uint8_t> bytes) : buf_(std::move(bytes)) {}

  static ByteReader from_file(const std::filesystem::path& path);

  void expect_magic(std::string_view magic);
  std::uint16_t u16();
  std::uint32_t u32();
  float f32();
  void f32s(std::span<float> out);
  std::string bytes(std::size_t n);

  std::size_t remaining() const { return buf_.size() - pos_; }
  std::size_t position() const { return pos_; }
  void require(std::size_t n, const char* what) const;

 private:
  std::vector<std::uint8_t> buf_;
  std::size_t pos_ = 0;
};

// Product of dimensions with overflow detection (kDimensionOverflow).
std::size_t checked_product(std::initializer_list<std::uint64_t> dims, const char* what);

}  // namespace patchbank::io
