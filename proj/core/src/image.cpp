#include "patchbank/image.hpp"

#include <png.h>

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "patchbank/error.hpp"

namespace patchbank {

namespace fs = std::filesystem;

ImageTensor ImageTensor::zeros(int height, int width, int channels) {
  if (height <= 0 || width <= 0 || channels <= 0) {
    fail(ErrorCode::kShapeMismatch, "image dimensions must be positive");
  }
  ImageTensor img;
  img.height = height;
  img.width = width;
  img.channels = channels;
  img.data.assign(static_cast<std::size_t>(height) * width * channels, 0.0f);
  return img;
}

void ImageTensor::validate() const {
  if (height <= 0 || width <= 0 || channels <= 0) {
    fail(ErrorCode::kShapeMismatch, "image dimensions must be positive");
  }
  if (data.size() != static_cast<std::size_t>(height) * width * channels) {
    fail(ErrorCode::kShapeMismatch, "image data length does not match height*width*channels");
  }
  for (float v : data) {
    if (!std::isfinite(v)) fail(ErrorCode::kCorruptData, "non-finite pixel value");
  }
}

unsigned to_u8(float v) {
  const float clamped = std::clamp(v, 0.0f, 1.0f);
  return static_cast<unsigned>(std::lround(clamped * 255.0f));
}

namespace {

std::vector<std::uint8_t> read_all(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::kMissingFile, "cannot open image: " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

bool is_png(const std::vector<std::uint8_t>& bytes) {
  static constexpr std::array<std::uint8_t, 8> kSig = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
  return bytes.size() >= kSig.size() && std::equal(kSig.begin(), kSig.end(), bytes.begin());
}

bool is_pnm(const std::vector<std::uint8_t>& bytes) {
  return bytes.size() >= 2 && bytes[0] == 'P' && (bytes[1] == '5' || bytes[1] == '6');
}

ImageTensor decode_png(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
    fail(ErrorCode::kCorruptData, path.string() + ": " + image.message);
  }
  const bool color = (image.format & PNG_FORMAT_FLAG_COLOR) != 0;
  image.format = color ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(image));
  if (!png_image_finish_read(&image, nullptr, pixels.data(), 0, nullptr)) {
    png_image_free(&image);
    fail(ErrorCode::kCorruptData, path.string() + ": " + image.message);
  }
  ImageTensor img = ImageTensor::zeros(static_cast<int>(image.height), static_cast<int>(image.width), color ? 3 : 1);
  for (std::size_t i = 0; i < pixels.size(); ++i) img.data[i] = from_u8(pixels[i]);
  return img;
}

ImageTensor decode_pnm(const std::vector<std::uint8_t>& bytes, const fs::path& path) {
  std::size_t pos = 2;
  auto next_int = [&]() -> long {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(bytes[pos])) {
        ++pos;
      } else {
        break;
      }
    }
    if (pos >= bytes.size() || !std::isdigit(bytes[pos])) {
      fail(ErrorCode::kCorruptData, path.string() + ": malformed PNM header");
    }
    long v = 0;
    while (pos < bytes.size() && std::isdigit(bytes[pos])) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > (1L << 24)) fail(ErrorCode::kCorruptData, path.string() + ": PNM header value too large");
      ++pos;
    }
    return v;
  };
  const int channels = bytes[1] == '6' ? 3 : 1;
  const long width = next_int();
  const long height = next_int();
  const long maxval = next_int();
  if (width <= 0 || height <= 0) fail(ErrorCode::kCorruptData, path.string() + ": zero-sized PNM");
  if (maxval <= 0 || maxval > 255) fail(ErrorCode::kUnsupportedFormat, path.string() + ": only 8-bit PNM supported");
  if (pos >= bytes.size() || !std::isspace(bytes[pos])) {
    fail(ErrorCode::kCorruptData, path.string() + ": malformed PNM header");
  }
  ++pos;
  ImageTensor img = ImageTensor::zeros(static_cast<int>(height), static_cast<int>(width), channels);
  if (bytes.size() - pos < img.data.size()) fail(ErrorCode::kCorruptData, path.string() + ": truncated PNM payload");
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    const unsigned v = bytes[pos + i];
    img.data[i] = maxval == 255 ? from_u8(v)
                                : static_cast<float>(std::min<unsigned>(v, static_cast<unsigned>(maxval))) /
                                      static_cast<float>(maxval);
  }
  return img;
}

std::vector<std::uint8_t> quantize(const ImageTensor& img) {
  img.validate();
  std::vector<std::uint8_t> out(img.data.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = static_cast<std::uint8_t>(to_u8(img.data[i]));
  return out;
}

}  // namespace

ImageTensor load_image(const fs::path& path) {
  if (!fs::exists(path)) fail(ErrorCode::kMissingFile, "no such image: " + path.string());
  const auto bytes = read_all(path);
  if (is_png(bytes)) return decode_png(bytes, path);
  if (is_pnm(bytes)) return decode_pnm(bytes, path);
  fail(ErrorCode::kUnsupportedFormat, path.string() + ": not a PNG or binary PPM/PGM file");
}

void save_png(const ImageTensor& img, const fs::path& path) {
  if (img.channels != 1 && img.channels != 3) {
    fail(ErrorCode::kUnsupportedFormat, "PNG output supports 1 or 3 channels");
  }
  auto pixels = quantize(img);
  png_image image;
  std::memset(&image, 0, sizeof(image));
  image.version = PNG_IMAGE_VERSION;
  image.width = static_cast<png_uint_32>(img.width);
  image.height = static_cast<png_uint_32>(img.height);
  image.format = img.channels == 3 ? PNG_FORMAT_RGB : PNG_FORMAT_GRAY;
  if (!png_image_write_to_file(&image, path.string().c_str(), 0, pixels.data(), 0, nullptr)) {
    fail(ErrorCode::kIo, path.string() + ": " + image.message);
  }
}

void save_ppm(const ImageTensor& img, const fs::path& path) {
  if (img.channels != 1 && img.channels != 3) {
    fail(ErrorCode::kUnsupportedFormat, "PPM output supports 1 or 3 channels");
  }
  auto pixels = quantize(img);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) fail(ErrorCode::kIo, "cannot open for writing: " + path.string());
  out << (img.channels == 3 ? "P6" : "P5") << '\n' << img.width << ' ' << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(pixels.data()), static_cast<std::streamsize>(pixels.size()));
  if (!out) fail(ErrorCode::kIo, "write failed: " + path.string());
}

}  // namespace patchbank
