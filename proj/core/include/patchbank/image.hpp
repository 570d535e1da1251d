#pragma once

#include <cstddef>
#include <filesystem>
#include <vector>

namespace patchbank {

// Row-major, channel-interleaved float image with values in [0,1].
struct ImageTensor {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<float> data;

  static ImageTensor zeros(int height, int width, int channels);

  std::size_t index(int row, int col, int ch) const {
    return (static_cast<std::size_t>(row) * width + col) * channels + ch;
  }
  float& at(int row, int col, int ch) { return data[index(row, col, ch)]; }
  float at(int row, int col, int ch) const { return data[index(row, col, ch)]; }

  // Throws kShapeMismatch or kCorruptData when the invariants do not hold.
  void validate() const;

  bool operator==(const ImageTensor&) const = default;
};

// PNG (8-bit, any colour type) or binary PPM/PGM (P6/P5, maxval <= 255).
// Alpha is dropped; the result has 1 or 3 channels. Pixel k maps to k/255.
ImageTensor load_image(const std::filesystem::path& path);

// Values are clamped to [0,1] and quantized to 8 bits.
void save_png(const ImageTensor& img, const std::filesystem::path& path);
void save_ppm(const ImageTensor& img, const std::filesystem::path& path);

// The exact float the loader produces for an 8-bit sample.
inline float from_u8(unsigned v) { return static_cast<float>(v) / 255.0f; }
unsigned to_u8(float v);

}  // namespace patchbank
