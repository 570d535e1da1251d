#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "patchbank/image.hpp"

namespace patchbank {

// H_p x W_p grid of D-dimensional patch vectors, row-major, vector-contiguous.
// Cell (r, c) covers source pixels [r*stride_px, (r+1)*stride_px) x [c*stride_px, (c+1)*stride_px).
struct PatchFeatureGrid {
  std::uint32_t rows = 0;
  std::uint32_t cols = 0;
  std::uint32_t dim = 0;
  std::uint32_t stride_px = 1;
  std::vector<float> features;

  static PatchFeatureGrid zeros(std::uint32_t rows, std::uint32_t cols, std::uint32_t dim, std::uint32_t stride_px);

  std::size_t size() const { return static_cast<std::size_t>(rows) * cols; }
  std::span<const float> vec(std::size_t i) const { return {features.data() + i * dim, dim}; }
  std::span<float> vec(std::size_t i) { return {features.data() + i * dim, dim}; }
  std::span<const float> at(std::size_t r, std::size_t c) const { return vec(r * cols + c); }
  std::span<float> at(std::size_t r, std::size_t c) { return vec(r * cols + c); }

  void validate() const;

  bool operator==(const PatchFeatureGrid&) const = default;
};

// Dimension of the per-patch statistics extractor.
inline constexpr std::uint32_t kToyFeatureDim = 8;

// Per-patch statistics: channel means (3), channel variances (3), and the mean
// intensity of the inner disc and outer ring around the patch centre (2).
// Single-channel images are treated as three identical channels. Every
// statistic is summed over sorted values, so any of the eight dihedral
// transforms of a patch yields bit-identical output.
PatchFeatureGrid extract_toy(const ImageTensor& img, int patch_px);

// Raw patch pixels, flattened (row, col, channel). Not rotation invariant.
PatchFeatureGrid extract_raw(const ImageTensor& img, int patch_px);

// GCFT: "GCFT", u16 version=1, u16 reserved=0, u32 rows, cols, dim, stride_px,
// then rows*cols*dim little-endian f32.
inline constexpr std::uint16_t kGcftVersion = 1;

std::vector<std::uint8_t> encode_feature_tensor(const PatchFeatureGrid& grid);
PatchFeatureGrid decode_feature_tensor(std::vector<std::uint8_t> bytes);
void write_feature_tensor(const PatchFeatureGrid& grid, const std::filesystem::path& path);
PatchFeatureGrid load_feature_tensor(const std::filesystem::path& path);

}  // namespace patchbank
