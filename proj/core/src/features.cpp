#include "patchbank/features.hpp"

#include <algorithm>
#include <cmath>

#include "patchbank/binary_io.hpp"
#include "patchbank/error.hpp"

namespace patchbank {

PatchFeatureGrid PatchFeatureGrid::zeros(std::uint32_t rows, std::uint32_t cols, std::uint32_t dim,
                                         std::uint32_t stride_px) {
  PatchFeatureGrid g;
  g.rows = rows;
  g.cols = cols;
  g.dim = dim;
  g.stride_px = stride_px;
  g.features.assign(io::checked_product({rows, cols, dim}, "feature grid"), 0.0f);
  return g;
}

void PatchFeatureGrid::validate() const {
  if (rows == 0 || cols == 0 || dim == 0) fail(ErrorCode::kShapeMismatch, "feature grid dimensions must be >= 1");
  if (stride_px == 0) fail(ErrorCode::kShapeMismatch, "feature grid stride must be >= 1");
  if (features.size() != static_cast<std::size_t>(rows) * cols * dim) {
    fail(ErrorCode::kShapeMismatch, "feature grid payload does not match rows*cols*dim");
  }
  for (float v : features) {
    if (!std::isfinite(v)) fail(ErrorCode::kCorruptData, "non-finite feature value");
  }
}

namespace {

void check_patch_geometry(const ImageTensor& img, int patch_px) {
  img.validate();
  if (patch_px <= 0) fail(ErrorCode::kInvalidArgument, "patch_px must be positive");
  if (img.height % patch_px != 0 || img.width % patch_px != 0) {
    fail(ErrorCode::kShapeMismatch, "image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                                        " not divisible by patch_px " + std::to_string(patch_px));
  }
}

double sorted_sum(std::vector<double>& values) {
  std::sort(values.begin(), values.end());
  double s = 0.0;
  for (double v : values) s += v;
  return s;
}

}  // namespace

PatchFeatureGrid extract_toy(const ImageTensor& img, int patch_px) {
  check_patch_geometry(img, patch_px);
  if (img.channels != 1 && img.channels != 3) {
    fail(ErrorCode::kUnsupportedFormat, "toy extractor expects 1 or 3 channels");
  }
  const auto rows = static_cast<std::uint32_t>(img.height / patch_px);
  const auto cols = static_cast<std::uint32_t>(img.width / patch_px);
  auto grid = PatchFeatureGrid::zeros(rows, cols, kToyFeatureDim, static_cast<std::uint32_t>(patch_px));

  const std::size_t n = static_cast<std::size_t>(patch_px) * patch_px;
  std::vector<double> values(n);
  std::vector<double> inner;
  std::vector<double> outer;
  for (std::uint32_t pr = 0; pr < rows; ++pr) {
    for (std::uint32_t pc = 0; pc < cols; ++pc) {
      auto out = grid.at(pr, pc);
      auto sample = [&](int y, int x, int ch) -> double {
        const int c = img.channels == 1 ? 0 : ch;
        return img.at(static_cast<int>(pr) * patch_px + y, static_cast<int>(pc) * patch_px + x, c);
      };
      for (int ch = 0; ch < 3; ++ch) {
        std::size_t k = 0;
        for (int y = 0; y < patch_px; ++y)
          for (int x = 0; x < patch_px; ++x) values[k++] = sample(y, x, ch);
        const double mean = sorted_sum(values) / static_cast<double>(n);
        std::vector<double> sq(n);
        for (std::size_t i = 0; i < n; ++i) sq[i] = (values[i] - mean) * (values[i] - mean);
        const double var = sorted_sum(sq) / static_cast<double>(n);
        out[ch] = static_cast<float>(mean);
        out[3 + ch] = static_cast<float>(var);
      }
      // Ring membership uses doubled integer offsets from the centre, so it
      // is exactly symmetric under the dihedral group.
      inner.clear();
      outer.clear();
      for (int y = 0; y < patch_px; ++y) {
        for (int x = 0; x < patch_px; ++x) {
          const int dy = 2 * y - (patch_px - 1);
          const int dx = 2 * x - (patch_px - 1);
          const double intensity = (sample(y, x, 0) + sample(y, x, 1) + sample(y, x, 2)) / 3.0;
          (2 * (dy * dy + dx * dx) <= patch_px * patch_px ? inner : outer).push_back(intensity);
        }
      }
      out[6] = inner.empty() ? 0.0f : static_cast<float>(sorted_sum(inner) / static_cast<double>(inner.size()));
      out[7] = outer.empty() ? 0.0f : static_cast<float>(sorted_sum(outer) / static_cast<double>(outer.size()));
    }
  }
  return grid;
}

PatchFeatureGrid extract_raw(const ImageTensor& img, int patch_px) {
  check_patch_geometry(img, patch_px);
  const auto rows = static_cast<std::uint32_t>(img.height / patch_px);
  const auto cols = static_cast<std::uint32_t>(img.width / patch_px);
  const auto dim = static_cast<std::uint32_t>(patch_px * patch_px * img.channels);
  auto grid = PatchFeatureGrid::zeros(rows, cols, dim, static_cast<std::uint32_t>(patch_px));
  for (std::uint32_t pr = 0; pr < rows; ++pr) {
    for (std::uint32_t pc = 0; pc < cols; ++pc) {
      auto out = grid.at(pr, pc);
      std::size_t k = 0;
      for (int y = 0; y < patch_px; ++y)
        for (int x = 0; x < patch_px; ++x)
          for (int ch = 0; ch < img.channels; ++ch)
            out[k++] = img.at(static_cast<int>(pr) * patch_px + y, static_cast<int>(pc) * patch_px + x, ch);
    }
  }
  return grid;
}

std::vector<std::uint8_t> encode_feature_tensor(const PatchFeatureGrid& grid) {
  grid.validate();
  io::ByteWriter w;
  w.put_magic("GCFT");
  w.put_u16(kGcftVersion);
  w.put_u16(0);
  w.put_u32(grid.rows);
  w.put_u32(grid.cols);
  w.put_u32(grid.dim);
  w.put_u32(grid.stride_px);
  w.put_f32s(grid.features);
  return w.bytes();
}

PatchFeatureGrid decode_feature_tensor(std::vector<std::uint8_t> bytes) {
  io::ByteReader r(std::move(bytes));
  r.expect_magic("GCFT");
  const auto version = r.u16();
  if (version != kGcftVersion) {
    fail(ErrorCode::kVersionMismatch, "GCFT version " + std::to_string(version) + " unsupported");
  }
  r.u16();  // reserved
  PatchFeatureGrid g;
  g.rows = r.u32();
  g.cols = r.u32();
  g.dim = r.u32();
  g.stride_px = r.u32();
  const std::size_t count = io::checked_product({g.rows, g.cols, g.dim}, "GCFT payload");
  r.require(4 * count, "GCFT payload");
  g.features.resize(count);
  r.f32s(g.features);
  if (r.remaining() != 0) fail(ErrorCode::kCorruptData, "trailing bytes after GCFT payload");
  g.validate();
  return g;
}

void write_feature_tensor(const PatchFeatureGrid& grid, const std::filesystem::path& path) {
  io::write_file(path, encode_feature_tensor(grid));
}

PatchFeatureGrid load_feature_tensor(const std::filesystem::path& path) {
  return decode_feature_tensor(io::read_file(path));
}

}  // namespace patchbank
