#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "patchbank/bank.hpp"
#include "patchbank/extractor.hpp"
#include "patchbank/features.hpp"

namespace patchbank {

// Single-channel float map, row-major.
struct ScoreMap {
  int height = 0;
  int width = 0;
  std::vector<float> values;

  float at(int r, int c) const { return values[static_cast<std::size_t>(r) * width + c]; }
  float& at(int r, int c) { return values[static_cast<std::size_t>(r) * width + c]; }
  bool operator==(const ScoreMap&) const = default;
};

struct NeighborHit {
  std::size_t index = 0;
  double distance = 0.0;
};

// Exact Euclidean nearest neighbour by linear scan; ties go to the smaller index.
NeighborHit nearest_neighbor(std::span<const float> query, const MemoryBank& bank);

// The `count` nearest bank vectors, ascending by (distance, index).
std::vector<NeighborHit> nearest_neighbors(std::span<const float> query, const MemoryBank& bank, std::size_t count);

enum class ScoreMode { kMax, kKnnMean };

struct ScoreOptions {
  ScoreMode mode = ScoreMode::kMax;
  std::size_t knn = 3;  // neighbours averaged per patch in kKnnMean mode
  double sigma = 4.0;   // Gaussian smoothing of the pixel map; 0 disables
};

struct AnomalyResult {
  double image_score = 0.0;
  ScoreMap patch_scores;  // rows x cols
  ScoreMap pixel_map;     // source image resolution
  std::vector<std::uint32_t> nn_indices;
};

// Bilinear upsampling with pixel-centre alignment and edge clamping; each
// cell covers a `stride` x `stride` block of output pixels.
ScoreMap upsample_bilinear(const ScoreMap& cells, int out_height, int out_width);

// Separable Gaussian, kernel radius ceil(4 sigma), reflect-101 borders.
ScoreMap gaussian_smooth(const ScoreMap& map, double sigma);

AnomalyResult score_image(const PatchFeatureGrid& grid, const MemoryBank& bank, const ScoreOptions& opts = {});

// MVTec layout: <root>/train/good/*, <root>/test/<defect|good>/*,
// <root>/ground_truth/<defect>/<stem>_mask.png.
struct TestSample {
  std::string id;  // path relative to the category root
  std::filesystem::path image;
  std::string defect;
  int label = 0;  // 0 normal ("good"), 1 anomalous
  std::optional<std::filesystem::path> mask;
};

struct DatasetLayout {
  std::filesystem::path root;
  std::vector<std::filesystem::path> train;
  std::vector<TestSample> test;
  std::vector<std::string> warnings;
};

// Files sorted by path. Image files are *.png, *.ppm, *.pgm and, for the
// gcft extractor, *.gcft.
DatasetLayout scan_dataset(const std::filesystem::path& root, bool feature_files = false);

struct ScoredImage {
  std::string id;
  int label = 0;
  AnomalyResult result;
  std::optional<ScoreMap> mask;  // binary {0,1}; absent for anomalous images missing a mask
};

// Results follow layout.test order regardless of `jobs`.
std::vector<ScoredImage> score_dataset(const DatasetLayout& layout, const MemoryBank& bank,
                                       const FeatureExtractor& extractor, const ScoreOptions& opts,
                                       std::size_t jobs = 1);

ScoreMap load_mask(const std::filesystem::path& path);

// 8-bit grey PNG, min-max normalised per map (a constant map writes zeros).
void write_heatmap(const ScoreMap& map, const std::filesystem::path& path);

}  // namespace patchbank
