#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "patchbank/image.hpp"

namespace patchbank {

// Synthetic MVTec-style category. Images are grids of patch_px motifs:
// normal motifs everywhere, plus an anomaly_block x anomaly_block block of
// anomaly motifs in each anomalous test image.
struct SynthSpec {
  std::uint64_t seed = 1;
  int image_px = 64;
  int patch_px = 8;
  int motif_count = 6;
  int anomaly_motifs = 3;
  int train_images = 1;
  int test_normals = 8;
  int test_anomalies = 8;
  // Test normal cells get a non-trivial rotation (90/180/270).
  bool rotate_test = false;
  // Training cells get a random dihedral transform; turn off for the rotation stressor.
  bool train_dihedral = true;
  // Minimum toy-feature distance between any anomaly motif and any normal motif.
  double margin = 0.05;
  int anomaly_block = 2;
  int max_attempts = 10000;
  std::string category = "synth";

  int grid_side() const { return image_px / patch_px; }
  void validate() const;
};

struct SynthTestImage {
  ImageTensor image;
  ImageTensor mask;  // 1 channel, {0,1}
  int label = 0;
};

struct SynthDataset {
  std::vector<ImageTensor> train;
  std::vector<SynthTestImage> test;
  // Smallest toy-feature distance from any anomaly patch to the normal motif set.
  double certified_margin = 0.0;
  // With rotate_test: the smallest raw-pixel image score any test normal gets
  // against a ratio-1.0 bank of the un-augmented training patches.
  std::optional<double> rotated_normal_margin;
};

// Bit-reproducible from spec.seed. Throws kUnsatisfiable when the margin
// cannot be met within max_attempts, and kInvariantViolation if the
// post-generation certificate check fails.
SynthDataset generate_dataset(const SynthSpec& spec);

// Writes <out>/<category>/{train/good, test/good, test/anomaly,
// ground_truth/anomaly} and <out>/<category>/manifest.json. Returns the
// category root.
std::filesystem::path write_dataset(const SynthSpec& spec, const SynthDataset& data, const std::filesystem::path& out);

std::filesystem::path generate(const SynthSpec& spec, const std::filesystem::path& out);

}  // namespace patchbank
