#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "patchbank/bank.hpp"
#include "patchbank/features.hpp"
#include "patchbank/scoring.hpp"

namespace patchbank {

// Mann-Whitney AUROC with midranks: P(anomalous > normal) + 0.5 P(equal).
// Labels are 0 (normal) / 1 (anomalous); both classes must be present.
double auroc(std::span<const double> scores, std::span<const int> labels);

enum class PixelAurocMode { kPooled, kPerImageMean };

// Pooled: one AUROC over all pixels of all images. Per-image mean: average
// over images that contain both classes.
double pixel_auroc(std::span<const ScoreMap> maps, std::span<const ScoreMap> masks,
                   PixelAurocMode mode = PixelAurocMode::kPooled);

// Median over `repeats` of the mean per-image scoring time in seconds, after
// one untimed warm-up pass.
double time_inference(const MemoryBank& bank, std::span<const PatchFeatureGrid> grids, std::size_t repeats,
                      const ScoreOptions& opts = {});

struct EvalReport {
  std::string category;
  std::string method;
  std::string extractor;
  double image_auroc = 0.0;
  std::optional<double> pixel_auroc;
  std::size_t bank_bytes = 0;
  std::size_t bank_vectors = 0;
  std::size_t shot_count = 0;
  double ratio = 0.0;
  std::size_t k_neighbors = 0;
  std::string config_hash;
  std::size_t test_images = 0;
  // Non-deterministic; serialized under "timing" only.
  double mean_inference_seconds = 0.0;
  double build_seconds = 0.0;

  void validate() const;
};

// Table cell: image and pixel AUROC in percent, "96.2|97.1" ("x|-"
// when there is no pixel AUROC).
std::string format_auroc_cell(const EvalReport& r);
std::string format_table(std::span<const EvalReport> reports);

}  // namespace patchbank
