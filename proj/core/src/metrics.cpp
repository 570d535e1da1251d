#include "patchbank/metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include "patchbank/error.hpp"

namespace patchbank {

namespace {

// Sum of midranks of the positives, doubled so it stays an integer.
double auroc_from_pairs(std::vector<std::pair<double, int>>& items) {
  std::size_t positives = 0;
  for (const auto& [s, l] : items) positives += l;
  const std::size_t n = items.size();
  const std::size_t negatives = n - positives;
  if (positives == 0 || negatives == 0) {
    fail(ErrorCode::kUndefinedMetric, "AUROC needs both normal and anomalous samples");
  }
  std::sort(items.begin(), items.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
  // Ranks are 1-based; a tie block [i, j) shares rank (i + 1 + j) / 2.
  std::uint64_t twice_rank_sum = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    std::size_t block_pos = 0;
    while (j < n && items[j].first == items[i].first) {
      block_pos += static_cast<std::size_t>(items[j].second);
      ++j;
    }
    twice_rank_sum += static_cast<std::uint64_t>(block_pos) * (i + 1 + j);
    i = j;
  }
  // 2U = 2R - n1 (n1 + 1)
  const std::uint64_t twice_u = twice_rank_sum - static_cast<std::uint64_t>(positives) * (positives + 1);
  return static_cast<double>(twice_u) / (2.0 * static_cast<double>(positives) * static_cast<double>(negatives));
}

}  // namespace

double auroc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) fail(ErrorCode::kShapeMismatch, "scores and labels differ in length");
  std::vector<std::pair<double, int>> items(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) fail(ErrorCode::kInvalidArgument, "labels must be 0 or 1");
    if (std::isnan(scores[i])) fail(ErrorCode::kInvalidArgument, "NaN score");
    items[i] = {scores[i], labels[i]};
  }
  return auroc_from_pairs(items);
}

double pixel_auroc(std::span<const ScoreMap> maps, std::span<const ScoreMap> masks, PixelAurocMode mode) {
  if (maps.size() != masks.size()) fail(ErrorCode::kShapeMismatch, "map and mask counts differ");
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].height != masks[i].height || maps[i].width != masks[i].width) {
      fail(ErrorCode::kShapeMismatch, "map " + std::to_string(i) + " and its mask differ in shape");
    }
  }
  auto collect = [](const ScoreMap& map, const ScoreMap& mask, std::vector<std::pair<double, int>>& items) {
    for (std::size_t p = 0; p < map.values.size(); ++p) {
      items.emplace_back(map.values[p], mask.values[p] > 0.5f ? 1 : 0);
    }
  };
  if (mode == PixelAurocMode::kPooled) {
    std::vector<std::pair<double, int>> items;
    for (std::size_t i = 0; i < maps.size(); ++i) collect(maps[i], masks[i], items);
    return auroc_from_pairs(items);
  }
  double sum = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    std::vector<std::pair<double, int>> items;
    collect(maps[i], masks[i], items);
    const auto pos = std::count_if(items.begin(), items.end(), [](const auto& it) { return it.second == 1; });
    if (pos == 0 || pos == static_cast<std::ptrdiff_t>(items.size())) continue;
    sum += auroc_from_pairs(items);
    ++used;
  }
  if (used == 0) fail(ErrorCode::kUndefinedMetric, "no image contains both normal and anomalous pixels");
  return sum / static_cast<double>(used);
}

double time_inference(const MemoryBank& bank, std::span<const PatchFeatureGrid> grids, std::size_t repeats,
                      const ScoreOptions& opts) {
  if (grids.empty()) fail(ErrorCode::kEmptyInput, "no test grids to time");
  if (repeats == 0) fail(ErrorCode::kInvalidArgument, "repeats must be >= 1");
  double sink = 0.0;
  for (const auto& g : grids) sink += score_image(g, bank, opts).image_score;  // warm-up
  std::vector<double> per_image;
  for (std::size_t r = 0; r < repeats; ++r) {
    const auto start = std::chrono::steady_clock::now();
    for (const auto& g : grids) sink += score_image(g, bank, opts).image_score;
    const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
    per_image.push_back(elapsed.count() / static_cast<double>(grids.size()));
  }
  if (!std::isfinite(sink)) fail(ErrorCode::kInvariantViolation, "non-finite score while timing");
  std::sort(per_image.begin(), per_image.end());
  const std::size_t m = per_image.size();
  return m % 2 == 1 ? per_image[m / 2] : 0.5 * (per_image[m / 2 - 1] + per_image[m / 2]);
}

void EvalReport::validate() const {
  auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
  if (!in_unit(image_auroc)) fail(ErrorCode::kInvariantViolation, "image AUROC outside [0,1]");
  if (pixel_auroc && !in_unit(*pixel_auroc)) fail(ErrorCode::kInvariantViolation, "pixel AUROC outside [0,1]");
  if (mean_inference_seconds < 0.0 || build_seconds < 0.0) {
    fail(ErrorCode::kInvariantViolation, "negative timing");
  }
}

std::string format_auroc_cell(const EvalReport& r) {
  char buf[64];
  if (r.pixel_auroc) {
    std::snprintf(buf, sizeof buf, "%.1f|%.1f", 100.0 * r.image_auroc, 100.0 * *r.pixel_auroc);
  } else {
    std::snprintf(buf, sizeof buf, "%.1f|-", 100.0 * r.image_auroc);
  }
  return buf;
}

std::string format_table(std::span<const EvalReport> reports) {
  std::ostringstream os;
  char line[256];
  std::snprintf(line, sizeof line, "%-16s %-10s %5s %8s %4s %11s %10s %12s\n", "category", "method", "K", "ratio",
                "k", "image|pixel", "bank", "infer[s]");
  os << line;
  for (const auto& r : reports) {
    std::snprintf(line, sizeof line, "%-16s %-10s %5zu %8g %4zu %11s %10zu %12.6f\n", r.category.c_str(),
                  r.method.c_str(), r.shot_count, r.ratio, r.k_neighbors, format_auroc_cell(r).c_str(),
                  r.bank_vectors, r.mean_inference_seconds);
    os << line;
  }
  return os.str();
}

}  // namespace patchbank
