#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "patchbank/augment.hpp"
#include "patchbank/bank.hpp"
#include "patchbank/extractor.hpp"
#include "patchbank/metrics.hpp"
#include "patchbank/scoring.hpp"

namespace patchbank {

// The three memory-bank pipelines:
//   plain     : no augmentation, any feature extractor
//   aug_r     : augmentation (rotation by default) before pooling
//   graphcore : no augmentation, rotation-invariant extractor (pyramid, or toy)
enum class Method { kPlain, kAugR, kGraphCore };

std::string_view method_name(Method m);
Method parse_method(std::string_view s);

struct PipelineConfig {
  Method method = Method::kGraphCore;
  std::size_t shots = 1;
  double ratio = 0.01;
  std::size_t k_neighbors = 9;
  std::uint64_t seed = 0;
  std::optional<std::uint64_t> shot_seed;  // random shot choice instead of the first K
  ExtractorSpec extractor = ExtractorSpec::toy();
  std::optional<AugmentSpec> augment;  // aug_r defaults to rotation_r()
  ScoreOptions score;
  PixelAurocMode pixel_mode = PixelAurocMode::kPooled;
  bool dedup = true;
  std::size_t proj_dim = 0;
  std::size_t timing_repeats = 3;
  std::size_t jobs = 1;

  // Throws kInvalidArgument for illegal method/augment/extractor combinations.
  void validate() const;
  // Augmentation actually applied (aug_r fills in the default).
  std::optional<AugmentSpec> effective_augment() const;
  // Extractor with k_neighbors applied to the pyramid.
  ExtractorSpec effective_extractor() const;
  // Canonical JSON of every field that affects results (not jobs).
  std::string canonical_json() const;
  std::string hash() const;
};

// Training shots: first K in path order, or a seeded random subset.
std::vector<std::filesystem::path> select_shots(const std::vector<std::filesystem::path>& train, std::size_t shots,
                                                std::optional<std::uint64_t> shot_seed);

struct EvalRun {
  EvalReport report;
  MemoryBank bank;
  std::vector<ScoredImage> images;
  std::vector<std::string> warnings;
};

EvalRun run_evaluation(const std::filesystem::path& category_root, const PipelineConfig& cfg);

// Deterministic part of a report (no timings) and the full report with a
// separate "timing" block.
std::string report_json_deterministic(const EvalReport& r);
std::string report_json(const EvalReport& r);

// One JSON object per line: {"id", "label", "image_score"}.
std::string scores_jsonl(const std::vector<ScoredImage>& images);

// Cartesian sweep over the listed values; keys: ratio, k_neighbors (alias
// k), shots (alias K), method. Keys not present keep the base value.
struct SweepGrid {
  std::vector<double> ratios;
  std::vector<std::size_t> k_neighbors;
  std::vector<std::size_t> shots;
  std::vector<Method> methods;

  // "ratio=0.001,0.01" (repeatable; ';' separates several keys in one string).
  void add(std::string_view text);
  bool empty() const { return ratios.empty() && k_neighbors.empty() && shots.empty() && methods.empty(); }
  std::vector<PipelineConfig> expand(const PipelineConfig& base) const;
};

std::vector<EvalReport> run_sweep(const std::filesystem::path& category_root, const PipelineConfig& base,
                                  const SweepGrid& grid, std::size_t jobs = 1);

std::string sweep_csv(const std::vector<EvalReport>& reports);

}  // namespace patchbank
