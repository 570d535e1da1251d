#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <string_view>

#include "patchbank/features.hpp"
#include "patchbank/graph.hpp"

namespace patchbank {

enum class ExtractorKind { kExternalFile, kToyIsometric, kGraphPyramid, kRawPixel };

// Which extractor to run and its named scalar parameters:
//   toy, raw  : patch_px
//   pyramid   : tap_stage, seed, k   (+ optional weight-file path)
//   gcft      : none
// Unknown keys are rejected by validate().
struct ExtractorSpec {
  ExtractorKind kind = ExtractorKind::kToyIsometric;
  std::map<std::string, double> params;
  std::string weights_path;

  static ExtractorSpec toy(int patch_px = 8);
  static ExtractorSpec raw(int patch_px = 8);
  static ExtractorSpec pyramid(std::size_t tap_stage = 2, std::uint64_t seed = 0, std::size_t k = 9);
  static ExtractorSpec external();

  // "toy", "raw", "gcft", "pyramid", optionally followed by ":key=v,key=v".
  static ExtractorSpec parse(std::string_view text);

  double param(const std::string& key, double fallback) const;
  std::string canonical() const;
  std::uint64_t hash() const;
  bool image_based() const { return kind != ExtractorKind::kExternalFile; }
  void validate() const;
};

std::string_view kind_name(ExtractorKind kind);

// FNV-1a, used for provenance hashes recorded in bank and report metadata.
std::uint64_t fnv1a64(std::string_view bytes);
std::string hex64(std::uint64_t v);

class FeatureExtractor {
 public:
  explicit FeatureExtractor(ExtractorSpec spec);

  const ExtractorSpec& spec() const { return spec_; }
  const PyramidSpec& pyramid_spec() const { return pyramid_; }

  PatchFeatureGrid extract(const ImageTensor& img) const;

  // Image-based kinds load and extract the image. The external kind reads
  // <dir>/<stem>[.<variant_tag>].gcft next to the image (or the path itself
  // when it already names a .gcft file).
  PatchFeatureGrid extract_file(const std::filesystem::path& image_path, std::string_view variant_tag = {}) const;

  static std::filesystem::path feature_path_for(const std::filesystem::path& image_path,
                                                std::string_view variant_tag = {});

 private:
  ExtractorSpec spec_;
  PyramidSpec pyramid_;
  std::shared_ptr<const WeightBundle> weights_;
};

}  // namespace patchbank
