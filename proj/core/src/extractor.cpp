#include "patchbank/extractor.hpp"

#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "patchbank/error.hpp"

namespace patchbank {

ExtractorSpec ExtractorSpec::toy(int patch_px) {
  return {ExtractorKind::kToyIsometric, {{"patch_px", patch_px}}, {}};
}

ExtractorSpec ExtractorSpec::raw(int patch_px) {
  return {ExtractorKind::kRawPixel, {{"patch_px", patch_px}}, {}};
}

ExtractorSpec ExtractorSpec::pyramid(std::size_t tap_stage, std::uint64_t seed, std::size_t k) {
  return {ExtractorKind::kGraphPyramid,
          {{"tap_stage", static_cast<double>(tap_stage)}, {"seed", static_cast<double>(seed)},
           {"k", static_cast<double>(k)}},
          {}};
}

ExtractorSpec ExtractorSpec::external() { return {ExtractorKind::kExternalFile, {}, {}}; }

std::string_view kind_name(ExtractorKind kind) {
  switch (kind) {
    case ExtractorKind::kExternalFile: return "gcft";
    case ExtractorKind::kToyIsometric: return "toy";
    case ExtractorKind::kGraphPyramid: return "pyramid";
    case ExtractorKind::kRawPixel: return "raw";
  }
  return "unknown";
}

ExtractorSpec ExtractorSpec::parse(std::string_view text) {
  const auto colon = text.find(':');
  const auto name = text.substr(0, colon);
  ExtractorSpec spec;
  if (name == "toy") {
    spec = toy();
  } else if (name == "raw") {
    spec = raw();
  } else if (name == "pyramid") {
    spec = pyramid();
  } else if (name == "gcft" || name == "external") {
    spec = external();
  } else {
    fail(ErrorCode::kInvalidArgument, "unknown extractor \"" + std::string(name) + "\"");
  }
  if (colon != std::string_view::npos) {
    std::string rest(text.substr(colon + 1));
    std::stringstream ss(rest);
    std::string item;
    while (std::getline(ss, item, ',')) {
      const auto eq = item.find('=');
      if (eq == std::string::npos) fail(ErrorCode::kInvalidArgument, "extractor parameter needs key=value");
      const auto key = item.substr(0, eq);
      const auto value = item.substr(eq + 1);
      if (key == "weights") {
        spec.weights_path = value;
        continue;
      }
      try {
        std::size_t used = 0;
        spec.params[key] = std::stod(value, &used);
        if (used != value.size()) throw std::invalid_argument(value);
      } catch (const std::exception&) {
        fail(ErrorCode::kInvalidArgument, "extractor parameter " + key + " is not a number");
      }
    }
  }
  spec.validate();
  return spec;
}

double ExtractorSpec::param(const std::string& key, double fallback) const {
  const auto it = params.find(key);
  return it == params.end() ? fallback : it->second;
}

void ExtractorSpec::validate() const {
  std::set<std::string> allowed;
  switch (kind) {
    case ExtractorKind::kToyIsometric:
    case ExtractorKind::kRawPixel: allowed = {"patch_px"}; break;
    case ExtractorKind::kGraphPyramid: allowed = {"tap_stage", "seed", "k"}; break;
    case ExtractorKind::kExternalFile: break;
  }
  for (const auto& [key, value] : params) {
    if (!allowed.contains(key)) {
      fail(ErrorCode::kInvalidArgument,
           "parameter \"" + key + "\" not accepted by extractor " + std::string(kind_name(kind)));
    }
    if (!std::isfinite(value) || value < 0 || value != std::floor(value)) {
      fail(ErrorCode::kInvalidArgument, "extractor parameter " + key + " must be a non-negative integer");
    }
  }
  if (!weights_path.empty() && kind != ExtractorKind::kGraphPyramid) {
    fail(ErrorCode::kInvalidArgument, "only the pyramid extractor takes a weight file");
  }
  if ((kind == ExtractorKind::kToyIsometric || kind == ExtractorKind::kRawPixel) && param("patch_px", 0) < 1) {
    fail(ErrorCode::kInvalidArgument, "patch_px must be >= 1");
  }
}

std::string ExtractorSpec::canonical() const {
  std::ostringstream os;
  os << kind_name(kind);
  char sep = ':';
  for (const auto& [key, value] : params) {
    os << sep << key << '=' << static_cast<long long>(value);
    sep = ',';
  }
  if (!weights_path.empty()) os << sep << "weights=" << weights_path;
  return os.str();
}

std::uint64_t fnv1a64(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::uint64_t ExtractorSpec::hash() const { return fnv1a64(canonical()); }

FeatureExtractor::FeatureExtractor(ExtractorSpec spec) : spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.kind == ExtractorKind::kGraphPyramid) {
    pyramid_.tap_stage = static_cast<std::size_t>(spec_.param("tap_stage", 2));
    pyramid_.set_k(static_cast<std::size_t>(spec_.param("k", 9)));
    pyramid_.validate();
    auto bundle = spec_.weights_path.empty()
                      ? synth_weights(pyramid_, static_cast<std::uint64_t>(spec_.param("seed", 0)))
                      : load_weights(spec_.weights_path);
    bundle.check_against(pyramid_, 3);
    weights_ = std::make_shared<const WeightBundle>(std::move(bundle));
  }
}

PatchFeatureGrid FeatureExtractor::extract(const ImageTensor& img) const {
  switch (spec_.kind) {
    case ExtractorKind::kToyIsometric: return extract_toy(img, static_cast<int>(spec_.param("patch_px", 8)));
    case ExtractorKind::kRawPixel: return extract_raw(img, static_cast<int>(spec_.param("patch_px", 8)));
    case ExtractorKind::kGraphPyramid: return graph_pyramid_forward(img, pyramid_, *weights_);
    case ExtractorKind::kExternalFile: break;
  }
  fail(ErrorCode::kInvalidArgument, "the gcft extractor reads feature files, not images");
}

std::filesystem::path FeatureExtractor::feature_path_for(const std::filesystem::path& image_path,
                                                         std::string_view variant_tag) {
  if (image_path.extension() == ".gcft" && variant_tag.empty()) return image_path;
  std::string name = image_path.stem().string();
  if (!variant_tag.empty()) name += "." + std::string(variant_tag);
  return image_path.parent_path() / (name + ".gcft");
}

PatchFeatureGrid FeatureExtractor::extract_file(const std::filesystem::path& image_path,
                                                std::string_view variant_tag) const {
  if (spec_.kind == ExtractorKind::kExternalFile) {
    return load_feature_tensor(feature_path_for(image_path, variant_tag));
  }
  if (!variant_tag.empty()) fail(ErrorCode::kInvalidArgument, "variant files only apply to the gcft extractor");
  return extract(load_image(image_path));
}

}  // namespace patchbank
