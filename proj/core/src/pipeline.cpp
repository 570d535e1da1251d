#include "patchbank/pipeline.hpp"

#include <algorithm>
#include <cctype>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <sstream>
#include <type_traits>

#include "json.hpp"
#include "patchbank/error.hpp"
#include "patchbank/parallel.hpp"
#include "patchbank/rng.hpp"

namespace patchbank {

namespace fs = std::filesystem;
using nlohmann::json;

std::string_view method_name(Method m) {
  switch (m) {
    case Method::kPlain: return "plain";
    case Method::kAugR: return "aug_r";
    case Method::kGraphCore: return "graphcore";
  }
  return "unknown";
}

Method parse_method(std::string_view s) {
  if (s == "plain" || s == "patchcore") return Method::kPlain;
  if (s == "aug_r" || s == "aug-r" || s == "augr") return Method::kAugR;
  if (s == "graphcore") return Method::kGraphCore;
  fail(ErrorCode::kInvalidArgument, "unknown method \"" + std::string(s) + "\" (plain|aug_r|graphcore)");
}

void PipelineConfig::validate() const {
  extractor.validate();
  if (shots < 1) fail(ErrorCode::kInvalidArgument, "shots must be >= 1");
  if (!(ratio > 0.0 && ratio <= 1.0)) fail(ErrorCode::kInvalidArgument, "ratio must be in (0, 1]");
  if (k_neighbors < 1) fail(ErrorCode::kInvalidArgument, "k_neighbors must be >= 1");
  if (timing_repeats < 1) fail(ErrorCode::kInvalidArgument, "timing_repeats must be >= 1");
  switch (method) {
    case Method::kPlain:
      if (augment) fail(ErrorCode::kInvalidArgument, "method plain takes no augmentation");
      break;
    case Method::kAugR:
      break;
    case Method::kGraphCore:
      if (augment) fail(ErrorCode::kInvalidArgument, "method graphcore builds its bank without augmentation");
      if (extractor.kind != ExtractorKind::kGraphPyramid && extractor.kind != ExtractorKind::kToyIsometric) {
        fail(ErrorCode::kInvalidArgument, "method graphcore needs the pyramid or toy extractor");
      }
      break;
  }
  if (augment) augment->validate();
}

std::optional<AugmentSpec> PipelineConfig::effective_augment() const {
  if (method != Method::kAugR) return std::nullopt;
  return augment ? augment : std::optional<AugmentSpec>(AugmentSpec::rotation_r());
}

ExtractorSpec PipelineConfig::effective_extractor() const {
  ExtractorSpec e = extractor;
  if (e.kind == ExtractorKind::kGraphPyramid) e.params["k"] = static_cast<double>(k_neighbors);
  return e;
}

std::string PipelineConfig::canonical_json() const {
  const auto aug = effective_augment();
  json j = {
      {"method", method_name(method)},
      {"shots", shots},
      {"ratio", ratio},
      {"k_neighbors", k_neighbors},
      {"seed", seed},
      {"shot_seed", shot_seed ? json(*shot_seed) : json(nullptr)},
      {"extractor", effective_extractor().canonical()},
      {"augment", aug ? aug->to_string() : "none"},
      {"score_mode", score.mode == ScoreMode::kMax ? "max" : "knn-mean"},
      {"score_knn", score.knn},
      {"sigma", score.sigma},
      {"pixel_auroc", pixel_mode == PixelAurocMode::kPooled ? "pooled" : "per-image-mean"},
      {"dedup", dedup},
      {"proj_dim", proj_dim},
  };
  return j.dump();
}

std::string PipelineConfig::hash() const { return hex64(fnv1a64(canonical_json())); }

std::vector<fs::path> select_shots(const std::vector<fs::path>& train, std::size_t shots,
                                   std::optional<std::uint64_t> shot_seed) {
  if (train.size() < shots) {
    fail(ErrorCode::kEmptyInput, "need " + std::to_string(shots) + " training images, found " +
                                     std::to_string(train.size()));
  }
  std::vector<fs::path> chosen = train;
  if (shot_seed) {
    Rng rng(*shot_seed);
    rng.shuffle(chosen);
    chosen.resize(shots);
    std::sort(chosen.begin(), chosen.end());
  } else {
    chosen.resize(shots);
  }
  return chosen;
}

EvalRun run_evaluation(const fs::path& category_root, const PipelineConfig& cfg) {
  cfg.validate();
  const ExtractorSpec espec = cfg.effective_extractor();
  const FeatureExtractor extractor(espec);
  const DatasetLayout layout = scan_dataset(category_root, !espec.image_based());
  if (layout.test.empty()) fail(ErrorCode::kEmptyInput, "no test images under " + category_root.string());

  EvalRun run;
  run.warnings = layout.warnings;
  const auto shots = select_shots(layout.train, cfg.shots, cfg.shot_seed);

  CoresetConfig coreset;
  coreset.ratio = cfg.ratio;
  coreset.seed = cfg.seed;
  coreset.dedup = cfg.dedup;
  coreset.proj_dim = cfg.proj_dim;
  const auto build_start = std::chrono::steady_clock::now();
  run.bank = build_bank_from_files(shots, extractor, cfg.effective_augment(), coreset, cfg.jobs);
  const std::chrono::duration<double> build_elapsed = std::chrono::steady_clock::now() - build_start;

  run.images = score_dataset(layout, run.bank, extractor, cfg.score, cfg.jobs);

  std::vector<double> scores;
  std::vector<int> labels;
  std::vector<ScoreMap> maps;
  std::vector<ScoreMap> masks;
  for (const auto& img : run.images) {
    scores.push_back(img.result.image_score);
    labels.push_back(img.label);
    if (img.mask) {
      maps.push_back(img.result.pixel_map);
      masks.push_back(*img.mask);
    }
  }

  EvalReport& r = run.report;
  r.category = category_root.filename().string();
  if (r.category.empty()) r.category = category_root.parent_path().filename().string();
  r.method = std::string(method_name(cfg.method));
  r.extractor = espec.canonical();
  r.image_auroc = auroc(scores, labels);
  try {
    r.pixel_auroc = pixel_auroc(maps, masks, cfg.pixel_mode);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::kUndefinedMetric) throw;
    run.warnings.push_back(std::string("pixel AUROC undefined: ") + e.what());
  }
  r.bank_bytes = run.bank.byte_size();
  r.bank_vectors = run.bank.size();
  r.shot_count = cfg.shots;
  r.ratio = cfg.ratio;
  r.k_neighbors = cfg.k_neighbors;
  r.config_hash = cfg.hash();
  r.test_images = run.images.size();
  r.build_seconds = build_elapsed.count();

  std::vector<PatchFeatureGrid> grids;
  for (const auto& s : layout.test) grids.push_back(extractor.extract_file(s.image));
  r.mean_inference_seconds = time_inference(run.bank, grids, cfg.timing_repeats, cfg.score);
  r.validate();
  return run;
}

namespace {

json report_core(const EvalReport& r) {
  return json{
      {"category", r.category},
      {"method", r.method},
      {"extractor", r.extractor},
      {"image_auroc", r.image_auroc},
      {"pixel_auroc", r.pixel_auroc ? json(*r.pixel_auroc) : json(nullptr)},
      {"bank_bytes", r.bank_bytes},
      {"bank_vectors", r.bank_vectors},
      {"shot_count", r.shot_count},
      {"ratio", r.ratio},
      {"k_neighbors", r.k_neighbors},
      {"config_hash", r.config_hash},
      {"test_images", r.test_images},
      {"table_cell", format_auroc_cell(r)},
  };
}

}  // namespace

std::string report_json_deterministic(const EvalReport& r) { return report_core(r).dump(); }

std::string report_json(const EvalReport& r) {
  json j = report_core(r);
  j["timing"] = {{"mean_inference_seconds", r.mean_inference_seconds}, {"build_seconds", r.build_seconds}};
  return j.dump();
}

std::string scores_jsonl(const std::vector<ScoredImage>& images) {
  std::string out;
  for (const auto& img : images) {
    out += json{{"id", img.id}, {"label", img.label}, {"image_score", img.result.image_score}}.dump();
    out += '\n';
  }
  return out;
}

namespace {

std::vector<std::string> split_list(std::string_view s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else if (!std::isspace(static_cast<unsigned char>(c))) {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

template <typename T>
T parse_number(const std::string& s, const std::string& key) {
  try {
    std::size_t used = 0;
    if constexpr (std::is_floating_point_v<T>) {
      const double v = std::stod(s, &used);
      if (used == s.size()) return v;
    } else {
      const long long v = std::stoll(s, &used);
      if (used == s.size() && v >= 0) return static_cast<T>(v);
    }
  } catch (const std::exception&) {
  }
  fail(ErrorCode::kInvalidArgument, "sweep " + key + ": bad value \"" + s + "\"");
}

}  // namespace

void SweepGrid::add(std::string_view text) {
  for (const auto& clause : split_list(text, ';')) {
    if (clause.empty()) continue;
    const auto eq = clause.find('=');
    if (eq == std::string::npos) fail(ErrorCode::kInvalidArgument, "sweep clause needs key=values: " + clause);
    const std::string key = clause.substr(0, eq);
    const auto values = split_list(std::string_view(clause).substr(eq + 1), ',');
    for (const auto& v : values) {
      if (v.empty()) fail(ErrorCode::kInvalidArgument, "sweep " + key + ": empty value");
      if (key == "ratio") {
        ratios.push_back(parse_number<double>(v, key));
      } else if (key == "k_neighbors" || key == "k") {
        k_neighbors.push_back(parse_number<std::size_t>(v, key));
      } else if (key == "shots" || key == "K") {
        shots.push_back(parse_number<std::size_t>(v, key));
      } else if (key == "method") {
        methods.push_back(parse_method(v));
      } else {
        fail(ErrorCode::kInvalidArgument, "unknown sweep key \"" + key + "\"");
      }
    }
  }
}

std::vector<PipelineConfig> SweepGrid::expand(const PipelineConfig& base) const {
  if (empty()) fail(ErrorCode::kEmptyInput, "sweep grid is empty");
  const std::vector<double> rs = ratios.empty() ? std::vector<double>{base.ratio} : ratios;
  const std::vector<std::size_t> ks = k_neighbors.empty() ? std::vector<std::size_t>{base.k_neighbors} : k_neighbors;
  const std::vector<std::size_t> ss = shots.empty() ? std::vector<std::size_t>{base.shots} : shots;
  const std::vector<Method> ms = methods.empty() ? std::vector<Method>{base.method} : methods;
  std::vector<PipelineConfig> out;
  for (double r : rs)
    for (std::size_t k : ks)
      for (std::size_t s : ss)
        for (Method m : ms) {
          PipelineConfig c = base;
          c.ratio = r;
          c.k_neighbors = k;
          c.shots = s;
          c.method = m;
          out.push_back(c);
        }
  return out;
}

std::vector<EvalReport> run_sweep(const fs::path& category_root, const PipelineConfig& base, const SweepGrid& grid,
                                  std::size_t jobs) {
  const auto configs = grid.expand(base);
  std::vector<EvalReport> reports(configs.size());
  parallel_for(configs.size(), jobs, [&](std::size_t i) {
    PipelineConfig c = configs[i];
    c.jobs = 1;
    reports[i] = run_evaluation(category_root, c).report;
  });
  return reports;
}

std::string sweep_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << "category,method,shots,ratio,k_neighbors,image_auroc,pixel_auroc,bank_vectors,bank_bytes,"
        "mean_inference_seconds,config_hash\n";
  for (const auto& r : reports) {
    char buf[512];
    std::snprintf(buf, sizeof buf, "%s,%s,%zu,%.17g,%zu,%.17g,%s,%zu,%zu,%.9g,%s\n", r.category.c_str(),
                  r.method.c_str(), r.shot_count, r.ratio, r.k_neighbors, r.image_auroc,
                  r.pixel_auroc ? std::to_string(*r.pixel_auroc).c_str() : "", r.bank_vectors, r.bank_bytes,
                  r.mean_inference_seconds, r.config_hash.c_str());
    os << buf;
  }
  return os.str();
}

}  // namespace patchbank
