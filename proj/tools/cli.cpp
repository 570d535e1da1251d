#include "cli.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "patchbank/augment.hpp"
#include "patchbank/bank.hpp"
#include "patchbank/error.hpp"
#include "patchbank/extractor.hpp"
#include "patchbank/graph.hpp"
#include "patchbank/image.hpp"
#include "patchbank/pipeline.hpp"
#include "patchbank/synth.hpp"

namespace patchbank::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct Globals {
  bool json = false;
  std::size_t jobs = 1;
};

struct PipelineFlags {
  std::string dataset;
  std::string method = "graphcore";
  std::size_t shots = 1;
  std::optional<std::uint64_t> shot_seed;
  double ratio = 0.01;
  std::size_t k_neighbors = 9;
  std::uint64_t seed = 0;
  std::string extractor = "toy";
  std::string aug;
  std::string score_mode = "max";
  std::size_t knn = 3;
  double sigma = 4.0;
  std::string pixel_auroc = "pooled";
  bool dedup = true;
  std::size_t proj_dim = 0;
  std::size_t timing_repeats = 3;
  std::string out;
};

void add_score_flags(CLI::App* sub, std::string& mode, std::size_t& knn, double& sigma) {
  sub->add_option("--score-mode", mode, "Image score: max | knn-mean")
      ->check(CLI::IsMember({"max", "knn-mean"}))
      ->capture_default_str();
  sub->add_option("--knn", knn, "Neighbours averaged by knn-mean")->capture_default_str();
  sub->add_option("--sigma", sigma, "Gaussian sigma (pixels) for anomaly maps")->capture_default_str();
}

void add_bank_flags(CLI::App* sub, std::string& extractor, std::string& aug, double& ratio, std::uint64_t& seed,
                    bool& dedup, std::size_t& proj_dim) {
  sub->add_option("--extractor", extractor, "toy | raw | gcft | pyramid[:tap_stage=2,seed=0,k=9,weights=FILE]")
      ->capture_default_str();
  sub->add_option("--aug", aug, "Augmentation, e.g. rotation=0,90,180,270 (docs/augment-grammar.md)");
  sub->add_option("--ratio", ratio, "Coreset sampling ratio l/|pool|")->capture_default_str();
  sub->add_option("--seed", seed, "Projection seed")->capture_default_str();
  sub->add_flag("--dedup,!--no-dedup", dedup, "Drop exact duplicate features before coreset selection")
      ->capture_default_str();
  sub->add_option("--proj-dim", proj_dim, "Projection dimension (0 = min(D, 128))")->capture_default_str();
}

void add_pipeline_flags(CLI::App* sub, PipelineFlags& f) {
  sub->add_option("--dataset", f.dataset, "Category root (train/good, test/*, ground_truth/*)")->required();
  sub->add_option("--method", f.method, "plain | aug_r | graphcore")->capture_default_str();
  sub->add_option("--shots", f.shots, "Training images K")->capture_default_str();
  sub->add_option("--shot-seed", f.shot_seed, "Pick shots at random with this seed");
  sub->add_option("--k-neighbors", f.k_neighbors, "kNN graph neighbours for the pyramid")->capture_default_str();
  add_bank_flags(sub, f.extractor, f.aug, f.ratio, f.seed, f.dedup, f.proj_dim);
  add_score_flags(sub, f.score_mode, f.knn, f.sigma);
  sub->add_option("--pixel-auroc", f.pixel_auroc, "pooled | per-image-mean")
      ->check(CLI::IsMember({"pooled", "per-image-mean"}))
      ->capture_default_str();
  sub->add_option("--timing-repeats", f.timing_repeats, "Inference timing repeats")->capture_default_str();
  sub->add_option("--out", f.out, "Write the JSON report here");
}

ScoreOptions score_options(const std::string& mode, std::size_t knn, double sigma) {
  ScoreOptions o;
  o.mode = mode == "max" ? ScoreMode::kMax : ScoreMode::kKnnMean;
  o.knn = knn;
  o.sigma = sigma;
  return o;
}

PipelineConfig to_config(const PipelineFlags& f, std::size_t jobs) {
  PipelineConfig c;
  c.method = parse_method(f.method);
  c.shots = f.shots;
  c.shot_seed = f.shot_seed;
  c.ratio = f.ratio;
  c.k_neighbors = f.k_neighbors;
  c.seed = f.seed;
  c.extractor = ExtractorSpec::parse(f.extractor);
  if (!f.aug.empty()) c.augment = parse_augment(f.aug);
  c.score = score_options(f.score_mode, f.knn, f.sigma);
  c.pixel_mode = f.pixel_auroc == "pooled" ? PixelAurocMode::kPooled : PixelAurocMode::kPerImageMean;
  c.dedup = f.dedup;
  c.proj_dim = f.proj_dim;
  c.timing_repeats = f.timing_repeats;
  c.jobs = jobs;
  return c;
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  os << text;
  if (!os) fail(ErrorCode::kIo, "cannot write " + path.string());
}

std::vector<fs::path> list_images(const fs::path& dir) {
  fs::path root = dir;
  if (fs::is_directory(dir / "train" / "good")) root = dir / "train" / "good";
  if (!fs::is_directory(root)) fail(ErrorCode::kMissingFile, "no such directory: " + dir.string());
  std::vector<fs::path> out;
  for (const auto& e : fs::directory_iterator(root)) {
    const auto ext = e.path().extension();
    if (ext == ".png" || ext == ".ppm" || ext == ".pgm") out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  if (out.empty()) fail(ErrorCode::kEmptyInput, "no images in " + root.string());
  return out;
}

std::string reports_json(const std::vector<EvalReport>& reports) {
  if (reports.size() == 1) return report_json(reports.front()) + "\n";
  json arr = json::array();
  for (const auto& r : reports) arr.push_back(json::parse(report_json(r)));
  return arr.dump() + "\n";
}

void emit_reports(const std::vector<EvalReport>& reports, const Globals& g, const std::string& out_path,
                  std::ostream& out) {
  if (!out_path.empty()) write_text(out_path, reports_json(reports));
  if (g.json) {
    for (const auto& r : reports) out << report_json(r) << "\n";
  } else {
    out << format_table(reports);
  }
}

int cmd_synth(const SynthSpec& spec, const std::string& out_dir, const Globals& g, std::ostream& out) {
  const SynthDataset data = generate_dataset(spec);
  const fs::path root = write_dataset(spec, data, out_dir);
  if (g.json) {
    json j = {{"root", root.generic_string()}, {"certified_margin", data.certified_margin}};
    if (data.rotated_normal_margin) j["rotated_normal_margin"] = *data.rotated_normal_margin;
    out << j.dump() << "\n";
  } else {
    out << "wrote " << root.generic_string() << " (certified margin " << data.certified_margin;
    if (data.rotated_normal_margin) out << ", rotated-normal margin " << *data.rotated_normal_margin;
    out << ")\n";
  }
  return kExitOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  Globals g;
  CLI::App app{"Memory-bank few-shot anomaly detection", "patchbank"};
  app.set_config("--config", "", "Read options from a TOML file ([subcommand] sections)");
  app.require_subcommand(1, 1);
  app.add_flag("--json", g.json, "Machine-readable output on stdout");
  app.add_option("--jobs", g.jobs, "Worker threads (default $PATCHBANK_JOBS or 1)")
      ->envname("PATCHBANK_JOBS")
      ->check(CLI::PositiveNumber);

  // synth
  SynthSpec synth;
  std::string synth_out;
  auto* s = app.add_subcommand("synth", "Generate a synthetic dataset with certified margins")->fallthrough();
  s->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  s->add_option("--out", synth_out, "Output directory")->required();
  s->add_option("--category", synth.category)->capture_default_str();
  s->add_option("--image-px", synth.image_px)->capture_default_str();
  s->add_option("--patch-px", synth.patch_px)->capture_default_str();
  s->add_option("--motifs", synth.motif_count, "Normal motifs")->capture_default_str();
  s->add_option("--anomaly-motifs", synth.anomaly_motifs)->capture_default_str();
  s->add_option("--train", synth.train_images, "Training images")->capture_default_str();
  s->add_option("--test-normals", synth.test_normals)->capture_default_str();
  s->add_option("--test-anomalies", synth.test_anomalies)->capture_default_str();
  s->add_option("--margin", synth.margin, "Minimum toy-feature distance of anomaly motifs")->capture_default_str();
  s->add_option("--anomaly-block", synth.anomaly_block, "Side (in patches) of the anomalous block")
      ->capture_default_str();
  s->add_flag("--rotate-test", synth.rotate_test, "Rotate test normal patches by 90/180/270");
  s->add_flag("--train-dihedral,!--no-train-dihedral", synth.train_dihedral,
              "Random dihedral transform per training patch")
      ->capture_default_str();

  // extract
  std::string ex_image, ex_out, ex_extractor = "toy", ex_aug;
  auto* e = app.add_subcommand("extract", "Write a GCFT feature tensor for one image")->fallthrough();
  e->add_option("--image", ex_image, "Input image (PNG/PPM/PGM)")->required();
  e->add_option("--out", ex_out, "Output .gcft (default <stem>.gcft next to the image)");
  e->add_option("--extractor", ex_extractor, "toy | raw | pyramid[:...]")->capture_default_str();
  e->add_option("--aug", ex_aug, "Also write <stem>.<tag>.gcft for each augmentation variant");

  // gen-weights
  std::uint64_t weights_seed = 0;
  std::string weights_out;
  std::size_t weights_k = 9;
  auto* w = app.add_subcommand("gen-weights", "Write a deterministic GCWB pyramid weight bundle")->fallthrough();
  w->add_option("--synth-weights", weights_seed, "Seed")->required();
  w->add_option("--k-neighbors", weights_k, "kNN graph neighbours")->capture_default_str();
  w->add_option("--out", weights_out, "Output .gcwb")->required();

  // build-bank
  std::string bb_train, bb_out, bb_extractor = "toy", bb_aug;
  double bb_ratio = 0.01;
  std::uint64_t bb_seed = 0;
  bool bb_dedup = true;
  std::size_t bb_proj = 0, bb_shots = 0;
  auto* b = app.add_subcommand("build-bank", "Build a GCBK memory bank from training images")->fallthrough();
  b->add_option("--train", bb_train, "Image directory (or a category root with train/good)")->required();
  b->add_option("--out", bb_out, "Output .gcbk")->required();
  b->add_option("--shots", bb_shots, "Use the first K images (0 = all)")->capture_default_str();
  add_bank_flags(b, bb_extractor, bb_aug, bb_ratio, bb_seed, bb_dedup, bb_proj);

  // score
  std::string sc_bank, sc_dataset, sc_extractor, sc_heatmaps, sc_out;
  std::string sc_mode = "max";
  std::size_t sc_knn = 3;
  double sc_sigma = 4.0;
  auto* sc = app.add_subcommand("score", "Score a dataset's test images against a bank (JSON lines)")->fallthrough();
  sc->add_option("--bank", sc_bank, "Bank file")->required();
  sc->add_option("--dataset", sc_dataset, "Category root")->required();
  sc->add_option("--extractor", sc_extractor, "Override the extractor recorded in the bank");
  sc->add_option("--heatmap-dir", sc_heatmaps, "Write per-image anomaly maps as 8-bit PNG");
  sc->add_option("--out", sc_out, "Write JSON lines here instead of stdout");
  add_score_flags(sc, sc_mode, sc_knn, sc_sigma);

  // evaluate
  PipelineFlags ev;
  std::vector<std::string> ev_sweep;
  auto* v = app.add_subcommand("evaluate", "Build, score and report AUROC for one category")->fallthrough();
  add_pipeline_flags(v, ev);
  v->add_option("--sweep", ev_sweep, "key=v1,v2 (ratio, k_neighbors, shots, method); repeatable");

  // sweep
  PipelineFlags sw;
  std::vector<std::string> sw_grid;
  std::string sw_csv;
  auto* x = app.add_subcommand("sweep", "Cartesian sweep over ratio x k_neighbors x shots x method")->fallthrough();
  add_pipeline_flags(x, sw);
  x->add_option("--grid", sw_grid, "key=v1,v2 (ratio, k_neighbors, shots, method); repeatable")->required();
  x->add_option("--csv", sw_csv, "Write the report matrix as CSV");

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::ParseError& pe) {
    const int code = app.exit(pe, out, err);
    return code == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (s->parsed()) return cmd_synth(synth, synth_out, g, out);

    if (e->parsed()) {
      const FeatureExtractor extractor(ExtractorSpec::parse(ex_extractor));
      const ImageTensor img = load_image(ex_image);
      const fs::path base = ex_out.empty() ? FeatureExtractor::feature_path_for(ex_image) : fs::path(ex_out);
      const PatchFeatureGrid grid = extractor.extract(img);
      write_feature_tensor(grid, base);
      json written = json::array({base.generic_string()});
      if (!ex_aug.empty()) {
        const AugmentSpec aug = parse_augment(ex_aug);
        const auto tags = aug.variant_tags();
        const auto variants = augment(img, aug);
        for (std::size_t i = 0; i < variants.size(); ++i) {
          if (static_cast<int>(i) == aug.identity_index()) continue;
          const fs::path p = FeatureExtractor::feature_path_for(base, tags[i]);
          write_feature_tensor(extractor.extract(variants[i]), p);
          written.push_back(p.generic_string());
        }
      }
      if (g.json) {
        out << json{{"rows", grid.rows}, {"cols", grid.cols}, {"dim", grid.dim}, {"files", written}}.dump() << "\n";
      } else {
        out << grid.rows << "x" << grid.cols << "x" << grid.dim << " -> " << written.size() << " file(s)\n";
      }
      return kExitOk;
    }

    if (w->parsed()) {
      PyramidSpec spec;
      spec.set_k(weights_k);
      save_weights(synth_weights(spec, weights_seed), weights_out);
      if (g.json) out << json{{"out", weights_out}, {"seed", weights_seed}}.dump() << "\n";
      return kExitOk;
    }

    if (b->parsed()) {
      auto images = list_images(bb_train);
      if (bb_shots > 0) images = select_shots(images, bb_shots, std::nullopt);
      const FeatureExtractor extractor(ExtractorSpec::parse(bb_extractor));
      CoresetConfig cfg;
      cfg.ratio = bb_ratio;
      cfg.seed = bb_seed;
      cfg.dedup = bb_dedup;
      cfg.proj_dim = bb_proj;
      std::optional<AugmentSpec> aug;
      if (!bb_aug.empty()) aug = parse_augment(bb_aug);
      const MemoryBank bank = build_bank_from_files(images, extractor, aug, cfg, g.jobs);
      save_bank(bank, bb_out);
      if (g.json) {
        out << json{{"out", bb_out},
                    {"vectors", bank.size()},
                    {"dim", bank.dim},
                    {"bytes", bank.byte_size()},
                    {"pool_size", bank.meta.pool_size},
                    {"distinct_size", bank.meta.distinct_size}}
                   .dump()
            << "\n";
      } else {
        out << bank.size() << " vectors of dim " << bank.dim << " from a pool of " << bank.meta.pool_size << " ("
            << bank.meta.distinct_size << " distinct), " << bank.byte_size() << " bytes\n";
      }
      return kExitOk;
    }

    if (sc->parsed()) {
      const MemoryBank bank = load_bank(sc_bank);
      const ExtractorSpec espec = ExtractorSpec::parse(sc_extractor.empty() ? bank.meta.extractor : sc_extractor);
      const FeatureExtractor extractor(espec);
      const DatasetLayout layout = scan_dataset(sc_dataset, !espec.image_based());
      for (const auto& warning : layout.warnings) err << "warning: " << warning << "\n";
      const auto results = score_dataset(layout, bank, extractor, score_options(sc_mode, sc_knn, sc_sigma), g.jobs);
      const std::string lines = scores_jsonl(results);
      if (sc_out.empty()) {
        out << lines;
      } else {
        write_text(sc_out, lines);
      }
      if (!sc_heatmaps.empty()) {
        fs::create_directories(sc_heatmaps);
        for (const auto& r : results) {
          std::string name = fs::path(r.id).replace_extension(".png").generic_string();
          std::replace(name.begin(), name.end(), '/', '_');
          write_heatmap(r.result.pixel_map, fs::path(sc_heatmaps) / name);
        }
      }
      return kExitOk;
    }

    if (v->parsed()) {
      const PipelineConfig base = to_config(ev, g.jobs);
      std::vector<EvalReport> reports;
      if (ev_sweep.empty()) {
        const EvalRun run = run_evaluation(ev.dataset, base);
        for (const auto& warning : run.warnings) err << "warning: " << warning << "\n";
        reports.push_back(run.report);
      } else {
        SweepGrid grid;
        for (const auto& text : ev_sweep) grid.add(text);
        reports = run_sweep(ev.dataset, base, grid, g.jobs);
      }
      emit_reports(reports, g, ev.out, out);
      return kExitOk;
    }

    if (x->parsed()) {
      const PipelineConfig base = to_config(sw, 1);
      SweepGrid grid;
      for (const auto& text : sw_grid) grid.add(text);
      const auto reports = run_sweep(sw.dataset, base, grid, g.jobs);
      if (!sw_csv.empty()) write_text(sw_csv, sweep_csv(reports));
      emit_reports(reports, g, sw.out, out);
      return kExitOk;
    }
  } catch (const Error& ex) {
    err << "patchbank: " << ex.what() << "\n";
    switch (ex.code()) {
      case ErrorCode::kInvalidArgument:
        return kExitUsage;
      case ErrorCode::kInvariantViolation:
        return kExitInvariant;
      default:
        return kExitData;
    }
  } catch (const fs::filesystem_error& ex) {
    err << "patchbank: " << ex.what() << "\n";
    return kExitData;
  } catch (const std::exception& ex) {
    err << "patchbank: internal error: " << ex.what() << "\n";
    return kExitInvariant;
  }
  return kExitUsage;
}

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return run(args, out, err);
}

}  // namespace patchbank::cli
