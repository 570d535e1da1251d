// Property suite run as a single binary: one PASS/FAIL line per criterion,
// non-zero exit when any criterion fails.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <numeric>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "oracles.hpp"
#include "patchbank/augment.hpp"
#include "patchbank/bank.hpp"
#include "patchbank/error.hpp"
#include "patchbank/extractor.hpp"
#include "patchbank/graph.hpp"
#include "patchbank/metrics.hpp"
#include "patchbank/pipeline.hpp"
#include "patchbank/rng.hpp"
#include "patchbank/scoring.hpp"
#include "patchbank/synth.hpp"
#include "support.hpp"

#ifdef PATCHBANK_HAVE_CLI
#include "cli.hpp"
#endif

using namespace patchbank;
namespace fs = std::filesystem;
using patchbank::testing::TempDir;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

std::vector<float> distinct_floats(Rng& rng, std::size_t n) {
  std::set<float> seen;
  std::vector<float> out;
  while (out.size() < n) {
    const float v = static_cast<float>(rng.uniform(-1.0, 1.0));
    if (seen.insert(v).second) out.push_back(v);
  }
  return out;
}

// 1. greedy covering radius <= 2 x exhaustive optimum
Verdict coreset_two_approx() {
  const auto t0 = Clock::now();
  Rng rng(1001);
  int violations = 0;
  double worst = 0.0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 2 + rng.below(11);
    const std::size_t d = 1 + rng.below(3);
    const std::size_t l = 1 + rng.below(std::min<std::size_t>(4, n));
    const auto pool = patchbank::testing::random_floats(rng, n * d);
    const auto sel = coreset_select(pool, d, l, random_projection(d, d, 0));
    const double greedy = covering_radius(pool, d, sel);
    const double opt = oracle::optimal_k_center(pool, d, l);
    if (opt > 0.0) worst = std::max(worst, greedy / opt);
    if (greedy > 2.0 * opt) ++violations;
  }
  const double secs = seconds_since(t0);
  return {violations == 0 && secs < 10.0,
          fmt("200 instances, %d violations, worst greedy/opt %.3f, %.2f s", violations, worst, secs)};
}

// 2. prefix property and permutation invariance
Verdict coreset_prefix_permutation() {
  Rng rng(2002);
  int prefix_bad = 0;
  int perm_bad = 0;
  for (int seed = 0; seed < 100; ++seed) {
    const std::size_t n = 3 + rng.below(40);
    const std::size_t d = 1 + rng.below(24);
    const auto pool = distinct_floats(rng, n * d);
    const Projection psi = random_projection(d, std::min<std::size_t>(d, 8), static_cast<std::uint64_t>(seed));
    const std::size_t l = 1 + rng.below(n - 1);
    const auto a = coreset_select(pool, d, l, psi);
    const auto b = coreset_select(pool, d, l + 1, psi);
    if (!std::equal(a.begin(), a.end(), b.begin())) ++prefix_bad;

    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<float> shuffled(n * d);
    for (std::size_t i = 0; i < n; ++i) {
      std::copy_n(pool.begin() + static_cast<std::ptrdiff_t>(perm[i] * d), d,
                  shuffled.begin() + static_cast<std::ptrdiff_t>(i * d));
    }
    const auto c = coreset_select(shuffled, d, l, psi);
    std::multiset<std::vector<float>> sa, sc;
    for (auto i : a) sa.insert(std::vector<float>(pool.begin() + i * d, pool.begin() + (i + 1) * d));
    for (auto i : c) sc.insert(std::vector<float>(shuffled.begin() + i * d, shuffled.begin() + (i + 1) * d));
    if (sa != sc) ++perm_bad;
  }
  return {prefix_bad == 0 && perm_bad == 0,
          fmt("100 seeds each: %d prefix failures, %d permutation failures", prefix_bad, perm_bad)};
}

// 3. AUROC against pair counting
Verdict auroc_oracle() {
  Rng rng(3003);
  double worst = 0.0;
  for (int inst = 0; inst < 500; ++inst) {
    const std::size_t n = 2 + rng.below(200);
    std::vector<double> s(n);
    std::vector<int> l(n);
    const std::uint64_t levels = 1 + rng.below(20);  // few levels force ties
    for (std::size_t i = 0; i < n; ++i) {
      s[i] = inst % 2 ? rng.uniform() : static_cast<double>(rng.below(levels)) / 7.0;
      l[i] = static_cast<int>(rng.below(2));
    }
    l[0] = 0;
    l[1] = 1;
    worst = std::max(worst, std::abs(auroc(s, l) - oracle::auroc_pairs(s, l)));
  }
  const double hand = auroc(std::vector<double>{0.1, 0.4, 0.3, 0.9}, std::vector<int>{0, 0, 1, 1});
  return {worst <= 1e-12 && hand == 0.75, fmt("500 instances, max |diff| %.3g; hand case %.17g", worst, hand)};
}

GraphStageWeights random_stage(Rng& rng, std::size_t in, std::size_t out) {
  GraphStageWeights w;
  w.in_dim = in;
  w.out_dim = out;
  w.w_update = patchbank::testing::random_floats(rng, in * out);
  w.bn_scale = patchbank::testing::random_floats(rng, out, 0.5, 2.0);
  w.bn_shift = patchbank::testing::random_floats(rng, out);
  w.bn_mean = patchbank::testing::random_floats(rng, out);
  w.bn_var = patchbank::testing::random_floats(rng, out, 0.1, 2.0);
  w.epsilon = 1e-5f;
  return w;
}

// 4. permutation equivariance of the max-relative convolution
Verdict conv_equivariance() {
  Rng rng(4004);
  int bad = 0;
  for (int inst = 0; inst < 200; ++inst) {
    const std::size_t n = 2 + rng.below(29);
    const std::size_t d = 1 + rng.below(16);
    const std::size_t k = 1 + rng.below(10);
    const auto f = distinct_floats(rng, n * d);
    const auto w = random_stage(rng, d, 1 + rng.below(16));
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(perm);
    std::vector<float> pf(n * d);
    for (std::size_t i = 0; i < n; ++i) std::copy_n(f.begin() + perm[i] * d, d, pf.begin() + i * d);
    const auto a = max_relative_conv(build_knn_graph(f, d, k), w);
    const auto b = max_relative_conv(build_knn_graph(pf, d, k), w);
    const std::size_t o = w.out_dim;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::equal(b.begin() + i * o, b.begin() + (i + 1) * o, a.begin() + perm[i] * o)) {
        ++bad;
        break;
      }
    }
  }
  int degenerate_bad = 0;
  for (int inst = 0; inst < 20; ++inst) {
    const std::size_t d = 1 + rng.below(16);
    const auto w = random_stage(rng, d, 1 + rng.below(16));
    const auto zero = node_update(std::vector<float>(d, 0.0f), w);
    const auto v = patchbank::testing::random_floats(rng, d);
    std::vector<float> same;
    for (int i = 0; i < 5; ++i) same.insert(same.end(), v.begin(), v.end());
    const auto out = max_relative_conv(build_knn_graph(same, d, 3), w);
    for (int i = 0; i < 5; ++i) {
      if (!std::equal(zero.begin(), zero.end(), out.begin() + i * w.out_dim)) ++degenerate_bad;
    }
    if (max_relative_conv(build_knn_graph(v, d, 4), w) != zero) ++degenerate_bad;
  }
  return {bad == 0 && degenerate_bad == 0,
          fmt("200 graphs: %d not equivariant; identical/isolated nodes: %d mismatches with ReLU(BN(0))", bad,
              degenerate_bad)};
}

// 5. pyramid stage shapes
Verdict pyramid_shapes() {
  const PyramidSpec spec;
  Rng rng(5005);
  const auto stages =
      graph_pyramid_stages(patchbank::testing::random_image(rng, 64, 64, 3), spec, synth_weights(spec, 0));
  std::string got;
  for (const auto& g : stages) got += fmt("%ux%ux%u ", g.rows, g.cols, g.dim);
  const bool ok = got == "16x16x48 8x8x96 4x4x240 2x2x384 ";
  return {ok, "stage grids " + got};
}

// 6. superset banks never raise scores; ratio-1.0 self-score is zero
Verdict scoring_monotone() {
  Rng rng(6006);
  int raised = 0;
  for (int inst = 0; inst < 100; ++inst) {
    const std::uint32_t d = 1 + static_cast<std::uint32_t>(rng.below(12));
    const std::size_t n = 1 + rng.below(30);
    MemoryBank small;
    small.dim = d;
    small.vectors = patchbank::testing::random_floats(rng, n * d);
    small.provenance.resize(n);
    MemoryBank big = small;
    const std::size_t extra = 1 + rng.below(30);
    const auto more = patchbank::testing::random_floats(rng, extra * d);
    // put the additions in front so index order differs too
    big.vectors.insert(big.vectors.begin(), more.begin(), more.end());
    big.provenance.resize(n + extra);
    PatchFeatureGrid g = PatchFeatureGrid::zeros(3, 4, d, 4);
    g.features = patchbank::testing::random_floats(rng, g.features.size());
    const auto a = score_image(g, small);
    const auto b = score_image(g, big);
    for (std::size_t i = 0; i < a.patch_scores.values.size(); ++i) {
      if (b.patch_scores.values[i] > a.patch_scores.values[i]) ++raised;
    }
    for (std::size_t i = 0; i < a.pixel_map.values.size(); ++i) {
      if (b.pixel_map.values[i] > a.pixel_map.values[i] + 1e-6f) ++raised;
    }
    if (b.image_score > a.image_score) ++raised;
  }
  double self = -1.0;
  for (auto spec : {ExtractorSpec::toy(), ExtractorSpec::raw(), ExtractorSpec::pyramid()}) {
    const FeatureExtractor ex(spec);
    const ImageTensor img = patchbank::testing::random_image(rng, 64, 64, 3);
    CoresetConfig cfg;
    cfg.ratio = 1.0;
    const MemoryBank bank = build_bank({img}, ex, std::nullopt, cfg);
    self = std::max(self, score_image(ex.extract(img), bank).image_score);
  }
  return {raised == 0 && self == 0.0,
          fmt("100 cases, %d raised scores; max self-score over toy/raw/pyramid %.17g", raised, self)};
}

double manifest_value(const fs::path& root, const char* key) {
  std::ifstream is(root / "manifest.json");
  return nlohmann::json::parse(is).at(key).get<double>();
}

// 7. synthetic end to end
Verdict synthetic_end_to_end() {
  const auto t0 = Clock::now();
  TempDir dir("pb-ac7");
  SynthSpec plain_spec;
  plain_spec.seed = 7;
  plain_spec.category = "certified";
  const fs::path root = generate(plain_spec, dir.path());

  PipelineConfig gc;
  gc.method = Method::kGraphCore;
  gc.extractor = ExtractorSpec::toy();
  gc.shots = 1;
  gc.ratio = 1.0;
  gc.timing_repeats = 1;
  const EvalRun g = run_evaluation(root, gc);
  const double pix = g.report.pixel_auroc.value_or(0.0);

  SynthSpec rot_spec = plain_spec;
  rot_spec.category = "rotated";
  rot_spec.rotate_test = true;
  rot_spec.train_dihedral = false;
  const fs::path rot_root = generate(rot_spec, dir.path());
  const double margin = manifest_value(rot_root, "rotated_normal_margin");

  PipelineConfig plain = gc;
  plain.method = Method::kPlain;
  plain.extractor = ExtractorSpec::raw();
  PipelineConfig aug = plain;
  aug.method = Method::kAugR;
  const EvalRun p = run_evaluation(rot_root, plain);
  const EvalRun a = run_evaluation(rot_root, aug);
  double plain_min = 1e300;
  double aug_max = 0.0;
  for (const auto& img : p.images) if (img.label == 0) plain_min = std::min(plain_min, img.result.image_score);
  for (const auto& img : a.images) if (img.label == 0) aug_max = std::max(aug_max, img.result.image_score);
  const double secs = seconds_since(t0);
  const bool ok = g.report.image_auroc == 1.0 && pix >= 0.99 && margin > 0.0 && plain_min >= margin &&
                  aug_max == 0.0 && secs < 60.0;
  return {ok, fmt("graphcore(toy) image %.4f pixel %.4f; rotated normals: plain(raw) min %.6g vs margin' %.6g, "
                  "aug_r(raw) max %.6g; %.1f s",
                  g.report.image_auroc, pix, plain_min, margin, aug_max, secs)};
}

// 8. dedup shrinks the Aug.(R) bank on a rotation-closed set
Verdict redundancy_reduction() {
  TempDir dir("pb-ac8");
  SynthSpec spec;
  spec.seed = 8;
  spec.train_images = 2;
  const fs::path root = generate(spec, dir.path());
  PipelineConfig c;
  c.method = Method::kAugR;
  c.extractor = ExtractorSpec::toy();
  c.shots = 2;
  c.timing_repeats = 1;
  std::string detail;
  bool ok = true;
  for (double ratio : {1.0, 0.01}) {
    c.ratio = ratio;
    c.dedup = true;
    const auto on = run_evaluation(root, c).report.bank_vectors;
    c.dedup = false;
    const auto off = run_evaluation(root, c).report.bank_vectors;
    ok = ok && 4 * on <= off;
    detail += fmt("ratio %g: %zu vectors with dedup, %zu without; ", ratio, on, off);
  }
  return {ok, detail};
}

// 9. AUROC non-decreasing in the sampling ratio on a hard-margin set
Verdict sweep_trend() {
  TempDir dir("pb-ac9");
  SynthSpec spec;
  spec.seed = 9;
  spec.category = "hard";
  spec.motif_count = 16;
  spec.train_images = 4;
  spec.test_normals = 16;
  spec.test_anomalies = 16;
  spec.anomaly_block = 1;
  spec.margin = 0.02;
  const fs::path root = generate(spec, dir.path());
  PipelineConfig base;
  base.method = Method::kGraphCore;
  base.extractor = ExtractorSpec::toy();
  base.shots = 4;
  base.dedup = false;
  base.timing_repeats = 1;
  SweepGrid grid;
  grid.add("ratio=0.0001,0.001,0.01,0.1");
  const auto reports = run_sweep(root, base, grid, 1);
  bool ok = true;
  std::string detail = "image AUROC by ratio:";
  for (std::size_t i = 0; i < reports.size(); ++i) {
    detail += fmt(" %g->%.4f (l=%zu)", reports[i].ratio, reports[i].image_auroc, reports[i].bank_vectors);
    if (i > 0 && reports[i].image_auroc < reports[i - 1].image_auroc) ok = false;
  }
  return {ok, detail};
}

std::string strip_timing(const std::string& text) {
  auto j = nlohmann::json::parse(text);
  if (j.is_array()) {
    for (auto& e : j) e.erase("timing");
  } else {
    j.erase("timing");
  }
  return j.dump();
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

// Every JSON artifact of a miniature run of the suite above.
std::vector<std::string> suite_artifacts(const fs::path& work, std::size_t jobs) {
  std::vector<std::string> out;
  SynthSpec spec;
  spec.seed = 10;
  const fs::path root = generate(spec, work);
  out.push_back(read_text(root / "manifest.json"));
  SynthSpec rot = spec;
  rot.category = "rotated";
  rot.rotate_test = true;
  rot.train_dihedral = false;
  const fs::path rot_root = generate(rot, work);
  out.push_back(read_text(rot_root / "manifest.json"));

  PipelineConfig c;
  c.timing_repeats = 1;
  c.jobs = jobs;
  for (auto [method, extractor] : {std::pair{Method::kGraphCore, ExtractorSpec::toy()},
                                   std::pair{Method::kGraphCore, ExtractorSpec::pyramid()},
                                   std::pair{Method::kPlain, ExtractorSpec::raw()},
                                   std::pair{Method::kAugR, ExtractorSpec::raw()}}) {
    c.method = method;
    c.extractor = extractor;
    for (const auto& r : {root, rot_root}) {
      const EvalRun run = run_evaluation(r, c);
      out.push_back(report_json_deterministic(run.report));
      out.push_back(scores_jsonl(run.images));
      const auto bytes = encode_bank(run.bank);
      out.emplace_back(bytes.begin(), bytes.end());
    }
  }
  SweepGrid grid;
  grid.add("ratio=0.0001,0.01,1.0;method=plain,graphcore");
  PipelineConfig base;
  base.timing_repeats = 1;
  for (const auto& r : run_sweep(root, base, grid, jobs)) out.push_back(report_json_deterministic(r));

#ifdef PATCHBANK_HAVE_CLI
  std::ostringstream sink, err;
  const fs::path report = work / "cli-report.json";
  const fs::path sweep = work / "cli-sweep.json";
  cli::run({"evaluate", "--dataset", root.string(), "--ratio", "0.5", "--out", report.string(), "--jobs",
            std::to_string(jobs)},
           sink, err);
  cli::run({"sweep", "--dataset", root.string(), "--grid", "ratio=0.1,1.0", "--out", sweep.string(), "--jobs",
            std::to_string(jobs)},
           sink, err);
  out.push_back(strip_timing(read_text(report)));
  out.push_back(strip_timing(read_text(sweep)));
#endif
  return out;
}

// 10. identical seeds give byte-identical artifacts, independent of thread count
Verdict determinism() {
  TempDir a("pb-ac10a"), b("pb-ac10b");
  const auto first = suite_artifacts(a.path(), 1);
  const auto second = suite_artifacts(b.path(), 3);
  std::size_t differ = 0;
  for (std::size_t i = 0; i < std::min(first.size(), second.size()); ++i) {
    if (first[i] != second[i]) ++differ;
  }
  const bool ok = first.size() == second.size() && differ == 0;
  return {ok, fmt("%zu artifacts compared (jobs 1 vs 3), %zu differ", first.size(), differ)};
}

}  // namespace

int main() {
  const std::vector<std::pair<const char*, std::function<Verdict()>>> criteria = {
      {"coreset 2-approximation", coreset_two_approx},
      {"coreset prefix and permutation", coreset_prefix_permutation},
      {"AUROC oracle equivalence", auroc_oracle},
      {"max-relative conv equivariance", conv_equivariance},
      {"pyramid shape contract", pyramid_shapes},
      {"scoring monotonicity and self-score", scoring_monotone},
      {"synthetic end-to-end", synthetic_end_to_end},
      {"redundancy reduction", redundancy_reduction},
      {"ratio sweep trend", sweep_trend},
      {"determinism", determinism},
  };
  int failed = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    Verdict v;
    try {
      v = criteria[i].second();
    } catch (const std::exception& e) {
      v = {false, std::string("exception: ") + e.what()};
    }
    if (!v.pass) ++failed;
    std::printf("%s AC%zu %s: %s\n", v.pass ? "PASS" : "FAIL", i + 1, criteria[i].first, v.detail.c_str());
    std::fflush(stdout);
  }
  std::printf("%zu/%zu criteria passed\n", criteria.size() - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
