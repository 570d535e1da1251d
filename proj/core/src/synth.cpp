#include "patchbank/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>

#include "json.hpp"
#include "patchbank/augment.hpp"
#include "patchbank/bank.hpp"
#include "patchbank/binary_io.hpp"
#include "patchbank/error.hpp"
#include "patchbank/features.hpp"
#include "patchbank/rng.hpp"
#include "patchbank/scoring.hpp"

namespace patchbank {

namespace fs = std::filesystem;

void SynthSpec::validate() const {
  auto bad = [](const std::string& what) { fail(ErrorCode::kInvalidArgument, "synth: " + what); };
  if (image_px <= 0 || image_px % 32 != 0) bad("image_px must be a positive multiple of 32");
  if (patch_px <= 0 || image_px % patch_px != 0) bad("patch_px must divide image_px");
  if (motif_count < 1) bad("motif_count must be >= 1");
  if (motif_count > grid_side() * grid_side()) bad("every training image must fit all motifs");
  if (anomaly_block < 0 || anomaly_block > grid_side()) bad("anomaly_block must be within the grid");
  if (anomaly_block > 0 && anomaly_motifs < 1) bad("anomaly_motifs must be >= 1");
  if (train_images < 1 || test_normals < 0 || test_anomalies < 0) bad("image counts must be non-negative");
  if (!(margin > 0.0)) bad("margin must be positive");
  if (max_attempts < 1) bad("max_attempts must be >= 1");
  if (category.empty() || category.find('/') != std::string::npos) bad("category must be a plain name");
}

namespace {

ImageTensor random_motif(Rng& rng, int p) {
  ImageTensor m = ImageTensor::zeros(p, p, 3);
  double base[3];
  for (double& b : base) b = rng.uniform(0.1, 0.9);
  const double amplitude = rng.uniform(0.05, 0.35);
  const double radial = rng.uniform(-0.3, 0.3);
  const double half = (p - 1) / 2.0;
  const double max_r = std::sqrt(2.0) * half;
  for (int y = 0; y < p; ++y)
    for (int x = 0; x < p; ++x) {
      const double r = max_r > 0 ? std::hypot(y - half, x - half) / max_r : 0.0;
      for (int ch = 0; ch < 3; ++ch) {
        const double v = base[ch] + radial * (r - 0.5) + amplitude * (2.0 * rng.uniform() - 1.0);
        m.at(y, x, ch) = from_u8(to_u8(static_cast<float>(v)));
      }
    }
  return m;
}

std::vector<float> toy_feature(const ImageTensor& motif) {
  return extract_toy(motif, motif.height).features;
}

double euclidean(const std::vector<float>& a, const std::vector<float>& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

void paste(ImageTensor& dst, const ImageTensor& motif, int cell_r, int cell_c) {
  const int p = motif.height;
  for (int y = 0; y < p; ++y)
    for (int x = 0; x < p; ++x)
      for (int ch = 0; ch < 3; ++ch) dst.at(cell_r * p + y, cell_c * p + x, ch) = motif.at(y, x, ch);
}

}  // namespace

SynthDataset generate_dataset(const SynthSpec& spec) {
  spec.validate();
  Rng rng(spec.seed);
  const int p = spec.patch_px;
  const int side = spec.grid_side();

  std::vector<ImageTensor> normals;
  std::vector<std::vector<float>> normal_features;
  for (int i = 0; i < spec.motif_count; ++i) {
    normals.push_back(random_motif(rng, p));
    normal_features.push_back(toy_feature(normals.back()));
  }

  auto distance_to_normals = [&](const std::vector<float>& f) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& n : normal_features) best = std::min(best, euclidean(f, n));
    return best;
  };

  std::vector<ImageTensor> anomalies;
  for (int i = 0; i < spec.anomaly_motifs && spec.anomaly_block > 0; ++i) {
    int attempts = 0;
    while (true) {
      if (++attempts > spec.max_attempts) {
        fail(ErrorCode::kUnsatisfiable, "synth: no anomaly motif at margin " + std::to_string(spec.margin) +
                                            " after " + std::to_string(spec.max_attempts) + " attempts");
      }
      ImageTensor m = random_motif(rng, p);
      if (distance_to_normals(toy_feature(m)) >= spec.margin) {
        anomalies.push_back(std::move(m));
        break;
      }
    }
  }

  SynthDataset data;
  for (int t = 0; t < spec.train_images; ++t) {
    std::vector<int> cells(static_cast<std::size_t>(side * side));
    for (std::size_t c = 0; c < cells.size(); ++c) {
      cells[c] = static_cast<int>(c) < spec.motif_count ? static_cast<int>(c)
                                                         : static_cast<int>(rng.below(spec.motif_count));
    }
    rng.shuffle(cells);
    ImageTensor img = ImageTensor::zeros(spec.image_px, spec.image_px, 3);
    for (int r = 0; r < side; ++r)
      for (int c = 0; c < side; ++c) {
        const int transform = spec.train_dihedral ? static_cast<int>(rng.below(8)) : 0;
        paste(img, dihedral(normals[cells[r * side + c]], transform), r, c);
      }
    data.train.push_back(std::move(img));
  }

  auto normal_background = [&]() {
    ImageTensor img = ImageTensor::zeros(spec.image_px, spec.image_px, 3);
    for (int r = 0; r < side; ++r)
      for (int c = 0; c < side; ++c) {
        const int motif = static_cast<int>(rng.below(spec.motif_count));
        int transform = 0;
        if (spec.rotate_test) {
          transform = 1 + static_cast<int>(rng.below(3));
        } else if (spec.train_dihedral) {
          transform = static_cast<int>(rng.below(8));
        }
        paste(img, dihedral(normals[motif], transform), r, c);
      }
    return img;
  };

  for (int i = 0; i < spec.test_normals; ++i) {
    data.test.push_back({normal_background(), ImageTensor::zeros(spec.image_px, spec.image_px, 1), 0});
  }
  for (int i = 0; i < spec.test_anomalies; ++i) {
    SynthTestImage t{normal_background(), ImageTensor::zeros(spec.image_px, spec.image_px, 1), 0};
    if (spec.anomaly_block > 0) {
      t.label = 1;
      const int r0 = static_cast<int>(rng.below(side - spec.anomaly_block + 1));
      const int c0 = static_cast<int>(rng.below(side - spec.anomaly_block + 1));
      for (int r = r0; r < r0 + spec.anomaly_block; ++r)
        for (int c = c0; c < c0 + spec.anomaly_block; ++c) {
          const auto& motif = anomalies[rng.below(anomalies.size())];
          paste(t.image, dihedral(motif, static_cast<int>(rng.below(8))), r, c);
          for (int y = 0; y < p; ++y)
            for (int x = 0; x < p; ++x) t.mask.at(r * p + y, c * p + x, 0) = 1.0f;
        }
    }
    data.test.push_back(std::move(t));
  }

  // Certificate: exhaustive distance check on the generated images.
  double certified = std::numeric_limits<double>::infinity();
  for (const auto& t : data.test) {
    const auto grid = extract_toy(t.image, p);
    for (int r = 0; r < side; ++r)
      for (int c = 0; c < side; ++c) {
        const auto v = grid.at(r, c);
        const std::vector<float> f(v.begin(), v.end());
        const double d = distance_to_normals(f);
        const bool anomalous_cell = t.mask.at(r * p, c * p, 0) > 0.5f;
        if (anomalous_cell) {
          certified = std::min(certified, d);
        } else if (d != 0.0) {
          fail(ErrorCode::kInvariantViolation, "synth: normal cell has non-zero toy distance to the motif set");
        }
      }
  }
  if (std::isinf(certified)) certified = spec.margin;
  if (certified < spec.margin) fail(ErrorCode::kInvariantViolation, "synth: certified margin below spec.margin");
  data.certified_margin = certified;

  if (spec.rotate_test && spec.test_normals > 0) {
    std::vector<PatchFeatureGrid> train_raw;
    for (const auto& img : data.train) train_raw.push_back(extract_raw(img, p));
    CoresetConfig full;
    full.ratio = 1.0;
    const MemoryBank bank = build_bank(train_raw, full);
    double worst = std::numeric_limits<double>::infinity();
    for (const auto& t : data.test) {
      if (t.label != 0) continue;
      const auto res = score_image(extract_raw(t.image, p), bank, {ScoreMode::kMax, 1, 0.0});
      worst = std::min(worst, res.image_score);
    }
    if (!(worst > 0.0)) {
      fail(ErrorCode::kUnsatisfiable, "synth: a rotated test normal is reproduced exactly by raw training patches");
    }
    data.rotated_normal_margin = worst;
  }
  return data;
}

fs::path write_dataset(const SynthSpec& spec, const SynthDataset& data, const fs::path& out) {
  const fs::path root = out / spec.category;
  const fs::path train_dir = root / "train" / "good";
  const fs::path good_dir = root / "test" / "good";
  const fs::path anomaly_dir = root / "test" / "anomaly";
  const fs::path mask_dir = root / "ground_truth" / "anomaly";
  for (const auto& d : {train_dir, good_dir, anomaly_dir, mask_dir}) fs::create_directories(d);

  auto name = [](std::size_t i, const char* suffix) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%03zu%s.png", i, suffix);
    return std::string(buf);
  };
  for (std::size_t i = 0; i < data.train.size(); ++i) save_png(data.train[i], train_dir / name(i, ""));
  std::size_t good = 0;
  std::size_t bad = 0;
  for (const auto& t : data.test) {
    if (t.label == 0) {
      save_png(t.image, good_dir / name(good++, ""));
    } else {
      save_png(t.image, anomaly_dir / name(bad, ""));
      save_png(t.mask, mask_dir / name(bad, "_mask"));
      ++bad;
    }
  }

  nlohmann::json manifest = {
      {"category", spec.category},
      {"seed", spec.seed},
      {"image_px", spec.image_px},
      {"patch_px", spec.patch_px},
      {"motif_count", spec.motif_count},
      {"anomaly_motifs", spec.anomaly_motifs},
      {"anomaly_block", spec.anomaly_block},
      {"train_images", spec.train_images},
      {"test_normals", good},
      {"test_anomalies", bad},
      {"rotate_test", spec.rotate_test},
      {"train_dihedral", spec.train_dihedral},
      {"margin", spec.margin},
      {"certified_margin", data.certified_margin},
  };
  manifest["rotated_normal_margin"] =
      data.rotated_normal_margin ? nlohmann::json(*data.rotated_normal_margin) : nlohmann::json(nullptr);
  const std::string text = manifest.dump(2) + "\n";
  io::write_file(root / "manifest.json",
                 std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  return root;
}

fs::path generate(const SynthSpec& spec, const fs::path& out) {
  return write_dataset(spec, generate_dataset(spec), out);
}

}  // namespace patchbank
