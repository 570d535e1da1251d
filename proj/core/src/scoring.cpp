#include "patchbank/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>

#include "patchbank/error.hpp"
#include "patchbank/image.hpp"
#include "patchbank/parallel.hpp"

namespace patchbank {

namespace fs = std::filesystem;

namespace {

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = static_cast<double>(a[d]) - static_cast<double>(b[d]);
    s += diff * diff;
  }
  return s;
}

void check_query(std::span<const float> query, const MemoryBank& bank) {
  if (bank.size() == 0) fail(ErrorCode::kEmptyInput, "memory bank is empty");
  if (query.size() != bank.dim) {
    fail(ErrorCode::kShapeMismatch, "query dim " + std::to_string(query.size()) + " != bank dim " +
                                        std::to_string(bank.dim));
  }
}

}  // namespace

NeighborHit nearest_neighbor(std::span<const float> query, const MemoryBank& bank) {
  check_query(query, bank);
  std::size_t best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < bank.size(); ++i) {
    const double d = squared_distance(query, bank.vec(i));
    if (d < best_d) {
      best_d = d;
      best = i;
    }
  }
  return {best, std::sqrt(best_d)};
}

std::vector<NeighborHit> nearest_neighbors(std::span<const float> query, const MemoryBank& bank, std::size_t count) {
  check_query(query, bank);
  std::vector<std::pair<double, std::size_t>> all(bank.size());
  for (std::size_t i = 0; i < bank.size(); ++i) all[i] = {squared_distance(query, bank.vec(i)), i};
  count = std::min(count, all.size());
  std::partial_sort(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(count), all.end());
  std::vector<NeighborHit> hits(count);
  for (std::size_t i = 0; i < count; ++i) hits[i] = {all[i].second, std::sqrt(all[i].first)};
  return hits;
}

ScoreMap upsample_bilinear(const ScoreMap& cells, int out_height, int out_width) {
  ScoreMap out{out_height, out_width, std::vector<float>(static_cast<std::size_t>(out_height) * out_width)};
  const double sy = static_cast<double>(cells.height) / out_height;
  const double sx = static_cast<double>(cells.width) / out_width;
  for (int r = 0; r < out_height; ++r) {
    const double fy = std::clamp((r + 0.5) * sy - 0.5, 0.0, cells.height - 1.0);
    const int y0 = static_cast<int>(std::floor(fy));
    const int y1 = std::min(y0 + 1, cells.height - 1);
    const double wy = fy - y0;
    for (int c = 0; c < out_width; ++c) {
      const double fx = std::clamp((c + 0.5) * sx - 0.5, 0.0, cells.width - 1.0);
      const int x0 = static_cast<int>(std::floor(fx));
      const int x1 = std::min(x0 + 1, cells.width - 1);
      const double wx = fx - x0;
      const double top = (1 - wx) * cells.at(y0, x0) + wx * cells.at(y0, x1);
      const double bottom = (1 - wx) * cells.at(y1, x0) + wx * cells.at(y1, x1);
      out.at(r, c) = static_cast<float>((1 - wy) * top + wy * bottom);
    }
  }
  return out;
}

ScoreMap gaussian_smooth(const ScoreMap& map, double sigma) {
  if (sigma <= 0.0) return map;
  const int radius = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(2 * radius + 1);
  double total = 0.0;
  for (int i = -radius; i <= radius; ++i) {
    kernel[i + radius] = std::exp(-0.5 * (i * i) / (sigma * sigma));
    total += kernel[i + radius];
  }
  for (auto& k : kernel) k /= total;
  auto reflect = [](int i, int n) {
    if (n == 1) return 0;
    const int period = 2 * (n - 1);
    i = ((i % period) + period) % period;
    return i < n ? i : period - i;
  };
  ScoreMap tmp = map;
  ScoreMap out = map;
  for (int r = 0; r < map.height; ++r)
    for (int c = 0; c < map.width; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * map.at(r, reflect(c + k, map.width));
      tmp.at(r, c) = static_cast<float>(acc);
    }
  for (int r = 0; r < map.height; ++r)
    for (int c = 0; c < map.width; ++c) {
      double acc = 0.0;
      for (int k = -radius; k <= radius; ++k) acc += kernel[k + radius] * tmp.at(reflect(r + k, map.height), c);
      out.at(r, c) = static_cast<float>(acc);
    }
  return out;
}

AnomalyResult score_image(const PatchFeatureGrid& grid, const MemoryBank& bank, const ScoreOptions& opts) {
  grid.validate();
  if (grid.dim != bank.dim) {
    fail(ErrorCode::kShapeMismatch, "feature dim " + std::to_string(grid.dim) + " != bank dim " +
                                        std::to_string(bank.dim));
  }
  AnomalyResult res;
  res.patch_scores = {static_cast<int>(grid.rows), static_cast<int>(grid.cols), std::vector<float>(grid.size())};
  res.nn_indices.resize(grid.size());
  double image_score = 0.0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    double score;
    if (opts.mode == ScoreMode::kMax) {
      const auto hit = nearest_neighbor(grid.vec(i), bank);
      score = hit.distance;
      res.nn_indices[i] = static_cast<std::uint32_t>(hit.index);
    } else {
      const auto hits = nearest_neighbors(grid.vec(i), bank, std::max<std::size_t>(1, opts.knn));
      double sum = 0.0;
      for (const auto& h : hits) sum += h.distance;
      score = sum / static_cast<double>(hits.size());
      res.nn_indices[i] = static_cast<std::uint32_t>(hits.front().index);
    }
    res.patch_scores.values[i] = static_cast<float>(score);
    image_score = std::max(image_score, static_cast<double>(res.patch_scores.values[i]));
  }
  res.image_score = image_score;
  const int height = static_cast<int>(grid.rows * grid.stride_px);
  const int width = static_cast<int>(grid.cols * grid.stride_px);
  res.pixel_map = gaussian_smooth(upsample_bilinear(res.patch_scores, height, width), opts.sigma);
  return res;
}

namespace {

bool is_image_file(const fs::path& p, bool feature_files) {
  const auto ext = p.extension().string();
  if (feature_files) return ext == ".gcft";
  return ext == ".png" || ext == ".ppm" || ext == ".pgm";
}

std::vector<fs::path> list_files(const fs::path& dir, bool feature_files) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && is_image_file(e.path(), feature_files)) {
      // Variant feature files (<stem>.<tag>.gcft) belong to their base sample.
      if (feature_files && e.path().stem().has_extension()) continue;
      out.push_back(e.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::vector<fs::path> list_dirs(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

DatasetLayout scan_dataset(const fs::path& root, bool feature_files) {
  if (!fs::is_directory(root)) fail(ErrorCode::kMissingFile, "dataset root not found: " + root.string());
  DatasetLayout layout;
  layout.root = root;
  layout.train = list_files(root / "train" / "good", feature_files);
  for (const auto& defect_dir : list_dirs(root / "test")) {
    const std::string defect = defect_dir.filename().string();
    for (const auto& img : list_files(defect_dir, feature_files)) {
      TestSample s;
      s.image = img;
      s.id = fs::relative(img, root).generic_string();
      s.defect = defect;
      s.label = defect == "good" ? 0 : 1;
      if (s.label == 1) {
        const auto mask = root / "ground_truth" / defect / (img.stem().string() + "_mask.png");
        if (fs::exists(mask)) {
          s.mask = mask;
        } else {
          layout.warnings.push_back("no mask for " + s.id + "; excluded from pixel metrics");
        }
      }
      layout.test.push_back(std::move(s));
    }
  }
  if (layout.test.empty()) layout.warnings.push_back("no test images under " + (root / "test").string());
  return layout;
}

ScoreMap load_mask(const fs::path& path) {
  const ImageTensor img = load_image(path);
  ScoreMap m{img.height, img.width, std::vector<float>(static_cast<std::size_t>(img.height) * img.width)};
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) m.at(r, c) = img.at(r, c, 0) > 0.5f ? 1.0f : 0.0f;
  return m;
}

std::vector<ScoredImage> score_dataset(const DatasetLayout& layout, const MemoryBank& bank,
                                       const FeatureExtractor& extractor, const ScoreOptions& opts,
                                       std::size_t jobs) {
  std::vector<ScoredImage> out(layout.test.size());
  parallel_for(layout.test.size(), jobs, [&](std::size_t i) {
    const auto& s = layout.test[i];
    ScoredImage& si = out[i];
    si.id = s.id;
    si.label = s.label;
    try {
      si.result = score_image(extractor.extract_file(s.image), bank, opts);
    } catch (const Error& e) {
      fail(e.code(), s.id + ": " + e.what());
    }
    const auto& pm = si.result.pixel_map;
    if (s.label == 0) {
      si.mask = ScoreMap{pm.height, pm.width, std::vector<float>(pm.values.size(), 0.0f)};
    } else if (s.mask) {
      si.mask = load_mask(*s.mask);
      if (si.mask->height != pm.height || si.mask->width != pm.width) {
        fail(ErrorCode::kShapeMismatch, s.id + ": mask size differs from anomaly map size");
      }
    }
  });
  return out;
}

void write_heatmap(const ScoreMap& map, const fs::path& path) {
  const auto [lo, hi] = std::minmax_element(map.values.begin(), map.values.end());
  ImageTensor img = ImageTensor::zeros(map.height, map.width, 1);
  const double range = map.values.empty() ? 0.0 : static_cast<double>(*hi) - *lo;
  for (std::size_t i = 0; i < map.values.size(); ++i) {
    img.data[i] = range > 0.0 ? static_cast<float>((map.values[i] - *lo) / range) : 0.0f;
  }
  save_png(img, path);
}

}  // namespace patchbank
