#include "patchbank/graph.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>

#include "patchbank/binary_io.hpp"
#include "patchbank/error.hpp"
#include "patchbank/rng.hpp"

namespace patchbank {

namespace {

double squared_distance(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t d = 0; d < a.size(); ++d) {
    const double diff = static_cast<double>(a[d]) - static_cast<double>(b[d]);
    s += diff * diff;
  }
  return s;
}

std::string stage_label(std::size_t stage) { return "stage " + std::to_string(stage) + ": "; }

}  // namespace

FeatureGraph build_knn_graph(std::span<const float> features, std::size_t dim, std::size_t k) {
  if (dim == 0 || features.empty() || features.size() % dim != 0) {
    fail(ErrorCode::kShapeMismatch, "knn graph needs at least one node of positive dimension");
  }
  if (k < 1) fail(ErrorCode::kInvalidArgument, "knn graph needs k >= 1");
  FeatureGraph g;
  g.node_count = features.size() / dim;
  g.dim = dim;
  g.k = std::min(k, g.node_count - 1);
  g.node_features.assign(features.begin(), features.end());
  g.neighbor_index.resize(g.node_count * g.k);
  if (g.k == 0) return g;

  std::vector<std::pair<double, std::uint32_t>> candidates;
  candidates.reserve(g.node_count - 1);
  for (std::size_t i = 0; i < g.node_count; ++i) {
    candidates.clear();
    for (std::size_t j = 0; j < g.node_count; ++j) {
      if (j == i) continue;
      candidates.emplace_back(squared_distance(g.node(i), g.node(j)), static_cast<std::uint32_t>(j));
    }
    std::partial_sort(candidates.begin(), candidates.begin() + static_cast<std::ptrdiff_t>(g.k), candidates.end());
    for (std::size_t n = 0; n < g.k; ++n) g.neighbor_index[i * g.k + n] = candidates[n].second;
  }
  return g;
}

FeatureGraph build_knn_graph(const PatchFeatureGrid& grid, std::size_t k) {
  grid.validate();
  return build_knn_graph(grid.features, grid.dim, k);
}

GraphStageWeights GraphStageWeights::identity(std::size_t dim) {
  GraphStageWeights w;
  w.in_dim = dim;
  w.out_dim = dim;
  w.w_update.assign(dim * dim, 0.0f);
  for (std::size_t i = 0; i < dim; ++i) w.w_update[i * dim + i] = 1.0f;
  w.bn_scale.assign(dim, 1.0f);
  w.bn_shift.assign(dim, 0.0f);
  w.bn_mean.assign(dim, 0.0f);
  w.bn_var.assign(dim, 1.0f);
  w.epsilon = 0.0f;
  return w;
}

void GraphStageWeights::validate() const {
  if (in_dim == 0 || out_dim == 0) fail(ErrorCode::kShapeMismatch, "stage weights need positive dimensions");
  if (w_update.size() != in_dim * out_dim) fail(ErrorCode::kShapeMismatch, "w_update is not in_dim x out_dim");
  for (const auto* v : {&bn_scale, &bn_shift, &bn_mean, &bn_var}) {
    if (v->size() != out_dim) fail(ErrorCode::kShapeMismatch, "batch-norm vector length != out_dim");
  }
  auto finite = [](const std::vector<float>& v) {
    return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
  };
  if (!finite(w_update) || !finite(bn_scale) || !finite(bn_shift) || !finite(bn_mean) || !finite(bn_var) ||
      !std::isfinite(epsilon)) {
    fail(ErrorCode::kCorruptData, "non-finite stage weight");
  }
  if (epsilon < 0.0f) fail(ErrorCode::kCorruptData, "batch-norm epsilon must be non-negative");
  for (float v : bn_var) {
    if (!(v > 0.0f)) fail(ErrorCode::kCorruptData, "batch-norm variance must be positive");
  }
}

std::vector<float> max_relative_aggregate(const FeatureGraph& g, RelativeSign sign) {
  std::vector<float> out(g.node_count * g.dim, 0.0f);
  if (g.k == 0) return out;
  for (std::size_t i = 0; i < g.node_count; ++i) {
    float* dst = out.data() + i * g.dim;
    const auto fi = g.node(i);
    bool first = true;
    for (std::uint32_t j : g.neighbors(i)) {
      const auto fj = g.node(j);
      for (std::size_t d = 0; d < g.dim; ++d) {
        const float diff = sign == RelativeSign::kSelfMinusNeighbor ? fi[d] - fj[d] : fj[d] - fi[d];
        dst[d] = first ? diff : std::max(dst[d], diff);
      }
      first = false;
    }
  }
  return out;
}

std::vector<float> node_update(std::span<const float> rows, const GraphStageWeights& w, bool relu) {
  w.validate();
  if (rows.size() % w.in_dim != 0) fail(ErrorCode::kShapeMismatch, "node features do not match w_update input dim");
  const std::size_t n = rows.size() / w.in_dim;
  std::vector<float> out(n * w.out_dim);
  std::vector<double> acc(w.out_dim);
  std::vector<double> inv_std(w.out_dim);
  for (std::size_t o = 0; o < w.out_dim; ++o) {
    inv_std[o] = 1.0 / std::sqrt(static_cast<double>(w.bn_var[o]) + static_cast<double>(w.epsilon));
  }
  for (std::size_t i = 0; i < n; ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const float* x = rows.data() + i * w.in_dim;
    for (std::size_t d = 0; d < w.in_dim; ++d) {
      const double xd = x[d];
      if (xd == 0.0) continue;
      const float* wrow = w.w_update.data() + d * w.out_dim;
      for (std::size_t o = 0; o < w.out_dim; ++o) acc[o] += xd * static_cast<double>(wrow[o]);
    }
    for (std::size_t o = 0; o < w.out_dim; ++o) {
      double y = (acc[o] - w.bn_mean[o]) * inv_std[o] * w.bn_scale[o] + w.bn_shift[o];
      if (relu) y = std::max(y, 0.0);
      out[i * w.out_dim + o] = static_cast<float>(y);
    }
  }
  return out;
}

std::vector<float> max_relative_conv(const FeatureGraph& g, const GraphStageWeights& w, ConvOptions opts) {
  if (g.dim != w.in_dim) {
    fail(ErrorCode::kShapeMismatch, "graph dim " + std::to_string(g.dim) + " != weight input dim " +
                                        std::to_string(w.in_dim));
  }
  return node_update(max_relative_aggregate(g, opts.sign), w, opts.relu);
}

void PyramidSpec::set_k(std::size_t k) {
  for (auto& s : stages) s.k = k;
}

std::size_t PyramidSpec::total_downsample() const {
  std::size_t f = stem_downsample;
  for (std::size_t s = 1; s < stages.size(); ++s) f *= stage_downsample;
  return f;
}

std::size_t PyramidSpec::stage_stride(std::size_t stage) const {
  std::size_t f = stem_downsample;
  for (std::size_t s = 1; s < stage; ++s) f *= stage_downsample;
  return f;
}

void PyramidSpec::validate() const {
  if (stages.empty()) fail(ErrorCode::kInvalidArgument, "pyramid needs at least one stage");
  if (stem_downsample == 0 || stage_downsample == 0) fail(ErrorCode::kInvalidArgument, "downsample factor is zero");
  if (tap_stage < 1 || tap_stage > stages.size()) {
    fail(ErrorCode::kInvalidArgument, "tap_stage " + std::to_string(tap_stage) + " outside 1.." +
                                          std::to_string(stages.size()));
  }
  for (std::size_t s = 0; s < stages.size(); ++s) {
    if (stages[s].dim == 0 || stages[s].k == 0 || stages[s].blocks == 0) {
      fail(ErrorCode::kInvalidArgument, stage_label(s + 1) + "dim, k and blocks must be positive");
    }
  }
}

void WeightBundle::check_against(const PyramidSpec& spec, std::size_t in_channels) const {
  if (stages.size() != spec.stages.size()) {
    fail(ErrorCode::kShapeMismatch, "weight bundle has " + std::to_string(stages.size()) + " stages, spec has " +
                                        std::to_string(spec.stages.size()));
  }
  std::size_t prev = in_channels;
  for (std::size_t s = 0; s < stages.size(); ++s) {
    const auto& st = stages[s];
    const auto& ss = spec.stages[s];
    if (st.in_dim != prev || st.dim != ss.dim || st.lift.size() != st.in_dim * st.dim) {
      fail(ErrorCode::kShapeMismatch, stage_label(s + 1) + "lift is " + std::to_string(st.in_dim) + "x" +
                                          std::to_string(st.dim) + ", expected " + std::to_string(prev) + "x" +
                                          std::to_string(ss.dim));
    }
    if (st.blocks.size() != ss.blocks) {
      fail(ErrorCode::kShapeMismatch, stage_label(s + 1) + "block count mismatch");
    }
    for (const auto& b : st.blocks) {
      if (b.in_dim != ss.dim || b.out_dim != ss.dim) {
        fail(ErrorCode::kShapeMismatch, stage_label(s + 1) + "block weights are not dim x dim");
      }
      b.validate();
    }
    prev = ss.dim;
  }
}

namespace {

// in_dim x out_dim with orthonormal rows (in_dim <= out_dim), by Gram-Schmidt.
std::vector<float> orthonormal_lift(std::size_t in_dim, std::size_t out_dim, Rng& rng) {
  if (in_dim > out_dim) fail(ErrorCode::kInvalidArgument, "lift must not reduce dimension");
  std::vector<std::vector<double>> rows;
  while (rows.size() < in_dim) {
    std::vector<double> v(out_dim);
    for (auto& x : v) x = rng.gaussian();
    for (const auto& r : rows) {
      double dot = 0.0;
      for (std::size_t i = 0; i < out_dim; ++i) dot += v[i] * r[i];
      for (std::size_t i = 0; i < out_dim; ++i) v[i] -= dot * r[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm < 1e-6) continue;
    for (auto& x : v) x /= norm;
    rows.push_back(std::move(v));
  }
  std::vector<float> m(in_dim * out_dim);
  for (std::size_t r = 0; r < in_dim; ++r)
    for (std::size_t c = 0; c < out_dim; ++c) m[r * out_dim + c] = static_cast<float>(rows[r][c]);
  return m;
}

}  // namespace

WeightBundle synth_weights(const PyramidSpec& spec, std::uint64_t seed, std::size_t in_channels) {
  spec.validate();
  Rng rng(seed);
  WeightBundle bundle;
  std::size_t prev = in_channels;
  for (const auto& ss : spec.stages) {
    WeightBundle::Stage st;
    st.in_dim = prev;
    st.dim = ss.dim;
    st.lift = orthonormal_lift(prev, ss.dim, rng);
    const double scale = 1.0 / std::sqrt(static_cast<double>(ss.dim));
    for (std::size_t b = 0; b < ss.blocks; ++b) {
      GraphStageWeights w;
      w.in_dim = ss.dim;
      w.out_dim = ss.dim;
      w.w_update.resize(ss.dim * ss.dim);
      for (auto& x : w.w_update) x = static_cast<float>(rng.gaussian() * scale);
      w.bn_scale.assign(ss.dim, 1.0f);
      w.bn_shift.assign(ss.dim, 0.0f);
      w.bn_mean.assign(ss.dim, 0.0f);
      w.bn_var.assign(ss.dim, 1.0f);
      w.epsilon = 1e-5f;
      st.blocks.push_back(std::move(w));
    }
    bundle.stages.push_back(std::move(st));
    prev = ss.dim;
  }
  return bundle;
}

void save_weights(const WeightBundle& bundle, const std::filesystem::path& path) {
  io::ByteWriter w;
  w.put_magic("GCWB");
  w.put_u16(kGcwbVersion);
  w.put_u32(static_cast<std::uint32_t>(bundle.stages.size()));
  for (const auto& st : bundle.stages) {
    if (st.lift.size() != st.in_dim * st.dim) fail(ErrorCode::kShapeMismatch, "lift size mismatch");
    w.put_u32(static_cast<std::uint32_t>(st.in_dim));
    w.put_u32(static_cast<std::uint32_t>(st.dim));
    w.put_u32(static_cast<std::uint32_t>(st.blocks.size()));
    w.put_f32s(st.lift);
    for (const auto& b : st.blocks) {
      if (b.in_dim != st.dim || b.out_dim != st.dim) fail(ErrorCode::kShapeMismatch, "block weights not dim x dim");
      b.validate();
      w.put_f32s(b.w_update);
      w.put_f32s(b.bn_scale);
      w.put_f32s(b.bn_shift);
      w.put_f32s(b.bn_mean);
      w.put_f32s(b.bn_var);
      w.put_f32(b.epsilon);
    }
  }
  w.write_file(path);
}

WeightBundle load_weights(const std::filesystem::path& path) {
  auto r = io::ByteReader::from_file(path);
  r.expect_magic("GCWB");
  const auto version = r.u16();
  if (version != kGcwbVersion) {
    fail(ErrorCode::kVersionMismatch, "GCWB version " + std::to_string(version) + " unsupported");
  }
  const auto stage_count = r.u32();
  if (stage_count > 64) fail(ErrorCode::kDimensionOverflow, "GCWB stage count too large");
  WeightBundle bundle;
  for (std::uint32_t s = 0; s < stage_count; ++s) {
    WeightBundle::Stage st;
    st.in_dim = r.u32();
    st.dim = r.u32();
    const auto blocks = r.u32();
    st.lift.resize(io::checked_product({st.in_dim, st.dim}, "GCWB lift"));
    r.f32s(st.lift);
    const std::size_t square = io::checked_product({st.dim, st.dim}, "GCWB block");
    if (blocks > 1024) fail(ErrorCode::kDimensionOverflow, "GCWB block count too large");
    for (std::uint32_t b = 0; b < blocks; ++b) {
      GraphStageWeights w;
      w.in_dim = st.dim;
      w.out_dim = st.dim;
      w.w_update.resize(square);
      r.f32s(w.w_update);
      for (auto* v : {&w.bn_scale, &w.bn_shift, &w.bn_mean, &w.bn_var}) {
        v->resize(st.dim);
        r.f32s(*v);
      }
      w.epsilon = r.f32();
      w.validate();
      st.blocks.push_back(std::move(w));
    }
    bundle.stages.push_back(std::move(st));
  }
  if (r.remaining() != 0) fail(ErrorCode::kCorruptData, "trailing bytes after GCWB payload");
  return bundle;
}

namespace {

PatchFeatureGrid avg_pool(const PatchFeatureGrid& in, std::size_t factor) {
  if (in.rows % factor != 0 || in.cols % factor != 0) {
    fail(ErrorCode::kShapeMismatch, "grid not divisible by pooling factor");
  }
  auto out = PatchFeatureGrid::zeros(static_cast<std::uint32_t>(in.rows / factor),
                                     static_cast<std::uint32_t>(in.cols / factor), in.dim,
                                     static_cast<std::uint32_t>(in.stride_px * factor));
  const double inv = 1.0 / static_cast<double>(factor * factor);
  std::vector<double> acc(in.dim);
  for (std::uint32_t r = 0; r < out.rows; ++r) {
    for (std::uint32_t c = 0; c < out.cols; ++c) {
      std::fill(acc.begin(), acc.end(), 0.0);
      for (std::size_t dy = 0; dy < factor; ++dy)
        for (std::size_t dx = 0; dx < factor; ++dx) {
          const auto v = in.at(r * factor + dy, c * factor + dx);
          for (std::size_t d = 0; d < in.dim; ++d) acc[d] += v[d];
        }
      auto o = out.at(r, c);
      for (std::size_t d = 0; d < in.dim; ++d) o[d] = static_cast<float>(acc[d] * inv);
    }
  }
  return out;
}

PatchFeatureGrid lift(const PatchFeatureGrid& in, const WeightBundle::Stage& st) {
  auto out = PatchFeatureGrid::zeros(in.rows, in.cols, static_cast<std::uint32_t>(st.dim), in.stride_px);
  std::vector<double> acc(st.dim);
  for (std::size_t i = 0; i < in.size(); ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    const auto x = in.vec(i);
    for (std::size_t d = 0; d < st.in_dim; ++d) {
      const float* row = st.lift.data() + d * st.dim;
      for (std::size_t o = 0; o < st.dim; ++o) acc[o] += static_cast<double>(x[d]) * row[o];
    }
    auto y = out.vec(i);
    for (std::size_t o = 0; o < st.dim; ++o) y[o] = static_cast<float>(acc[o]);
  }
  return out;
}

PatchFeatureGrid stem(const ImageTensor& img, std::size_t factor) {
  PatchFeatureGrid pixels = PatchFeatureGrid::zeros(static_cast<std::uint32_t>(img.height),
                                                    static_cast<std::uint32_t>(img.width), 3, 1);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      auto v = pixels.at(r, c);
      for (int ch = 0; ch < 3; ++ch) v[ch] = img.at(r, c, img.channels == 1 ? 0 : ch);
    }
  auto pooled = avg_pool(pixels, factor);
  for (auto& v : pooled.features) v = 2.0f * v - 1.0f;
  return pooled;
}

std::vector<PatchFeatureGrid> run_pyramid(const ImageTensor& img, const PyramidSpec& spec,
                                          const WeightBundle& weights, std::size_t last_stage) {
  spec.validate();
  img.validate();
  if (img.channels != 1 && img.channels != 3) fail(ErrorCode::kShapeMismatch, "pyramid expects 1 or 3 channels");
  weights.check_against(spec, 3);
  const std::size_t total = spec.total_downsample();
  if (img.height % total != 0 || img.width % total != 0) {
    fail(ErrorCode::kShapeMismatch, "image " + std::to_string(img.height) + "x" + std::to_string(img.width) +
                                        " not divisible by " + std::to_string(total));
  }
  std::vector<PatchFeatureGrid> outputs;
  PatchFeatureGrid x = stem(img, spec.stem_downsample);
  for (std::size_t s = 0; s < last_stage; ++s) {
    if (s > 0) x = avg_pool(x, spec.stage_downsample);
    x = lift(x, weights.stages[s]);
    try {
      x = run_graph_stage(x, weights.stages[s], spec.stages[s].k, spec.rebuild_graph_per_block, spec.sign);
    } catch (const Error& e) {
      fail(e.code(), stage_label(s + 1) + e.what());
    }
    outputs.push_back(x);
  }
  return outputs;
}

}  // namespace

PatchFeatureGrid run_graph_stage(const PatchFeatureGrid& input, const WeightBundle::Stage& weights, std::size_t k,
                                 bool rebuild_graph_per_block, RelativeSign sign) {
  if (input.dim != weights.dim) fail(ErrorCode::kShapeMismatch, "stage input dim does not match stage weights");
  FeatureGraph graph = build_knn_graph(input, k);
  PatchFeatureGrid x = input;
  for (std::size_t b = 0; b < weights.blocks.size(); ++b) {
    if (b > 0) {
      if (rebuild_graph_per_block) {
        graph = build_knn_graph(x, k);
      } else {
        graph.node_features = x.features;
      }
    }
    x.features = max_relative_conv(graph, weights.blocks[b], {sign, true});
  }
  return x;
}

std::vector<PatchFeatureGrid> graph_pyramid_stages(const ImageTensor& img, const PyramidSpec& spec,
                                                   const WeightBundle& weights) {
  return run_pyramid(img, spec, weights, spec.stages.size());
}

PatchFeatureGrid graph_pyramid_forward(const ImageTensor& img, const PyramidSpec& spec, const WeightBundle& weights) {
  return std::move(run_pyramid(img, spec, weights, spec.tap_stage).back());
}

}  // namespace patchbank
