#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "patchbank/features.hpp"
#include "patchbank/image.hpp"

namespace patchbank {

// Directed kNN graph over node feature vectors. neighbors(i) lists the nodes
// whose edges point into i, ordered by (distance, index) ascending.
struct FeatureGraph {
  std::size_t node_count = 0;
  std::size_t dim = 0;
  std::size_t k = 0;  // effective neighbourhood size, min(K, N-1)
  std::vector<float> node_features;
  std::vector<std::uint32_t> neighbor_index;  // node_count * k

  std::span<const float> node(std::size_t i) const { return {node_features.data() + i * dim, dim}; }
  std::span<const std::uint32_t> neighbors(std::size_t i) const { return {neighbor_index.data() + i * k, k}; }
};

FeatureGraph build_knn_graph(std::span<const float> features, std::size_t dim, std::size_t k);
FeatureGraph build_knn_graph(const PatchFeatureGrid& grid, std::size_t k);

// Which difference the max-relative aggregator takes.
enum class RelativeSign {
  kSelfMinusNeighbor,  // f_i - f_j
  kNeighborMinusSelf,  // f_j - f_i
};

// Linear update followed by inference-form batch norm and ReLU.
struct GraphStageWeights {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  std::vector<float> w_update;  // in_dim x out_dim, row-major
  std::vector<float> bn_scale;
  std::vector<float> bn_shift;
  std::vector<float> bn_mean;
  std::vector<float> bn_var;
  float epsilon = 1e-5f;

  // W = I, BN reduces to the identity (epsilon = 0).
  static GraphStageWeights identity(std::size_t dim);
  void validate() const;
};

struct ConvOptions {
  RelativeSign sign = RelativeSign::kSelfMinusNeighbor;
  bool relu = true;
};

// f''_i = elementwise max over neighbours of the signed difference; an empty
// neighbourhood gives the zero vector. Result is node_count x dim.
std::vector<float> max_relative_aggregate(const FeatureGraph& g, RelativeSign sign);

// ReLU(BN(x W)) for each row of `rows` (row length w.in_dim).
std::vector<float> node_update(std::span<const float> rows, const GraphStageWeights& w, bool relu = true);

std::vector<float> max_relative_conv(const FeatureGraph& g, const GraphStageWeights& w, ConvOptions opts = {});

struct StageSpec {
  std::size_t dim = 0;
  std::size_t k = 9;
  std::size_t blocks = 2;
};

struct PyramidSpec {
  std::vector<StageSpec> stages = {{48, 9, 2}, {96, 9, 2}, {240, 9, 2}, {384, 9, 2}};
  std::size_t stem_downsample = 4;
  std::size_t stage_downsample = 2;
  std::size_t tap_stage = 2;  // 1-based
  bool rebuild_graph_per_block = false;
  RelativeSign sign = RelativeSign::kSelfMinusNeighbor;

  void set_k(std::size_t k);
  std::size_t total_downsample() const;
  std::size_t stage_stride(std::size_t stage) const;  // 1-based
  void validate() const;
};

// Per stage: the linear lift into the stage dimension (the stem lift for the
// first stage) and one GraphStageWeights per block.
struct WeightBundle {
  struct Stage {
    std::size_t in_dim = 0;
    std::size_t dim = 0;
    std::vector<float> lift;  // in_dim x dim, row-major
    std::vector<GraphStageWeights> blocks;
  };
  std::vector<Stage> stages;

  void check_against(const PyramidSpec& spec, std::size_t in_channels) const;
};

// Deterministic bundle: row-orthonormal lifts, N(0, 1/dim) updates, unit BN.
WeightBundle synth_weights(const PyramidSpec& spec, std::uint64_t seed, std::size_t in_channels = 3);

// GCWB: "GCWB", u16 version=1, u32 stage count; per stage u32 in_dim, u32 dim,
// u32 blocks, f32 lift[in_dim*dim]; per block f32 w_update[dim*dim],
// bn_scale[dim], bn_shift[dim], bn_mean[dim], bn_var[dim], f32 epsilon.
inline constexpr std::uint16_t kGcwbVersion = 1;
void save_weights(const WeightBundle& bundle, const std::filesystem::path& path);
WeightBundle load_weights(const std::filesystem::path& path);

// One pyramid stage on an already-lifted grid: builds the kNN graph and runs
// every block. Exposed for the equivariance tests.
PatchFeatureGrid run_graph_stage(const PatchFeatureGrid& input, const WeightBundle::Stage& weights,
                                 std::size_t k, bool rebuild_graph_per_block, RelativeSign sign);

// All stage outputs for an image whose sides are divisible by
// spec.total_downsample(). Grids are 3-channel; grey input is replicated.
std::vector<PatchFeatureGrid> graph_pyramid_stages(const ImageTensor& img, const PyramidSpec& spec,
                                                   const WeightBundle& weights);

PatchFeatureGrid graph_pyramid_forward(const ImageTensor& img, const PyramidSpec& spec, const WeightBundle& weights);

}  // namespace patchbank
