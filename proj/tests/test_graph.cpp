#include <numeric>

#include "doctest.h"
#include "oracles.hpp"
#include "patchbank/error.hpp"
#include "patchbank/graph.hpp"
#include "support.hpp"

using namespace patchbank;
using patchbank::testing::TempDir;

namespace {

std::vector<std::uint32_t> list(const FeatureGraph& g, std::size_t i) {
  const auto n = g.neighbors(i);
  return {n.begin(), n.end()};
}

}  // namespace

TEST_CASE("1-D kNN example") {
  const std::vector<float> f = {0.0f, 1.0f, 5.0f};
  const FeatureGraph g = build_knn_graph(f, 1, 1);
  CHECK(list(g, 0) == std::vector<std::uint32_t>{1});
  CHECK(list(g, 1) == std::vector<std::uint32_t>{0});
  CHECK(list(g, 2) == std::vector<std::uint32_t>{1});
}

TEST_CASE("kNN matches the brute-force oracle and clamps k") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 1 + rng.below(25);
    const std::size_t d = 1 + rng.below(6);
    const std::size_t k = 1 + rng.below(12);
    auto f = patchbank::testing::random_floats(rng, n * d);
    // integer-valued features force distance ties
    if (trial % 3 == 0) for (auto& v : f) v = std::round(v * 2.0f);
    const FeatureGraph g = build_knn_graph(f, d, k);
    const auto want = oracle::knn_lists(f, d, k);
    CHECK(g.k == std::min(k, n - 1));
    for (std::size_t i = 0; i < n; ++i) CHECK(list(g, i) == want[i]);
  }
}

TEST_CASE("k >= N-1 gives the complete graph; one node gives empty lists") {
  const std::vector<float> f = {3.0f, 1.0f, 2.0f, 0.0f};
  const FeatureGraph g = build_knn_graph(f, 1, 10);
  for (std::size_t i = 0; i < 4; ++i) {
    auto l = list(g, i);
    std::sort(l.begin(), l.end());
    std::vector<std::uint32_t> others;
    for (std::uint32_t j = 0; j < 4; ++j) if (j != i) others.push_back(j);
    CHECK(l == others);
  }
  const FeatureGraph single = build_knn_graph(std::vector<float>{1.0f, 2.0f}, 2, 3);
  CHECK(single.k == 0);
  CHECK(single.neighbors(0).empty());
}

TEST_CASE("max-relative step-through on two 1-D nodes") {
  const std::vector<float> f = {1.0f, 3.0f};
  const FeatureGraph g = build_knn_graph(f, 1, 1);
  const auto agg = max_relative_aggregate(g, RelativeSign::kSelfMinusNeighbor);
  CHECK(agg == std::vector<float>{-2.0f, 2.0f});
  const auto id = GraphStageWeights::identity(1);
  CHECK(max_relative_conv(g, id, {RelativeSign::kSelfMinusNeighbor, false}) == std::vector<float>{-2.0f, 2.0f});
  CHECK(max_relative_conv(g, id) == std::vector<float>{0.0f, 2.0f});
  CHECK(max_relative_aggregate(g, RelativeSign::kNeighborMinusSelf) == std::vector<float>{2.0f, -2.0f});
}

TEST_CASE("identical nodes and isolated nodes map to ReLU(BN(0))") {
  GraphStageWeights w;
  w.in_dim = 2;
  w.out_dim = 3;
  w.w_update = {1, 2, 3, 4, 5, 6};
  w.bn_scale = {2.0f, 1.0f, 0.5f};
  w.bn_shift = {0.5f, -1.0f, 3.0f};
  w.bn_mean = {1.0f, 0.0f, -2.0f};
  w.bn_var = {4.0f, 1.0f, 0.25f};
  w.epsilon = 0.0f;
  const auto zero_out = node_update(std::vector<float>{0.0f, 0.0f}, w);
  // (0 - mean)/sqrt(var) * scale + shift, then ReLU
  CHECK(zero_out == std::vector<float>{0.0f, 0.0f, 5.0f});

  const std::vector<float> same = {0.7f, -0.2f, 0.7f, -0.2f, 0.7f, -0.2f};
  const auto out = max_relative_conv(build_knn_graph(same, 2, 2), w);
  for (int i = 0; i < 3; ++i) {
    CHECK(std::equal(out.begin() + 3 * i, out.begin() + 3 * i + 3, zero_out.begin()));
  }
  const auto iso = max_relative_conv(build_knn_graph(std::vector<float>{5.0f, 9.0f}, 2, 4), w);
  CHECK(iso == zero_out);
}

TEST_CASE("node_update validates shapes") {
  auto w = GraphStageWeights::identity(3);
  CHECK_THROWS_AS(node_update(std::vector<float>{1.0f, 2.0f}, w), Error);
  w.bn_var[0] = -1.0f;
  CHECK_THROWS_AS(w.validate(), Error);
  w = GraphStageWeights::identity(3);
  w.epsilon = -1e-3f;
  CHECK_THROWS_AS(w.validate(), Error);
}

TEST_CASE("pyramid stage shapes for a 64x64x3 input") {
  const PyramidSpec spec;
  const WeightBundle weights = synth_weights(spec, 0);
  Rng rng(5);
  const ImageTensor img = patchbank::testing::random_image(rng, 64, 64, 3);
  const auto stages = graph_pyramid_stages(img, spec, weights);
  REQUIRE(stages.size() == 4);
  const std::uint32_t want[4][3] = {{16, 16, 48}, {8, 8, 96}, {4, 4, 240}, {2, 2, 384}};
  for (int s = 0; s < 4; ++s) {
    CHECK(stages[s].rows == want[s][0]);
    CHECK(stages[s].cols == want[s][1]);
    CHECK(stages[s].dim == want[s][2]);
    CHECK(stages[s].stride_px == 64 / want[s][0]);
  }
  CHECK(graph_pyramid_forward(img, spec, weights) == stages[1]);
}

TEST_CASE("zero image gives a spatially constant first stage") {
  const PyramidSpec spec;
  const auto stages = graph_pyramid_stages(ImageTensor::zeros(64, 64, 3), spec, synth_weights(spec, 1));
  const auto& g = stages[0];
  for (std::size_t i = 1; i < g.size(); ++i) {
    CHECK(std::equal(g.vec(i).begin(), g.vec(i).end(), g.vec(0).begin()));
  }
}

TEST_CASE("grey input is treated as three equal channels") {
  const PyramidSpec spec;
  const auto w = synth_weights(spec, 2);
  Rng rng(8);
  const ImageTensor grey = patchbank::testing::random_image(rng, 32, 32, 1);
  ImageTensor rgb = ImageTensor::zeros(32, 32, 3);
  for (int r = 0; r < 32; ++r)
    for (int c = 0; c < 32; ++c)
      for (int ch = 0; ch < 3; ++ch) rgb.at(r, c, ch) = grey.at(r, c, 0);
  CHECK(graph_pyramid_forward(grey, spec, w) == graph_pyramid_forward(rgb, spec, w));
}

TEST_CASE("stage equivariance under node permutation") {
  Rng rng(31);
  const PyramidSpec spec;
  const auto weights = synth_weights(spec, 3);
  PatchFeatureGrid in = PatchFeatureGrid::zeros(1, 20, 48, 1);
  in.features = patchbank::testing::random_floats(rng, in.features.size());
  std::vector<std::size_t> perm(20);
  std::iota(perm.begin(), perm.end(), 0);
  rng.shuffle(perm);
  PatchFeatureGrid permuted = in;
  for (std::size_t i = 0; i < 20; ++i) {
    std::copy(in.vec(perm[i]).begin(), in.vec(perm[i]).end(), permuted.vec(i).begin());
  }
  for (bool rebuild : {false, true}) {
    const auto a = run_graph_stage(in, weights.stages[0], 9, rebuild, RelativeSign::kSelfMinusNeighbor);
    const auto b = run_graph_stage(permuted, weights.stages[0], 9, rebuild, RelativeSign::kSelfMinusNeighbor);
    for (std::size_t i = 0; i < 20; ++i) {
      CHECK(std::equal(b.vec(i).begin(), b.vec(i).end(), a.vec(perm[i]).begin()));
    }
  }
}

TEST_CASE("weight bundles round trip and are seed-deterministic") {
  TempDir dir;
  PyramidSpec spec;
  const auto a = synth_weights(spec, 4);
  save_weights(a, dir / "w.gcwb");
  const auto b = load_weights(dir / "w.gcwb");
  REQUIRE(b.stages.size() == a.stages.size());
  for (std::size_t s = 0; s < a.stages.size(); ++s) {
    CHECK(a.stages[s].lift == b.stages[s].lift);
    REQUIRE(a.stages[s].blocks.size() == b.stages[s].blocks.size());
    for (std::size_t k = 0; k < a.stages[s].blocks.size(); ++k) {
      CHECK(a.stages[s].blocks[k].w_update == b.stages[s].blocks[k].w_update);
      CHECK(a.stages[s].blocks[k].bn_var == b.stages[s].blocks[k].bn_var);
      CHECK(a.stages[s].blocks[k].epsilon == b.stages[s].blocks[k].epsilon);
    }
  }
  CHECK(synth_weights(spec, 4).stages[2].lift == a.stages[2].lift);
  CHECK_FALSE(synth_weights(spec, 5).stages[2].lift == a.stages[2].lift);

  spec.stages[1].dim = 64;
  try {
    b.check_against(spec, 3);
    FAIL("expected mismatch");
  } catch (const Error& e) {
    CHECK(std::string(e.what()).find("stage 2") != std::string::npos);
  }
}

TEST_CASE("pyramid rejects sizes not divisible by the total downsample") {
  const PyramidSpec spec;
  CHECK_THROWS_AS(graph_pyramid_forward(ImageTensor::zeros(48, 64, 3), spec, synth_weights(spec, 0)), Error);
}
