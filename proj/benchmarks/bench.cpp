#include <benchmark/benchmark.h>

#include "patchbank/bank.hpp"
#include "patchbank/graph.hpp"
#include "patchbank/rng.hpp"
#include "patchbank/scoring.hpp"

namespace {

using namespace patchbank;

std::vector<float> floats(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.uniform(-1.0, 1.0));
  return v;
}

MemoryBank bank_of(std::size_t n, std::uint32_t dim) {
  MemoryBank b;
  b.dim = dim;
  b.vectors = floats(n * dim, 1);
  b.provenance.resize(n);
  return b;
}

void BM_NearestNeighbor(benchmark::State& state) {
  const auto bank = bank_of(static_cast<std::size_t>(state.range(0)), 384);
  const auto q = floats(384, 2);
  for (auto _ : state) benchmark::DoNotOptimize(nearest_neighbor(q, bank));
  state.SetItemsProcessed(state.iterations() * state.range(0));
}
BENCHMARK(BM_NearestNeighbor)->RangeMultiplier(10)->Range(100, 100000);

void BM_ScoreImage(benchmark::State& state) {
  const auto bank = bank_of(static_cast<std::size_t>(state.range(0)), 96);
  PatchFeatureGrid g = PatchFeatureGrid::zeros(8, 8, 96, 8);
  g.features = floats(g.features.size(), 3);
  for (auto _ : state) benchmark::DoNotOptimize(score_image(g, bank));
}
BENCHMARK(BM_ScoreImage)->RangeMultiplier(10)->Range(10, 10000)->Unit(benchmark::kMillisecond);

void BM_CoresetSelect(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const std::size_t dim = 384;
  const auto pool = floats(n * dim, 4);
  const Projection psi = random_projection(dim, 128, 0);
  const std::size_t l = coreset_target(0.01, n);
  for (auto _ : state) benchmark::DoNotOptimize(coreset_select(pool, dim, l, psi));
}
BENCHMARK(BM_CoresetSelect)->RangeMultiplier(4)->Range(1024, 16384)->Unit(benchmark::kMillisecond);

void BM_KnnGraph(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const auto f = floats(n * 96, 5);
  for (auto _ : state) benchmark::DoNotOptimize(build_knn_graph(f, 96, 9));
}
BENCHMARK(BM_KnnGraph)->RangeMultiplier(4)->Range(64, 1024)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
