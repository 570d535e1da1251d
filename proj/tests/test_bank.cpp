#include <set>

#include "doctest.h"
#include "oracles.hpp"
#include "patchbank/augment.hpp"
#include "patchbank/bank.hpp"
#include "patchbank/error.hpp"
#include "patchbank/extractor.hpp"
#include "support.hpp"

using namespace patchbank;
using patchbank::testing::TempDir;

namespace {

const Projection kIdentity1 = random_projection(1, 1, 0);

MemoryBank random_bank(Rng& rng, std::size_t n, std::uint32_t dim) {
  MemoryBank b;
  b.dim = dim;
  b.vectors = patchbank::testing::random_floats(rng, n * dim);
  for (std::size_t i = 0; i < n; ++i) b.provenance.push_back({static_cast<std::uint32_t>(i), 1, 2, 3});
  b.meta.extractor = "toy:patch_px=8";
  b.meta.augment = "none";
  b.meta.pool_size = n;
  b.meta.distinct_size = n;
  return b;
}

}  // namespace

TEST_CASE("projection identity and determinism") {
  const Projection id = random_projection(4, 4, 9);
  CHECK(id.identity);
  Rng rng(1);
  const auto v = patchbank::testing::random_floats(rng, 4);
  const auto pv = id.apply(v);
  for (int i = 0; i < 4; ++i) CHECK(pv[i] == static_cast<double>(v[i]));
  CHECK(random_projection(64, 32, 5).matrix == random_projection(64, 32, 5).matrix);
  CHECK_FALSE(random_projection(64, 32, 5).matrix == random_projection(64, 32, 6).matrix);
}

TEST_CASE("JL Monte Carlo: projected/true squared distance averages near 1") {
  const Projection p = random_projection(64, 32, 2);
  Rng rng(3);
  double sum = 0.0;
  for (int i = 0; i < 1000; ++i) {
    const auto a = patchbank::testing::random_floats(rng, 64);
    const auto b = patchbank::testing::random_floats(rng, 64);
    const auto pa = p.apply(a);
    const auto pb = p.apply(b);
    double t = 0.0, q = 0.0;
    for (int k = 0; k < 64; ++k) t += (double(a[k]) - b[k]) * (double(a[k]) - b[k]);
    for (int k = 0; k < 32; ++k) q += (pa[k] - pb[k]) * (pa[k] - pb[k]);
    sum += q / t;
  }
  CHECK(std::abs(sum / 1000.0 - 1.0) < 0.1);
}

TEST_CASE("coreset target uses the ceiling") {
  CHECK(coreset_target(0.01, 350) == 4);
  CHECK(coreset_target(0.1, 10) == 1);
  CHECK(coreset_target(1.0, 7) == 7);
  CHECK(coreset_target(0.0001, 5) == 1);
  CHECK_THROWS_AS(coreset_target(0.0, 5), Error);
  CHECK_THROWS_AS(coreset_target(1.5, 5), Error);
}

TEST_CASE("greedy step-through on {0, 1, 10}") {
  const std::vector<float> pool = {0.0f, 1.0f, 10.0f};
  const auto sel = coreset_select(pool, 1, 2, kIdentity1);
  CHECK(sel == std::vector<std::size_t>{0, 2});
  CHECK(coreset_select(pool, 1, 3, kIdentity1) == std::vector<std::size_t>{0, 2, 1});
  const std::vector<float> same = {2.0f, 2.0f, 2.0f};
  CHECK(coreset_select(same, 1, 1, kIdentity1) == std::vector<std::size_t>{0});
}

TEST_CASE("first pick is the lexicographically smallest vector") {
  const std::vector<float> pool = {3.0f, 1.0f, 1.0f, 0.0f, 1.0f, -1.0f};
  const auto sel = coreset_select(pool, 2, 1, random_projection(2, 2, 0));
  CHECK(sel == std::vector<std::size_t>{2});
}

TEST_CASE("greedy stays within twice the optimal radius") {
  Rng rng(17);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t n = 2 + rng.below(9);
    const std::size_t d = 1 + rng.below(3);
    const std::size_t l = 1 + rng.below(std::min<std::size_t>(4, n));
    const auto pool = patchbank::testing::random_floats(rng, n * d);
    const auto sel = coreset_select(pool, d, l, random_projection(d, d, 0));
    CHECK(sel.size() == l);
    CHECK(covering_radius(pool, d, sel) <= 2.0 * oracle::optimal_k_center(pool, d, l) + 1e-12);
  }
}

TEST_CASE("one sample of four patches, ratio 1.0, no augmentation") {
  Rng rng(5);
  PatchFeatureGrid g = PatchFeatureGrid::zeros(2, 2, 3, 8);
  g.features = patchbank::testing::random_floats(rng, 12);
  CoresetConfig cfg;
  cfg.ratio = 1.0;
  const MemoryBank bank = build_bank({g}, cfg);
  REQUIRE(bank.size() == 4);
  std::multiset<std::vector<float>> want, got;
  for (std::size_t i = 0; i < 4; ++i) {
    want.insert({g.vec(i).begin(), g.vec(i).end()});
    got.insert({bank.vec(i).begin(), bank.vec(i).end()});
  }
  CHECK(got == want);
}

TEST_CASE("rotation augmentation under the toy extractor: 16 pooled, at most 4 distinct") {
  Rng rng(6);
  const ImageTensor img = patchbank::testing::random_image(rng, 16, 16, 3);
  const FeatureExtractor toy(ExtractorSpec::toy(8));
  CoresetConfig cfg;
  cfg.ratio = 1.0;
  cfg.dedup = false;
  const MemoryBank full = build_bank({img}, toy, AugmentSpec::rotation_r(), cfg);
  CHECK(full.meta.pool_size == 16);
  CHECK(full.size() == 16);
  std::set<std::vector<float>> distinct;
  for (std::size_t i = 0; i < full.size(); ++i) distinct.insert({full.vec(i).begin(), full.vec(i).end()});
  CHECK(distinct.size() <= 4);

  cfg.dedup = true;
  const MemoryBank dedup = build_bank({img}, toy, AugmentSpec::rotation_r(), cfg);
  CHECK(dedup.size() == distinct.size());
  std::set<std::vector<float>> got;
  for (std::size_t i = 0; i < dedup.size(); ++i) got.insert({dedup.vec(i).begin(), dedup.vec(i).end()});
  CHECK(got == distinct);
}

TEST_CASE("augmentation without an identity entry still pools the original") {
  Rng rng(7);
  const ImageTensor img = patchbank::testing::random_image(rng, 16, 16, 3);
  const FeatureExtractor raw(ExtractorSpec::raw(8));
  CoresetConfig cfg;
  cfg.ratio = 1.0;
  cfg.dedup = false;
  const MemoryBank bank = build_bank({img}, raw, parse_augment("rotation=90"), cfg);
  CHECK(bank.meta.pool_size == 8);
  std::set<std::uint32_t> variants;
  for (const auto& p : bank.provenance) variants.insert(p.variant);
  CHECK(variants == std::set<std::uint32_t>{0, 1});
}

TEST_CASE("GCBK round trip and size formula") {
  Rng rng(8);
  const MemoryBank bank = random_bank(rng, 3, 2);
  const auto bytes = encode_bank(bank);
  CHECK(bytes.size() == bank.byte_size());
  // magic 4 + version 2 + dim, count, record size, meta length 4 each
  const std::size_t header = 4 + 2 + 4 * 4;
  std::uint32_t meta_len = 0;
  std::memcpy(&meta_len, bytes.data() + 18, 4);
  CHECK(bytes.size() == header + meta_len + 3 * 16 + 24);
  CHECK(decode_bank(bytes) == bank);

  TempDir dir;
  save_bank(bank, dir / "b.gcbk");
  CHECK(load_bank(dir / "b.gcbk") == bank);
}

TEST_CASE("GCBK decode errors") {
  Rng rng(9);
  const auto bytes = encode_bank(random_bank(rng, 5, 4));
  for (std::size_t cut : {std::size_t{3}, std::size_t{10}, bytes.size() - 1}) {
    CAPTURE(cut);
    try {
      decode_bank({bytes.begin(), bytes.begin() + static_cast<std::ptrdiff_t>(cut)});
      FAIL("expected truncation");
    } catch (const Error& e) {
      CHECK((e.code() == ErrorCode::kTruncated || e.code() == ErrorCode::kBadMagic));
    }
  }
  auto bad = bytes;
  bad[1] = 'X';
  CHECK_THROWS_AS(decode_bank(bad), Error);
  auto ver = bytes;
  ver[4] = 2;
  try {
    decode_bank(ver);
    FAIL("expected version error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kVersionMismatch);
  }
  auto rec = bytes;
  rec[14] = 12;
  CHECK_THROWS_AS(decode_bank(rec), Error);
  auto meta = bytes;
  meta[22] = '#';
  try {
    decode_bank(meta);
    FAIL("expected corrupt meta");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kCorruptData);
  }
}

TEST_CASE("bank build is deterministic for a fixed seed") {
  Rng rng(10);
  std::vector<PatchFeatureGrid> grids;
  for (int i = 0; i < 3; ++i) {
    PatchFeatureGrid g = PatchFeatureGrid::zeros(4, 4, 160, 8);
    g.features = patchbank::testing::random_floats(rng, g.features.size());
    grids.push_back(g);
  }
  CoresetConfig cfg;
  cfg.ratio = 0.1;
  cfg.seed = 3;
  const MemoryBank a = build_bank(grids, cfg);
  CHECK(a.size() == coreset_target(0.1, 48));
  CHECK(a.meta.projection_dim == 128);
  CHECK(encode_bank(build_bank(grids, cfg)) == encode_bank(a));
}

TEST_CASE("mixed feature dimensions are rejected") {
  std::vector<PatchFeatureGrid> grids = {PatchFeatureGrid::zeros(1, 1, 3, 1), PatchFeatureGrid::zeros(1, 1, 4, 1)};
  CHECK_THROWS_AS(build_bank(grids, CoresetConfig{}), Error);
  CHECK_THROWS_AS(build_bank(std::vector<PatchFeatureGrid>{}, CoresetConfig{}), Error);
}
