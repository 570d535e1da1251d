#include "doctest.h"
#include "oracles.hpp"
#include "patchbank/augment.hpp"
#include "patchbank/error.hpp"
#include "patchbank/features.hpp"
#include "support.hpp"

using namespace patchbank;
using patchbank::testing::TempDir;

TEST_CASE("constant image gives identical patch vectors") {
  ImageTensor img = ImageTensor::zeros(16, 16, 3);
  std::fill(img.data.begin(), img.data.end(), 0.25f);
  for (const auto& grid : {extract_toy(img, 4), extract_raw(img, 4)}) {
    for (std::size_t i = 1; i < grid.size(); ++i) {
      CHECK(std::equal(grid.vec(i).begin(), grid.vec(i).end(), grid.vec(0).begin()));
    }
  }
}

TEST_CASE("single-channel constant image: every mean component equals v") {
  const float v = 0.6f;
  ImageTensor img = ImageTensor::zeros(4, 4, 1);
  std::fill(img.data.begin(), img.data.end(), v);
  const PatchFeatureGrid g = extract_toy(img, 2);
  CHECK(g.rows == 2);
  CHECK(g.cols == 2);
  CHECK(g.stride_px == 2);
  for (std::size_t i = 0; i < g.size(); ++i) {
    for (int c = 0; c < 3; ++c) CHECK(g.vec(i)[c] == doctest::Approx(v).epsilon(1e-7));
    for (int c = 3; c < 6; ++c) CHECK(g.vec(i)[c] == doctest::Approx(0.0).epsilon(1e-7));
  }
}

TEST_CASE("toy features are bit-identical under every dihedral transform") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const ImageTensor patch = patchbank::testing::random_image(rng, 8, 8, trial % 2 ? 1 : 3);
    const PatchFeatureGrid ref = extract_toy(patch, 8);
    for (int t = 1; t < 8; ++t) CHECK(extract_toy(dihedral(patch, t), 8) == ref);
  }
}

TEST_CASE("raw features are not rotation invariant") {
  Rng rng(4);
  const ImageTensor patch = patchbank::testing::random_image(rng, 8, 8, 3);
  CHECK_FALSE(extract_raw(rotate90_cw(patch), 8) == extract_raw(patch, 8));
  CHECK(extract_raw(patch, 8).dim == 8 * 8 * 3);
}

TEST_CASE("extractors reject sizes that do not tile") {
  const ImageTensor img = ImageTensor::zeros(10, 8, 3);
  CHECK_THROWS_AS(extract_toy(img, 4), Error);
  CHECK_THROWS_AS(extract_toy(img, 0), Error);
}

TEST_CASE("GCFT byte layout matches a hand-assembled file") {
  oracle::Bytes want;
  want.text("GCFT");
  want.u16(1);
  want.u16(0);
  want.u32(2);
  want.u32(2);
  want.u32(1);
  want.u32(16);
  for (float v : {1.0f, 2.0f, 3.0f, 4.0f}) want.f32(v);

  const PatchFeatureGrid g = decode_feature_tensor(want.b);
  CHECK(g.rows == 2);
  CHECK(g.cols == 2);
  CHECK(g.at(0, 0)[0] == 1.0f);
  CHECK(g.at(0, 1)[0] == 2.0f);
  CHECK(g.at(1, 0)[0] == 3.0f);
  CHECK(g.at(1, 1)[0] == 4.0f);
  CHECK(encode_feature_tensor(g) == want.b);
}

TEST_CASE("GCFT decode errors") {
  oracle::Bytes hdr;
  hdr.text("GCFT");
  hdr.u16(1);
  hdr.u16(0);
  hdr.u32(2);
  hdr.u32(3);
  hdr.u32(4);
  hdr.u32(1);
  auto truncated = hdr;
  for (int i = 0; i < 23; ++i) truncated.f32(0.5f);
  try {
    decode_feature_tensor(truncated.b);
    FAIL("expected truncation");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kTruncated);
  }

  auto bad = hdr;
  bad.b[0] = 'X';
  try {
    decode_feature_tensor(bad.b);
    FAIL("expected bad magic");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kBadMagic);
  }

  auto ver = hdr;
  ver.b[4] = 9;
  try {
    decode_feature_tensor(ver.b);
    FAIL("expected version error");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kVersionMismatch);
  }

  oracle::Bytes huge;
  huge.text("GCFT");
  huge.u16(1);
  huge.u16(0);
  huge.u32(0xffffffffu);
  huge.u32(0xffffffffu);
  huge.u32(0xffffffffu);
  huge.u32(1);
  try {
    decode_feature_tensor(huge.b);
    FAIL("expected overflow");
  } catch (const Error& e) {
    CHECK(e.code() == ErrorCode::kDimensionOverflow);
  }

  auto nan = hdr;
  for (int i = 0; i < 24; ++i) nan.f32(i == 5 ? std::numeric_limits<float>::quiet_NaN() : 0.0f);
  CHECK_THROWS_AS(decode_feature_tensor(nan.b), Error);

  auto extra = hdr;
  for (int i = 0; i < 25; ++i) extra.f32(0.0f);
  CHECK_THROWS_AS(decode_feature_tensor(extra.b), Error);
}

TEST_CASE("GCFT file round trip") {
  TempDir dir;
  Rng rng(11);
  PatchFeatureGrid g = PatchFeatureGrid::zeros(3, 5, 7, 8);
  g.features = patchbank::testing::random_floats(rng, g.features.size());
  write_feature_tensor(g, dir / "g.gcft");
  CHECK(load_feature_tensor(dir / "g.gcft") == g);
}
