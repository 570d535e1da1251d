#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "patchbank/augment.hpp"
#include "patchbank/extractor.hpp"
#include "patchbank/features.hpp"

namespace patchbank {

// Where a bank vector came from. variant 0 is the untransformed image;
// variant v > 0 is entry v-1 of the augmentation spec.
struct Provenance {
  std::uint32_t image_id = 0;
  std::uint32_t row = 0;
  std::uint32_t col = 0;
  std::uint32_t variant = 0;
  bool operator==(const Provenance&) const = default;
};

inline constexpr std::uint32_t kProvenanceRecordSize = 16;

struct BuildMeta {
  double ratio = 1.0;
  std::uint64_t projection_seed = 0;
  std::uint32_t projection_dim = 0;
  std::string extractor;
  std::string extractor_hash;
  std::string augment;
  bool dedup = false;
  std::uint64_t pool_size = 0;
  std::uint64_t distinct_size = 0;
  bool operator==(const BuildMeta&) const = default;
};

struct MemoryBank {
  std::uint32_t dim = 0;
  std::vector<float> vectors;  // size() x dim, row-major
  std::vector<Provenance> provenance;
  BuildMeta meta;

  std::size_t size() const { return dim == 0 ? 0 : vectors.size() / dim; }
  std::span<const float> vec(std::size_t i) const { return {vectors.data() + i * dim, dim}; }
  void validate() const;
  // Serialized GCBK size in bytes.
  std::size_t byte_size() const;

  bool operator==(const MemoryBank&) const = default;
};

struct CoresetConfig {
  double ratio = 0.01;
  std::size_t proj_dim = 0;  // 0 selects min(D, 128)
  std::uint64_t seed = 0;
  bool dedup = true;

  std::size_t resolved_proj_dim(std::size_t dim) const;
  void validate() const;
};

// Random linear map R^d -> R^d*, entries N(0, 1/d*). Identity when d* >= d.
struct Projection {
  std::size_t in_dim = 0;
  std::size_t out_dim = 0;
  bool identity = true;
  std::vector<double> matrix;  // in_dim x out_dim, row-major; empty for identity

  std::vector<double> apply(std::span<const float> v) const;
  // Projects every row of a pool, row-major n x out_dim.
  std::vector<double> apply_all(std::span<const float> pool) const;
};

Projection random_projection(std::size_t d, std::size_t d_star, std::uint64_t seed);

// l = ceil(ratio * n), clamped to [1, n]. A product within 1e-9 of an
// integer is taken as that integer so 0.1 * 10 gives 1, not 2.
std::size_t coreset_target(double ratio, std::size_t pool_size);

// Greedy farthest-point selection of l rows of `pool` (n x dim) under psi.
// Ties, including the empty-selection first pick, go to the
// lexicographically smallest projected vector, then the smallest index.
// Returned in selection order.
std::vector<std::size_t> coreset_select(std::span<const float> pool, std::size_t dim, std::size_t l,
                                        const Projection& psi);

// Covering radius of `selected` over `pool` in the original space.
double covering_radius(std::span<const float> pool, std::size_t dim, std::span<const std::size_t> selected);

struct FeaturePool {
  std::uint32_t dim = 0;
  std::vector<float> vectors;
  std::vector<Provenance> provenance;

  std::size_t size() const { return provenance.size(); }
  void add(const PatchFeatureGrid& grid, std::uint32_t image_id, std::uint32_t variant);
};

// Optional exact-duplicate removal (first occurrence kept), then coreset
// selection with l computed on the remaining pool.
MemoryBank compact_pool(const FeaturePool& pool, const CoresetConfig& cfg, BuildMeta meta = {});

MemoryBank build_bank(const std::vector<PatchFeatureGrid>& grids, const CoresetConfig& cfg);

// Pool = features of each image plus each augmentation variant (the identity
// variant is not added twice). Extraction errors carry the sample index.
MemoryBank build_bank(const std::vector<ImageTensor>& images, const FeatureExtractor& extractor,
                      const std::optional<AugmentSpec>& aug, const CoresetConfig& cfg, std::size_t jobs = 1);

// Same, reading samples from disk; supports the gcft extractor, whose
// augmented variants are read from <stem>.<tag>.gcft files.
MemoryBank build_bank_from_files(const std::vector<std::filesystem::path>& images, const FeatureExtractor& extractor,
                                 const std::optional<AugmentSpec>& aug, const CoresetConfig& cfg,
                                 std::size_t jobs = 1);

// GCBK: "GCBK", u16 version=1, u32 dim, u32 count, u32 provenance record size,
// u32 meta length + UTF-8 JSON, provenance records (4 x u32), count*dim f32.
inline constexpr std::uint16_t kGcbkVersion = 1;
std::vector<std::uint8_t> encode_bank(const MemoryBank& bank);
MemoryBank decode_bank(std::vector<std::uint8_t> bytes);
void save_bank(const MemoryBank& bank, const std::filesystem::path& path);
MemoryBank load_bank(const std::filesystem::path& path);

}  // namespace patchbank
