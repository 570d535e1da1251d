#include "patchbank/bank.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <string_view>
#include <unordered_map>

#include "json.hpp"
#include "patchbank/binary_io.hpp"
#include "patchbank/error.hpp"
#include "patchbank/parallel.hpp"
#include "patchbank/rng.hpp"

namespace patchbank {

using nlohmann::json;

void MemoryBank::validate() const {
  if (dim == 0) fail(ErrorCode::kInvariantViolation, "bank dim must be >= 1");
  if (vectors.size() % dim != 0) fail(ErrorCode::kInvariantViolation, "bank payload is not a multiple of dim");
  if (provenance.size() != size()) fail(ErrorCode::kInvariantViolation, "provenance length != vector count");
  for (float v : vectors) {
    if (!std::isfinite(v)) fail(ErrorCode::kInvariantViolation, "non-finite bank vector");
  }
}

std::size_t MemoryBank::byte_size() const { return encode_bank(*this).size(); }

std::size_t CoresetConfig::resolved_proj_dim(std::size_t dim) const {
  return proj_dim == 0 ? std::min<std::size_t>(dim, 128) : proj_dim;
}

void CoresetConfig::validate() const {
  if (!(ratio > 0.0 && ratio <= 1.0)) fail(ErrorCode::kInvalidArgument, "coreset ratio must be in (0, 1]");
}

std::vector<double> Projection::apply(std::span<const float> v) const {
  if (v.size() != in_dim) fail(ErrorCode::kShapeMismatch, "projection input dim mismatch");
  std::vector<double> out(out_dim, 0.0);
  if (identity) {
    for (std::size_t i = 0; i < in_dim; ++i) out[i] = v[i];
    return out;
  }
  for (std::size_t i = 0; i < in_dim; ++i) {
    const double x = v[i];
    const double* row = matrix.data() + i * out_dim;
    for (std::size_t j = 0; j < out_dim; ++j) out[j] += x * row[j];
  }
  return out;
}

std::vector<double> Projection::apply_all(std::span<const float> pool) const {
  const std::size_t n = pool.size() / in_dim;
  std::vector<double> out;
  out.reserve(n * out_dim);
  for (std::size_t i = 0; i < n; ++i) {
    const auto p = apply(pool.subspan(i * in_dim, in_dim));
    out.insert(out.end(), p.begin(), p.end());
  }
  return out;
}

Projection random_projection(std::size_t d, std::size_t d_star, std::uint64_t seed) {
  if (d == 0 || d_star == 0) fail(ErrorCode::kInvalidArgument, "projection dimensions must be >= 1");
  Projection p;
  p.in_dim = d;
  if (d_star >= d) {
    p.out_dim = d;
    p.identity = true;
    return p;
  }
  p.out_dim = d_star;
  p.identity = false;
  p.matrix.resize(d * d_star);
  Rng rng(seed);
  const double sd = 1.0 / std::sqrt(static_cast<double>(d_star));
  for (auto& x : p.matrix) x = rng.gaussian() * sd;
  return p;
}

std::size_t coreset_target(double ratio, std::size_t pool_size) {
  if (!(ratio > 0.0 && ratio <= 1.0)) fail(ErrorCode::kInvalidArgument, "ratio must be in (0, 1]");
  if (pool_size == 0) return 0;
  const double x = ratio * static_cast<double>(pool_size);
  const double nearest = std::round(x);
  const double l = std::abs(x - nearest) <= 1e-9 * std::max(1.0, x) ? nearest : std::ceil(x);
  return std::clamp<std::size_t>(static_cast<std::size_t>(l), 1, pool_size);
}

std::vector<std::size_t> coreset_select(std::span<const float> pool, std::size_t dim, std::size_t l,
                                        const Projection& psi) {
  if (dim == 0 || pool.size() % dim != 0) fail(ErrorCode::kShapeMismatch, "pool is not a multiple of dim");
  const std::size_t n = pool.size() / dim;
  if (l < 1 || l > n) {
    fail(ErrorCode::kInvalidArgument, "coreset size " + std::to_string(l) + " outside [1, " + std::to_string(n) + "]");
  }
  if (psi.in_dim != dim) fail(ErrorCode::kShapeMismatch, "projection input dim != pool dim");
  const std::size_t pd = psi.out_dim;
  const std::vector<double> proj = psi.apply_all(pool);
  auto row = [&](std::size_t i) { return proj.data() + i * pd; };
  auto lex_less = [&](std::size_t a, std::size_t b) {
    return std::lexicographical_compare(row(a), row(a) + pd, row(b), row(b) + pd);
  };

  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
  std::vector<char> taken(n, 0);
  std::vector<std::size_t> selected;
  selected.reserve(l);
  for (std::size_t step = 0; step < l; ++step) {
    std::size_t best = n;
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      if (best == n || min_dist[i] > min_dist[best] || (min_dist[i] == min_dist[best] && lex_less(i, best))) {
        best = i;
      }
    }
    taken[best] = 1;
    selected.push_back(best);
    const double* b = row(best);
    for (std::size_t i = 0; i < n; ++i) {
      if (taken[i]) continue;
      const double* a = row(i);
      double d = 0.0;
      for (std::size_t k = 0; k < pd; ++k) {
        const double diff = a[k] - b[k];
        d += diff * diff;
      }
      min_dist[i] = std::min(min_dist[i], d);
    }
  }
  return selected;
}

double covering_radius(std::span<const float> pool, std::size_t dim, std::span<const std::size_t> selected) {
  const std::size_t n = pool.size() / dim;
  double radius = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    for (std::size_t s : selected) {
      double d = 0.0;
      for (std::size_t k = 0; k < dim; ++k) {
        const double diff = static_cast<double>(pool[i * dim + k]) - pool[s * dim + k];
        d += diff * diff;
      }
      best = std::min(best, d);
    }
    radius = std::max(radius, best);
  }
  return std::sqrt(radius);
}

void FeaturePool::add(const PatchFeatureGrid& grid, std::uint32_t image_id, std::uint32_t variant) {
  grid.validate();
  if (dim == 0) dim = grid.dim;
  if (grid.dim != dim) {
    fail(ErrorCode::kShapeMismatch, "feature dim " + std::to_string(grid.dim) + " != pool dim " + std::to_string(dim));
  }
  vectors.insert(vectors.end(), grid.features.begin(), grid.features.end());
  for (std::uint32_t r = 0; r < grid.rows; ++r)
    for (std::uint32_t c = 0; c < grid.cols; ++c) provenance.push_back({image_id, r, c, variant});
}

MemoryBank compact_pool(const FeaturePool& pool, const CoresetConfig& cfg, BuildMeta meta) {
  cfg.validate();
  if (pool.size() == 0) fail(ErrorCode::kEmptyInput, "feature pool is empty");
  const std::size_t dim = pool.dim;

  std::vector<std::size_t> keep;
  if (cfg.dedup) {
    std::unordered_map<std::string, std::size_t> seen;
    std::string key(dim * sizeof(float), '\0');
    for (std::size_t i = 0; i < pool.size(); ++i) {
      for (std::size_t k = 0; k < dim; ++k) {
        const float v = pool.vectors[i * dim + k] + 0.0f;  // folds -0 into +0
        std::memcpy(key.data() + k * sizeof(float), &v, sizeof(float));
      }
      if (seen.emplace(key, i).second) keep.push_back(i);
    }
  } else {
    keep.resize(pool.size());
    for (std::size_t i = 0; i < keep.size(); ++i) keep[i] = i;
  }

  std::vector<float> candidates;
  candidates.reserve(keep.size() * dim);
  for (std::size_t i : keep) {
    candidates.insert(candidates.end(), pool.vectors.begin() + static_cast<std::ptrdiff_t>(i * dim),
                      pool.vectors.begin() + static_cast<std::ptrdiff_t>((i + 1) * dim));
  }

  const std::size_t proj_dim = cfg.resolved_proj_dim(dim);
  const Projection psi = random_projection(dim, proj_dim, cfg.seed);
  const std::size_t l = coreset_target(cfg.ratio, keep.size());
  const auto selected = coreset_select(candidates, dim, l, psi);

  MemoryBank bank;
  bank.dim = static_cast<std::uint32_t>(dim);
  bank.vectors.reserve(l * dim);
  for (std::size_t s : selected) {
    bank.vectors.insert(bank.vectors.end(), candidates.begin() + static_cast<std::ptrdiff_t>(s * dim),
                        candidates.begin() + static_cast<std::ptrdiff_t>((s + 1) * dim));
    bank.provenance.push_back(pool.provenance[keep[s]]);
  }
  meta.ratio = cfg.ratio;
  meta.projection_seed = cfg.seed;
  meta.projection_dim = static_cast<std::uint32_t>(psi.out_dim);
  meta.dedup = cfg.dedup;
  meta.pool_size = pool.size();
  meta.distinct_size = keep.size();
  bank.meta = std::move(meta);
  bank.validate();
  return bank;
}

MemoryBank build_bank(const std::vector<PatchFeatureGrid>& grids, const CoresetConfig& cfg) {
  if (grids.empty()) fail(ErrorCode::kEmptyInput, "no samples");
  FeaturePool pool;
  for (std::size_t i = 0; i < grids.size(); ++i) pool.add(grids[i], static_cast<std::uint32_t>(i), 0);
  BuildMeta meta;
  meta.extractor = "precomputed";
  return compact_pool(pool, cfg, meta);
}

namespace {

struct SampleFeatures {
  std::vector<std::pair<std::uint32_t, PatchFeatureGrid>> variants;
};

template <typename ExtractOne>
MemoryBank build_from_samples(std::size_t count, const FeatureExtractor& extractor,
                              const std::optional<AugmentSpec>& aug, const CoresetConfig& cfg, std::size_t jobs,
                              ExtractOne&& extract_one) {
  if (count == 0) fail(ErrorCode::kEmptyInput, "no samples");
  cfg.validate();
  if (aug) aug->validate();
  std::vector<SampleFeatures> per_sample(count);
  parallel_for(count, jobs, [&](std::size_t i) {
    try {
      per_sample[i] = extract_one(i);
    } catch (const Error& e) {
      fail(e.code(), "sample " + std::to_string(i) + ": " + e.what());
    }
  });
  FeaturePool pool;
  for (std::size_t i = 0; i < count; ++i) {
    for (const auto& [variant, grid] : per_sample[i].variants) {
      pool.add(grid, static_cast<std::uint32_t>(i), variant);
    }
  }
  BuildMeta meta;
  meta.extractor = extractor.spec().canonical();
  meta.extractor_hash = hex64(extractor.spec().hash());
  meta.augment = aug ? aug->to_string() : "none";
  return compact_pool(pool, cfg, meta);
}

}  // namespace

MemoryBank build_bank(const std::vector<ImageTensor>& images, const FeatureExtractor& extractor,
                      const std::optional<AugmentSpec>& aug, const CoresetConfig& cfg, std::size_t jobs) {
  return build_from_samples(images.size(), extractor, aug, cfg, jobs, [&](std::size_t i) {
    SampleFeatures out;
    const int identity = aug ? aug->identity_index() : -1;
    if (identity < 0) out.variants.emplace_back(0, extractor.extract(images[i]));
    if (aug) {
      auto variants = augment(images[i], *aug);
      for (std::size_t v = 0; v < variants.size(); ++v) {
        out.variants.emplace_back(static_cast<std::uint32_t>(v + 1), extractor.extract(variants[v]));
      }
    }
    return out;
  });
}

MemoryBank build_bank_from_files(const std::vector<std::filesystem::path>& images, const FeatureExtractor& extractor,
                                 const std::optional<AugmentSpec>& aug, const CoresetConfig& cfg,
                                 std::size_t jobs) {
  if (extractor.spec().image_based()) {
    std::vector<ImageTensor> loaded(images.size());
    parallel_for(images.size(), jobs, [&](std::size_t i) {
      try {
        loaded[i] = load_image(images[i]);
      } catch (const Error& e) {
        fail(e.code(), "sample " + std::to_string(i) + ": " + e.what());
      }
    });
    return build_bank(loaded, extractor, aug, cfg, jobs);
  }
  return build_from_samples(images.size(), extractor, aug, cfg, jobs, [&](std::size_t i) {
    SampleFeatures out;
    const int identity = aug ? aug->identity_index() : -1;
    if (identity < 0) out.variants.emplace_back(0, extractor.extract_file(images[i]));
    if (aug) {
      const auto tags = aug->variant_tags();
      for (std::size_t v = 0; v < tags.size(); ++v) {
        const bool is_identity = static_cast<int>(v) == identity;
        out.variants.emplace_back(static_cast<std::uint32_t>(v + 1),
                                  extractor.extract_file(images[i], is_identity ? std::string_view{} : tags[v]));
      }
    }
    return out;
  });
}

namespace {

json meta_to_json(const BuildMeta& m) {
  return json{{"ratio", m.ratio},
              {"projection_seed", m.projection_seed},
              {"projection_dim", m.projection_dim},
              {"extractor", m.extractor},
              {"extractor_hash", m.extractor_hash},
              {"augment", m.augment},
              {"dedup", m.dedup},
              {"pool_size", m.pool_size},
              {"distinct_size", m.distinct_size}};
}

BuildMeta meta_from_json(const json& j) {
  BuildMeta m;
  m.ratio = j.at("ratio").get<double>();
  m.projection_seed = j.at("projection_seed").get<std::uint64_t>();
  m.projection_dim = j.at("projection_dim").get<std::uint32_t>();
  m.extractor = j.at("extractor").get<std::string>();
  m.extractor_hash = j.at("extractor_hash").get<std::string>();
  m.augment = j.at("augment").get<std::string>();
  m.dedup = j.at("dedup").get<bool>();
  m.pool_size = j.at("pool_size").get<std::uint64_t>();
  m.distinct_size = j.at("distinct_size").get<std::uint64_t>();
  return m;
}

}  // namespace

std::vector<std::uint8_t> encode_bank(const MemoryBank& bank) {
  bank.validate();
  const std::string meta = meta_to_json(bank.meta).dump();
  io::ByteWriter w;
  w.put_magic("GCBK");
  w.put_u16(kGcbkVersion);
  w.put_u32(bank.dim);
  w.put_u32(static_cast<std::uint32_t>(bank.size()));
  w.put_u32(kProvenanceRecordSize);
  w.put_u32(static_cast<std::uint32_t>(meta.size()));
  w.put_bytes(meta);
  for (const auto& p : bank.provenance) {
    w.put_u32(p.image_id);
    w.put_u32(p.row);
    w.put_u32(p.col);
    w.put_u32(p.variant);
  }
  w.put_f32s(bank.vectors);
  return w.bytes();
}

MemoryBank decode_bank(std::vector<std::uint8_t> bytes) {
  io::ByteReader r(std::move(bytes));
  r.expect_magic("GCBK");
  const auto version = r.u16();
  if (version != kGcbkVersion) {
    fail(ErrorCode::kVersionMismatch, "GCBK version " + std::to_string(version) + " unsupported");
  }
  MemoryBank bank;
  bank.dim = r.u32();
  const auto count = r.u32();
  const auto record_size = r.u32();
  if (record_size != kProvenanceRecordSize) {
    fail(ErrorCode::kCorruptData, "provenance record size " + std::to_string(record_size) + " != 16");
  }
  if (bank.dim == 0) fail(ErrorCode::kCorruptData, "bank dim is zero");
  const auto meta_len = r.u32();
  const std::size_t payload = io::checked_product({count, bank.dim}, "GCBK payload");
  const std::size_t prov_bytes = io::checked_product({count, record_size}, "GCBK provenance");
  r.require(static_cast<std::size_t>(meta_len) + prov_bytes + 4 * payload, "GCBK body");
  try {
    bank.meta = meta_from_json(json::parse(r.bytes(meta_len)));
  } catch (const json::exception& e) {
    fail(ErrorCode::kCorruptData, std::string("GCBK build metadata: ") + e.what());
  }
  bank.provenance.resize(count);
  for (auto& p : bank.provenance) {
    p.image_id = r.u32();
    p.row = r.u32();
    p.col = r.u32();
    p.variant = r.u32();
  }
  bank.vectors.resize(payload);
  r.f32s(bank.vectors);
  if (r.remaining() != 0) fail(ErrorCode::kCorruptData, "trailing bytes after GCBK payload");
  try {
    bank.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kCorruptData, e.what());
  }
  return bank;
}

void save_bank(const MemoryBank& bank, const std::filesystem::path& path) { io::write_file(path, encode_bank(bank)); }

MemoryBank load_bank(const std::filesystem::path& path) { return decode_bank(io::read_file(path)); }

}  // namespace patchbank
