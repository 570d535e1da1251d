#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "patchbank/image.hpp"
#include "patchbank/rng.hpp"

namespace patchbank::testing {

// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "pb") {
    static std::uint64_t counter = 0;
    const auto stamp = std::random_device{}();
    path_ = std::filesystem::temp_directory_path() /
            (tag + "-" + std::to_string(stamp) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline ImageTensor random_image(Rng& rng, int h, int w, int c, bool quantized = true) {
  ImageTensor img = ImageTensor::zeros(h, w, c);
  for (auto& v : img.data) {
    v = quantized ? from_u8(static_cast<unsigned>(rng.below(256))) : static_cast<float>(rng.uniform());
  }
  return img;
}

inline std::vector<float> random_floats(Rng& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
  std::vector<float> out(n);
  for (auto& v : out) v = static_cast<float>(rng.uniform(lo, hi));
  return out;
}

}  // namespace patchbank::testing
