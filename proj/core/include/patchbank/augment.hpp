#pragma once

#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "patchbank/image.hpp"

namespace patchbank {

enum class AugmentKind { kRotation, kFlip, kTranslation, kScaling };
enum class FlipAxis { kHorizontal, kVertical };
enum class BorderMode { kClamp, kWrap };

struct Offset {
  int dx = 0;
  int dy = 0;
  bool operator==(const Offset&) const = default;
};

// One augmentation family with its parameter list; each parameter produces
// one variant, in declared order. See docs/augment-grammar.md for the text
// form accepted by parse_augment.
struct AugmentSpec {
  AugmentKind kind = AugmentKind::kRotation;
  std::vector<int> angles;  // clockwise degrees, multiples of 90
  std::vector<FlipAxis> axes;
  std::vector<Offset> offsets;
  BorderMode border = BorderMode::kClamp;
  std::vector<double> factors;

  // Aug.(R): rotations {0, 90, 180, 270}.
  static AugmentSpec rotation_r();
  static AugmentSpec translation_default(int patch_px);
  static AugmentSpec scaling_default();

  std::size_t variant_count() const;
  // Stable short names, one per variant ("rot90", "hflip", "tx4y0", "s1.1").
  std::vector<std::string> variant_tags() const;
  // Index of the identity variant, or -1.
  int identity_index() const;
  // Canonical text form, parseable by parse_augment.
  std::string to_string() const;
  void validate() const;
};

AugmentSpec parse_augment(std::string_view text);

ImageTensor rotate90_cw(const ImageTensor& img);
ImageTensor rotate(const ImageTensor& img, int degrees_cw);
ImageTensor flip(const ImageTensor& img, FlipAxis axis);
// Element t in [0, 8) of the dihedral group: rotate by 90*(t % 4) clockwise,
// then mirror horizontally when t >= 4.
ImageTensor dihedral(const ImageTensor& img, int t);
ImageTensor translate(const ImageTensor& img, Offset offset, BorderMode border);
// Scale about the image centre with bilinear sampling; output keeps the input
// size (centre crop when enlarging, edge-replicated pad when shrinking).
ImageTensor scale_about_center(const ImageTensor& img, double factor);

std::vector<ImageTensor> augment(const ImageTensor& img, const AugmentSpec& spec);

}  // namespace patchbank
