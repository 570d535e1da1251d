#include "patchbank/augment.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <sstream>

#include "patchbank/error.hpp"

namespace patchbank {

AugmentSpec AugmentSpec::rotation_r() {
  AugmentSpec s;
  s.kind = AugmentKind::kRotation;
  s.angles = {0, 90, 180, 270};
  return s;
}

AugmentSpec AugmentSpec::translation_default(int patch_px) {
  AugmentSpec s;
  s.kind = AugmentKind::kTranslation;
  s.offsets = {{patch_px, 0}, {-patch_px, 0}, {0, patch_px}, {0, -patch_px}};
  s.border = BorderMode::kClamp;
  return s;
}

AugmentSpec AugmentSpec::scaling_default() {
  AugmentSpec s;
  s.kind = AugmentKind::kScaling;
  s.factors = {0.9, 1.1};
  return s;
}

std::size_t AugmentSpec::variant_count() const {
  switch (kind) {
    case AugmentKind::kRotation: return angles.size();
    case AugmentKind::kFlip: return axes.size();
    case AugmentKind::kTranslation: return offsets.size();
    case AugmentKind::kScaling: return factors.size();
  }
  return 0;
}

namespace {

std::string format_factor(double f) {
  std::ostringstream os;
  os.precision(17);
  os << f;
  return os.str();
}

}  // namespace

std::vector<std::string> AugmentSpec::variant_tags() const {
  std::vector<std::string> tags;
  switch (kind) {
    case AugmentKind::kRotation:
      for (int a : angles) tags.push_back("rot" + std::to_string(a));
      break;
    case AugmentKind::kFlip:
      for (auto a : axes) tags.push_back(a == FlipAxis::kHorizontal ? "hflip" : "vflip");
      break;
    case AugmentKind::kTranslation:
      for (auto o : offsets) tags.push_back("tx" + std::to_string(o.dx) + "y" + std::to_string(o.dy));
      break;
    case AugmentKind::kScaling:
      for (double f : factors) tags.push_back("s" + format_factor(f));
      break;
  }
  return tags;
}

int AugmentSpec::identity_index() const {
  for (std::size_t i = 0; i < variant_count(); ++i) {
    const bool identity = (kind == AugmentKind::kRotation && angles[i] == 0) ||
                          (kind == AugmentKind::kTranslation && offsets[i] == Offset{}) ||
                          (kind == AugmentKind::kScaling && factors[i] == 1.0);
    if (identity) return static_cast<int>(i);
  }
  return -1;
}

std::string AugmentSpec::to_string() const {
  std::ostringstream os;
  auto join = [&](const auto& items, auto fmt) {
    for (std::size_t i = 0; i < items.size(); ++i) os << (i ? "," : "") << fmt(items[i]);
  };
  switch (kind) {
    case AugmentKind::kRotation:
      os << "rotation=";
      join(angles, [](int a) { return std::to_string(a); });
      break;
    case AugmentKind::kFlip:
      os << "flip=";
      join(axes, [](FlipAxis a) { return std::string(a == FlipAxis::kHorizontal ? "horizontal" : "vertical"); });
      break;
    case AugmentKind::kTranslation:
      os << "translation=";
      join(offsets, [](Offset o) { return std::to_string(o.dx) + ":" + std::to_string(o.dy); });
      os << ";mode=" << (border == BorderMode::kClamp ? "clamp" : "wrap");
      break;
    case AugmentKind::kScaling:
      os << "scaling=";
      join(factors, format_factor);
      break;
  }
  return os.str();
}

void AugmentSpec::validate() const {
  if (variant_count() == 0) fail(ErrorCode::kInvalidArgument, "augmentation must generate at least one variant");
  for (int a : angles) {
    if (a != 0 && a != 90 && a != 180 && a != 270) {
      fail(ErrorCode::kInvalidArgument, "rotation angle " + std::to_string(a) + " not in {0,90,180,270}");
    }
  }
  for (double f : factors) {
    if (!(f > 0.0) || !std::isfinite(f)) fail(ErrorCode::kInvalidArgument, "scale factor must be positive");
  }
}

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
  while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
  return s;
}

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  while (true) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

int parse_int(std::string_view s) {
  int v = 0;
  if (!s.empty() && s.front() == '+') s.remove_prefix(1);
  const auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) {
    fail(ErrorCode::kInvalidArgument, "expected integer, got \"" + std::string(s) + "\"");
  }
  return v;
}

double parse_double(std::string_view s) {
  const std::string str(s);
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(str, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used != str.size() || str.empty()) fail(ErrorCode::kInvalidArgument, "expected number, got \"" + str + "\"");
  return v;
}

}  // namespace

AugmentSpec parse_augment(std::string_view text) {
  const auto clauses = split(trim(text), ';');
  const auto head = clauses.front();
  const auto eq = head.find('=');
  if (eq == std::string_view::npos) {
    fail(ErrorCode::kInvalidArgument, "augmentation must look like kind=values, got \"" + std::string(text) + "\"");
  }
  const auto kind = trim(head.substr(0, eq));
  const auto values = split(head.substr(eq + 1), ',');
  AugmentSpec spec;
  if (kind == "rotation") {
    spec.kind = AugmentKind::kRotation;
    for (auto v : values) spec.angles.push_back(parse_int(v));
  } else if (kind == "flip") {
    spec.kind = AugmentKind::kFlip;
    for (auto v : values) {
      if (v == "h" || v == "horizontal") {
        spec.axes.push_back(FlipAxis::kHorizontal);
      } else if (v == "v" || v == "vertical") {
        spec.axes.push_back(FlipAxis::kVertical);
      } else {
        fail(ErrorCode::kInvalidArgument, "unknown flip axis \"" + std::string(v) + "\"");
      }
    }
  } else if (kind == "translation") {
    spec.kind = AugmentKind::kTranslation;
    for (auto v : values) {
      const auto colon = v.find(':');
      if (colon == std::string_view::npos) {
        const int n = parse_int(v);
        spec.offsets.push_back({n, n});
      } else {
        spec.offsets.push_back({parse_int(trim(v.substr(0, colon))), parse_int(trim(v.substr(colon + 1)))});
      }
    }
  } else if (kind == "scaling") {
    spec.kind = AugmentKind::kScaling;
    for (auto v : values) spec.factors.push_back(parse_double(v));
  } else {
    fail(ErrorCode::kInvalidArgument, "unknown augmentation kind \"" + std::string(kind) + "\"");
  }
  for (std::size_t i = 1; i < clauses.size(); ++i) {
    const auto opt = clauses[i];
    if (opt == "mode=clamp" && spec.kind == AugmentKind::kTranslation) {
      spec.border = BorderMode::kClamp;
    } else if (opt == "mode=wrap" && spec.kind == AugmentKind::kTranslation) {
      spec.border = BorderMode::kWrap;
    } else if (opt == "mode=crop" && spec.kind == AugmentKind::kScaling) {
      // the only scaling mode
    } else {
      fail(ErrorCode::kInvalidArgument, "unknown option \"" + std::string(opt) + "\" for " + std::string(kind));
    }
  }
  spec.validate();
  return spec;
}

ImageTensor rotate90_cw(const ImageTensor& img) {
  ImageTensor out = ImageTensor::zeros(img.width, img.height, img.channels);
  for (int r = 0; r < out.height; ++r)
    for (int c = 0; c < out.width; ++c)
      for (int ch = 0; ch < img.channels; ++ch) out.at(r, c, ch) = img.at(img.height - 1 - c, r, ch);
  return out;
}

ImageTensor rotate(const ImageTensor& img, int degrees_cw) {
  if (degrees_cw % 90 != 0) fail(ErrorCode::kInvalidArgument, "rotation must be a multiple of 90 degrees");
  int turns = ((degrees_cw / 90) % 4 + 4) % 4;
  ImageTensor out = img;
  while (turns-- > 0) out = rotate90_cw(out);
  return out;
}

ImageTensor flip(const ImageTensor& img, FlipAxis axis) {
  ImageTensor out = ImageTensor::zeros(img.height, img.width, img.channels);
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      const int sr = axis == FlipAxis::kVertical ? img.height - 1 - r : r;
      const int sc = axis == FlipAxis::kHorizontal ? img.width - 1 - c : c;
      for (int ch = 0; ch < img.channels; ++ch) out.at(r, c, ch) = img.at(sr, sc, ch);
    }
  return out;
}

ImageTensor dihedral(const ImageTensor& img, int t) {
  if (t < 0 || t >= 8) fail(ErrorCode::kInvalidArgument, "dihedral index must be in [0, 8)");
  ImageTensor out = rotate(img, 90 * (t % 4));
  return t >= 4 ? flip(out, FlipAxis::kHorizontal) : out;
}

ImageTensor translate(const ImageTensor& img, Offset offset, BorderMode border) {
  if (std::abs(offset.dx) >= img.width || std::abs(offset.dy) >= img.height) {
    fail(ErrorCode::kInvalidArgument, "translation (" + std::to_string(offset.dx) + "," + std::to_string(offset.dy) +
                                          ") out of image bounds");
  }
  ImageTensor out = ImageTensor::zeros(img.height, img.width, img.channels);
  auto map = [&](int v, int n) {
    return border == BorderMode::kWrap ? ((v % n) + n) % n : std::clamp(v, 0, n - 1);
  };
  for (int r = 0; r < img.height; ++r)
    for (int c = 0; c < img.width; ++c) {
      const int sr = map(r - offset.dy, img.height);
      const int sc = map(c - offset.dx, img.width);
      for (int ch = 0; ch < img.channels; ++ch) out.at(r, c, ch) = img.at(sr, sc, ch);
    }
  return out;
}

ImageTensor scale_about_center(const ImageTensor& img, double factor) {
  if (!(factor > 0.0) || !std::isfinite(factor)) fail(ErrorCode::kInvalidArgument, "scale factor must be positive");
  ImageTensor out = ImageTensor::zeros(img.height, img.width, img.channels);
  const double cy = img.height / 2.0;
  const double cx = img.width / 2.0;
  for (int r = 0; r < img.height; ++r) {
    const double sy = std::clamp((r + 0.5 - cy) / factor + cy - 0.5, 0.0, img.height - 1.0);
    const int y0 = static_cast<int>(std::floor(sy));
    const int y1 = std::min(y0 + 1, img.height - 1);
    const double wy = sy - y0;
    for (int c = 0; c < img.width; ++c) {
      const double sx = std::clamp((c + 0.5 - cx) / factor + cx - 0.5, 0.0, img.width - 1.0);
      const int x0 = static_cast<int>(std::floor(sx));
      const int x1 = std::min(x0 + 1, img.width - 1);
      const double wx = sx - x0;
      for (int ch = 0; ch < img.channels; ++ch) {
        const double top = (1 - wx) * img.at(y0, x0, ch) + wx * img.at(y0, x1, ch);
        const double bottom = (1 - wx) * img.at(y1, x0, ch) + wx * img.at(y1, x1, ch);
        out.at(r, c, ch) = static_cast<float>((1 - wy) * top + wy * bottom);
      }
    }
  }
  return out;
}

std::vector<ImageTensor> augment(const ImageTensor& img, const AugmentSpec& spec) {
  spec.validate();
  img.validate();
  std::vector<ImageTensor> out;
  out.reserve(spec.variant_count());
  switch (spec.kind) {
    case AugmentKind::kRotation:
      for (int a : spec.angles) out.push_back(rotate(img, a));
      break;
    case AugmentKind::kFlip:
      for (auto a : spec.axes) out.push_back(flip(img, a));
      break;
    case AugmentKind::kTranslation:
      for (auto o : spec.offsets) out.push_back(translate(img, o, spec.border));
      break;
    case AugmentKind::kScaling:
      for (double f : spec.factors) out.push_back(f == 1.0 ? img : scale_about_center(img, f));
      break;
  }
  return out;
}

}  // namespace patchbank
