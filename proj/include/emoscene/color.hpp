#pragma once

// sRGB -> CIE L*a*b* (D65) and RGB -> HSV conversions, plus the reference
// colour table used for 11-colour proportions.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <string>

#include "emoscene/annotation.hpp"
#include "emoscene/error.hpp"
#include "emoscene/image.hpp"
#include "emoscene/numeric.hpp"

namespace emoscene {

struct Lab {
  double L = 0.0;
  double a = 0.0;
  double b = 0.0;

  bool operator==(const Lab&) const = default;
};

namespace detail {

inline double srgb_decode(double c) {
  return c <= 0.04045 ? c / 12.92 : std::pow((c + 0.055) / 1.055, 2.4);
}

inline const std::array<double, 256>& srgb_linear_lut() {
  static const auto lut = [] {
    std::array<double, 256> t{};
    for (int i = 0; i < 256; ++i) t[static_cast<std::size_t>(i)] = srgb_decode(i / 255.0);
    return t;
  }();
  return lut;
}

// sRGB primaries to XYZ (IEC 61966-2-1). The white point is taken as the row
// sums so that (255,255,255) lands exactly on L = 100, a = b = 0.
inline constexpr double kM[3][3] = {{0.4124564, 0.3575761, 0.1804375},
                                    {0.2126729, 0.7151522, 0.0721750},
                                    {0.0193339, 0.1191920, 0.9503041}};
inline constexpr double kWhiteX = kM[0][0] + kM[0][1] + kM[0][2];
inline constexpr double kWhiteY = kM[1][0] + kM[1][1] + kM[1][2];
inline constexpr double kWhiteZ = kM[2][0] + kM[2][1] + kM[2][2];

inline double lab_f(double t) {
  constexpr double delta = 6.0 / 29.0;
  return t > delta * delta * delta ? std::cbrt(t) : t / (3.0 * delta * delta) + 4.0 / 29.0;
}

}  // namespace detail

inline Lab srgb_to_lab(const Rgb& px) {
  const auto& lut = detail::srgb_linear_lut();
  const double r = lut[px.r], g = lut[px.g], b = lut[px.b];
  using detail::kM;
  const double X = kM[0][0] * r + kM[0][1] * g + kM[0][2] * b;
  const double Y = kM[1][0] * r + kM[1][1] * g + kM[1][2] * b;
  const double Z = kM[2][0] * r + kM[2][1] * g + kM[2][2] * b;
  const double fx = detail::lab_f(X / detail::kWhiteX);
  const double fy = detail::lab_f(Y / detail::kWhiteY);
  const double fz = detail::lab_f(Z / detail::kWhiteZ);
  return {std::clamp(116.0 * fy - 16.0, 0.0, 100.0), 500.0 * (fx - fy), 200.0 * (fy - fz)};
}

inline double lab_distance_sq(const Lab& p, const Lab& q) {
  const double dL = p.L - q.L, da = p.a - q.a, db = p.b - q.b;
  return dL * dL + da * da + db * db;
}

// h in degrees [0,360); s and v in [0,1].
struct Hsv {
  double h = 0.0;
  double s = 0.0;
  double v = 0.0;
};

inline Hsv rgb_to_hsv(const Rgb& px) {
  const double r = px.r / 255.0, g = px.g / 255.0, b = px.b / 255.0;
  const double mx = std::max({r, g, b});
  const double mn = std::min({r, g, b});
  const double delta = mx - mn;
  Hsv out{0.0, mx > 0.0 ? delta / mx : 0.0, mx};
  if (delta > 0.0) {
    double h;
    if (mx == r)
      h = 60.0 * std::fmod((g - b) / delta, 6.0);
    else if (mx == g)
      h = 60.0 * ((b - r) / delta + 2.0);
    else
      h = 60.0 * ((r - g) / delta + 4.0);
    out.h = wrap_degrees(h);
  }
  return out;
}

// Inverse of rgb_to_hsv, rounded to 8 bits; used to build fixtures.
inline Rgb hsv_to_rgb(double h_deg, double s, double v) {
  const double h = wrap_degrees(h_deg) / 60.0;
  const double c = v * s;
  const double x = c * (1.0 - std::fabs(std::fmod(h, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  switch (static_cast<int>(h)) {
    case 0: r = c, g = x; break;
    case 1: r = x, g = c; break;
    case 2: g = c, b = x; break;
    case 3: g = x, b = c; break;
    case 4: r = x, b = c; break;
    default: r = c, b = x; break;
  }
  const double m = v - c;
  auto to8 = [](double u) { return static_cast<std::uint8_t>(std::clamp(std::lround(u * 255.0), 0L, 255L)); };
  return {to8(r + m), to8(g + m), to8(b + m)};
}

// Lab anchors indexed like ColorProportion (Black .. Brown). Nearest-anchor
// ties resolve to the lower index.
struct ReferenceColorTable {
  std::array<Lab, kColorCount> anchors{};

  // Canonical sRGB anchors for the 11 basic colour terms.
  static constexpr std::array<Rgb, kColorCount> kDefaultSrgb = {{
      {0, 0, 0},        // Black
      {255, 255, 255},  // White
      {128, 128, 128},  // Gray
      {255, 0, 0},      // Red
      {255, 165, 0},    // Orange
      {255, 255, 0},    // Yellow
      {0, 128, 0},      // Green
      {0, 0, 255},      // Blue
      {128, 0, 128},    // Purple
      {255, 192, 203},  // Pink
      {150, 75, 0},     // Brown
  }};

  static ReferenceColorTable defaults() {
    ReferenceColorTable t;
    for (std::size_t i = 0; i < kColorCount; ++i) t.anchors[i] = srgb_to_lab(kDefaultSrgb[i]);
    return t;
  }

  void validate() const {
    for (std::size_t i = 0; i < kColorCount; ++i) {
      const auto& p = anchors[i];
      if (!std::isfinite(p.L) || !std::isfinite(p.a) || !std::isfinite(p.b) || p.L < 0.0 || p.L > 100.0)
        throw Error(ErrorCode::ConfigError, "reference_colors." + std::string{kColorNames[i]}, "invalid Lab value");
      for (std::size_t j = 0; j < i; ++j) {
        if (anchors[j] == p)
          throw Error(ErrorCode::ConfigError, "reference_colors." + std::string{kColorNames[i]},
                      "duplicates " + std::string{kColorNames[j]});
      }
    }
  }

  std::size_t nearest(const Lab& p) const {
    std::size_t best = 0;
    double best_d = lab_distance_sq(p, anchors[0]);
    for (std::size_t i = 1; i < kColorCount; ++i) {
      const double d = lab_distance_sq(p, anchors[i]);
      if (d < best_d) {
        best_d = d;
        best = i;
      }
    }
    return best;
  }

  // Stable fingerprint recorded in output manifests.
  std::string fingerprint() const {
    std::string text;
    char buf[128];
    for (std::size_t i = 0; i < kColorCount; ++i) {
      std::snprintf(buf, sizeof buf, "%s %.17g %.17g %.17g\n", std::string{kColorNames[i]}.c_str(), anchors[i].L,
                    anchors[i].a, anchors[i].b);
      text += buf;
    }
    return hex64(fnv1a64(text));
  }

  bool operator==(const ReferenceColorTable&) const = default;
};

}  // namespace emoscene
