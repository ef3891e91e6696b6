#pragma once

// Perceptual-space descriptors: 11-colour proportions, global HSV summary,
// Canny edges, curvilinearity and texture/structure complexity.

#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "emoscene/annotation.hpp"
#include "emoscene/color.hpp"
#include "emoscene/error.hpp"
#include "emoscene/image.hpp"
#include "emoscene/numeric.hpp"
#include "emoscene/parallel.hpp"

namespace emoscene {

struct ExtractionConfig {
  double canny_gaussian_sigma = 1.4;
  // Fractions of the maximum gradient magnitude.
  double canny_low_ratio = 0.1;
  double canny_high_ratio = 0.3;
  int histogram_bins = 256;
  ReferenceColorTable reference_table = ReferenceColorTable::defaults();

  void validate() const {
    if (!(canny_gaussian_sigma > 0.0)) throw Error(ErrorCode::ConfigError, "canny_gaussian_sigma", "must be > 0");
    if (!(canny_low_ratio > 0.0 && canny_low_ratio < 1.0))
      throw Error(ErrorCode::ConfigError, "canny_low_ratio", "must be in (0,1)");
    if (!(canny_high_ratio > 0.0 && canny_high_ratio < 1.0))
      throw Error(ErrorCode::ConfigError, "canny_high_ratio", "must be in (0,1)");
    if (!(canny_low_ratio < canny_high_ratio))
      throw Error(ErrorCode::ConfigError, "canny_low_ratio", "must be below canny_high_ratio");
    if (histogram_bins < 2 || histogram_bins > 256)
      throw Error(ErrorCode::ConfigError, "histogram_bins", "must be in [2,256]");
    reference_table.validate();
  }
};

// ---------------------------------------------------------------------------
// Colour
// ---------------------------------------------------------------------------

inline ColorProportion color_proportions(const PixelImage& img,
                                         const ReferenceColorTable& table = ReferenceColorTable::defaults()) {
  std::array<std::size_t, kColorCount> counts{};
  for (const auto& px : img.pixels()) ++counts[table.nearest(srgb_to_lab(px))];
  ColorProportion out;
  const auto total = static_cast<double>(img.size());
  for (std::size_t i = 0; i < kColorCount; ++i) out[i] = static_cast<double>(counts[i]) / total;
  return out;
}

// Saturation and value are plain means on 0-100. Hue is the saturation-
// weighted circular mean over chromatic pixels; 0 when there are none.
inline HsvSummary hsv_summary(const PixelImage& img) {
  double sum_s = 0.0, sum_v = 0.0, hx = 0.0, hy = 0.0;
  for (const auto& px : img.pixels()) {
    const auto hsv = rgb_to_hsv(px);
    sum_s += hsv.s;
    sum_v += hsv.v;
    if (hsv.s > 0.0) {
      const double rad = deg_to_rad(hsv.h);
      hx += hsv.s * std::cos(rad);
      hy += hsv.s * std::sin(rad);
    }
  }
  const auto n = static_cast<double>(img.size());
  HsvSummary out;
  out.saturation = std::clamp(100.0 * sum_s / n, 0.0, 100.0);
  out.value = std::clamp(100.0 * sum_v / n, 0.0, 100.0);
  out.hue = (hx == 0.0 && hy == 0.0) ? 0.0 : wrap_degrees(rad_to_deg(std::atan2(hy, hx)));
  return out;
}

// ---------------------------------------------------------------------------
// Edges
// ---------------------------------------------------------------------------

struct EdgeMap {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> edge;
  // Gradient orientation in [0, pi); meaningful where edge is set.
  std::vector<double> orientation;

  bool at(int x, int y) const {
    return x >= 0 && y >= 0 && x < width && y < height && edge[static_cast<std::size_t>(y) * width + x] != 0;
  }
  double theta(int x, int y) const { return orientation[static_cast<std::size_t>(y) * width + x]; }
  std::size_t count() const {
    std::size_t n = 0;
    for (auto e : edge) n += e != 0;
    return n;
  }
};

struct GradientField {
  GrayImage magnitude;
  std::vector<double> orientation;
};

inline GradientField sobel(const GrayImage& g) {
  GradientField out{{g.width, g.height, std::vector<double>(g.data.size())}, std::vector<double>(g.data.size())};
  for (int y = 0; y < g.height; ++y) {
    for (int x = 0; x < g.width; ++x) {
      const double gx = (g.clamped(x + 1, y - 1) + 2.0 * g.clamped(x + 1, y) + g.clamped(x + 1, y + 1)) -
                        (g.clamped(x - 1, y - 1) + 2.0 * g.clamped(x - 1, y) + g.clamped(x - 1, y + 1));
      const double gy = (g.clamped(x - 1, y + 1) + 2.0 * g.clamped(x, y + 1) + g.clamped(x + 1, y + 1)) -
                        (g.clamped(x - 1, y - 1) + 2.0 * g.clamped(x, y - 1) + g.clamped(x + 1, y - 1));
      const auto i = static_cast<std::size_t>(y) * g.width + x;
      out.magnitude.data[i] = std::hypot(gx, gy);
      double theta = std::atan2(gy, gx);
      if (theta < 0.0) theta += std::numbers::pi;
      if (theta >= std::numbers::pi) theta -= std::numbers::pi;
      out.orientation[i] = theta;
    }
  }
  return out;
}

// Grayscale (BT.601) -> Gaussian blur -> Sobel -> non-maximum suppression ->
// hysteresis at (low, high) * max gradient magnitude, 8-connected.
inline EdgeMap canny_edges(const PixelImage& img, const ExtractionConfig& config = {}) {
  const int w = img.width(), h = img.height();
  EdgeMap out{w, h, std::vector<std::uint8_t>(img.size(), 0), std::vector<double>(img.size(), 0.0)};
  const auto grad = sobel(gaussian_blur(to_gray(img), config.canny_gaussian_sigma));
  const auto& mag = grad.magnitude;

  double max_mag = 0.0;
  for (double m : mag.data) max_mag = std::max(max_mag, m);
  if (max_mag <= 1e-9) return out;

  auto mag_at = [&](int x, int y) { return (x < 0 || y < 0 || x >= w || y >= h) ? 0.0 : mag.at(x, y); };
  constexpr double pi = std::numbers::pi;
  // Plateaus keep only the pixel on the positive side of the gradient.
  std::vector<std::uint8_t> thin(img.size(), 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto i = static_cast<std::size_t>(y) * w + x;
      const double m = mag.data[i];
      if (m <= 0.0) continue;
      const double t = grad.orientation[i];
      int dx, dy;
      if (t < pi / 8 || t >= 7 * pi / 8) {
        dx = 1, dy = 0;
      } else if (t < 3 * pi / 8) {
        dx = 1, dy = 1;
      } else if (t < 5 * pi / 8) {
        dx = 0, dy = 1;
      } else {
        dx = -1, dy = 1;
      }
      if (m >= mag_at(x - dx, y - dy) && m > mag_at(x + dx, y + dy)) thin[i] = 1;
    }
  }

  const double high = config.canny_high_ratio * max_mag;
  const double low = config.canny_low_ratio * max_mag;
  std::deque<std::pair<int, int>> frontier;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const auto i = static_cast<std::size_t>(y) * w + x;
      if (thin[i] && mag.data[i] >= high) {
        out.edge[i] = 1;
        frontier.emplace_back(x, y);
      }
    }
  }
  while (!frontier.empty()) {
    const auto [x, y] = frontier.front();
    frontier.pop_front();
    for (int oy = -1; oy <= 1; ++oy) {
      for (int ox = -1; ox <= 1; ++ox) {
        const int nx = x + ox, ny = y + oy;
        if ((ox == 0 && oy == 0) || nx < 0 || ny < 0 || nx >= w || ny >= h) continue;
        const auto j = static_cast<std::size_t>(ny) * w + nx;
        if (!out.edge[j] && thin[j] && mag.data[j] >= low) {
          out.edge[j] = 1;
          frontier.emplace_back(nx, ny);
        }
      }
    }
  }
  for (std::size_t i = 0; i < out.edge.size(); ++i) {
    if (out.edge[i]) out.orientation[i] = grad.orientation[i];
  }
  return out;
}

// Acute angle between two orientations taken modulo pi, in [0, pi/2].
inline double acute_deviation(double a, double b) {
  double d = std::fmod(std::fabs(a - b), std::numbers::pi);
  return std::min(d, std::numbers::pi - d);
}

// Mean acute orientation deviation over unordered 8-adjacent edge-pixel
// pairs, normalised by pi/2. Zero when there are no such pairs.
inline double curvilinearity(const EdgeMap& edges) {
  static constexpr std::array<std::pair<int, int>, 4> forward = {{{1, 0}, {-1, 1}, {0, 1}, {1, 1}}};
  std::vector<double> deviations;
  for (int y = 0; y < edges.height; ++y) {
    for (int x = 0; x < edges.width; ++x) {
      if (!edges.at(x, y)) continue;
      for (const auto& [dx, dy] : forward) {
        if (edges.at(x + dx, y + dy)) deviations.push_back(acute_deviation(edges.theta(x, y), edges.theta(x + dx, y + dy)));
      }
    }
  }
  if (deviations.empty()) return 0.0;
  return std::clamp(mean(deviations) / (std::numbers::pi / 2.0), 0.0, 1.0);
}

struct Complexity {
  double entropy = 0.0;
  double edge_density = 0.0;
};

// Shannon entropy of the grayscale histogram in bits divided by log2(bins),
// and the fraction of edge pixels.
inline Complexity complexity(const PixelImage& img, const EdgeMap& edges, int bins = 256) {
  if (edges.width != img.width() || edges.height != img.height())
    throw Error(ErrorCode::DimensionMismatch, "edge map", "dimensions differ from the image");
  std::vector<std::size_t> hist(static_cast<std::size_t>(bins), 0);
  for (const auto& px : img.pixels()) ++hist[static_cast<std::size_t>(gray_level(px) * bins / 256)];
  const auto n = static_cast<double>(img.size());
  double h = 0.0;
  for (auto c : hist) {
    if (c == 0) continue;
    const double p = static_cast<double>(c) / n;
    h -= p * std::log2(p);
  }
  Complexity out;
  out.entropy = std::clamp(h / std::log2(static_cast<double>(bins)), 0.0, 1.0);
  out.edge_density = static_cast<double>(edges.count()) / n;
  return out;
}

inline PerceptualFeatures extract_all(const PixelImage& img, const ExtractionConfig& config = {}) {
  PerceptualFeatures f;
  f.color_proportion = color_proportions(img, config.reference_table);
  f.average_color = hsv_summary(img);
  const auto edges = canny_edges(img, config);
  f.structural.curvilinearity = curvilinearity(edges);
  const auto c = complexity(img, edges, config.histogram_bins);
  f.structural.complexity_entropy = c.entropy;
  f.structural.complexity_edge_density = c.edge_density;
  return f;
}

inline std::vector<PerceptualFeatures> extract_batch(std::span<const PixelImage> images,
                                                     const ExtractionConfig& config, unsigned workers) {
  std::vector<PerceptualFeatures> out(images.size());
  parallel_for(images.size(), workers, [&](std::size_t i) { out[i] = extract_all(images[i], config); });
  return out;
}

// Writes the perceptual fields into an annotation JSON object at storage
// precision, leaving every other key untouched.
inline void merge_features(json& doc, const PerceptualFeatures& features) {
  const auto q = quantize_features(features);
  json colors = json::object();
  for (std::size_t i = 0; i < kColorCount; ++i) colors[std::string{kColorNames[i]}] = q.color_proportion[i];
  doc["color_proportion"] = colors;
  doc["average_color"] = {{"hue", q.average_color.hue},
                          {"saturation", q.average_color.saturation},
                          {"value", q.average_color.value}};
  doc["curvilinearity"] = q.structural.curvilinearity;
  doc["complexity_entropy"] = q.structural.complexity_entropy;
  doc["complexity_edge_density"] = q.structural.complexity_edge_density;
}

}  // namespace emoscene
