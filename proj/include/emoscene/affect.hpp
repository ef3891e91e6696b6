#pragma once

// Affective-space analytics: per-model VAD aggregation, emotion resolution,
// VA/VD/AD density grids and per-emotion summaries.

#include <algorithm>
#include <array>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "emoscene/annotation.hpp"
#include "emoscene/error.hpp"
#include "emoscene/image.hpp"
#include "emoscene/numeric.hpp"

namespace emoscene {

// Per-dimension weighted mean over the models that report that dimension.
// Models missing from `weights` get weight 1; an empty weight map means
// equal weights. Dimensions no model reports stay empty.
inline VadScores aggregate_vad(const std::map<std::string, VadScores>& per_model,
                               const std::map<std::string, double>& weights = {}) {
  if (per_model.empty()) throw Error(ErrorCode::NoModels, "no per-model VAD scores");
  for (const auto& [model, w] : weights) {
    if (!std::isfinite(w) || w < 0.0) throw Error(ErrorCode::WeightOutOfRange, model, "weights must be >= 0");
  }
  auto weight_of = [&](const std::string& model) {
    auto it = weights.find(model);
    return it == weights.end() ? 1.0 : it->second;
  };
  auto dimension = [&](auto member) -> std::optional<double> {
    double num = 0.0, den = 0.0;
    for (const auto& [model, scores] : per_model) {
      const auto& x = scores.*member;
      if (!x) continue;
      const double w = weight_of(model);
      num += w * *x;
      den += w;
    }
    if (den <= 0.0) return std::nullopt;
    const double mean_value = num / den;
    assert(mean_value >= kVadMin - 1e-9 && mean_value <= kVadMax + 1e-9);
    return std::clamp(mean_value, kVadMin, kVadMax);
  };
  VadScores out{dimension(&VadScores::valence), dimension(&VadScores::arousal), dimension(&VadScores::dominance)};
  if (out.empty()) {
    bool any_reported = false;
    for (const auto& [model, s] : per_model) any_reported |= !s.empty();
    if (any_reported) throw Error(ErrorCode::WeightOutOfRange, "weights", "weights for present models sum to 0");
  }
  return out;
}

// The VAD point used for analytics: the stored aggregate when present, else
// the equal-weight aggregate of the per-model scores.
inline std::optional<VadVector> analytic_vad(const AnnotationRecord& r) {
  if (r.aggregated_vad) {
    if (auto v = r.aggregated_vad->complete()) return v;
  }
  if (r.per_model_vad.empty()) return std::nullopt;
  return aggregate_vad(r.per_model_vad).complete();
}

enum class Provenance { human, model_consensus, disputed };

inline std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::human: return "human";
    case Provenance::model_consensus: return "model-consensus";
    case Provenance::disputed: return "disputed";
  }
  return "";
}

struct ResolvedEmotion {
  Emotion label = Emotion::unknown;
  Provenance provenance = Provenance::disputed;

  bool operator==(const ResolvedEmotion&) const = default;
};

inline ResolvedEmotion resolve_emotion(const std::map<std::string, Emotion>& per_model,
                                       std::optional<Emotion> human_override = std::nullopt) {
  if (human_override) return {*human_override, Provenance::human};
  if (per_model.empty()) throw Error(ErrorCode::NoSources, "no model or human emotion label");
  const auto first = per_model.begin()->second;
  const bool unanimous =
      std::all_of(per_model.begin(), per_model.end(), [&](const auto& kv) { return kv.second == first; });
  if (unanimous) return {first, Provenance::model_consensus};
  return {Emotion::unknown, Provenance::disputed};
}

// ---------------------------------------------------------------------------
// Density grids
// ---------------------------------------------------------------------------

enum class Plane { VA, VD, AD };

inline std::string_view to_string(Plane p) {
  switch (p) {
    case Plane::VA: return "VA";
    case Plane::VD: return "VD";
    case Plane::AD: return "AD";
  }
  return "";
}

inline std::optional<Plane> parse_plane(std::string_view s) {
  if (s == "VA") return Plane::VA;
  if (s == "VD") return Plane::VD;
  if (s == "AD") return Plane::AD;
  return std::nullopt;
}

inline std::pair<double, double> plane_coordinates(const VadVector& p, Plane plane) {
  switch (plane) {
    case Plane::VA: return {p.valence, p.arousal};
    case Plane::VD: return {p.valence, p.dominance};
    case Plane::AD: return {p.arousal, p.dominance};
  }
  return {p.valence, p.arousal};
}

inline constexpr int kDefaultDensityBins = 64;
inline constexpr double kDefaultDensitySigma = 1.0;

// Row-major cells: row = y bin, column = x bin, both over [1,9].
struct DensityGrid {
  Plane plane = Plane::VA;
  int bins_x = kDefaultDensityBins;
  int bins_y = kDefaultDensityBins;
  double smoothing_sigma = 0.0;
  bool empty = true;
  std::vector<double> cells;

  double at(int x, int y) const { return cells[static_cast<std::size_t>(y) * bins_x + x]; }
  double total() const { return pairwise_sum(cells); }
};

inline int bin_of(double value, int bins) {
  const double t = (value - kVadMin) / (kVadMax - kVadMin);
  return std::clamp(static_cast<int>(std::floor(t * bins)), 0, bins - 1);
}

// 2-D histogram over the plane's two coordinates, optionally Gaussian-
// smoothed (sigma in bins, 0 disables) and normalised to total mass 1.
inline DensityGrid density_map(const std::vector<VadVector>& points, Plane plane, int bins = kDefaultDensityBins,
                               double sigma = kDefaultDensitySigma) {
  if (bins < 2) throw Error(ErrorCode::ConfigError, "bins", "must be >= 2");
  if (!(sigma >= 0.0) || !std::isfinite(sigma)) throw Error(ErrorCode::ConfigError, "sigma", "must be >= 0");
  DensityGrid g;
  g.plane = plane;
  g.bins_x = g.bins_y = bins;
  g.smoothing_sigma = sigma;
  g.cells.assign(static_cast<std::size_t>(bins) * bins, 0.0);
  if (points.empty()) return g;
  g.empty = false;
  std::vector<std::uint64_t> counts(g.cells.size(), 0);
  for (const auto& p : points) {
    const auto [x, y] = plane_coordinates(p, plane);
    ++counts[static_cast<std::size_t>(bin_of(y, bins)) * bins + bin_of(x, bins)];
  }
  GrayImage plane_img{bins, bins, std::vector<double>(counts.begin(), counts.end())};
  if (sigma > 0.0) {
    // Zero padding outside the extent; mass that leaves is restored by the
    // renormalisation below.
    const auto k = gaussian_kernel(sigma);
    const int r = static_cast<int>(k.size() / 2);
    auto pass = [&](const GrayImage& src, bool horizontal) {
      GrayImage dst{bins, bins, std::vector<double>(src.data.size(), 0.0)};
      for (int y = 0; y < bins; ++y) {
        for (int x = 0; x < bins; ++x) {
          double acc = 0.0;
          for (int i = -r; i <= r; ++i) {
            const int sx = horizontal ? x + i : x;
            const int sy = horizontal ? y : y + i;
            if (sx < 0 || sy < 0 || sx >= bins || sy >= bins) continue;
            acc += k[static_cast<std::size_t>(i + r)] * src.at(sx, sy);
          }
          dst.at(x, y) = acc;
        }
      }
      return dst;
    };
    plane_img = pass(pass(plane_img, true), false);
  }
  const double total = pairwise_sum(plane_img.data);
  for (std::size_t i = 0; i < g.cells.size(); ++i) g.cells[i] = plane_img.data[i] / total;
  return g;
}

// Self-describing text grid.
inline std::string format_density_grid(const DensityGrid& g) {
  std::ostringstream out;
  out << "# emoscene density grid v1\n";
  out << "plane " << to_string(g.plane) << "\n";
  out << "bins " << g.bins_x << " " << g.bins_y << "\n";
  out << "extent 1 9 1 9\n";
  out << "method histogram";
  if (g.smoothing_sigma > 0.0) out << " gaussian_sigma_bins=" << format_decimal(g.smoothing_sigma, 6);
  out << "\n";
  out << "empty " << (g.empty ? 1 : 0) << "\n";
  out << "cells\n";
  for (int y = 0; y < g.bins_y; ++y) {
    for (int x = 0; x < g.bins_x; ++x) {
      if (x) out << ' ';
      out << format_decimal(g.at(x, y), 12);
    }
    out << "\n";
  }
  return out.str();
}

// Heatmap with the origin (1,1) at the bottom-left; black = 0, white = max.
inline PixelImage render_heatmap(const DensityGrid& g, int scale = 4) {
  PixelImage img(g.bins_x * scale, g.bins_y * scale);
  double mx = 0.0;
  for (double c : g.cells) mx = std::max(mx, c);
  for (int y = 0; y < img.height(); ++y) {
    for (int x = 0; x < img.width(); ++x) {
      const double t = mx > 0.0 ? g.at(x / scale, g.bins_y - 1 - y / scale) / mx : 0.0;
      // Simple black -> red -> yellow -> white ramp.
      const double r = std::clamp(3.0 * t, 0.0, 1.0);
      const double gr = std::clamp(3.0 * t - 1.0, 0.0, 1.0);
      const double b = std::clamp(3.0 * t - 2.0, 0.0, 1.0);
      img.at(x, y) = {static_cast<std::uint8_t>(std::lround(255 * r)), static_cast<std::uint8_t>(std::lround(255 * gr)),
                      static_cast<std::uint8_t>(std::lround(255 * b))};
    }
  }
  return img;
}

// ---------------------------------------------------------------------------
// Per-emotion summaries
// ---------------------------------------------------------------------------

struct CircularStats {
  double mean_deg = 0.0;
  // sqrt(-2 ln R) in degrees, R the mean resultant length.
  double std_deg = 0.0;
  double resultant_length = 0.0;
};

inline CircularStats circular_stats(const std::vector<double>& degrees) {
  CircularStats s;
  if (degrees.empty()) return s;
  std::vector<double> cs, sn;
  for (double d : degrees) {
    cs.push_back(std::cos(deg_to_rad(d)));
    sn.push_back(std::sin(deg_to_rad(d)));
  }
  const double c = mean(cs), si = mean(sn);
  s.resultant_length = std::min(1.0, std::hypot(c, si));
  s.mean_deg = (c == 0.0 && si == 0.0) ? 0.0 : wrap_degrees(rad_to_deg(std::atan2(si, c)));
  s.std_deg = s.resultant_length > 0.0 ? rad_to_deg(std::sqrt(std::max(0.0, -2.0 * std::log(s.resultant_length))))
                                       : std::numeric_limits<double>::infinity();
  return s;
}

struct EmotionSummary {
  std::size_t count = 0;
  CircularStats hue;
  double saturation_mean = 0.0;
  double saturation_std = 0.0;
  double value_mean = 0.0;
  double value_std = 0.0;
  // Over records that have a complete VAD point.
  std::optional<VadVector> mean_vad;
  std::size_t vad_count = 0;
  ColorProportion mean_color_proportion;
};

inline std::map<Emotion, EmotionSummary> per_emotion_summary(const std::vector<AnnotationRecord>& records) {
  std::map<Emotion, std::vector<const AnnotationRecord*>> groups;
  for (const auto& r : records) groups[r.emotion].push_back(&r);
  std::map<Emotion, EmotionSummary> out;
  for (const auto& [emotion, group] : groups) {
    EmotionSummary s;
    s.count = group.size();
    std::vector<double> hues, sats, vals, vv, va, vd;
    std::array<std::vector<double>, kColorCount> colors;
    for (const auto* r : group) {
      hues.push_back(r->average_color.hue);
      sats.push_back(r->average_color.saturation);
      vals.push_back(r->average_color.value);
      for (std::size_t i = 0; i < kColorCount; ++i) colors[i].push_back(r->color_proportion[i]);
      if (auto p = analytic_vad(*r)) {
        vv.push_back(p->valence);
        va.push_back(p->arousal);
        vd.push_back(p->dominance);
      }
    }
    s.hue = circular_stats(hues);
    s.saturation_mean = mean(sats);
    s.saturation_std = stddev(sats);
    s.value_mean = mean(vals);
    s.value_std = stddev(vals);
    for (std::size_t i = 0; i < kColorCount; ++i) s.mean_color_proportion[i] = mean(colors[i]);
    s.vad_count = vv.size();
    if (!vv.empty()) s.mean_vad = VadVector{mean(vv), mean(va), mean(vd)};
    out.emplace(emotion, s);
  }
  return out;
}

inline std::string format_emotion_summary(const std::map<Emotion, EmotionSummary>& summary) {
  std::string out =
      "emotion\tcount\thue_mean\thue_circ_std\tsat_mean\tsat_std\tval_mean\tval_std\tvalence\tarousal\tdominance";
  for (auto name : kColorNames) out += "\t" + std::string{name};
  out += "\n";
  for (const auto& [e, s] : summary) {
    out += std::string{to_string(e)} + "\t" + std::to_string(s.count) + "\t" + format_decimal(s.hue.mean_deg, 4) +
           "\t" + format_decimal(s.hue.std_deg, 4) + "\t" + format_decimal(s.saturation_mean, 4) + "\t" +
           format_decimal(s.saturation_std, 4) + "\t" + format_decimal(s.value_mean, 4) + "\t" +
           format_decimal(s.value_std, 4);
    if (s.mean_vad) {
      out += "\t" + format_decimal(s.mean_vad->valence, 4) + "\t" + format_decimal(s.mean_vad->arousal, 4) + "\t" +
             format_decimal(s.mean_vad->dominance, 4);
    } else {
      out += "\t-\t-\t-";
    }
    for (std::size_t i = 0; i < kColorCount; ++i) out += "\t" + format_decimal(s.mean_color_proportion[i], 4);
    out += "\n";
  }
  return out;
}

}  // namespace emoscene
