#pragma once

// Affective/perceptual interplay statistics: Pearson correlations between
// VAD and perceptual features, and achromatic/chromatic composition.

#include <algorithm>
#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "emoscene/affect.hpp"
#include "emoscene/annotation.hpp"
#include "emoscene/error.hpp"
#include "emoscene/numeric.hpp"

namespace emoscene {

inline bool is_constant(std::span<const double> v) {
  return std::all_of(v.begin(), v.end(), [&](double x) { return x == v.front(); });
}

// Sample Pearson correlation coefficient.
inline double pearson_r(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw Error(ErrorCode::LengthMismatch, "x and y differ in length");
  if (x.size() < 2) throw Error(ErrorCode::DegenerateInput, "need at least two samples");
  const bool cx = is_constant(x), cy = is_constant(y);
  if (cx && cy) throw Error(ErrorCode::DegenerateInput, "both series are constant");
  if (cx) throw Error(ErrorCode::ZeroVariance, "x", "series is constant");
  if (cy) throw Error(ErrorCode::ZeroVariance, "y", "series is constant");
  const double mx = mean(x), my = mean(y);
  std::vector<double> sxy(x.size()), sxx(x.size()), syy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx, dy = y[i] - my;
    sxy[i] = dx * dy;
    sxx[i] = dx * dx;
    syy[i] = dy * dy;
  }
  const double den = std::sqrt(pairwise_sum(sxx)) * std::sqrt(pairwise_sum(syy));
  if (den == 0.0) throw Error(ErrorCode::DegenerateInput, "zero variance after centring");
  return std::clamp(pairwise_sum(sxy) / den, -1.0, 1.0);
}

// A matrix cell either holds r or names why it is undefined.
struct CorrelationCell {
  std::optional<double> r;
  std::string error;
};

inline constexpr std::array<std::string_view, 3> kAffectRows = {"V", "A", "D"};
inline constexpr std::array<std::string_view, 7> kPerceptualColumns = {
    "hue_cos", "hue_sin", "saturation", "value", "curvilinearity", "entropy", "edge_density"};

struct CorrelationMatrix {
  std::size_t samples = 0;
  std::array<std::array<CorrelationCell, kPerceptualColumns.size()>, kAffectRows.size()> cells;
};

inline CorrelationCell correlation_cell(std::span<const double> x, std::span<const double> y) {
  try {
    return {pearson_r(x, y), {}};
  } catch (const Error& e) {
    return {std::nullopt, e.what()};
  }
}

// Records without a complete VAD point are skipped. Hue enters through its
// cosine and sine so that the wrap at 0/360 does not distort r.
inline CorrelationMatrix correlation_matrix(const std::vector<AnnotationRecord>& records) {
  std::array<std::vector<double>, 3> affect;
  std::array<std::vector<double>, kPerceptualColumns.size()> features;
  for (const auto& r : records) {
    const auto vad = analytic_vad(r);
    if (!vad) continue;
    affect[0].push_back(vad->valence);
    affect[1].push_back(vad->arousal);
    affect[2].push_back(vad->dominance);
    const double h = deg_to_rad(r.average_color.hue);
    features[0].push_back(std::cos(h));
    features[1].push_back(std::sin(h));
    features[2].push_back(r.average_color.saturation);
    features[3].push_back(r.average_color.value);
    features[4].push_back(r.structural.curvilinearity);
    features[5].push_back(r.structural.complexity_entropy);
    features[6].push_back(r.structural.complexity_edge_density);
  }
  CorrelationMatrix m;
  m.samples = affect[0].size();
  for (std::size_t i = 0; i < affect.size(); ++i)
    for (std::size_t j = 0; j < features.size(); ++j) m.cells[i][j] = correlation_cell(affect[i], features[j]);
  return m;
}

inline std::string format_correlation_matrix(const CorrelationMatrix& m) {
  std::string out = "affect";
  for (auto c : kPerceptualColumns) out += "\t" + std::string{c};
  out += "\n";
  for (std::size_t i = 0; i < kAffectRows.size(); ++i) {
    out += kAffectRows[i];
    for (const auto& cell : m.cells[i]) out += "\t" + (cell.r ? format_decimal(*cell.r, 6) : std::string{"NA"});
    out += "\n";
  }
  return out;
}

// ---------------------------------------------------------------------------
// Composition
// ---------------------------------------------------------------------------

inline constexpr std::size_t kChromaticCount = kColorCount - kAchromaticCount;

struct Composition {
  std::size_t count = 0;
  double achromatic = 0.0;
  double chromatic = 0.0;
  // Red .. Brown, renormalised within the chromatic block.
  std::array<double, kChromaticCount> hue_share{};
  // Records that contributed to hue_share (nonzero chromatic mass).
  std::size_t chromatic_records = 0;
};

// Per record, achromatic = Black + White + Gray and chromatic = the other
// eight, both divided by the record's total so they sum to 1. Hue shares are
// averaged over records that have chromatic mass.
inline std::map<Emotion, Composition> composition_by_emotion(const std::vector<AnnotationRecord>& records) {
  struct Acc {
    std::vector<double> achromatic, chromatic;
    std::array<std::vector<double>, kChromaticCount> share;
  };
  std::map<Emotion, Acc> acc;
  for (const auto& r : records) {
    double a = 0.0, c = 0.0;
    for (std::size_t i = 0; i < kColorCount; ++i) (i < kAchromaticCount ? a : c) += r.color_proportion[i];
    const double total = a + c;
    if (total <= 0.0) continue;
    auto& slot = acc[r.emotion];
    slot.achromatic.push_back(a / total);
    slot.chromatic.push_back(c / total);
    if (c > 0.0) {
      for (std::size_t k = 0; k < kChromaticCount; ++k)
        slot.share[k].push_back(r.color_proportion[kAchromaticCount + k] / c);
    }
  }
  std::map<Emotion, Composition> out;
  for (const auto& [e, s] : acc) {
    Composition c;
    c.count = s.achromatic.size();
    c.achromatic = mean(s.achromatic);
    c.chromatic = mean(s.chromatic);
    c.chromatic_records = s.share[0].size();
    for (std::size_t k = 0; k < kChromaticCount; ++k) c.hue_share[k] = mean(s.share[k]);
    out.emplace(e, c);
  }
  return out;
}

inline std::string format_composition(const std::map<Emotion, Composition>& comp) {
  std::string out = "emotion\tcount\tachromatic\tchromatic";
  for (std::size_t k = 0; k < kChromaticCount; ++k) out += "\t" + std::string{kColorNames[kAchromaticCount + k]};
  out += "\n";
  for (const auto& [e, c] : comp) {
    out += std::string{to_string(e)} + "\t" + std::to_string(c.count) + "\t" + format_decimal(c.achromatic, 6) +
           "\t" + format_decimal(c.chromatic, 6);
    for (double s : c.hue_share) out += "\t" + format_decimal(s, 6);
    out += "\n";
  }
  return out;
}

}  // namespace emoscene
