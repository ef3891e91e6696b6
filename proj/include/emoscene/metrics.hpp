#pragma once

// Evaluation metrics for generated images: CLIP-style similarity from
// supplied embeddings, VAD MAE on the 1-9 scale, HSV color MAE.

#include <array>
#include <cmath>
#include <cstdio>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoscene/annotation.hpp"
#include "emoscene/error.hpp"
#include "emoscene/losses.hpp"
#include "emoscene/numeric.hpp"

namespace emoscene {

struct VadMae {
  double v = 0.0;
  double a = 0.0;
  double d = 0.0;
};

struct ColorMae {
  double h = 0.0;
  double s = 0.0;
  double v = 0.0;
};

namespace detail {

template <class T>
void require_paired(const std::vector<T>& pred, const std::vector<T>& target) {
  if (pred.size() != target.size())
    throw Error(ErrorCode::LengthMismatch, "prediction and target lists differ in length");
  if (pred.empty()) throw Error(ErrorCode::EmptyInput, "no samples");
}

}  // namespace detail

inline VadMae vad_mae(const std::vector<VadVector>& pred, const std::vector<VadVector>& target) {
  detail::require_paired(pred, target);
  std::array<std::vector<double>, 3> err;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    err[0].push_back(std::fabs(pred[i].valence - target[i].valence));
    err[1].push_back(std::fabs(pred[i].arousal - target[i].arousal));
    err[2].push_back(std::fabs(pred[i].dominance - target[i].dominance));
  }
  return {mean(err[0]), mean(err[1]), mean(err[2])};
}

// Per-sample hue error on the unit circle; S and V errors on [0,1].
inline ColorMae color_error(const HsvSummary& pred, const HsvSummary& target) {
  const auto p = color_target(pred), t = color_target(target);
  return {circular_hue_distance(p.h, t.h), std::fabs(p.s - t.s), std::fabs(p.v - t.v)};
}

inline ColorMae color_mae(const std::vector<HsvSummary>& pred, const std::vector<HsvSummary>& target) {
  detail::require_paired(pred, target);
  std::array<std::vector<double>, 3> err;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const auto e = color_error(pred[i], target[i]);
    err[0].push_back(e.h);
    err[1].push_back(e.s);
    err[2].push_back(e.v);
  }
  return {mean(err[0]), mean(err[1]), mean(err[2])};
}

// ---------------------------------------------------------------------------
// Metric report
// ---------------------------------------------------------------------------

struct MetricSample {
  std::string id;
  VadVector vad;
  HsvSummary hsv;
  Vec image_embedding;
  Vec text_embedding;
};

struct MetricSet {
  std::string method;
  std::vector<MetricSample> samples;
};

// {"method": "...", "samples": [{"id", "valence", "arousal", "dominance",
//   "hue", "saturation", "value", "image_embedding"?, "text_embedding"?}]}
// hue in degrees, saturation/value on 0-100, matching the annotation schema.
inline MetricSet parse_metric_set(std::string_view raw) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(raw);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::MalformedSyntax, e.what());
  }
  if (!doc.is_object() || !doc.contains("samples") || !doc["samples"].is_array())
    throw Error(ErrorCode::SchemaViolation, "samples", "missing samples array");
  MetricSet set;
  set.method = doc.value("method", std::string{"unnamed"});
  auto number = [](const nlohmann::json& s, const char* key) {
    if (!s.contains(key) || !s[key].is_number()) throw Error(ErrorCode::SchemaViolation, key, "missing number");
    return s[key].get<double>();
  };
  auto vector = [](const nlohmann::json& s, const char* key) {
    Vec v;
    if (!s.contains(key)) return v;
    if (!s[key].is_array()) throw Error(ErrorCode::SchemaViolation, key, "expected array");
    for (const auto& x : s[key]) {
      if (!x.is_number()) throw Error(ErrorCode::SchemaViolation, key, "expected numbers");
      v.push_back(x.get<double>());
    }
    return v;
  };
  for (const auto& s : doc["samples"]) {
    if (!s.is_object() || !s.contains("id") || !s["id"].is_string())
      throw Error(ErrorCode::SchemaViolation, "id", "sample without string id");
    MetricSample m;
    m.id = s["id"].get<std::string>();
    m.vad = {number(s, "valence"), number(s, "arousal"), number(s, "dominance")};
    m.hsv = {number(s, "hue"), number(s, "saturation"), number(s, "value")};
    m.image_embedding = vector(s, "image_embedding");
    m.text_embedding = vector(s, "text_embedding");
    set.samples.push_back(std::move(m));
  }
  return set;
}

struct MetricRow {
  std::string metric;
  double mean = 0.0;
  double std = 0.0;
  std::size_t n = 0;
};

struct MethodReport {
  std::string method;
  std::vector<MetricRow> rows;
};

inline constexpr std::array<std::string_view, 6> kMetricRows = {
    "CLIPScore", "VAD MAE (V)", "VAD MAE (A)", "VAD MAE (D)", "Color MAE (H)", "Color MAE (S)"};

// Samples are matched to targets by id. CLIPScore is the cosine between each
// prediction's image and text embeddings; it is omitted when no sample
// carries both. std is the population deviation over samples.
inline MethodReport evaluate_method(const MetricSet& pred, const MetricSet& target) {
  if (pred.samples.empty()) throw Error(ErrorCode::EmptyInput, pred.method, "no samples");
  std::map<std::string, const MetricSample*> by_id;
  for (const auto& t : target.samples) by_id[t.id] = &t;
  std::array<std::vector<double>, kMetricRows.size()> err;
  for (const auto& p : pred.samples) {
    auto it = by_id.find(p.id);
    if (it == by_id.end()) throw Error(ErrorCode::LengthMismatch, p.id, "no target sample with this id");
    const auto& t = *it->second;
    if (!p.image_embedding.empty() && !p.text_embedding.empty())
      err[0].push_back(detail::cosine(p.image_embedding, p.text_embedding));
    err[1].push_back(std::fabs(p.vad.valence - t.vad.valence));
    err[2].push_back(std::fabs(p.vad.arousal - t.vad.arousal));
    err[3].push_back(std::fabs(p.vad.dominance - t.vad.dominance));
    const auto c = color_error(p.hsv, t.hsv);
    err[4].push_back(c.h);
    err[5].push_back(c.s);
  }
  MethodReport report{pred.method, {}};
  for (std::size_t k = 0; k < kMetricRows.size(); ++k) {
    if (err[k].empty()) continue;
    report.rows.push_back({std::string{kMetricRows[k]}, mean(err[k]), stddev(err[k]), err[k].size()});
  }
  return report;
}

// Long form: method, metric, mean, std, n.
inline std::string format_metric_tsv(const std::vector<MethodReport>& reports) {
  std::string out = "method\tmetric\tmean\tstd\tn\n";
  for (const auto& r : reports)
    for (const auto& row : r.rows)
      out += r.method + "\t" + row.metric + "\t" + format_decimal(row.mean, 12) + "\t" + format_decimal(row.std, 12) +
             "\t" + std::to_string(row.n) + "\n";
  return out;
}

// Wide form: one row per metric, one "mean±std" column per method.
inline std::string format_metric_table(const std::vector<MethodReport>& reports, int decimals = 3) {
  std::string out = "Metric";
  for (const auto& r : reports) out += "\t" + r.method;
  out += "\n";
  for (auto metric : kMetricRows) {
    std::string line{metric};
    bool any = false;
    for (const auto& r : reports) {
      std::string cell = "-";
      for (const auto& row : r.rows) {
        if (row.metric != metric) continue;
        char buf[96];
        std::snprintf(buf, sizeof buf, "%.*f±%.*f", decimals, row.mean, decimals, row.std);
        cell = buf;
        any = true;
      }
      line += "\t" + cell;
    }
    if (any) out += line + "\n";
  }
  return out;
}

}  // namespace emoscene
