#pragma once

// Tool configuration. The file format is a single JSON object whose keys
// mirror ToolConfig; every key is optional and unknown keys are rejected.
//
//   {
//     "workers": 8,
//     "seed": 0,
//     "extraction": {"canny_gaussian_sigma": 1.4, "canny_low_ratio": 0.1,
//                    "canny_high_ratio": 0.3, "histogram_bins": 256,
//                    "reference_colors": {"Red": [53.2, 80.1, 67.2], ...}},
//     "dedup": {"hamming_threshold": 8, "embedding_cosine": 0.98},
//     "quality": {"sharpness_percentile": 5, "min_sharpness": null,
//                 "min_aesthetic": null, "min_clip_similarity": null,
//                 "strict": false},
//     "density": {"bins": 64, "sigma": 1.0},
//     "review": {"lease_minutes": 15, "max_rounds": 5},
//     "model_weights": {"internvl3_8B": 1.0}
//   }

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "emoscene/affect.hpp"
#include "emoscene/corpus.hpp"
#include "emoscene/curation.hpp"
#include "emoscene/error.hpp"
#include "emoscene/hitl.hpp"
#include "emoscene/perceptual.hpp"

namespace emoscene {

inline constexpr int kDefaultHammingThreshold = 8;

struct ToolConfig {
  unsigned workers = std::max(1u, std::thread::hardware_concurrency());
  std::uint64_t seed = 0;
  ExtractionConfig extraction;
  int hamming_threshold = kDefaultHammingThreshold;
  double embedding_cosine = kDefaultEmbeddingCosine;
  double sharpness_percentile = kDefaultSharpnessPercentile;
  QualityPolicy quality;
  int density_bins = kDefaultDensityBins;
  double density_sigma = kDefaultDensitySigma;
  int lease_minutes = 15;
  int max_rounds = kDefaultMaxRounds;
  std::map<std::string, double> model_weights;

  void validate() const {
    if (workers < 1) throw Error(ErrorCode::ConfigError, "workers", "must be >= 1");
    extraction.validate();
    if (hamming_threshold < 0 || hamming_threshold > 64)
      throw Error(ErrorCode::ConfigError, "dedup.hamming_threshold", "must be in [0,64]");
    if (!(embedding_cosine >= -1.0 && embedding_cosine <= 1.0))
      throw Error(ErrorCode::ConfigError, "dedup.embedding_cosine", "must be in [-1,1]");
    if (!(sharpness_percentile >= 0.0 && sharpness_percentile <= 100.0))
      throw Error(ErrorCode::ConfigError, "quality.sharpness_percentile", "must be in [0,100]");
    for (auto [name, v] : {std::pair{"quality.min_sharpness", quality.min_sharpness},
                           std::pair{"quality.min_aesthetic", quality.min_aesthetic},
                           std::pair{"quality.min_clip_similarity", quality.min_clip_similarity}})
      if (v && !std::isfinite(*v)) throw Error(ErrorCode::ConfigError, name, "must be finite");
    if (density_bins < 2) throw Error(ErrorCode::ConfigError, "density.bins", "must be >= 2");
    if (!(density_sigma >= 0.0)) throw Error(ErrorCode::ConfigError, "density.sigma", "must be >= 0");
    if (lease_minutes < 1) throw Error(ErrorCode::ConfigError, "review.lease_minutes", "must be >= 1");
    if (max_rounds < 1) throw Error(ErrorCode::ConfigError, "review.max_rounds", "must be >= 1");
    for (const auto& [model, w] : model_weights)
      if (!std::isfinite(w) || w < 0.0) throw Error(ErrorCode::ConfigError, "model_weights." + model, "must be >= 0");
  }
};

namespace detail {

using json = nlohmann::json;

inline void reject_unknown(const json& obj, std::initializer_list<std::string_view> known, const std::string& where) {
  if (!obj.is_object()) throw Error(ErrorCode::ConfigError, where, "expected an object");
  for (const auto& [key, value] : obj.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw Error(ErrorCode::ConfigError, where.empty() ? key : where + "." + key, "unknown key");
  }
}

template <class T>
void read_into(const json& obj, const char* key, T& slot, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    slot = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw Error(ErrorCode::ConfigError, where.empty() ? key : where + "." + key, "wrong type");
  }
}

inline void read_optional(const json& obj, const char* key, std::optional<double>& slot, const std::string& where) {
  if (!obj.contains(key)) return;
  if (obj[key].is_null()) {
    slot.reset();
    return;
  }
  if (!obj[key].is_number()) throw Error(ErrorCode::ConfigError, where + "." + key, "expected a number or null");
  slot = obj[key].get<double>();
}

inline json optional_json(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

}  // namespace detail

// Overlays the keys present in `doc` onto `cfg`.
inline void apply_config(ToolConfig& cfg, const nlohmann::json& doc) {
  using detail::read_into;
  detail::reject_unknown(doc, {"workers", "seed", "extraction", "dedup", "quality", "density", "review", "model_weights"},
                         "");
  read_into(doc, "workers", cfg.workers, "");
  read_into(doc, "seed", cfg.seed, "");
  if (doc.contains("extraction")) {
    const auto& e = doc["extraction"];
    detail::reject_unknown(e, {"canny_gaussian_sigma", "canny_low_ratio", "canny_high_ratio", "histogram_bins",
                               "reference_colors", "reference_table_fingerprint"},
                           "extraction");
    read_into(e, "canny_gaussian_sigma", cfg.extraction.canny_gaussian_sigma, "extraction");
    read_into(e, "canny_low_ratio", cfg.extraction.canny_low_ratio, "extraction");
    read_into(e, "canny_high_ratio", cfg.extraction.canny_high_ratio, "extraction");
    read_into(e, "histogram_bins", cfg.extraction.histogram_bins, "extraction");
    if (e.contains("reference_colors")) {
      const auto& rc = e["reference_colors"];
      if (!rc.is_object()) throw Error(ErrorCode::ConfigError, "extraction.reference_colors", "expected an object");
      for (const auto& [name, lab] : rc.items()) {
        auto idx = color_index(name);
        const auto where = "extraction.reference_colors." + name;
        if (!idx) throw Error(ErrorCode::ConfigError, where, "unknown colour name");
        if (!lab.is_array() || lab.size() != 3 || !lab[0].is_number() || !lab[1].is_number() || !lab[2].is_number())
          throw Error(ErrorCode::ConfigError, where, "expected [L, a, b]");
        cfg.extraction.reference_table.anchors[*idx] = {lab[0].get<double>(), lab[1].get<double>(),
                                                        lab[2].get<double>()};
      }
    }
  }
  if (doc.contains("dedup")) {
    const auto& d = doc["dedup"];
    detail::reject_unknown(d, {"hamming_threshold", "embedding_cosine", "hash_algorithm"}, "dedup");
    read_into(d, "hamming_threshold", cfg.hamming_threshold, "dedup");
    read_into(d, "embedding_cosine", cfg.embedding_cosine, "dedup");
  }
  if (doc.contains("quality")) {
    const auto& q = doc["quality"];
    detail::reject_unknown(q, {"sharpness_percentile", "min_sharpness", "min_aesthetic", "min_clip_similarity", "strict"},
                           "quality");
    read_into(q, "sharpness_percentile", cfg.sharpness_percentile, "quality");
    detail::read_optional(q, "min_sharpness", cfg.quality.min_sharpness, "quality");
    detail::read_optional(q, "min_aesthetic", cfg.quality.min_aesthetic, "quality");
    detail::read_optional(q, "min_clip_similarity", cfg.quality.min_clip_similarity, "quality");
    read_into(q, "strict", cfg.quality.strict, "quality");
  }
  if (doc.contains("density")) {
    const auto& d = doc["density"];
    detail::reject_unknown(d, {"bins", "sigma"}, "density");
    read_into(d, "bins", cfg.density_bins, "density");
    read_into(d, "sigma", cfg.density_sigma, "density");
  }
  if (doc.contains("review")) {
    const auto& r = doc["review"];
    detail::reject_unknown(r, {"lease_minutes", "max_rounds"}, "review");
    read_into(r, "lease_minutes", cfg.lease_minutes, "review");
    read_into(r, "max_rounds", cfg.max_rounds, "review");
  }
  read_into(doc, "model_weights", cfg.model_weights, "");
}

inline ToolConfig load_config(const fs::path& path) {
  ToolConfig cfg;
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(read_file(path));
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::ConfigError, path.string(), e.what());
  }
  apply_config(cfg, doc);
  return cfg;
}

// The effective configuration as echoed into output manifests.
inline nlohmann::json to_json(const ToolConfig& c) {
  nlohmann::json colors = nlohmann::json::object();
  for (std::size_t i = 0; i < kColorCount; ++i) {
    const auto& a = c.extraction.reference_table.anchors[i];
    colors[std::string{kColorNames[i]}] = {a.L, a.a, a.b};
  }
  return {{"workers", c.workers},
          {"seed", c.seed},
          {"extraction",
           {{"canny_gaussian_sigma", c.extraction.canny_gaussian_sigma},
            {"canny_low_ratio", c.extraction.canny_low_ratio},
            {"canny_high_ratio", c.extraction.canny_high_ratio},
            {"histogram_bins", c.extraction.histogram_bins},
            {"reference_colors", colors},
            {"reference_table_fingerprint", c.extraction.reference_table.fingerprint()}}},
          {"dedup",
           {{"hamming_threshold", c.hamming_threshold},
            {"embedding_cosine", c.embedding_cosine},
            {"hash_algorithm", std::string{kHashAlgorithm}}}},
          {"quality",
           {{"sharpness_percentile", c.sharpness_percentile},
            {"min_sharpness", detail::optional_json(c.quality.min_sharpness)},
            {"min_aesthetic", detail::optional_json(c.quality.min_aesthetic)},
            {"min_clip_similarity", detail::optional_json(c.quality.min_clip_similarity)},
            {"strict", c.quality.strict}}},
          {"density", {{"bins", c.density_bins}, {"sigma", c.density_sigma}}},
          {"review", {{"lease_minutes", c.lease_minutes}, {"max_rounds", c.max_rounds}}},
          {"model_weights", c.model_weights}};
}

}  // namespace emoscene
