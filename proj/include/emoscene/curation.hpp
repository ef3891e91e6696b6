#pragma once

// Corpus curation: sharpness scoring, threshold filtering on ingested
// scores, and perceptual-hash / embedding duplicate detection.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "emoscene/annotation.hpp"
#include "emoscene/corpus.hpp"
#include "emoscene/error.hpp"
#include "emoscene/image.hpp"
#include "emoscene/numeric.hpp"

namespace emoscene {

// Variance of the 3x3 Laplacian over the valid (border-free) region of the
// BT.601 grayscale image.
inline double sharpness_score(const PixelImage& img) {
  if (img.width() < 3 || img.height() < 3)
    throw Error(ErrorCode::DegenerateImage, "sharpness needs at least 3x3 pixels");
  const auto g = to_gray(img);
  std::vector<double> response;
  response.reserve(static_cast<std::size_t>(g.width - 2) * (g.height - 2));
  for (int y = 1; y + 1 < g.height; ++y) {
    for (int x = 1; x + 1 < g.width; ++x) {
      response.push_back(g.at(x - 1, y) + g.at(x + 1, y) + g.at(x, y - 1) + g.at(x, y + 1) - 4.0 * g.at(x, y));
    }
  }
  const double m = mean(response);
  for (auto& r : response) r = (r - m) * (r - m);
  return mean(response);
}

// ---------------------------------------------------------------------------
// Difference hash
// ---------------------------------------------------------------------------

inline constexpr std::string_view kHashAlgorithm = "dhash-9x8-area-bt601";

// Area-averaged downscale of the grayscale plane to out_w x out_h.
inline GrayImage area_resample(const GrayImage& src, int out_w, int out_h) {
  GrayImage out{out_w, out_h, std::vector<double>(static_cast<std::size_t>(out_w) * out_h, 0.0)};
  const double sx = static_cast<double>(src.width) / out_w;
  const double sy = static_cast<double>(src.height) / out_h;
  for (int oy = 0; oy < out_h; ++oy) {
    const double y0 = oy * sy, y1 = (oy + 1) * sy;
    for (int ox = 0; ox < out_w; ++ox) {
      const double x0 = ox * sx, x1 = (ox + 1) * sx;
      double acc = 0.0;
      for (int y = static_cast<int>(std::floor(y0)); y < static_cast<int>(std::ceil(y1)) && y < src.height; ++y) {
        const double wy = std::min<double>(y + 1, y1) - std::max<double>(y, y0);
        if (wy <= 0.0) continue;
        for (int x = static_cast<int>(std::floor(x0)); x < static_cast<int>(std::ceil(x1)) && x < src.width; ++x) {
          const double wx = std::min<double>(x + 1, x1) - std::max<double>(x, x0);
          if (wx > 0.0) acc += wx * wy * src.at(x, y);
        }
      }
      out.at(ox, oy) = acc / (sx * sy);
    }
  }
  return out;
}

// 64-bit dHash: downscale to 9x8, one bit per horizontal neighbour pair
// (set when the left cell is brighter), row-major, most significant first.
inline std::uint64_t perceptual_hash(const PixelImage& img) {
  const auto small = area_resample(to_gray(img), 9, 8);
  std::uint64_t hash = 0;
  for (int y = 0; y < 8; ++y) {
    for (int x = 0; x < 8; ++x) {
      hash <<= 1;
      if (small.at(x, y) > small.at(x + 1, y)) hash |= 1u;
    }
  }
  return hash;
}

inline int hamming_distance(std::uint64_t a, std::uint64_t b) { return std::popcount(a ^ b); }

struct StemHash {
  std::string stem;
  std::uint64_t hash = 0;
};

struct DuplicateCluster {
  std::string representative_stem;
  // Includes the representative; sorted.
  std::vector<std::string> member_stems;
  // Largest Hamming distance from the representative to any member.
  int hash_distance_max = 0;

  bool operator==(const DuplicateCluster&) const = default;
};

namespace detail {

struct DisjointSet {
  std::vector<std::size_t> parent;
  explicit DisjointSet(std::size_t n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  std::size_t find(std::size_t i) {
    while (parent[i] != i) i = parent[i] = parent[parent[i]];
    return i;
  }
  void unite(std::size_t a, std::size_t b) {
    a = find(a), b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

template <typename Linked, typename Distance>
std::vector<DuplicateCluster> single_linkage(std::vector<std::string> stems, Linked linked, Distance distance) {
  const auto n = stems.size();
  DisjointSet sets(n);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j)
      if (linked(i, j)) sets.unite(i, j);
  std::map<std::size_t, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < n; ++i) groups[sets.find(i)].push_back(i);
  std::vector<DuplicateCluster> out;
  for (auto& [root, members] : groups) {
    if (members.size() < 2) continue;
    std::sort(members.begin(), members.end(), [&](auto a, auto b) { return stems[a] < stems[b]; });
    DuplicateCluster c;
    c.representative_stem = stems[members.front()];
    for (auto m : members) {
      c.member_stems.push_back(stems[m]);
      c.hash_distance_max = std::max(c.hash_distance_max, distance(members.front(), m));
    }
    out.push_back(std::move(c));
  }
  std::sort(out.begin(), out.end(),
            [](const auto& a, const auto& b) { return a.representative_stem < b.representative_stem; });
  return out;
}

}  // namespace detail

// Single-linkage clusters under Hamming distance <= threshold. Singletons are
// omitted; output is sorted by representative (the smallest member stem).
inline std::vector<DuplicateCluster> dedup(const std::vector<StemHash>& hashes, int threshold) {
  if (threshold < 0 || threshold > 64) throw Error(ErrorCode::ConfigError, "threshold", "must be in [0,64]");
  std::vector<std::string> stems;
  for (const auto& h : hashes) stems.push_back(h.stem);
  return detail::single_linkage(
      std::move(stems), [&](std::size_t i, std::size_t j) { return hamming_distance(hashes[i].hash, hashes[j].hash) <= threshold; },
      [&](std::size_t i, std::size_t j) { return hamming_distance(hashes[i].hash, hashes[j].hash); });
}

// Duplicate list text: representative<TAB>member<TAB>hamming, one line per
// non-representative member.
inline std::string format_duplicate_list(const std::vector<DuplicateCluster>& clusters,
                                         const std::vector<StemHash>& hashes) {
  std::map<std::string, std::uint64_t> by_stem;
  for (const auto& h : hashes) by_stem.emplace(h.stem, h.hash);
  std::string out;
  for (const auto& c : clusters) {
    for (const auto& m : c.member_stems) {
      if (m == c.representative_stem) continue;
      out += c.representative_stem + "\t" + m + "\t" +
             std::to_string(hamming_distance(by_stem.at(c.representative_stem), by_stem.at(m))) + "\n";
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Embeddings
// ---------------------------------------------------------------------------

struct EmbeddingSet {
  std::size_t dimension = 0;
  std::vector<std::string> stems;
  std::vector<std::vector<double>> vectors;
};

inline constexpr std::string_view kEmbeddingMagic = "EMBV1";

// Text form: a header line "dim <d>", then "<stem> v1 ... vd" per line.
// Binary form: "EMBV1" + NUL, u32 dim, u32 count, then per entry a u16 stem
// length, the stem bytes and d little-endian float32 values.
inline EmbeddingSet parse_embeddings(std::string_view bytes) {
  EmbeddingSet set;
  if (bytes.size() >= 6 && bytes.substr(0, 5) == kEmbeddingMagic && bytes[5] == '\0') {
    std::size_t pos = 6;
    auto take = [&](void* dst, std::size_t n) {
      if (pos + n > bytes.size()) throw Error(ErrorCode::MalformedSyntax, "embeddings", "truncated binary file");
      std::memcpy(dst, bytes.data() + pos, n);
      pos += n;
    };
    std::uint32_t dim = 0, count = 0;
    take(&dim, 4);
    take(&count, 4);
    if (dim == 0) throw Error(ErrorCode::MalformedSyntax, "embeddings", "dimension must be positive");
    set.dimension = dim;
    for (std::uint32_t i = 0; i < count; ++i) {
      std::uint16_t len = 0;
      take(&len, 2);
      std::string stem(len, '\0');
      take(stem.data(), len);
      std::vector<double> v(dim);
      for (auto& x : v) {
        float f;
        take(&f, 4);
        x = f;
      }
      set.stems.push_back(std::move(stem));
      set.vectors.push_back(std::move(v));
    }
    return set;
  }
  std::istringstream in{std::string{bytes}};
  std::string line, word;
  if (!std::getline(in, line)) throw Error(ErrorCode::MalformedSyntax, "embeddings", "empty file");
  std::istringstream header(line);
  long long dim = 0;
  if (!(header >> word >> dim) || word != "dim" || dim <= 0)
    throw Error(ErrorCode::MalformedSyntax, "embeddings", "expected header 'dim <d>'");
  set.dimension = static_cast<std::size_t>(dim);
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream row(line);
    std::string stem;
    row >> stem;
    std::vector<double> v;
    double x;
    while (row >> x) v.push_back(x);
    if (v.size() != set.dimension)
      throw Error(ErrorCode::MalformedSyntax, "embeddings", "line " + std::to_string(lineno) + ": expected " +
                                                                 std::to_string(set.dimension) + " values");
    set.stems.push_back(std::move(stem));
    set.vectors.push_back(std::move(v));
  }
  return set;
}

inline std::string write_embeddings_text(const EmbeddingSet& set) {
  std::string out = "dim " + std::to_string(set.dimension) + "\n";
  for (std::size_t i = 0; i < set.stems.size(); ++i) {
    out += set.stems[i];
    for (double x : set.vectors[i]) out += " " + format_decimal(x, 9);
    out += "\n";
  }
  return out;
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw Error(ErrorCode::DimensionMismatch, "vectors differ in dimension");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw Error(ErrorCode::ZeroVector, "cosine of a zero vector");
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

inline constexpr double kDefaultEmbeddingCosine = 0.98;

// Single-linkage clusters where cosine similarity >= min_cosine.
// hash_distance_max is unused (0) for embedding clusters.
inline std::vector<DuplicateCluster> embedding_duplicates(const EmbeddingSet& set,
                                                          double min_cosine = kDefaultEmbeddingCosine) {
  return detail::single_linkage(
      set.stems,
      [&](std::size_t i, std::size_t j) { return cosine_similarity(set.vectors[i], set.vectors[j]) >= min_cosine; },
      [](std::size_t, std::size_t) { return 0; });
}

// ---------------------------------------------------------------------------
// Filtering
// ---------------------------------------------------------------------------

struct QualityPolicy {
  std::optional<double> min_sharpness;
  std::optional<double> min_aesthetic;
  std::optional<double> min_clip_similarity;
  // When set, a missing ingested score is itself a drop reason.
  bool strict = false;
};

struct QualityInput {
  std::string stem;
  std::optional<double> sharpness;
  std::optional<double> aesthetic_score;
  std::optional<double> clip_similarity;
};

enum class Verdict { keep, drop };

struct QualityReport {
  std::string stem;
  std::optional<double> sharpness;
  std::optional<double> aesthetic_score;
  std::optional<double> clip_similarity;
  Verdict verdict = Verdict::keep;
  std::vector<std::string> drop_reasons;

  bool operator==(const QualityReport&) const = default;
};

inline QualityReport evaluate_quality(const QualityInput& in, const QualityPolicy& policy) {
  QualityReport r{in.stem, in.sharpness, in.aesthetic_score, in.clip_similarity, Verdict::keep, {}};
  bool missing = false;
  auto check = [&](const std::optional<double>& value, const std::optional<double>& minimum, const char* reason) {
    if (!minimum) return;
    if (!value) {
      missing = true;
      return;
    }
    if (*value < *minimum) r.drop_reasons.emplace_back(reason);
  };
  check(in.sharpness, policy.min_sharpness, "sharpness");
  check(in.aesthetic_score, policy.min_aesthetic, "aesthetic_score");
  check(in.clip_similarity, policy.min_clip_similarity, "clip_similarity");
  if (missing && policy.strict) r.drop_reasons.emplace_back("score-missing");
  r.verdict = r.drop_reasons.empty() ? Verdict::keep : Verdict::drop;
  return r;
}

inline std::vector<QualityReport> filter_corpus(const std::vector<QualityInput>& inputs, const QualityPolicy& policy) {
  for (auto t : {policy.min_sharpness, policy.min_aesthetic, policy.min_clip_similarity}) {
    if (t && !std::isfinite(*t)) throw Error(ErrorCode::ConfigError, "policy", "thresholds must be finite");
  }
  std::vector<QualityReport> out;
  out.reserve(inputs.size());
  for (const auto& in : inputs) out.push_back(evaluate_quality(in, policy));
  return out;
}

// Builds the filter input for one record, scoring sharpness from its image.
inline QualityInput quality_input(const AnnotationRecord& record, const PixelImage* image) {
  QualityInput in{record.stem, std::nullopt, record.aesthetic_score, record.clip_similarity};
  if (image && image->width() >= 3 && image->height() >= 3) in.sharpness = sharpness_score(*image);
  return in;
}

// Value below which `percent` of the samples fall (linear interpolation
// between order statistics).
inline double percentile(std::vector<double> values, double percent) {
  if (values.empty()) throw Error(ErrorCode::EmptyInput, "percentile of an empty set");
  std::sort(values.begin(), values.end());
  const double pos = std::clamp(percent, 0.0, 100.0) / 100.0 * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  return values[lo] + (pos - static_cast<double>(lo)) * (values[hi] - values[lo]);
}

inline constexpr double kDefaultSharpnessPercentile = 5.0;

inline std::string_view to_string(Verdict v) { return v == Verdict::keep ? "keep" : "drop"; }

}  // namespace emoscene
