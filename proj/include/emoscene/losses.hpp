#pragma once

// Objective terms for affect/perception modulation, as pure functions over
// caller-supplied vectors. Every differentiable term has an analytic
// gradient alongside its value so external trainers can be checked against
// it.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "emoscene/annotation.hpp"
#include "emoscene/error.hpp"
#include "emoscene/numeric.hpp"

namespace emoscene {

using Vec = std::vector<double>;

struct LossWeights {
  double w_vad = 1.0;
  double w_col = 1.0;
  // Effect lower bound, far-pair and near-pair margins.
  double m = 0.05;
  double m_far = 0.5;
  double m_near = 0.1;
  double r0 = 1.0;
  double alpha = 1.0;
  double beta = 1.0;
  double gamma = 1.0;
  double eta = 1.0;
  double lambda_img = 1.0;
  double lambda_eff = 1.0;
  double lambda_pair = 1.0;
  double lambda_dir = 1.0;
  double lambda_con = 1.0;
  double lambda_mag = 1.0;
  double lambda_inj = 1.0;
  double w_h = 1.0;
  double w_s = 1.0;
  double w_v = 1.0;
  double supcon_temperature = 0.07;
  double smoothl1_beta = 1.0;
  int top_k = 4;
  // d^u at or below this marks an "almost identical" VAD pair.
  double same_epsilon = 1e-6;

  void validate() const {
    auto need = [](bool ok, const char* field, const char* why) {
      if (!ok) throw Error(ErrorCode::WeightOutOfRange, field, why);
    };
    need(m >= 0.0 && m_far >= 0.0 && m_near >= 0.0, "margins", "must be >= 0");
    need(r0 >= 0.0, "r0", "must be >= 0");
    need(supcon_temperature > 0.0, "supcon_temperature", "must be > 0");
    need(smoothl1_beta > 0.0, "smoothl1_beta", "must be > 0");
    need(top_k >= 1, "top_k", "must be >= 1");
    need(same_epsilon >= 0.0, "same_epsilon", "must be >= 0");
  }
};

// ---------------------------------------------------------------------------
// Small vector helpers
// ---------------------------------------------------------------------------

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

inline void require_same_dim(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size())
    throw Error(ErrorCode::DimensionMismatch,
                "dimensions " + std::to_string(a.size()) + " and " + std::to_string(b.size()) + " differ");
}

inline Vec unit(std::span<const double> a) {
  const double n = norm(a);
  if (!(n > 0.0)) throw Error(ErrorCode::ZeroVector, "zero vector cannot be normalised");
  Vec u(a.begin(), a.end());
  for (auto& x : u) x /= n;
  return u;
}

inline double cosine(std::span<const double> a, std::span<const double> b) {
  require_same_dim(a, b);
  const auto ua = unit(a), ub = unit(b);
  return std::clamp(dot(ua, ub), -1.0, 1.0);
}

// d cos(a, b) / d a = (b_hat - cos * a_hat) / |a|
inline Vec cosine_grad(std::span<const double> a, std::span<const double> b) {
  const double na = norm(a);
  const auto ua = unit(a), ub = unit(b);
  const double c = dot(ua, ub);
  Vec g(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) g[i] = (ub[i] - c * ua[i]) / na;
  return g;
}

// Pulls a gradient w.r.t. z = x / |x| back to x.
inline Vec unit_backprop(std::span<const double> x, std::span<const double> dz) {
  const double n = norm(x);
  const auto z = unit(x);
  const double proj = dot(z, dz);
  Vec g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) g[i] = (dz[i] - proj * z[i]) / n;
  return g;
}

inline void require_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw Error(ErrorCode::DegenerateInput, what, "non-finite entry");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Supervision packing and targets
// ---------------------------------------------------------------------------

// h, s, v in [0,1]; h is circular.
struct ColorTarget {
  double h = 0.0;
  double s = 0.0;
  double v = 0.0;
};

inline ColorTarget color_target(const HsvSummary& hsv) {
  return {wrap_degrees(hsv.hue) / 360.0, hsv.saturation / 100.0, hsv.value / 100.0};
}

class SupervisionVector {
 public:
  static constexpr std::size_t kDim = 6;
  const std::array<double, kDim>& values() const { return s_; }
  std::span<const double> span() const { return s_; }

 private:
  friend SupervisionVector pack_supervision(const NormalizedVad&, const ColorTarget&, const LossWeights&);
  std::array<double, kDim> s_{};
};

// s = [w_vad * u, w_col * c] mapped by x -> 2x - 1 into [-1,1]^6.
inline SupervisionVector pack_supervision(const NormalizedVad& u, const ColorTarget& c, const LossWeights& w) {
  for (auto [name, x] : {std::pair{"w_vad", w.w_vad}, std::pair{"w_col", w.w_col}}) {
    if (!(x > 0.0 && x <= 1.0)) throw Error(ErrorCode::WeightOutOfRange, name, "must be in (0,1]");
  }
  const std::array<double, 6> raw = {w.w_vad * u.v, w.w_vad * u.a, w.w_vad * u.d,
                                     w.w_col * c.h, w.w_col * c.s, w.w_col * c.v};
  for (double x : {u.v, u.a, u.d, c.h, c.s, c.v}) {
    if (!(x >= 0.0 && x <= 1.0)) throw Error(ErrorCode::DegenerateInput, "supervision", "inputs must lie in [0,1]");
  }
  SupervisionVector out;
  for (std::size_t i = 0; i < raw.size(); ++i) out.s_[i] = 2.0 * raw[i] - 1.0;
  return out;
}

// min(|h1 - h2|, 1 - |h1 - h2|) on the unit hue circle.
inline double circular_hue_distance(double h1, double h2) {
  const double d = std::fmod(std::fabs(h1 - h2), 1.0);
  return std::min(d, 1.0 - d);
}

// d/dh1 of circular_hue_distance; 0 at the two non-differentiable points.
inline double circular_hue_distance_grad(double h1, double h2) {
  const double diff = h1 - h2;
  const double d = std::fmod(std::fabs(diff), 1.0);
  if (d == 0.0 || d == 0.5) return 0.0;
  const double sign = diff > 0.0 ? 1.0 : -1.0;
  return d < 0.5 ? sign : -sign;
}

// ---------------------------------------------------------------------------
// Perceptual term
// ---------------------------------------------------------------------------

// w_h * g * (2 d_h)^2 + w_s (s_hat - s)^2 + w_v (v_hat - v)^2 with the
// saturation gate g = sqrt((s + s_hat) / 2).
inline double perceptual_loss(const ColorTarget& pred, const ColorTarget& target, const LossWeights& w = {}) {
  const double dh = circular_hue_distance(pred.h, target.h);
  const double gate = std::sqrt(std::clamp((target.s + pred.s) / 2.0, 0.0, 1.0));
  const double ds = pred.s - target.s, dv = pred.v - target.v;
  return w.w_h * gate * (2.0 * dh) * (2.0 * dh) + w.w_s * ds * ds + w.w_v * dv * dv;
}

// Gradient w.r.t. the prediction (h, s, v).
inline std::array<double, 3> perceptual_loss_grad(const ColorTarget& pred, const ColorTarget& target,
                                                  const LossWeights& w = {}) {
  const double dh = circular_hue_distance(pred.h, target.h);
  const double mean_s = (target.s + pred.s) / 2.0;
  const double gate = std::sqrt(std::max(mean_s, 0.0));
  const double hue_sq = 4.0 * dh * dh;
  std::array<double, 3> g{};
  g[0] = w.w_h * gate * 8.0 * dh * circular_hue_distance_grad(pred.h, target.h);
  g[1] = (gate > 0.0 ? w.w_h * hue_sq / (4.0 * gate) : 0.0) + 2.0 * w.w_s * (pred.s - target.s);
  g[2] = 2.0 * w.w_v * (pred.v - target.v);
  return g;
}

// ---------------------------------------------------------------------------
// Generation terms
// ---------------------------------------------------------------------------

// ||pred - noise||_2^2
inline double diffusion_loss(std::span<const double> pred, std::span<const double> noise) {
  detail::require_same_dim(pred, noise);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - noise[i]) * (pred[i] - noise[i]);
  return s;
}

inline Vec diffusion_loss_grad(std::span<const double> pred, std::span<const double> noise) {
  detail::require_same_dim(pred, noise);
  Vec g(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) g[i] = 2.0 * (pred[i] - noise[i]);
  return g;
}

// [m - ||pred - base||_1]_+
inline double effect_hinge(std::span<const double> pred, std::span<const double> base, double m) {
  detail::require_same_dim(pred, base);
  if (!(m >= 0.0)) throw Error(ErrorCode::WeightOutOfRange, "m", "must be >= 0");
  double l1 = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) l1 += std::fabs(pred[i] - base[i]);
  return std::max(0.0, m - l1);
}

inline Vec effect_hinge_grad(std::span<const double> pred, std::span<const double> base, double m) {
  Vec g(pred.size(), 0.0);
  if (effect_hinge(pred, base, m) <= 0.0) return g;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - base[i];
    g[i] = d > 0.0 ? -1.0 : d < 0.0 ? 1.0 : 0.0;
  }
  return g;
}

// 1 - cos(e1, e2) for caller-supplied image embeddings.
inline double embedding_consistency(std::span<const double> e1, std::span<const double> e2) {
  return 1.0 - detail::cosine(e1, e2);
}

inline Vec embedding_consistency_grad(std::span<const double> e1, std::span<const double> e2) {
  detail::require_same_dim(e1, e2);
  auto g = detail::cosine_grad(e1, e2);
  for (auto& x : g) x = -x;
  return g;
}

// ---------------------------------------------------------------------------
// Geometry alignment
// ---------------------------------------------------------------------------

using PairList = std::vector<std::pair<std::size_t, std::size_t>>;

inline constexpr std::size_t kFullPairLimit = 512;

// All unordered pairs for n <= 512; above that a seeded uniform sample
// (without replacement) of 512*511/2 pairs, returned in sorted order.
inline PairList loss_pairs(std::size_t n, std::uint64_t seed = 0) {
  PairList pairs;
  if (n <= kFullPairLimit) {
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j) pairs.emplace_back(i, j);
    return pairs;
  }
  const std::uint64_t total = static_cast<std::uint64_t>(n) * (n - 1) / 2;
  const std::uint64_t want = static_cast<std::uint64_t>(kFullPairLimit) * (kFullPairLimit - 1) / 2;
  std::mt19937_64 rng(seed);
  // Floyd's sampling over the linear pair index.
  std::unordered_set<std::uint64_t> chosen;
  chosen.reserve(want * 2);
  for (std::uint64_t j = total - want; j < total; ++j) {
    std::uniform_int_distribution<std::uint64_t> pick(0, j);
    const auto t = pick(rng);
    if (!chosen.insert(t).second) chosen.insert(j);
  }
  std::vector<std::uint64_t> idx(chosen.begin(), chosen.end());
  std::sort(idx.begin(), idx.end());
  pairs.reserve(idx.size());
  // Linear index k enumerates (0,1),(0,2),...,(0,n-1),(1,2),...
  std::size_t i = 0;
  std::uint64_t row_start = 0;
  for (auto k : idx) {
    while (k >= row_start + (n - 1 - i)) {
      row_start += n - 1 - i;
      ++i;
    }
    pairs.emplace_back(i, i + 1 + static_cast<std::size_t>(k - row_start));
  }
  return pairs;
}

inline double smooth_l1(double x, double beta) {
  const double a = std::fabs(x);
  return a <= beta ? 0.5 * x * x / beta : a - 0.5 * beta;
}

inline double smooth_l1_grad(double x, double beta) {
  return std::fabs(x) <= beta ? x / beta : (x > 0.0 ? 1.0 : -1.0);
}

namespace detail {

inline double euclidean(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
  return std::sqrt(s);
}

inline void check_deltas(const std::vector<Vec>& deltas) {
  if (deltas.empty()) throw Error(ErrorCode::EmptyInput, "no modulation vectors");
  for (const auto& d : deltas) {
    require_same_dim(d, deltas.front());
    require_finite(d, "delta");
  }
  if (deltas.front().empty()) throw Error(ErrorCode::DimensionMismatch, "modulation vectors must have D > 0");
}

}  // namespace detail

// Mean SmoothL1(||d_i - d_j|| - ||s_i - s_j||) over the pair set.
inline double pairwise_alignment(const std::vector<Vec>& deltas, const std::vector<SupervisionVector>& supervisions,
                                 double beta = 1.0, std::uint64_t seed = 0) {
  if (deltas.size() != supervisions.size()) throw Error(ErrorCode::LengthMismatch, "deltas and supervisions differ");
  if (deltas.size() < 2) throw Error(ErrorCode::LengthMismatch, "need at least two samples");
  detail::check_deltas(deltas);
  const auto pairs = loss_pairs(deltas.size(), seed);
  std::vector<double> terms;
  terms.reserve(pairs.size());
  for (const auto& [i, j] : pairs) {
    const double x = detail::euclidean(deltas[i], deltas[j]) -
                     detail::euclidean(supervisions[i].span(), supervisions[j].span());
    terms.push_back(smooth_l1(x, beta));
  }
  return mean(terms);
}

inline std::vector<Vec> pairwise_alignment_grad(const std::vector<Vec>& deltas,
                                                const std::vector<SupervisionVector>& supervisions, double beta = 1.0,
                                                std::uint64_t seed = 0) {
  if (deltas.size() != supervisions.size()) throw Error(ErrorCode::LengthMismatch, "deltas and supervisions differ");
  detail::check_deltas(deltas);
  const auto pairs = loss_pairs(deltas.size(), seed);
  std::vector<Vec> g(deltas.size(), Vec(deltas.front().size(), 0.0));
  const double scale = 1.0 / static_cast<double>(pairs.size());
  for (const auto& [i, j] : pairs) {
    const double dd = detail::euclidean(deltas[i], deltas[j]);
    if (dd == 0.0) continue;
    const double x = dd - detail::euclidean(supervisions[i].span(), supervisions[j].span());
    const double c = scale * smooth_l1_grad(x, beta) / dd;
    for (std::size_t k = 0; k < g[i].size(); ++k) {
      const double diff = deltas[i][k] - deltas[j][k];
      g[i][k] += c * diff;
      g[j][k] -= c * diff;
    }
  }
  return g;
}

// Row-major linear map, rows x cols.
struct Matrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<double> data;

  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }

  Vec apply(std::span<const double> x) const {
    if (x.size() != cols) throw Error(ErrorCode::DimensionMismatch, "matrix/vector dimension mismatch");
    Vec y(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) y[r] += (*this)(r, c) * x[c];
    return y;
  }

  Vec apply_transpose(std::span<const double> y) const {
    if (y.size() != rows) throw Error(ErrorCode::DimensionMismatch, "matrix/vector dimension mismatch");
    Vec x(cols, 0.0);
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t c = 0; c < cols; ++c) x[c] += (*this)(r, c) * y[r];
    return x;
  }

  static Matrix identity(std::size_t n) {
    Matrix m{n, n, Vec(n * n, 0.0)};
    for (std::size_t i = 0; i < n; ++i) m.data[i * n + i] = 1.0;
    return m;
  }
};

// f(s): the supplied projection, or zero-padding / truncation to D.
inline Vec project_supervision(const SupervisionVector& s, std::size_t dim, const std::optional<Matrix>& projection) {
  if (projection) {
    if (projection->rows != dim) throw Error(ErrorCode::DimensionMismatch, "projection rows must equal D");
    return projection->apply(s.span());
  }
  Vec out(dim, 0.0);
  for (std::size_t i = 0; i < std::min(dim, SupervisionVector::kDim); ++i) out[i] = s.values()[i];
  return out;
}

// 1 - cos(delta_hat, f(s)_hat)
inline double directional_alignment(std::span<const double> delta, const SupervisionVector& s,
                                    const std::optional<Matrix>& projection = std::nullopt) {
  const auto target = project_supervision(s, delta.size(), projection);
  return 1.0 - detail::cosine(delta, target);
}

inline Vec directional_alignment_grad(std::span<const double> delta, const SupervisionVector& s,
                                      const std::optional<Matrix>& projection = std::nullopt) {
  const auto target = project_supervision(s, delta.size(), projection);
  auto g = detail::cosine_grad(delta, target);
  for (auto& x : g) x = -x;
  return g;
}

// Symmetric boolean matrix with zero diagonal; 1 marks a positive pair.
struct PairMask {
  std::size_t n = 0;
  std::vector<std::uint8_t> bits;

  explicit PairMask(std::size_t size = 0) : n(size), bits(size * size, 0) {}
  bool operator()(std::size_t i, std::size_t j) const { return bits[i * n + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v = true) {
    bits[i * n + j] = v;
    bits[j * n + i] = v;
  }

  void validate() const {
    for (std::size_t i = 0; i < n; ++i) {
      if ((*this)(i, i)) throw Error(ErrorCode::DegenerateInput, "mask", "diagonal must be zero");
      for (std::size_t j = i + 1; j < n; ++j)
        if ((*this)(i, j) != (*this)(j, i)) throw Error(ErrorCode::DegenerateInput, "mask", "must be symmetric");
    }
  }
};

// M_ij = 1 when samples i and j share an emotion or a scene.
inline PairMask mask_from_labels(const std::vector<Emotion>& emotions, const std::vector<std::string>& scenes) {
  if (emotions.size() != scenes.size()) throw Error(ErrorCode::LengthMismatch, "emotions and scenes differ");
  PairMask m(emotions.size());
  for (std::size_t i = 0; i < m.n; ++i)
    for (std::size_t j = i + 1; j < m.n; ++j)
      if (emotions[i] == emotions[j] || scenes[i] == scenes[j]) m.set(i, j);
  return m;
}

namespace detail {

struct SupconTerms {
  double loss = 0.0;
  std::vector<Vec> grad_z;  // w.r.t. unit vectors
};

inline SupconTerms supcon_core(const std::vector<Vec>& z, const PairMask& mask, double temperature, bool want_grad) {
  const std::size_t n = z.size();
  std::vector<std::size_t> anchors;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      if (mask(i, j)) {
        anchors.push_back(i);
        break;
      }
    }
  }
  if (anchors.empty()) throw Error(ErrorCode::AllAnchorsSkipped, "no anchor has a positive");
  SupconTerms out;
  if (want_grad) out.grad_z.assign(n, Vec(z.front().size(), 0.0));
  std::vector<double> per_anchor;
  const double inv_anchors = 1.0 / static_cast<double>(anchors.size());
  for (auto i : anchors) {
    std::vector<double> sim(n, 0.0);
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      sim[j] = dot(z[i], z[j]) / temperature;
      mx = std::max(mx, sim[j]);
    }
    double denom = 0.0;
    for (std::size_t j = 0; j < n; ++j)
      if (j != i) denom += std::exp(sim[j] - mx);
    const double log_denom = mx + std::log(denom);
    double positives = 0.0, pos_sum = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && mask(i, j)) {
        positives += 1.0;
        pos_sum += sim[j];
      }
    }
    per_anchor.push_back(log_denom - pos_sum / positives);
    if (!want_grad) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (j == i) continue;
      const double soft = std::exp(sim[j] - log_denom);
      const double g = inv_anchors * (soft - (mask(i, j) ? 1.0 / positives : 0.0)) / temperature;
      for (std::size_t k = 0; k < z[i].size(); ++k) {
        out.grad_z[i][k] += g * z[j][k];
        out.grad_z[j][k] += g * z[i][k];
      }
    }
  }
  out.loss = mean(per_anchor);
  return out;
}

}  // namespace detail

// Supervised contrastive loss on cosine similarities / temperature, averaged
// over anchors that have at least one positive.
inline double supervised_contrast(const std::vector<Vec>& deltas, const PairMask& mask, double temperature = 0.07) {
  detail::check_deltas(deltas);
  if (mask.n != deltas.size()) throw Error(ErrorCode::LengthMismatch, "mask size differs from batch");
  if (!(temperature > 0.0)) throw Error(ErrorCode::WeightOutOfRange, "temperature", "must be > 0");
  mask.validate();
  std::vector<Vec> z;
  for (const auto& d : deltas) z.push_back(detail::unit(d));
  return std::max(0.0, detail::supcon_core(z, mask, temperature, false).loss);
}

inline std::vector<Vec> supervised_contrast_grad(const std::vector<Vec>& deltas, const PairMask& mask,
                                                 double temperature = 0.07) {
  detail::check_deltas(deltas);
  if (mask.n != deltas.size()) throw Error(ErrorCode::LengthMismatch, "mask size differs from batch");
  mask.validate();
  std::vector<Vec> z;
  for (const auto& d : deltas) z.push_back(detail::unit(d));
  const auto terms = detail::supcon_core(z, mask, temperature, true);
  std::vector<Vec> g;
  for (std::size_t i = 0; i < deltas.size(); ++i) g.push_back(detail::unit_backprop(deltas[i], terms.grad_z[i]));
  return g;
}

// ---------------------------------------------------------------------------
// Affect geometry
// ---------------------------------------------------------------------------

struct VadGeometry {
  double align = 0.0;
  double push = 0.0;
  double pull = 0.0;
  double same = 0.0;

  double weighted(const LossWeights& w) const { return w.alpha * align + w.beta * push + w.gamma * pull + w.eta * same; }
};

// d^u = ||u_i - u_j|| / sqrt(3)
inline double vad_distance(const NormalizedVad& a, const NormalizedVad& b) {
  const double dv = a.v - b.v, da = a.a - b.a, dd = a.d - b.d;
  return std::sqrt(dv * dv + da * da + dd * dd) / std::sqrt(3.0);
}

// d^delta = (1 - cos(delta_i, delta_j)) / 2
inline double delta_distance(std::span<const double> a, std::span<const double> b) {
  return (1.0 - detail::cosine(a, b)) / 2.0;
}

struct VadPairSets {
  PairList pairs;
  std::vector<double> du;
  std::vector<std::size_t> far;   // indices into pairs
  std::vector<std::size_t> near;
  std::vector<std::size_t> same;
};

// Top-k far / near pairs by d^u with ties broken by pair order.
inline VadPairSets vad_pair_sets(const std::vector<NormalizedVad>& us, const LossWeights& w) {
  VadPairSets s;
  for (std::size_t i = 0; i < us.size(); ++i)
    for (std::size_t j = i + 1; j < us.size(); ++j) {
      s.pairs.emplace_back(i, j);
      s.du.push_back(vad_distance(us[i], us[j]));
    }
  std::vector<std::size_t> order(s.pairs.size());
  std::iota(order.begin(), order.end(), 0);
  const auto k = std::min<std::size_t>(static_cast<std::size_t>(w.top_k), order.size());
  auto by_far = order;
  std::stable_sort(by_far.begin(), by_far.end(), [&](auto a, auto b) { return s.du[a] > s.du[b]; });
  s.far.assign(by_far.begin(), by_far.begin() + static_cast<std::ptrdiff_t>(k));
  auto by_near = order;
  std::stable_sort(by_near.begin(), by_near.end(), [&](auto a, auto b) { return s.du[a] < s.du[b]; });
  s.near.assign(by_near.begin(), by_near.begin() + static_cast<std::ptrdiff_t>(k));
  for (std::size_t p = 0; p < s.pairs.size(); ++p)
    if (s.du[p] <= w.same_epsilon) s.same.push_back(p);
  return s;
}

inline VadGeometry vad_geometry(const std::vector<Vec>& deltas, const std::vector<NormalizedVad>& us,
                                const LossWeights& w = {}) {
  if (deltas.size() != us.size()) throw Error(ErrorCode::LengthMismatch, "deltas and VAD targets differ");
  if (deltas.size() < 2) throw Error(ErrorCode::LengthMismatch, "need at least two samples");
  detail::check_deltas(deltas);
  const auto sets = vad_pair_sets(us, w);
  std::vector<double> dd;
  for (const auto& [i, j] : sets.pairs) dd.push_back(delta_distance(deltas[i], deltas[j]));
  VadGeometry g;
  std::vector<double> terms;
  for (std::size_t p = 0; p < dd.size(); ++p) terms.push_back((dd[p] - sets.du[p]) * (dd[p] - sets.du[p]));
  g.align = mean(terms);
  terms.clear();
  for (auto p : sets.far) terms.push_back(std::max(0.0, w.m_far - dd[p]));
  g.push = mean(terms);
  terms.clear();
  for (auto p : sets.near) terms.push_back(std::max(0.0, dd[p] - w.m_near));
  g.pull = mean(terms);
  terms.clear();
  for (auto p : sets.same) terms.push_back(dd[p] * dd[p]);
  g.same = mean(terms);
  return g;
}

// Gradient of alpha*align + beta*push + gamma*pull + eta*same w.r.t. deltas.
inline std::vector<Vec> vad_geometry_grad(const std::vector<Vec>& deltas, const std::vector<NormalizedVad>& us,
                                          const LossWeights& w = {}) {
  if (deltas.size() != us.size()) throw Error(ErrorCode::LengthMismatch, "deltas and VAD targets differ");
  detail::check_deltas(deltas);
  const auto sets = vad_pair_sets(us, w);
  std::vector<Vec> z;
  for (const auto& d : deltas) z.push_back(detail::unit(d));
  std::vector<double> dd;
  for (const auto& [i, j] : sets.pairs) dd.push_back((1.0 - std::clamp(detail::dot(z[i], z[j]), -1.0, 1.0)) / 2.0);

  std::vector<double> coeff(sets.pairs.size(), 0.0);  // dL / d(d^delta_p)
  const double np = static_cast<double>(sets.pairs.size());
  for (std::size_t p = 0; p < dd.size(); ++p) coeff[p] += w.alpha * 2.0 * (dd[p] - sets.du[p]) / np;
  for (auto p : sets.far)
    if (w.m_far - dd[p] > 0.0) coeff[p] -= w.beta / static_cast<double>(sets.far.size());
  for (auto p : sets.near)
    if (dd[p] - w.m_near > 0.0) coeff[p] += w.gamma / static_cast<double>(sets.near.size());
  for (auto p : sets.same) coeff[p] += w.eta * 2.0 * dd[p] / static_cast<double>(sets.same.size());

  std::vector<Vec> gz(deltas.size(), Vec(deltas.front().size(), 0.0));
  for (std::size_t p = 0; p < sets.pairs.size(); ++p) {
    const auto [i, j] = sets.pairs[p];
    for (std::size_t k = 0; k < gz[i].size(); ++k) {
      gz[i][k] -= 0.5 * coeff[p] * z[j][k];
      gz[j][k] -= 0.5 * coeff[p] * z[i][k];
    }
  }
  std::vector<Vec> g;
  for (std::size_t i = 0; i < deltas.size(); ++i) g.push_back(detail::unit_backprop(deltas[i], gz[i]));
  return g;
}

// ---------------------------------------------------------------------------
// Regularisation
// ---------------------------------------------------------------------------

// (||delta|| - r0)^2
inline double magnitude_reg(std::span<const double> delta, double r0) {
  const double n = detail::norm(delta);
  return (n - r0) * (n - r0);
}

inline Vec magnitude_reg_grad(std::span<const double> delta, double r0) {
  const double n = detail::norm(delta);
  Vec g(delta.size(), 0.0);
  if (n == 0.0) return g;
  for (std::size_t i = 0; i < delta.size(); ++i) g[i] = 2.0 * (n - r0) * delta[i] / n;
  return g;
}

using VecPair = std::pair<Vec, Vec>;

// MSE between cos(a, b) and cos(I(a), I(b)) over the supplied pairs.
inline double injector_preservation(const std::vector<VecPair>& pairs, const std::vector<VecPair>& injected) {
  if (pairs.size() != injected.size()) throw Error(ErrorCode::LengthMismatch, "pairs and injected pairs differ");
  if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "no pairs");
  std::vector<double> terms;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const double d = detail::cosine(pairs[p].first, pairs[p].second) -
                     detail::cosine(injected[p].first, injected[p].second);
    terms.push_back(d * d);
  }
  return mean(terms);
}

struct InjectorGrad {
  std::vector<VecPair> pairs;
  std::vector<VecPair> injected;
};

// Gradient treating originals and injected vectors as independent inputs.
inline InjectorGrad injector_preservation_grad(const std::vector<VecPair>& pairs, const std::vector<VecPair>& injected) {
  if (pairs.size() != injected.size()) throw Error(ErrorCode::LengthMismatch, "pairs and injected pairs differ");
  InjectorGrad g;
  const double scale = 2.0 / static_cast<double>(pairs.size());
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    const auto& [a, b] = pairs[p];
    const auto& [ia, ib] = injected[p];
    const double d = detail::cosine(a, b) - detail::cosine(ia, ib);
    auto ga = detail::cosine_grad(a, b), gb = detail::cosine_grad(b, a);
    auto gia = detail::cosine_grad(ia, ib), gib = detail::cosine_grad(ib, ia);
    for (auto& x : ga) x *= scale * d;
    for (auto& x : gb) x *= scale * d;
    for (auto& x : gia) x *= -scale * d;
    for (auto& x : gib) x *= -scale * d;
    g.pairs.emplace_back(std::move(ga), std::move(gb));
    g.injected.emplace_back(std::move(gia), std::move(gib));
  }
  return g;
}

// Same loss with a fixed linear injector applied here.
inline double injector_preservation(const std::vector<VecPair>& pairs, const Matrix& injector) {
  std::vector<VecPair> injected;
  for (const auto& [a, b] : pairs) injected.emplace_back(injector.apply(a), injector.apply(b));
  return injector_preservation(pairs, injected);
}

// Gradient w.r.t. the original vectors, chained through the injector.
inline std::vector<VecPair> injector_preservation_grad(const std::vector<VecPair>& pairs, const Matrix& injector) {
  std::vector<VecPair> injected;
  for (const auto& [a, b] : pairs) injected.emplace_back(injector.apply(a), injector.apply(b));
  const auto parts = injector_preservation_grad(pairs, injected);
  std::vector<VecPair> out;
  for (std::size_t p = 0; p < pairs.size(); ++p) {
    auto ga = parts.pairs[p].first, gb = parts.pairs[p].second;
    const auto ta = injector.apply_transpose(parts.injected[p].first);
    const auto tb = injector.apply_transpose(parts.injected[p].second);
    for (std::size_t k = 0; k < ga.size(); ++k) {
      ga[k] += ta[k];
      gb[k] += tb[k];
    }
    out.emplace_back(std::move(ga), std::move(gb));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Total objective
// ---------------------------------------------------------------------------

struct LossComponents {
  double diff = 0.0;
  double img = 0.0;
  double effect = 0.0;
  double pair = 0.0;
  double dir = 0.0;
  double supcon = 0.0;
  double vad_align = 0.0;
  double push = 0.0;
  double pull = 0.0;
  double same = 0.0;
  double perc = 0.0;
  double mag = 0.0;
  double inj = 0.0;
};

struct LossBreakdown {
  double total = 0.0;
  double gen = 0.0;
  double align = 0.0;
  double aff = 0.0;
  double perc = 0.0;
  double reg = 0.0;
  // Weighted contribution of every individual term, keyed by term name.
  std::map<std::string, double> terms;
};

// total = gen + align + aff + perc + reg with
//   gen   = diff + l_img img + l_eff effect
//   align = l_pair pair + l_dir dir + l_con supcon
//   aff   = alpha vad_align + beta push + gamma pull + eta same
//   reg   = l_mag mag + l_inj inj
// The perceptual term already carries its w_h/w_s/w_v weights.
inline LossBreakdown total_loss(const LossComponents& c, const LossWeights& w = {}) {
  const std::array<std::pair<const char*, double>, 13> named = {{{"diff", c.diff},
                                                                 {"img", c.img},
                                                                 {"effect", c.effect},
                                                                 {"pair", c.pair},
                                                                 {"dir", c.dir},
                                                                 {"supcon", c.supcon},
                                                                 {"vad_align", c.vad_align},
                                                                 {"push", c.push},
                                                                 {"pull", c.pull},
                                                                 {"same", c.same},
                                                                 {"perc", c.perc},
                                                                 {"mag", c.mag},
                                                                 {"inj", c.inj}}};
  for (const auto& [name, v] : named)
    if (!std::isfinite(v)) throw Error(ErrorCode::NonFiniteComponent, name, "component is not finite");

  LossBreakdown b;
  b.terms = {{"diff", c.diff},
             {"img", w.lambda_img * c.img},
             {"effect", w.lambda_eff * c.effect},
             {"pair", w.lambda_pair * c.pair},
             {"dir", w.lambda_dir * c.dir},
             {"supcon", w.lambda_con * c.supcon},
             {"vad_align", w.alpha * c.vad_align},
             {"push", w.beta * c.push},
             {"pull", w.gamma * c.pull},
             {"same", w.eta * c.same},
             {"perc", c.perc},
             {"mag", w.lambda_mag * c.mag},
             {"inj", w.lambda_inj * c.inj}};
  b.gen = b.terms["diff"] + b.terms["img"] + b.terms["effect"];
  b.align = b.terms["pair"] + b.terms["dir"] + b.terms["supcon"];
  b.aff = b.terms["vad_align"] + b.terms["push"] + b.terms["pull"] + b.terms["same"];
  b.perc = b.terms["perc"];
  b.reg = b.terms["mag"] + b.terms["inj"];
  b.total = b.gen + b.align + b.aff + b.perc + b.reg;
  return b;
}

}  // namespace emoscene
