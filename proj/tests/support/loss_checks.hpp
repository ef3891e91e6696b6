#pragma once

// Seeded gradient-check cases for every differentiable loss term. Each case
// packs the term's inputs into one flat vector so that a central finite
// difference can be taken against the analytic gradient.

#include <functional>
#include <random>
#include <string>
#include <vector>

#include "emoscene/emoscene.hpp"
#include "support/oracles.hpp"

namespace loss_checks {

using emoscene::Vec;

struct GradCase {
  std::string name;
  std::function<double(const Vec&)> f;
  std::function<Vec(const Vec&)> grad;
  Vec x;
};

inline std::vector<Vec> unflatten(const Vec& x, std::size_t n, std::size_t d) {
  std::vector<Vec> out(n, Vec(d));
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < d; ++k) out[i][k] = x[i * d + k];
  return out;
}

inline Vec flatten(const std::vector<Vec>& v) {
  Vec out;
  for (const auto& row : v) out.insert(out.end(), row.begin(), row.end());
  return out;
}

inline Vec normal_vec(std::mt19937_64& rng, std::size_t d) {
  std::normal_distribution<double> n(0.0, 1.0);
  Vec v(d);
  for (auto& x : v) x = n(rng);
  return v;
}

inline emoscene::NormalizedVad random_u(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return {u(rng), u(rng), u(rng)};
}

inline emoscene::SupervisionVector random_supervision(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  return emoscene::pack_supervision(random_u(rng), {u(rng), u(rng), u(rng)}, {});
}

// True when no hinge in the affect-geometry loss sits within `gap` of its
// kink at these deltas; finite differences are meaningless across a kink.
inline bool geometry_away_from_kinks(const std::vector<Vec>& deltas, const emoscene::LossWeights& w, double gap) {
  for (std::size_t i = 0; i < deltas.size(); ++i)
    for (std::size_t j = i + 1; j < deltas.size(); ++j) {
      const double dd = emoscene::delta_distance(deltas[i], deltas[j]);
      if (std::fabs(dd - w.m_far) < gap || std::fabs(dd - w.m_near) < gap) return false;
    }
  return true;
}

// One case per term at a fresh random point drawn from `rng`.
inline std::vector<GradCase> gradient_cases(std::mt19937_64& rng) {
  using namespace emoscene;
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<GradCase> cases;
  const LossWeights w;

  {  // perceptual: keep d_h clear of 0 and 0.5, and s + s_hat away from 0
    ColorTarget target{unit(rng), 0.05 + 0.9 * unit(rng), unit(rng)};
    Vec x;
    do {
      x = {unit(rng), 0.05 + 0.9 * unit(rng), unit(rng)};
    } while (circular_hue_distance(x[0], target.h) < 0.01 || circular_hue_distance(x[0], target.h) > 0.49);
    cases.push_back({"perceptual", [=](const Vec& p) { return perceptual_loss({p[0], p[1], p[2]}, target, w); },
                     [=](const Vec& p) {
                       const auto g = perceptual_loss_grad({p[0], p[1], p[2]}, target, w);
                       return Vec(g.begin(), g.end());
                     },
                     x});
  }
  {
    const auto noise = normal_vec(rng, 8);
    cases.push_back({"diffusion", [=](const Vec& p) { return diffusion_loss(p, noise); },
                     [=](const Vec& p) { return diffusion_loss_grad(p, noise); }, normal_vec(rng, 8)});
  }
  {  // effect hinge in its active region, every coordinate away from |.| kinks
    const auto base = normal_vec(rng, 6);
    Vec pred = base;
    double l1 = 0.0;
    for (auto& x : pred) {
      const double step = (0.01 + 0.1 * unit(rng)) * (unit(rng) < 0.5 ? -1.0 : 1.0);
      x += step;
      l1 += std::fabs(step);
    }
    const double m = l1 + 0.05 + unit(rng);
    cases.push_back({"effect_hinge", [=](const Vec& p) { return effect_hinge(p, base, m); },
                     [=](const Vec& p) { return effect_hinge_grad(p, base, m); }, pred});
  }
  {
    const auto e2 = normal_vec(rng, 8);
    cases.push_back({"embedding_consistency", [=](const Vec& p) { return embedding_consistency(p, e2); },
                     [=](const Vec& p) { return embedding_consistency_grad(p, e2); }, normal_vec(rng, 8)});
  }
  {
    constexpr std::size_t n = 5, d = 4;
    std::vector<SupervisionVector> s;
    for (std::size_t i = 0; i < n; ++i) s.push_back(random_supervision(rng));
    const double beta = 0.5 + unit(rng);
    cases.push_back({"pairwise_alignment",
                     [=](const Vec& p) { return pairwise_alignment(unflatten(p, n, d), s, beta); },
                     [=](const Vec& p) { return flatten(pairwise_alignment_grad(unflatten(p, n, d), s, beta)); },
                     flatten(std::vector<Vec>{normal_vec(rng, d), normal_vec(rng, d), normal_vec(rng, d),
                                              normal_vec(rng, d), normal_vec(rng, d)})});
  }
  {
    const auto s = random_supervision(rng);
    cases.push_back({"directional_alignment", [=](const Vec& p) { return directional_alignment(p, s); },
                     [=](const Vec& p) { return directional_alignment_grad(p, s); }, normal_vec(rng, 8)});
    Matrix proj{4, 6, normal_vec(rng, 24)};
    cases.push_back({"directional_alignment_projected",
                     [=](const Vec& p) { return directional_alignment(p, s, proj); },
                     [=](const Vec& p) { return directional_alignment_grad(p, s, proj); }, normal_vec(rng, 4)});
  }
  {
    constexpr std::size_t n = 6, d = 4;
    PairMask mask(n);
    mask.set(0, 1);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = i + 1; j < n; ++j)
        if (unit(rng) < 0.3) mask.set(i, j);
    const double tau = w.supcon_temperature;
    std::vector<Vec> deltas;
    for (std::size_t i = 0; i < n; ++i) deltas.push_back(normal_vec(rng, d));
    cases.push_back({"supervised_contrast",
                     [=](const Vec& p) { return supervised_contrast(unflatten(p, n, d), mask, tau); },
                     [=](const Vec& p) { return flatten(supervised_contrast_grad(unflatten(p, n, d), mask, tau)); },
                     flatten(deltas)});
  }
  {  // two identical VAD targets exercise the same-set term
    constexpr std::size_t n = 6, d = 4;
    std::vector<NormalizedVad> us;
    for (std::size_t i = 0; i < n; ++i) us.push_back(random_u(rng));
    us[1] = us[0];
    std::vector<Vec> deltas;
    do {
      deltas.clear();
      for (std::size_t i = 0; i < n; ++i) deltas.push_back(normal_vec(rng, d));
    } while (!geometry_away_from_kinks(deltas, w, 1e-3));
    cases.push_back({"vad_geometry",
                     [=](const Vec& p) { return vad_geometry(unflatten(p, n, d), us, w).weighted(w); },
                     [=](const Vec& p) { return flatten(vad_geometry_grad(unflatten(p, n, d), us, w)); },
                     flatten(deltas)});
  }
  {
    const double r0 = 0.5 + unit(rng);
    cases.push_back({"magnitude_reg", [=](const Vec& p) { return magnitude_reg(p, r0); },
                     [=](const Vec& p) { return magnitude_reg_grad(p, r0); }, normal_vec(rng, 8)});
  }
  {
    constexpr std::size_t pairs = 2, d = 4;
    Matrix inj{d, d, normal_vec(rng, d * d)};
    auto unpack = [=](const Vec& p) {
      const auto rows = unflatten(p, 2 * pairs, d);
      std::vector<VecPair> out;
      for (std::size_t k = 0; k < pairs; ++k) out.emplace_back(rows[2 * k], rows[2 * k + 1]);
      return out;
    };
    cases.push_back({"injector_preservation", [=](const Vec& p) { return injector_preservation(unpack(p), inj); },
                     [=](const Vec& p) {
                       Vec out;
                       for (const auto& [a, b] : injector_preservation_grad(unpack(p), inj)) {
                         out.insert(out.end(), a.begin(), a.end());
                         out.insert(out.end(), b.begin(), b.end());
                       }
                       return out;
                     },
                     normal_vec(rng, 2 * pairs * d)});
  }
  return cases;
}

struct GradResult {
  std::string name;
  bool ok = true;
  std::string detail;
};

// Runs every case at `points` seeded points; one result per term.
inline std::vector<GradResult> check_gradients(int points, std::uint64_t seed, double step = 1e-5,
                                               double rel_tol = 1e-3) {
  std::mt19937_64 rng(seed);
  std::vector<GradResult> results;
  for (int p = 0; p < points; ++p) {
    const auto cases = gradient_cases(rng);
    if (results.empty())
      for (const auto& c : cases) results.push_back({c.name, true, {}});
    for (std::size_t k = 0; k < cases.size(); ++k) {
      const auto& c = cases[k];
      const auto analytic = c.grad(c.x);
      const auto numeric = oracle::numeric_gradient(c.f, c.x, step);
      if (!oracle::gradients_match(analytic, numeric, rel_tol) && results[k].ok) {
        results[k].ok = false;
        results[k].detail = "point " + std::to_string(p);
        for (std::size_t i = 0; i < analytic.size(); ++i)
          results[k].detail += " [" + std::to_string(analytic[i]) + " vs " + std::to_string(numeric[i]) + "]";
      }
    }
  }
  return results;
}

}  // namespace loss_checks
