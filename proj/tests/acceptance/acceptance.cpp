// Acceptance gate. Runs each criterion at its stated tolerance and time
// budget, prints one PASS/FAIL line per criterion and exits nonzero if any
// criterion fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "support/cli_run.hpp"
#include "support/fixtures.hpp"
#include "support/hitl_checks.hpp"
#include "support/loss_checks.hpp"
#include "support/oracles.hpp"
#include "support/service_checks.hpp"

using namespace emoscene;
namespace fs = std::filesystem;

namespace {

class Check {
 public:
  void ok(bool cond, const std::string& what) {
    ++count_;
    if (!cond) failures_.push_back(what);
  }
  void near(double got, double want, double tol, const std::string& what) {
    char buf[160];
    std::snprintf(buf, sizeof buf, " (got %.17g, want %.17g, tol %g)", got, want, tol);
    ok(std::fabs(got - want) <= tol, what + buf);
  }
  template <class F>
  void code(ErrorCode want, F&& f, const std::string& what) {
    try {
      f();
      ok(false, what + ": no error");
    } catch (const Error& e) {
      ok(e.code() == want, what + ": got " + std::string{to_string(e.code())});
    }
  }
  const std::vector<std::string>& failures() const { return failures_; }
  std::size_t count() const { return count_; }

 private:
  std::vector<std::string> failures_;
  std::size_t count_ = 0;
};

struct Criterion {
  std::string name;
  double budget_s;  // 0: no time limit stated
  std::function<void(Check&)> body;
};

// --- perceptual --------------------------------------------------------------

void perceptual_oracles(Check& c) {
  const ExtractionConfig cfg;
  int images = 0;
  for (auto [w, h] : {std::pair{48, 40}, std::pair{97, 61}}) {
    for (int i = 0; i < 30; ++i, ++images) {
      const auto img = fixtures::synthetic_image(i, w, h);
      const auto tag = "image " + std::to_string(i) + " " + std::to_string(w) + "x" + std::to_string(h);
      const auto got = color_proportions(img);
      const auto want = oracle::color_proportions(img, ReferenceColorTable::kDefaultSrgb);
      for (std::size_t k = 0; k < kColorCount; ++k)
        c.near(got[k], want[k], 1e-9, tag + " colour " + std::string{kColorNames[k]});
      const auto edges = canny_edges(img, cfg);
      c.ok(edges.edge == oracle::canny(img, cfg.canny_gaussian_sigma, cfg.canny_low_ratio, cfg.canny_high_ratio),
           tag + " edge map");
      const auto cx = complexity(img, edges);
      c.near(cx.entropy, oracle::entropy(img), 1e-9, tag + " entropy");
      c.near(cx.edge_density, oracle::edge_density(edges), 1e-9, tag + " edge density");
      c.near(curvilinearity(edges), oracle::curvilinearity(edges), 1e-9, tag + " curvilinearity");
    }
  }
  c.ok(images >= 50, "at least 50 images");
}

// --- extraction determinism --------------------------------------------------

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = read_file(e.path());
  return out;
}

void extraction_determinism(Check& c) {
  fixtures::TempDir dir("emoscene-accept");
  fixtures::write_corpus(dir.path() / "w1", 60, false, 160, 120);
  fs::copy(dir.path() / "w1", dir.path() / "w8", fs::copy_options::recursive);
  const auto before = tree_bytes(dir.path() / "w1");
  for (const char* w : {"1", "8"}) {
    const auto root = dir.path() / (std::string{"w"} + w);
    const auto r = cli_run::run("extract " + cli_run::quote(root) + " --workers " + w + " --out " +
                                cli_run::quote(dir.path() / (std::string{"out"} + w)));
    c.ok(r.exit_code == 0, std::string{"extract with "} + w + " workers exits 0");
  }
  const auto one = tree_bytes(dir.path() / "w1"), eight = tree_bytes(dir.path() / "w8");
  c.ok(one.size() == 120, "60 image/JSON pairs present");
  c.ok(one == eight, "1 and 8 workers give byte-identical corpora");
  c.ok(one != before, "extraction rewrote the JSONs");
}

// --- losses ------------------------------------------------------------------

void loss_kernels(Check& c) {
  for (const auto& r : loss_checks::check_gradients(100, 20240601)) c.ok(r.ok, "gradient " + r.name + ": " + r.detail);

  // Worked values.
  const auto s = pack_supervision({0, 1, 0.5}, {0.25, 0.75, 1}, {});
  c.ok(s.values() == std::array<double, 6>{-1, 1, 0, -0.5, 0.5, 1}, "supervision packing");
  for (double x : pack_supervision({0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}, {}).values()) c.ok(x == 0.0, "midpoint packs to 0");
  for (double x : pack_supervision({1, 1, 1}, {1, 1, 1}, {}).values()) c.ok(x == 1.0, "ones pack to 1");
  c.near(perceptual_loss({0.9, 1, 1}, {0.1, 1, 1}), 0.16, 1e-15, "hue wrap perceptual loss");
  c.ok(perceptual_loss({0.9, 0, 0.5}, {0.1, 0, 0.5}) == 0.0, "saturation gate");
  const Vec zero4 = {0, 0, 0, 0};
  c.near(effect_hinge(Vec{0.1, -0.1, 0.1, -0.1}, zero4, 1.0), 0.6, 1e-15, "effect hinge 0.6");
  c.ok(effect_hinge(zero4, zero4, 1.0) == 1.0, "effect hinge at zero");
  c.ok(effect_hinge(Vec{2, 0, 0, 0}, zero4, 1.0) == 0.0, "effect hinge past margin");
  c.ok(smooth_l1(2.0, 1.0) == 1.5 && smooth_l1(0.5, 1.0) == 0.125, "smooth L1 values");
  const auto s0 = pack_supervision({0.5, 0.5, 0.5}, {0.5, 0.5, 0.5}, {});
  const auto s1 = pack_supervision({1, 0.5, 0.5}, {0.5, 0.5, 0.5}, {});
  c.near(pairwise_alignment({{0, 0}, {3, 0}}, {s0, s1}), 1.5, 1e-15, "pairwise alignment single pair");
  c.near(vad_distance({0, 0, 0}, {1, 1, 1}), 1.0, 1e-15, "VAD distance of opposite corners");
  c.near(delta_distance(Vec{1, 2}, Vec{-1, -2}), 1.0, 1e-15, "delta distance of opposite directions");
  c.near(magnitude_reg(Vec{1e-9, 0, 0}, 1.0), 1.0, 1e-8, "magnitude regulariser near zero");
  PairMask twin(2);
  twin.set(0, 1);
  c.near(supervised_contrast({{1, 2, 3}, {1, 2, 3}}, twin), 0.0, 1e-12, "contrast with identical positives");

  // Boundedness, hinges and scale invariance.
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0, 1);
  const LossWeights w;
  for (int i = 0; i < 200; ++i) {
    const double l = perceptual_loss({u(rng), u(rng), u(rng)}, {u(rng), u(rng), u(rng)});
    c.ok(l >= 0.0 && l <= 3.0, "perceptual loss in [0, 3]");
    const auto sv = loss_checks::random_supervision(rng);
    Vec d = loss_checks::normal_vec(rng, 8);
    const double dir = directional_alignment(d, sv);
    c.ok(dir >= 0.0 && dir <= 2.0, "directional alignment in [0, 2]");
    Vec scaled = d;
    const double k = 0.01 + 50.0 * u(rng);
    for (auto& x : scaled) x *= k;
    c.near(directional_alignment(scaled, sv), dir, 1e-12, "directional alignment scale invariance");
    const Vec base = loss_checks::normal_vec(rng, 4), edited = loss_checks::normal_vec(rng, 4);
    const double m = 0.5 + u(rng);
    const double h = effect_hinge(edited, base, m);
    c.ok(h >= 0.0 && h <= m, "effect hinge in [0, margin]");
    c.ok(magnitude_reg(d, 1.0) >= 0.0, "magnitude regulariser non-negative");

    std::vector<Vec> deltas;
    std::vector<NormalizedVad> us;
    for (int j = 0; j < 6; ++j) {
      deltas.push_back(loss_checks::normal_vec(rng, 5));
      us.push_back(loss_checks::random_u(rng));
    }
    const auto g = vad_geometry(deltas, us, w);
    for (double x : {g.align, g.push, g.pull, g.same}) c.ok(x >= 0.0 && x <= 1.0, "VAD geometry terms in [0, 1]");
    auto big = deltas;
    for (std::size_t j = 0; j < big.size(); ++j)
      for (auto& x : big[j]) x *= 0.1 + 7.0 * static_cast<double>(j);
    c.near(vad_geometry(big, us, w).weighted(w), g.weighted(w), 1e-12, "VAD geometry scale invariance");
    const auto mask = mask_from_labels({Emotion::awe, Emotion::awe, Emotion::fear, Emotion::fear, Emotion::anger,
                                        Emotion::awe},
                                       {"a", "b", "c", "d", "e", "f"});
    c.near(supervised_contrast(big, mask), supervised_contrast(deltas, mask), 1e-10, "contrast scale invariance");
  }
  c.code(ErrorCode::ZeroVector, [&] { directional_alignment(zero4, s); }, "zero delta");
  c.code(ErrorCode::AllAnchorsSkipped, [&] { supervised_contrast({{1, 0}, {0, 1}}, PairMask(2)); }, "no positives");
}

// --- metrics -----------------------------------------------------------------

void metric_correctness(Check& c) {
  c.near(circular_hue_distance(0.0, 0.999), 0.001, 1e-12, "hue wraparound");
  c.ok(circular_hue_distance(0.0, 0.5) == 0.5, "hue maximum 0.5");
  c.near(color_mae({{359, 40, 50}}, {{1, 40, 50}}).h, 2.0 / 360.0, 1e-12, "359 vs 1 degrees");
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 10000; ++i) {
    const double a = u(rng), b = u(rng);
    const double ab = circular_hue_distance(a, b);
    c.ok(ab == circular_hue_distance(b, a), "hue symmetry");
    c.ok(ab >= 0.0 && ab <= 0.5, "hue distance in [0, 0.5]");
    c.ok(circular_hue_distance(a, a) == 0.0, "hue identity");
  }
  c.ok(vad_mae({{3, 4, 5}}, {{3, 4, 5}}).v == 0.0, "VAD MAE lower endpoint");
  const auto worst = vad_mae({{1, 1, 9}, {9, 9, 1}}, {{9, 9, 1}, {1, 1, 9}});
  c.ok(worst.v == 8.0 && worst.a == 8.0 && worst.d == 8.0, "VAD MAE upper endpoint");

  const auto dir = fixtures::fixture_dir() + "/metrics/";
  const auto target_raw = read_file(dir + "target.json");
  const auto target = parse_metric_set(target_raw);
  std::vector<MethodReport> reports;
  for (const auto* name : {"method_a.json", "method_b.json"}) {
    const auto raw = read_file(dir + name);
    const auto report = evaluate_method(parse_metric_set(raw), target);
    const auto want = oracle::metric_rows(nlohmann::json::parse(raw), nlohmann::json::parse(target_raw));
    c.ok(report.rows.size() == kMetricRows.size(), std::string{name} + " row count");
    for (const auto& row : report.rows) {
      c.ok(row.n == 20, row.metric + " over 20 samples");
      c.near(row.mean, want.at(row.metric).mean, 1e-12, std::string{name} + " " + row.metric + " mean");
      c.near(row.std, want.at(row.metric).std, 1e-12, std::string{name} + " " + row.metric + " std");
    }
    reports.push_back(report);
  }
  const auto table = format_metric_table(reports);
  c.ok(table.rfind("Metric\tmethod_a\tmethod_b\n", 0) == 0, "table header");
  for (const auto& row : kMetricRows) {
    const auto at = table.find(std::string{row} + "\t");
    c.ok(at != std::string::npos, "table row " + std::string{row});
    if (at == std::string::npos) continue;
    const auto line = table.substr(at, table.find('\n', at) - at);
    int pm = 0;
    for (std::size_t p = line.find("±"); p != std::string::npos; p = line.find("±", p + 1)) ++pm;
    c.ok(pm == 2, "mean ± std cells in " + line);
  }
}

// --- agreement ---------------------------------------------------------------

void agreement(Check& c) {
  using Ratings = std::vector<std::vector<std::string>>;
  c.ok(fleiss_kappa({{"A", "A"}, {"B", "B"}, {"C", "C"}}) == 1.0, "unanimous, several categories");
  c.ok(fleiss_kappa({{"A", "A", "A"}, {"A", "A", "A"}}) == 1.0, "unanimous, one category");
  const Ratings hand = {{"A", "A", "B"}, {"A", "A", "A"}, {"B", "B", "B"}};
  c.near(fleiss_kappa(hand), 0.55, 1e-9, "3x3 hand fixture");
  c.near(fleiss_kappa(hand), oracle::fleiss_kappa(hand), 1e-9, "3x3 against oracle");

  std::mt19937_64 rng(77);
  const std::vector<std::string> labels = {"awe", "excitement", "fear", "sadness"};
  std::uniform_real_distribution<double> u(1.0, 9.0);
  for (int trial = 0; trial < 20; ++trial) {
    Ratings r(20);
    for (auto& row : r) {
      const auto base = labels[rng() % 4];
      for (int k = 0; k < 3; ++k) row.push_back(rng() % 3 == 0 ? labels[rng() % 4] : base);
    }
    const double k = fleiss_kappa(r);
    c.near(k, oracle::fleiss_kappa(r), 1e-9, "length-20 kappa against oracle");
    // A bijective relabelling, including one that reverses the label order.
    Ratings renamed = r;
    for (auto& row : renamed)
      for (auto& x : row) x = std::string(1, static_cast<char>('z' - (x[0] - 'a'))) + x;
    c.ok(fleiss_kappa(renamed) == k, "kappa invariant under relabelling");

    std::vector<double> x(20), y(20);
    for (std::size_t i = 0; i < 20; ++i) {
      x[i] = u(rng);
      y[i] = 0.4 * x[i] + u(rng);
    }
    c.near(pearson_r(x, y), oracle::pearson(x, y), 1e-9, "length-20 Pearson against oracle");
  }
  // Hand-computed Pearson: x = 1..3, y = 1, 3, 2 gives r = 0.5.
  c.near(pearson_r(std::vector<double>{1, 2, 3}, std::vector<double>{1, 3, 2}), 0.5, 1e-9, "3-point Pearson");
}

// --- schema ------------------------------------------------------------------

void schema_round_trip(Check& c) {
  const auto raw = read_file(fixtures::fixture_dir() + "/pairing_example.json");
  const auto rec = parse_record(raw, "sunset_01");
  c.ok(rec.emotion == Emotion::awe && rec.scene == "beach", "example fields");
  c.near(rec.color_proportion.sum(), 1.0, 1e-12, "example colour proportions sum to 1");
  const auto once = serialize_record(rec);
  const auto back = parse_record(once, "sunset_01");
  c.ok(back == rec, "example parse(serialize) equality");
  c.ok(serialize_record(back) == once, "example byte-stable round trip");
  const auto in = nlohmann::json::parse(raw), out = nlohmann::json::parse(once);
  c.ok(in.size() == out.size(), "example keeps every top-level key");
  std::mt19937_64 rng(7);
  for (int i = 0; i < 100; ++i) {
    const auto stem = "gen_" + std::to_string(i);
    const auto r = fixtures::random_record(rng, stem);
    const auto text = serialize_record(r);
    const auto again = parse_record(text, stem);
    c.ok(again == r, stem + " parse(serialize) identity");
    c.ok(serialize_record(again) == text, stem + " byte stability");
  }
}

// --- review workflow -----------------------------------------------------------

void hitl_state_machine(Check& c) {
  const auto s = hitl_checks::enumerate(3, 4);
  c.ok(s.sequences > 300000, "enumerated every sequence of up to 4 decisions over 3 items");
  for (const auto& v : s.violations) c.ok(false, v);

  const auto item = fixtures::review_item("sample_01");
  const auto yes = fixtures::all_yes(item);
  c.ok(apply_decision(item, yes).state == ItemState::finalized, "all yes finalizes");
  auto no = yes;
  no.verdicts[2] = {ReviewField::valence, Answer::no, "arousal inconsistent with calm scene", std::nullopt};
  const auto next = apply_decision(item, no);
  c.ok(next.state == ItemState::recheck && next.round == 2, "valence no rechecks at round 2");

  fixtures::TempDir dir("emoscene-accept");
  ReviewQueue::Options o;
  o.log_path = dir.path() / "audit.jsonl";
  std::map<std::string, ReviewItem> live;
  {
    ReviewQueue q(o);
    for (auto stem : {"a", "b", "c"}) q.enqueue(fixtures::review_item(stem, stem[0] == 'b' ? 1 : 2));
    auto a = q.submit([&] {
      auto d = fixtures::all_yes(*q.find("a"));
      d.verdicts[0] = {ReviewField::emotion_1, Answer::no, "wrong", Emotion::fear};
      return d;
    }());
    q.submit(fixtures::all_yes(a));
    q.submit(fixtures::all_yes(*q.find("b")));
    live = q.items();
  }
  c.ok(ReviewQueue::replay(read_audit_log(*o.log_path)) == live, "replay of the log file equals live state");
  c.ok(ReviewQueue::open(o)->items() == live, "reopened queue equals live state");
}

void service_contract(Check& c) {
  for (const auto& f : service_checks::run_contract()) c.ok(false, f);
  c.ok(true, "contract script ran");
}

}  // namespace

int main() {
  const std::vector<Criterion> criteria = {
      {"perceptual oracle equivalence (>=50 images, 1e-9, <60 s)", 60, perceptual_oracles},
      {"extraction determinism (1 vs 8 workers byte-identical, <2 min)", 120, extraction_determinism},
      {"loss kernels (gradients at 100 points, properties, worked values, <30 s)", 30, loss_kernels},
      {"metric correctness (hue identities, VAD MAE endpoints, 20-sample report, 1e-12)", 0, metric_correctness},
      {"agreement statistics (kappa and Pearson, 1e-9, relabel invariance)", 0, agreement},
      {"schema round trip (pairing example, 100 generated records)", 0, schema_round_trip},
      {"review state machine (3 items x 4 decisions, replay, <10 s)", 10, hitl_state_machine},
      {"review service contract (409/422/404, traversal, log replay)", 0, service_contract},
  };
  int failed = 0;
  for (const auto& cr : criteria) {
    Check c;
    const auto t0 = std::chrono::steady_clock::now();
    try {
      cr.body(c);
    } catch (const std::exception& e) {
      c.ok(false, std::string{"uncaught exception: "} + e.what());
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (cr.budget_s > 0) {
      char buf[96];
      std::snprintf(buf, sizeof buf, "took %.2f s, budget %.0f s", secs, cr.budget_s);
      c.ok(secs < cr.budget_s, buf);
    }
    const bool pass = c.failures().empty();
    failed += !pass;
    std::printf("%s %s [%zu checks, %.2f s]\n", pass ? "PASS" : "FAIL", cr.name.c_str(), c.count(), secs);
    for (std::size_t i = 0; i < c.failures().size() && i < 10; ++i) std::printf("    %s\n", c.failures()[i].c_str());
    if (c.failures().size() > 10) std::printf("    ... %zu more\n", c.failures().size() - 10);
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria failed\n", failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
