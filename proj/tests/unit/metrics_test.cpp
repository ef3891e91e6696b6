#include <gtest/gtest.h>

#include <random>

#include "support/fixtures.hpp"
#include "support/oracles.hpp"

using namespace emoscene;

namespace {

std::string metrics_file(const std::string& name) { return read_file(fixtures::fixture_dir() + "/metrics/" + name); }

}  // namespace

TEST(Metrics, HueDistanceIdentities) {
  EXPECT_NEAR(circular_hue_distance(0.1, 0.9), 0.2, 1e-15);
  EXPECT_EQ(circular_hue_distance(0.0, 0.5), 0.5);
  EXPECT_EQ(circular_hue_distance(0.25, 0.25), 0.0);
  EXPECT_NEAR(circular_hue_distance(0.0, 0.999), 0.001, 1e-12);
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> u(0, 1);
  for (int i = 0; i < 10000; ++i) {
    const double a = u(rng), b = u(rng), c = u(rng);
    const double ab = circular_hue_distance(a, b);
    EXPECT_EQ(ab, circular_hue_distance(b, a));
    EXPECT_GE(ab, 0.0);
    EXPECT_LE(ab, 0.5);
    EXPECT_LE(ab, circular_hue_distance(a, c) + circular_hue_distance(c, b) + 1e-15);
  }
}

TEST(Metrics, ColorMaeWrapsAtZeroDegrees) {
  const auto e = color_mae({{359, 40, 50}}, {{1, 40, 50}});
  EXPECT_NEAR(e.h, 2.0 / 360.0, 1e-12);
  EXPECT_EQ(e.s, 0.0);
  EXPECT_EQ(e.v, 0.0);
  EXPECT_NEAR(color_error({180, 0, 0}, {0, 100, 100}).h, 0.5, 1e-15);
  EXPECT_EQ(color_error({180, 0, 0}, {0, 100, 100}).s, 1.0);
}

TEST(Metrics, VadMaeEndpoints) {
  EXPECT_EQ(vad_mae({{3, 4, 5}}, {{3, 4, 5}}).v, 0.0);
  const auto worst = vad_mae({{1, 1, 9}, {9, 9, 1}}, {{9, 9, 1}, {1, 1, 9}});
  EXPECT_EQ(worst.v, 8.0);
  EXPECT_EQ(worst.a, 8.0);
  EXPECT_EQ(worst.d, 8.0);
  EXPECT_EQ(vad_mae({{1, 2, 3}, {5, 5, 5}}, {{2, 2, 3}, {5, 8, 5}}).a, 1.5);
}

TEST(Metrics, ErrorsOnBadInput) {
  auto code = [](auto fn) {
    try {
      fn();
    } catch (const Error& e) {
      return e.code();
    }
    return ErrorCode::IoError;
  };
  EXPECT_EQ(code([] { vad_mae({}, {}); }), ErrorCode::EmptyInput);
  EXPECT_EQ(code([] { vad_mae({{1, 1, 1}}, {}); }), ErrorCode::LengthMismatch);
  EXPECT_EQ(code([] { color_mae({{1, 1, 1}, {1, 1, 1}}, {{1, 1, 1}}); }), ErrorCode::LengthMismatch);
  EXPECT_EQ(code([] { parse_metric_set("{\"samples\": [{\"id\": \"a\"}]}"); }), ErrorCode::SchemaViolation);
  EXPECT_EQ(code([] { parse_metric_set("{"); }), ErrorCode::MalformedSyntax);
  const auto pred = parse_metric_set(R"({"samples": [{"id": "x", "valence": 1, "arousal": 1, "dominance": 1,
                                         "hue": 0, "saturation": 0, "value": 0}]})");
  const auto target = parse_metric_set(R"({"samples": []})");
  EXPECT_EQ(code([&] { evaluate_method(pred, target); }), ErrorCode::LengthMismatch);
}

TEST(Metrics, ReportMatchesOracleOnFixture) {
  const auto target_raw = metrics_file("target.json");
  const auto target = parse_metric_set(target_raw);
  std::vector<MethodReport> reports;
  for (const auto* name : {"method_a.json", "method_b.json"}) {
    const auto raw = metrics_file(name);
    const auto report = evaluate_method(parse_metric_set(raw), target);
    const auto want = oracle::metric_rows(json::parse(raw), json::parse(target_raw));
    ASSERT_EQ(report.rows.size(), kMetricRows.size());
    for (std::size_t k = 0; k < kMetricRows.size(); ++k) {
      const auto& row = report.rows[k];
      EXPECT_EQ(row.metric, kMetricRows[k]);
      EXPECT_EQ(row.n, 20u);
      EXPECT_NEAR(row.mean, want.at(row.metric).mean, 1e-12) << row.metric;
      EXPECT_NEAR(row.std, want.at(row.metric).std, 1e-12) << row.metric;
    }
    reports.push_back(report);
  }
  const auto table = format_metric_table(reports);
  EXPECT_EQ(table.substr(0, table.find('\n')), "Metric\tmethod_a\tmethod_b");
  EXPECT_EQ(std::count(table.begin(), table.end(), '\n'), 7);
  EXPECT_NE(table.find("Color MAE (H)\t"), std::string::npos);
  const auto tsv = format_metric_tsv(reports);
  EXPECT_EQ(std::count(tsv.begin(), tsv.end(), '\n'), 13);
}

TEST(Metrics, TableRendersMeanPlusMinusStd) {
  MethodReport r{"m", {{"CLIPScore", 0.2081, 0.05, 3}, {"Color MAE (H)", 0.12345, 0.0004, 3}}};
  const auto t = format_metric_table({r});
  EXPECT_EQ(t, "Metric\tm\nCLIPScore\t0.208±0.050\nColor MAE (H)\t0.123±0.000\n");
  MethodReport empty{"e", {}};
  EXPECT_EQ(format_metric_table({r, empty}), "Metric\tm\te\nCLIPScore\t0.208±0.050\t-\nColor MAE (H)\t0.123±0.000\t-\n");
}

TEST(Metrics, ClipScoreOmittedWithoutEmbeddings) {
  const auto set = parse_metric_set(R"({"method": "m", "samples": [{"id": "x", "valence": 2, "arousal": 3,
      "dominance": 4, "hue": 10, "saturation": 20, "value": 30}]})");
  const auto r = evaluate_method(set, set);
  ASSERT_EQ(r.rows.size(), 5u);
  EXPECT_EQ(r.rows[0].metric, "VAD MAE (V)");
  for (const auto& row : r.rows) EXPECT_EQ(row.mean, 0.0);
}
