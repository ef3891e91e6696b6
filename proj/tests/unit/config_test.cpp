#include <gtest/gtest.h>

#include "../support/fixtures.hpp"

using namespace emoscene;
using fixtures::TempDir;

namespace {

ErrorCode config_error(const std::string& text, std::string* field = nullptr) {
  TempDir dir;
  write_file(dir.path() / "c.json", text);
  try {
    load_config(dir.path() / "c.json").validate();
  } catch (const Error& e) {
    if (field) *field = e.field();
    return e.code();
  }
  ADD_FAILURE() << "accepted: " << text;
  return ErrorCode::EmptyInput;
}

}  // namespace

TEST(Config, DefaultsAreValid) {
  ToolConfig c;
  EXPECT_NO_THROW(c.validate());
  EXPECT_GE(c.workers, 1u);
  EXPECT_EQ(c.hamming_threshold, 8);
  EXPECT_EQ(c.extraction.reference_table, ReferenceColorTable::defaults());
}

TEST(Config, OverlaysPresentKeys) {
  TempDir dir;
  write_file(dir.path() / "c.json", R"({"workers": 3, "seed": 9, "dedup": {"hamming_threshold": 4},
    "quality": {"min_sharpness": 12.5, "strict": true}, "density": {"bins": 32},
    "review": {"max_rounds": 5}, "model_weights": {"m1": 2.0},
    "extraction": {"canny_gaussian_sigma": 1.4, "reference_colors": {"Red": [50, 70, 60]}}})");
  const auto c = load_config(dir.path() / "c.json");
  EXPECT_EQ(c.workers, 3u);
  EXPECT_EQ(c.seed, 9u);
  EXPECT_EQ(c.hamming_threshold, 4);
  EXPECT_EQ(c.quality.min_sharpness, 12.5);
  EXPECT_TRUE(c.quality.strict);
  EXPECT_EQ(c.density_bins, 32);
  EXPECT_EQ(c.density_sigma, ToolConfig{}.density_sigma);
  EXPECT_EQ(c.max_rounds, 5);
  EXPECT_EQ(c.model_weights.at("m1"), 2.0);
  EXPECT_EQ(c.extraction.canny_gaussian_sigma, 1.4);
  EXPECT_EQ(c.extraction.reference_table.anchors[3], (Lab{50, 70, 60}));
  EXPECT_NO_THROW(c.validate());
}

TEST(Config, EchoRoundTrip) {
  ToolConfig c;
  c.workers = 2;
  c.quality.min_aesthetic = 3.0;
  const auto j = to_json(c);
  ToolConfig back;
  auto doc = j;
  ASSERT_NO_THROW(apply_config(back, doc));
  EXPECT_EQ(to_json(back), j);
}

TEST(Config, Rejections) {
  std::string field;
  EXPECT_EQ(config_error("{", &field), ErrorCode::ConfigError);
  EXPECT_EQ(config_error(R"({"wokers": 2})", &field), ErrorCode::ConfigError);
  EXPECT_EQ(field, "wokers");
  EXPECT_EQ(config_error(R"({"dedup": {"hamming_threshold": "eight"}})", &field), ErrorCode::ConfigError);
  EXPECT_EQ(field, "dedup.hamming_threshold");
  EXPECT_EQ(config_error(R"({"dedup": {"hamming_threshold": 65}})", &field), ErrorCode::ConfigError);
  EXPECT_EQ(config_error(R"({"workers": 0})", &field), ErrorCode::ConfigError);
  EXPECT_EQ(field, "workers");
  EXPECT_EQ(config_error(R"({"quality": {"sharpness_percentile": 101}})"), ErrorCode::ConfigError);
  EXPECT_EQ(config_error(R"({"density": {"bins": 1}})"), ErrorCode::ConfigError);
  EXPECT_EQ(config_error(R"({"review": {"lease_minutes": 0}})"), ErrorCode::ConfigError);
  EXPECT_EQ(config_error(R"({"model_weights": {"m": -1}})", &field), ErrorCode::ConfigError);
  EXPECT_EQ(field, "model_weights.m");
  EXPECT_EQ(config_error(R"({"extraction": {"reference_colors": {"Teal": [1, 2, 3]}}})", &field),
            ErrorCode::ConfigError);
  EXPECT_EQ(field, "extraction.reference_colors.Teal");
  EXPECT_EQ(config_error(R"({"extraction": {"reference_colors": {"Red": [0, 0, 0]}}})", &field),
            ErrorCode::ConfigError);
  EXPECT_EQ(field, "reference_colors.Red");
  EXPECT_EQ(config_error(R"({"extraction": {"canny_low_ratio": 0.9, "canny_high_ratio": 0.5}})"),
            ErrorCode::ConfigError);
}
