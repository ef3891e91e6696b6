#pragma once

// Deterministic synthetic inputs: images, annotation records, corpora on
// disk, review items.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include "emoscene/emoscene.hpp"

namespace fixtures {

namespace fs = std::filesystem;
using emoscene::PixelImage;
using emoscene::Rgb;

inline std::string fixture_dir() { return EMOSCENE_FIXTURE_DIR; }

// A scratch directory removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag = "emoscene") {
    static std::mt19937_64 rng(std::random_device{}());
    path_ = fs::temp_directory_path() / (tag + "-" + std::to_string(rng()));
    fs::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    fs::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

inline std::uint8_t u8(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

// Synthetic image #index of a fixed family of 10 pattern kinds; the same
// index always yields the same pixels.
inline PixelImage synthetic_image(int index, int width = 48, int height = 40) {
  std::mt19937 rng(static_cast<unsigned>(1000 + index));
  std::uniform_int_distribution<int> byte(0, 255);
  PixelImage img(width, height);
  const int kind = index % 10;
  const Rgb a{u8(byte(rng)), u8(byte(rng)), u8(byte(rng))};
  const Rgb b{u8(byte(rng)), u8(byte(rng)), u8(byte(rng))};
  const double cx = width * (0.3 + 0.4 * (byte(rng) / 255.0)), cy = height * (0.3 + 0.4 * (byte(rng) / 255.0));
  const double radius = std::min(width, height) * (0.2 + 0.2 * (byte(rng) / 255.0));
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      Rgb px;
      switch (kind) {
        case 0:  // flat
          px = a;
          break;
        case 1:  // horizontal gradient
          px = {u8(a.r + (b.r - a.r) * x / (width - 1.0)), u8(a.g + (b.g - a.g) * x / (width - 1.0)),
                u8(a.b + (b.b - a.b) * x / (width - 1.0))};
          break;
        case 2:  // disc
          px = std::hypot(x - cx, y - cy) < radius ? a : b;
          break;
        case 3:  // checkerboard
          px = ((x / 6 + y / 6) % 2) ? a : b;
          break;
        case 4:  // noise
          px = {u8(byte(rng)), u8(byte(rng)), u8(byte(rng))};
          break;
        case 5:  // vertical stripes
          px = (x / 4) % 2 ? a : b;
          break;
        case 6:  // hue wheel
          px = emoscene::hsv_to_rgb(std::atan2(y - cy, x - cx) * 180.0 / std::numbers::pi + 180.0, 0.8, 0.9);
          break;
        case 7:  // diagonal band
          px = std::abs((x - y) % 16) < 5 ? a : b;
          break;
        case 8:  // concentric rings
          px = static_cast<int>(std::hypot(x - cx, y - cy) / 4) % 2 ? a : b;
          break;
        default: {  // noisy disc
          const Rgb base = std::hypot(x - cx, y - cy) < radius ? a : b;
          const int n = byte(rng) / 16 - 8;
          px = {u8(base.r + n), u8(base.g + n), u8(base.b + n)};
        }
      }
      img.at(x, y) = px;
    }
  }
  return img;
}

// A record whose values lie on the storage grid, so that serialisation is
// exact.
inline emoscene::AnnotationRecord random_record(std::mt19937_64& rng, const std::string& stem) {
  using namespace emoscene;
  std::uniform_int_distribution<int> pick(0, 1 << 30);
  auto grid = [&](double lo, double hi, int decimals) {
    const double scale = std::pow(10.0, decimals);
    const auto steps = static_cast<long long>(std::llround((hi - lo) * scale));
    std::uniform_int_distribution<long long> d(0, steps);
    return round_to(lo + static_cast<double>(d(rng)) / scale, decimals);
  };
  AnnotationRecord r;
  r.stem = stem;
  const std::vector<std::string> scenes = {"beach", "forest", "city", "desert", "mountain"};
  r.scene = scenes[static_cast<std::size_t>(pick(rng)) % scenes.size()];
  r.emotion = kAllEmotions[static_cast<std::size_t>(pick(rng)) % kAllEmotions.size()];
  // Color proportions: random integer hundredths summing to 100.
  std::array<int, kColorCount> parts{};
  int left = 100;
  for (std::size_t i = 0; i + 1 < kColorCount; ++i) {
    const int take = left == 0 ? 0 : pick(rng) % (left / 2 + 1);
    parts[i] = take;
    left -= take;
  }
  parts[kColorCount - 1] = left;
  for (std::size_t i = 0; i < kColorCount; ++i) r.color_proportion[i] = parts[i] / 100.0;
  r.average_color = {grid(0, 359.9999, 4), grid(0, 100, 4), grid(0, 100, 4)};
  r.structural = {grid(0, 1, 4), grid(0, 1, 4), grid(0, 1, 4)};
  const std::vector<std::string> models = {"internvl3_8B", "qwen2.5_vl_7b_instruct"};
  for (const auto& m : models) {
    VadScores s;
    s.valence = 1 + pick(rng) % 9;
    s.arousal = 1 + pick(rng) % 9;
    if (pick(rng) % 2) s.dominance = 1 + pick(rng) % 9;
    r.per_model_vad[m] = s;
    r.per_model_emotion[m] = kAllEmotions[static_cast<std::size_t>(pick(rng)) % kAllEmotions.size()];
  }
  if (pick(rng) % 2) r.aggregated_vad = VadScores{grid(1, 9, 4), grid(1, 9, 4), grid(1, 9, 4)};
  r.people_count = pick(rng) % 3;
  for (int i = 0; i < r.people_count; ++i) {
    PersonRecord p;
    p.age_group = pick(rng) % 2 ? "adult" : "child";
    p.gender = pick(rng) % 2 ? Gender::male : Gender::female;
    r.persons.push_back(p);
  }
  if (pick(rng) % 2) r.objects = {{"tree", 1 + pick(rng) % 4}, {"boat", pick(rng) % 3}};
  if (pick(rng) % 2) r.descriptions["InternVL3-8B"] = "A scene number " + std::to_string(pick(rng) % 1000) + ".";
  if (pick(rng) % 2) r.clip_similarity = grid(-1, 1, 4);
  if (pick(rng) % 2) r.aesthetic_score = grid(0, 10, 4);
  if (pick(rng) % 2) r.liqe_score = grid(1, 5, 4);
  return r;
}

// Writes `count` JPEG + JSON pairs under root/<scene>/. With
// `with_features` the JSONs already hold the features of the encoded JPEG;
// otherwise they hold placeholder features for extraction to overwrite.
inline void write_corpus(const fs::path& root, int count, bool with_features = true, int width = 48, int height = 40) {
  using namespace emoscene;
  std::mt19937_64 rng(42);
  const std::vector<std::string> scenes = {"beach", "forest", "city"};
  for (int i = 0; i < count; ++i) {
    const auto scene = scenes[static_cast<std::size_t>(i) % scenes.size()];
    char stem[32];
    std::snprintf(stem, sizeof stem, "img_%04d", i);
    const auto img = synthetic_image(i, width, height);
    const auto jpeg = encode_jpeg(img, 92);
    write_file(root / scene / (std::string{stem} + ".jpg"), jpeg);
    auto rec = random_record(rng, stem);
    rec.scene = scene;
    if (with_features) rec.set_perceptual(quantize_features(extract_all(decode_image(jpeg))));
    write_file(root / scene / (std::string{stem} + ".json"), serialize_record(rec));
  }
}

inline emoscene::ReviewItem review_item(const std::string& stem, int candidates = 2) {
  using namespace emoscene;
  std::vector<Emotion> c = {Emotion::awe};
  if (candidates > 1) c.push_back(Emotion::contentment);
  return make_review_item(stem, "beach", stem + ".jpg", c, VadVector{8, 7, 7});
}

inline emoscene::ReviewDecision all_yes(const emoscene::ReviewItem& item, const std::string& reviewer = "r1") {
  using namespace emoscene;
  ReviewDecision d{item.stem, reviewer, 1, {}};
  for (auto f : item.presented_fields()) d.verdicts.push_back({f, Answer::yes, "", std::nullopt});
  return d;
}

}  // namespace fixtures
