#pragma once

// Annotation data model for paired <scene>/<stem>.jpg + <stem>.json files,
// with a validating parser and a deterministic serializer.

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoscene/error.hpp"
#include "emoscene/numeric.hpp"

namespace emoscene {

using json = nlohmann::json;

// ---------------------------------------------------------------------------
// Emotion labels
// ---------------------------------------------------------------------------

enum class Emotion {
  amusement,
  anger,
  awe,
  contentment,
  disgust,
  excitement,
  fear,
  sadness,
  neutral,
  unknown,
};

inline constexpr std::array<Emotion, 10> kAllEmotions = {
    Emotion::amusement, Emotion::anger,   Emotion::awe,     Emotion::contentment, Emotion::disgust,
    Emotion::excitement, Emotion::fear,   Emotion::sadness, Emotion::neutral,     Emotion::unknown};

inline constexpr std::array<std::string_view, 10> kEmotionNames = {
    "amusement", "anger", "awe", "contentment", "disgust",
    "excitement", "fear", "sadness", "neutral", "unknown"};

inline std::string_view to_string(Emotion e) { return kEmotionNames[static_cast<std::size_t>(e)]; }

inline std::string to_lower(std::string_view s) {
  std::string out{s};
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

// Case-insensitive; returns nullopt for anything outside the ten labels.
inline std::optional<Emotion> parse_emotion(std::string_view text) {
  const auto lower = to_lower(text);
  for (std::size_t i = 0; i < kEmotionNames.size(); ++i) {
    if (kEmotionNames[i] == lower) return kAllEmotions[i];
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------
// Affect
// ---------------------------------------------------------------------------

inline constexpr double kVadMin = 1.0;
inline constexpr double kVadMax = 9.0;

// A point on the 1-9 SAM scale.
struct VadVector {
  double valence = 5.0;
  double arousal = 5.0;
  double dominance = 5.0;

  bool operator==(const VadVector&) const = default;
};

// Normalized form u = (x - 1) / 8 in [0,1]^3.
struct NormalizedVad {
  double v = 0.5;
  double a = 0.5;
  double d = 0.5;
};

inline NormalizedVad normalize(const VadVector& x) {
  return {(x.valence - 1.0) / 8.0, (x.arousal - 1.0) / 8.0, (x.dominance - 1.0) / 8.0};
}

inline bool in_vad_range(double x) { return std::isfinite(x) && x >= kVadMin && x <= kVadMax; }

// VAD as stored per model: any dimension may be missing (some models do not
// report dominance).
struct VadScores {
  std::optional<double> valence;
  std::optional<double> arousal;
  std::optional<double> dominance;

  bool operator==(const VadScores&) const = default;

  std::optional<VadVector> complete() const {
    if (!valence || !arousal || !dominance) return std::nullopt;
    return VadVector{*valence, *arousal, *dominance};
  }
  bool empty() const { return !valence && !arousal && !dominance; }
};

// ---------------------------------------------------------------------------
// Perceptual space
// ---------------------------------------------------------------------------

inline constexpr std::size_t kColorCount = 11;

inline constexpr std::array<std::string_view, kColorCount> kColorNames = {
    "Black", "White", "Gray", "Red", "Orange", "Yellow", "Green", "Blue", "Purple", "Pink", "Brown"};

// Black, White and Gray; the remaining eight are the chromatic hues.
inline constexpr std::size_t kAchromaticCount = 3;

inline std::optional<std::size_t> color_index(std::string_view name) {
  for (std::size_t i = 0; i < kColorCount; ++i) {
    if (kColorNames[i] == name) return i;
  }
  return std::nullopt;
}

struct ColorProportion {
  std::array<double, kColorCount> values{};

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  double at(std::string_view name) const { return values.at(color_index(name).value()); }
  double sum() const {
    double s = 0.0;
    for (double v : values) s += v;
    return s;
  }

  bool operator==(const ColorProportion&) const = default;
};

// hue in degrees [0,360); saturation and value on a 0-100 scale.
struct HsvSummary {
  double hue = 0.0;
  double saturation = 0.0;
  double value = 0.0;

  bool operator==(const HsvSummary&) const = default;
};

struct StructuralFeatures {
  double curvilinearity = 0.0;
  double complexity_entropy = 0.0;
  double complexity_edge_density = 0.0;

  bool operator==(const StructuralFeatures&) const = default;
};

struct PerceptualFeatures {
  ColorProportion color_proportion;
  HsvSummary average_color;
  StructuralFeatures structural;

  bool operator==(const PerceptualFeatures&) const = default;
};

// ---------------------------------------------------------------------------
// People and records
// ---------------------------------------------------------------------------

enum class Gender { male, female, unknown };

inline std::string_view to_string(Gender g) {
  switch (g) {
    case Gender::male: return "male";
    case Gender::female: return "female";
    case Gender::unknown: return "unknown";
  }
  return "unknown";
}

inline std::optional<Gender> parse_gender(std::string_view text) {
  const auto lower = to_lower(text);
  if (lower == "male") return Gender::male;
  if (lower == "female") return Gender::female;
  if (lower == "unknown") return Gender::unknown;
  return std::nullopt;
}

struct PersonRecord {
  std::optional<Gender> gender;
  std::optional<std::string> age_group;
  std::optional<Emotion> expression;
  std::optional<std::string> interaction;
  json extras = json::object();

  bool operator==(const PersonRecord&) const = default;
};

struct AnnotationRecord {
  std::string stem;
  std::string scene;
  Emotion emotion = Emotion::unknown;
  std::map<std::string, VadScores> per_model_vad;
  std::map<std::string, Emotion> per_model_emotion;
  std::optional<VadScores> aggregated_vad;
  ColorProportion color_proportion;
  HsvSummary average_color;
  StructuralFeatures structural;
  int people_count = 0;
  std::vector<PersonRecord> persons;
  std::map<std::string, int> objects;
  std::map<std::string, std::string> descriptions;
  std::optional<double> clip_similarity;
  std::optional<double> aesthetic_score;
  std::optional<double> liqe_score;
  // Fields this version does not interpret, kept verbatim for round-trip.
  json extras = json::object();

  bool operator==(const AnnotationRecord&) const = default;

  PerceptualFeatures perceptual() const { return {color_proportion, average_color, structural}; }
  void set_perceptual(const PerceptualFeatures& f) {
    color_proportion = f.color_proportion;
    average_color = f.average_color;
    structural = f.structural;
  }
};

// Tolerance on the colour-proportion sum for ingested files; stored values
// are rounded to two decimals.
inline constexpr double kColorSumTolerance = 0.02;

namespace detail {

[[noreturn]] inline void violation(const std::string& field, const std::string& reason) {
  throw Error(ErrorCode::SchemaViolation, field, reason);
}

inline double require_number(const json& v, const std::string& field) {
  if (!v.is_number()) violation(field, "expected a number");
  const double x = v.get<double>();
  if (!std::isfinite(x)) violation(field, "non-finite number");
  return x;
}

inline double require_range(const json& v, const std::string& field, double lo, double hi) {
  const double x = require_number(v, field);
  if (x < lo || x > hi) violation(field, "out-of-range (" + format_decimal(x, 6) + ")");
  return x;
}

inline std::string require_string(const json& v, const std::string& field) {
  if (!v.is_string()) violation(field, "expected a string");
  return v.get<std::string>();
}

inline int require_count(const json& v, const std::string& field) {
  if (!v.is_number_integer() && !v.is_number_unsigned()) {
    if (v.is_number_float() && std::floor(v.get<double>()) == v.get<double>() && v.get<double>() >= 0) {
      return static_cast<int>(v.get<double>());
    }
    violation(field, "expected a non-negative integer");
  }
  const auto x = v.get<long long>();
  if (x < 0 || x > 1'000'000'000) violation(field, "out-of-range");
  return static_cast<int>(x);
}

inline Emotion require_emotion(const json& v, const std::string& field) {
  const auto text = require_string(v, field);
  auto e = parse_emotion(text);
  if (!e) violation(field, "unknown emotion '" + text + "'");
  return *e;
}

inline const json& require_key(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end()) violation(key, "missing required field");
  return *it;
}

enum class PerModelKind { valence, arousal, dominance, emotion, description };

struct PerModelKey {
  PerModelKind kind;
  std::string suffix;
};

inline std::optional<PerModelKey> split_per_model_key(std::string_view key) {
  static constexpr std::array<std::pair<std::string_view, PerModelKind>, 5> prefixes = {{
      {"valence_", PerModelKind::valence},
      {"arousal_", PerModelKind::arousal},
      {"dominance_", PerModelKind::dominance},
      {"emotion_", PerModelKind::emotion},
      {"description_", PerModelKind::description},
  }};
  for (const auto& [prefix, kind] : prefixes) {
    if (key.size() > prefix.size() && key.substr(0, prefix.size()) == prefix) {
      return PerModelKey{kind, std::string{key.substr(prefix.size())}};
    }
  }
  return std::nullopt;
}

inline PersonRecord parse_person(const json& v, std::size_t index) {
  const std::string base = "persons[" + std::to_string(index) + "]";
  if (!v.is_object()) violation(base, "expected an object");
  PersonRecord p;
  for (const auto& [key, value] : v.items()) {
    if (key == "gender") {
      const auto text = require_string(value, base + ".gender");
      p.gender = parse_gender(text);
      if (!p.gender) violation(base + ".gender", "unknown gender '" + text + "'");
    } else if (key == "age_group") {
      p.age_group = require_string(value, base + ".age_group");
    } else if (key == "expression") {
      p.expression = require_emotion(value, base + ".expression");
    } else if (key == "interaction") {
      p.interaction = require_string(value, base + ".interaction");
    } else {
      p.extras[key] = value;
    }
  }
  return p;
}

inline void check_vad(std::optional<double>& slot, const json& value, const std::string& dim,
                      const std::string& key, bool integral) {
  if (!value.is_number()) violation(dim, "expected a number at '" + key + "'");
  const double x = value.get<double>();
  if (!in_vad_range(x)) violation(dim, "out-of-range (" + key + "=" + format_decimal(x, 6) + ")");
  if (integral && std::floor(x) != x) violation(dim, "per-model score must be an integer at '" + key + "'");
  slot = x;
}

}  // namespace detail

// Parses and validates one annotation JSON document. `stem` is taken from the
// file name; it is not stored inside the JSON.
inline AnnotationRecord parse_record(std::string_view raw, std::string stem = {}) {
  json doc;
  try {
    doc = json::parse(raw.begin(), raw.end());
  } catch (const json::parse_error& e) {
    throw Error(ErrorCode::MalformedSyntax, e.what());
  }
  if (!doc.is_object()) throw Error(ErrorCode::SchemaViolation, "<root>", "expected a JSON object");

  using namespace detail;
  AnnotationRecord r;
  r.stem = std::move(stem);

  bool have_scene = false, have_emotion = false, have_colors = false, have_hsv = false;
  bool have_curv = false, have_entropy = false, have_density = false, have_people = false;
  bool have_persons = false;

  for (const auto& [key, value] : doc.items()) {
    if (key == "scene") {
      r.scene = require_string(value, key);
      if (r.scene.empty()) violation(key, "empty scene");
      have_scene = true;
    } else if (key == "emotion") {
      r.emotion = require_emotion(value, key);
      have_emotion = true;
    } else if (key == "color_proportion") {
      if (!value.is_object()) violation(key, "expected an object");
      for (const auto& [name, frac] : value.items()) {
        auto idx = color_index(name);
        if (!idx) violation(key, "unknown colour key '" + name + "'");
        r.color_proportion[*idx] = require_range(frac, key + "." + name, 0.0, 1.0);
      }
      for (auto name : kColorNames) {
        if (!value.contains(std::string{name})) violation(key, "missing colour key '" + std::string{name} + "'");
      }
      if (std::fabs(r.color_proportion.sum() - 1.0) > kColorSumTolerance) {
        violation(key, "proportions sum to " + format_decimal(r.color_proportion.sum(), 6));
      }
      have_colors = true;
    } else if (key == "average_color") {
      if (!value.is_object()) violation(key, "expected an object");
      r.average_color.hue = wrap_degrees(require_range(require_key(value, "hue"), key + ".hue", 0.0, 360.0));
      r.average_color.saturation = require_range(require_key(value, "saturation"), key + ".saturation", 0.0, 100.0);
      r.average_color.value = require_range(require_key(value, "value"), key + ".value", 0.0, 100.0);
      if (value.size() != 3) violation(key, "unexpected fields besides hue/saturation/value");
      have_hsv = true;
    } else if (key == "curvilinearity") {
      r.structural.curvilinearity = require_range(value, key, 0.0, 1.0);
      have_curv = true;
    } else if (key == "complexity_entropy") {
      r.structural.complexity_entropy = require_range(value, key, 0.0, 1.0);
      have_entropy = true;
    } else if (key == "complexity_edge_density") {
      r.structural.complexity_edge_density = require_range(value, key, 0.0, 1.0);
      have_density = true;
    } else if (key == "people_count") {
      r.people_count = require_count(value, key);
      have_people = true;
    } else if (key == "persons") {
      if (!value.is_array()) violation(key, "expected an array");
      for (std::size_t i = 0; i < value.size(); ++i) r.persons.push_back(parse_person(value[i], i));
      have_persons = true;
    } else if (key == "objects") {
      if (!value.is_object()) violation(key, "expected an object");
      for (const auto& [cat, count] : value.items()) r.objects[cat] = require_count(count, key + "." + cat);
    } else if (key == "clip_similarity") {
      r.clip_similarity = require_range(value, key, -1.0, 1.0);
    } else if (key == "aesthetic_score") {
      r.aesthetic_score = require_number(value, key);
    } else if (key == "liqe_score") {
      r.liqe_score = require_number(value, key);
    } else if (key == "valence" || key == "arousal" || key == "dominance") {
      if (!r.aggregated_vad) r.aggregated_vad = VadScores{};
      auto& agg = *r.aggregated_vad;
      auto& slot = key == "valence" ? agg.valence : key == "arousal" ? agg.arousal : agg.dominance;
      check_vad(slot, value, key, key, false);
    } else if (auto pm = split_per_model_key(key)) {
      switch (pm->kind) {
        case PerModelKind::valence:
          check_vad(r.per_model_vad[pm->suffix].valence, value, "valence", key, true);
          break;
        case PerModelKind::arousal:
          check_vad(r.per_model_vad[pm->suffix].arousal, value, "arousal", key, true);
          break;
        case PerModelKind::dominance:
          check_vad(r.per_model_vad[pm->suffix].dominance, value, "dominance", key, true);
          break;
        case PerModelKind::emotion:
          r.per_model_emotion[pm->suffix] = require_emotion(value, "emotion");
          break;
        case PerModelKind::description:
          r.descriptions[pm->suffix] = require_string(value, key);
          break;
      }
    } else {
      r.extras[key] = value;
    }
  }

  if (!have_scene) violation("scene", "missing required field");
  if (!have_emotion) violation("emotion", "missing required field");
  if (!have_colors) violation("color_proportion", "missing required field");
  if (!have_hsv) violation("average_color", "missing required field");
  if (!have_curv) violation("curvilinearity", "missing required field");
  if (!have_entropy) violation("complexity_entropy", "missing required field");
  if (!have_density) violation("complexity_edge_density", "missing required field");
  if (!have_people) violation("people_count", "missing required field");
  if (!have_persons && r.people_count > 0) violation("persons", "missing required field");
  if (r.people_count > 0 && static_cast<int>(r.persons.size()) != r.people_count) {
    violation("persons", "length " + std::to_string(r.persons.size()) + " does not match people_count " +
                             std::to_string(r.people_count));
  }
  if (r.people_count == 0 && !r.persons.empty()) violation("persons", "nonempty while people_count is 0");
  return r;
}

// Range checks shared by the serializer and by code that builds records in
// memory rather than parsing them.
inline void validate_record(const AnnotationRecord& r) {
  using detail::violation;
  auto finite = [](double x) { return std::isfinite(x); };
  if (r.scene.empty()) violation("scene", "empty scene");
  double sum = 0.0;
  for (std::size_t i = 0; i < kColorCount; ++i) {
    const double x = r.color_proportion[i];
    if (!finite(x) || x < 0.0 || x > 1.0) violation("color_proportion." + std::string{kColorNames[i]}, "out-of-range");
    sum += x;
  }
  if (std::fabs(sum - 1.0) > kColorSumTolerance) violation("color_proportion", "proportions do not sum to 1");
  const auto& hsv = r.average_color;
  if (!finite(hsv.hue) || hsv.hue < 0.0 || hsv.hue >= 360.0) violation("average_color.hue", "out-of-range");
  if (!finite(hsv.saturation) || hsv.saturation < 0.0 || hsv.saturation > 100.0)
    violation("average_color.saturation", "out-of-range");
  if (!finite(hsv.value) || hsv.value < 0.0 || hsv.value > 100.0) violation("average_color.value", "out-of-range");
  const auto& s = r.structural;
  for (auto [name, x] : {std::pair{"curvilinearity", s.curvilinearity},
                         std::pair{"complexity_entropy", s.complexity_entropy},
                         std::pair{"complexity_edge_density", s.complexity_edge_density}}) {
    if (!finite(x) || x < 0.0 || x > 1.0) violation(name, "out-of-range");
  }
  if (r.people_count < 0) violation("people_count", "negative");
  if (r.people_count > 0 && static_cast<int>(r.persons.size()) != r.people_count)
    violation("persons", "length does not match people_count");
  if (r.people_count == 0 && !r.persons.empty()) violation("persons", "nonempty while people_count is 0");
  auto check_scores = [&](const VadScores& v, bool integral) {
    for (auto [name, x] : {std::pair{"valence", v.valence}, std::pair{"arousal", v.arousal},
                           std::pair{"dominance", v.dominance}}) {
      if (!x) continue;
      if (!in_vad_range(*x)) violation(name, "out-of-range");
      if (integral && std::floor(*x) != *x) violation(name, "per-model score must be an integer");
    }
  };
  for (const auto& [model, v] : r.per_model_vad) {
    if (model.empty()) violation("valence", "empty model id");
    check_scores(v, true);
  }
  if (r.aggregated_vad) check_scores(*r.aggregated_vad, false);
  if (r.clip_similarity && (!finite(*r.clip_similarity) || std::fabs(*r.clip_similarity) > 1.0))
    violation("clip_similarity", "out-of-range");
  if (r.aesthetic_score && !finite(*r.aesthetic_score)) violation("aesthetic_score", "non-finite number");
  if (r.liqe_score && !finite(*r.liqe_score)) violation("liqe_score", "non-finite number");
  for (const auto& [cat, n] : r.objects) {
    if (n < 0) violation("objects." + cat, "negative count");
  }
}

// Decimal places used on output.
inline constexpr int kFeatureDecimals = 4;
inline constexpr int kColorDecimals = 2;

namespace detail {

class JsonEmitter {
 public:
  void open_object() { open('{'); }
  void close_object() { close('}'); }
  void open_array() { open('['); }
  void close_array() { close(']'); }

  void key(std::string_view k) {
    separator();
    out_ += json(std::string{k}).dump();
    out_ += ": ";
    pending_value_ = true;
  }

  void raw_value(std::string_view text) {
    if (!pending_value_) separator();
    pending_value_ = false;
    out_ += text;
  }
  void string_value(std::string_view s) { raw_value(json(std::string{s}).dump()); }
  void number(double x, int decimals) { raw_value(format_decimal(x, decimals)); }
  void integer(long long x) { raw_value(std::to_string(x)); }

  // Verbatim value from an extras bag, re-indented to the current depth.
  void json_value(const json& v) {
    std::string text = v.dump(2);
    std::string indented;
    const std::string pad(depth_ * 2, ' ');
    for (char c : text) {
      indented += c;
      if (c == '\n') indented += pad;
    }
    raw_value(indented);
  }

  std::string finish() { return out_ + "\n"; }

 private:
  void open(char c) {
    if (!pending_value_) separator();
    pending_value_ = false;
    out_ += c;
    ++depth_;
    first_.push_back(true);
  }
  void close(char c) {
    --depth_;
    const bool empty = first_.back();
    first_.pop_back();
    if (!empty) newline();
    out_ += c;
  }
  void separator() {
    if (first_.empty()) return;
    if (!first_.back()) out_ += ',';
    first_.back() = false;
    newline();
  }
  void newline() {
    out_ += '\n';
    out_.append(depth_ * 2, ' ');
  }

  std::string out_;
  int depth_ = 0;
  std::vector<bool> first_;
  bool pending_value_ = false;
};

inline void check_finite_for_output(double x, const std::string& field) {
  if (!std::isfinite(x)) throw Error(ErrorCode::SchemaViolation, field, "NaN/Inf is not representable");
}

}  // namespace detail

// Deterministic text form: fixed key order, 4 decimals for features and
// scores, 2 for colour proportions, integers for per-model raw scores.
inline std::string serialize_record(const AnnotationRecord& r) {
  using detail::check_finite_for_output;
  check_finite_for_output(r.average_color.hue, "average_color.hue");
  check_finite_for_output(r.average_color.saturation, "average_color.saturation");
  check_finite_for_output(r.average_color.value, "average_color.value");
  for (std::size_t i = 0; i < kColorCount; ++i)
    check_finite_for_output(r.color_proportion[i], "color_proportion." + std::string{kColorNames[i]});
  validate_record(r);

  detail::JsonEmitter w;
  w.open_object();
  if (r.clip_similarity) {
    w.key("clip_similarity");
    w.number(*r.clip_similarity, kFeatureDecimals);
  }
  w.key("scene");
  w.string_value(r.scene);
  w.key("emotion");
  w.string_value(to_string(r.emotion));
  for (const auto& [source, text] : r.descriptions) {
    w.key("description_" + source);
    w.string_value(text);
  }
  w.key("color_proportion");
  w.open_object();
  for (std::size_t i = 0; i < kColorCount; ++i) {
    w.key(kColorNames[i]);
    w.number(r.color_proportion[i], kColorDecimals);
  }
  w.close_object();
  w.key("average_color");
  w.open_object();
  w.key("hue");
  w.number(r.average_color.hue, kFeatureDecimals);
  w.key("saturation");
  w.number(r.average_color.saturation, kFeatureDecimals);
  w.key("value");
  w.number(r.average_color.value, kFeatureDecimals);
  w.close_object();
  w.key("people_count");
  w.integer(r.people_count);
  w.key("persons");
  w.open_array();
  for (const auto& p : r.persons) {
    w.open_object();
    if (p.gender) {
      w.key("gender");
      w.string_value(to_string(*p.gender));
    }
    if (p.age_group) {
      w.key("age_group");
      w.string_value(*p.age_group);
    }
    if (p.expression) {
      w.key("expression");
      w.string_value(to_string(*p.expression));
    }
    if (p.interaction) {
      w.key("interaction");
      w.string_value(*p.interaction);
    }
    for (const auto& [k, v] : p.extras.items()) {
      w.key(k);
      w.json_value(v);
    }
    w.close_object();
  }
  w.close_array();
  w.key("objects");
  w.open_object();
  for (const auto& [cat, n] : r.objects) {
    w.key(cat);
    w.integer(n);
  }
  w.close_object();
  w.key("curvilinearity");
  w.number(r.structural.curvilinearity, kFeatureDecimals);
  w.key("complexity_entropy");
  w.number(r.structural.complexity_entropy, kFeatureDecimals);
  w.key("complexity_edge_density");
  w.number(r.structural.complexity_edge_density, kFeatureDecimals);
  if (r.aesthetic_score) {
    w.key("aesthetic_score");
    w.number(*r.aesthetic_score, kFeatureDecimals);
  }
  if (r.liqe_score) {
    w.key("liqe_score");
    w.number(*r.liqe_score, kFeatureDecimals);
  }
  if (r.aggregated_vad) {
    const auto& a = *r.aggregated_vad;
    for (auto [name, x] : {std::pair{"valence", a.valence}, std::pair{"arousal", a.arousal},
                           std::pair{"dominance", a.dominance}}) {
      if (!x) continue;
      w.key(name);
      w.number(*x, kFeatureDecimals);
    }
  }
  // Per-model keys grouped by model id, in sorted order.
  std::vector<std::string> models;
  for (const auto& [m, _] : r.per_model_vad) models.push_back(m);
  for (const auto& [m, _] : r.per_model_emotion) models.push_back(m);
  std::sort(models.begin(), models.end());
  models.erase(std::unique(models.begin(), models.end()), models.end());
  for (const auto& m : models) {
    if (auto it = r.per_model_vad.find(m); it != r.per_model_vad.end()) {
      const auto& v = it->second;
      for (auto [name, x] : {std::pair{"valence_", v.valence}, std::pair{"arousal_", v.arousal},
                             std::pair{"dominance_", v.dominance}}) {
        if (!x) continue;
        w.key(name + m);
        w.integer(static_cast<long long>(*x));
      }
    }
    if (auto it = r.per_model_emotion.find(m); it != r.per_model_emotion.end()) {
      w.key("emotion_" + m);
      w.string_value(to_string(it->second));
    }
  }
  for (const auto& [k, v] : r.extras.items()) {
    w.key(k);
    w.json_value(v);
  }
  w.close_object();
  return w.finish();
}

// Rounds proportions to `decimals` places with the largest-remainder method
// so the stored values still sum to exactly one unit. Ties go to table order.
inline ColorProportion quantize_proportions(const ColorProportion& p, int decimals = kColorDecimals) {
  const double scale = std::pow(10.0, decimals);
  const auto total = static_cast<long long>(std::llround(scale));
  std::array<long long, kColorCount> units{};
  std::array<double, kColorCount> remainder{};
  long long assigned = 0;
  for (std::size_t i = 0; i < kColorCount; ++i) {
    const double scaled = p[i] * scale;
    units[i] = static_cast<long long>(std::floor(scaled + 1e-9));
    remainder[i] = scaled - static_cast<double>(units[i]);
    assigned += units[i];
  }
  std::array<std::size_t, kColorCount> order{};
  for (std::size_t i = 0; i < kColorCount; ++i) order[i] = i;
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return remainder[a] > remainder[b]; });
  for (std::size_t k = 0; assigned < total && k < kColorCount; ++k, ++assigned) ++units[order[k]];
  ColorProportion out;
  for (std::size_t i = 0; i < kColorCount; ++i) out[i] = static_cast<double>(units[i]) / scale;
  return out;
}

// Rounds features to the precision they are stored at.
inline PerceptualFeatures quantize_features(const PerceptualFeatures& f) {
  PerceptualFeatures q;
  q.color_proportion = quantize_proportions(f.color_proportion);
  q.average_color.hue = wrap_degrees(round_to(f.average_color.hue, kFeatureDecimals));
  q.average_color.saturation = round_to(f.average_color.saturation, kFeatureDecimals);
  q.average_color.value = round_to(f.average_color.value, kFeatureDecimals);
  q.structural.curvilinearity = round_to(f.structural.curvilinearity, kFeatureDecimals);
  q.structural.complexity_entropy = round_to(f.structural.complexity_entropy, kFeatureDecimals);
  q.structural.complexity_edge_density = round_to(f.structural.complexity_edge_density, kFeatureDecimals);
  return q;
}

}  // namespace emoscene
