#pragma once

// Human review of machine annotations: per-field yes/no verdicts, the
// pending -> {finalized, recheck} state machine, an append-only audit log
// that can be replayed, and agreement statistics.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <memory>
#include <cctype>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoscene/annotation.hpp"
#include "emoscene/corpus.hpp"
#include "emoscene/error.hpp"
#include "emoscene/numeric.hpp"
#include "emoscene/stats.hpp"

namespace emoscene {

namespace fs = std::filesystem;

enum class ItemState { pending, recheck, finalized };
enum class ReviewField { emotion_1, emotion_2, valence, arousal, dominance };
enum class Answer { yes, no };

inline constexpr std::array<ReviewField, 5> kAllFields = {ReviewField::emotion_1, ReviewField::emotion_2,
                                                          ReviewField::valence, ReviewField::arousal,
                                                          ReviewField::dominance};

inline std::string_view to_string(ItemState s) {
  switch (s) {
    case ItemState::pending: return "pending";
    case ItemState::recheck: return "recheck";
    case ItemState::finalized: return "finalized";
  }
  return "pending";
}

inline std::optional<ItemState> parse_item_state(std::string_view s) {
  if (s == "pending") return ItemState::pending;
  if (s == "recheck") return ItemState::recheck;
  if (s == "finalized") return ItemState::finalized;
  return std::nullopt;
}

inline std::string_view to_string(ReviewField f) {
  switch (f) {
    case ReviewField::emotion_1: return "emotion_1";
    case ReviewField::emotion_2: return "emotion_2";
    case ReviewField::valence: return "valence";
    case ReviewField::arousal: return "arousal";
    case ReviewField::dominance: return "dominance";
  }
  return "emotion_1";
}

inline std::optional<ReviewField> parse_review_field(std::string_view s) {
  for (auto f : kAllFields)
    if (to_string(f) == s) return f;
  return std::nullopt;
}

inline bool is_emotion_field(ReviewField f) { return f == ReviewField::emotion_1 || f == ReviewField::emotion_2; }

inline constexpr int kDefaultMaxRounds = 5;
inline constexpr std::chrono::minutes kDefaultLease{15};

struct ReviewItem {
  std::string stem;
  std::string scene;
  std::string image_ref;
  // One or two distinct labels shown for review.
  std::vector<Emotion> candidates;
  VadVector vad;
  ItemState state = ItemState::pending;
  int round = 1;
  // Both emotion suggestions were rejected without a replacement.
  bool senior_review = false;
  // Exceeded the recheck budget; no longer served by next_pending.
  bool adjudication = false;
  // The machine annotation as first enqueued, kept for agreement statistics.
  std::vector<Emotion> machine_candidates;
  VadVector machine_vad;

  bool operator==(const ReviewItem&) const = default;

  std::vector<ReviewField> presented_fields() const {
    std::vector<ReviewField> f{ReviewField::emotion_1};
    if (candidates.size() > 1) f.push_back(ReviewField::emotion_2);
    f.insert(f.end(), {ReviewField::valence, ReviewField::arousal, ReviewField::dominance});
    return f;
  }

  void validate() const {
    if (stem.empty()) throw Error(ErrorCode::SchemaViolation, "stem", "empty stem");
    if (candidates.empty() || candidates.size() > 2)
      throw Error(ErrorCode::SchemaViolation, "candidates", "need one or two emotion candidates");
    if (candidates.size() == 2 && candidates[0] == candidates[1])
      throw Error(ErrorCode::SchemaViolation, "candidates", "candidates must be distinct");
    for (double x : {vad.valence, vad.arousal, vad.dominance})
      if (!in_vad_range(x)) throw Error(ErrorCode::SchemaViolation, "vad", "scores must lie in [1,9]");
    if (round < 1) throw Error(ErrorCode::SchemaViolation, "round", "must be >= 1");
  }
};

// A new item for review; candidates are deduplicated and capped at two.
inline ReviewItem make_review_item(std::string stem, std::string scene, std::string image_ref,
                                   std::vector<Emotion> candidates, const VadVector& vad) {
  ReviewItem item;
  item.stem = std::move(stem);
  item.scene = std::move(scene);
  item.image_ref = std::move(image_ref);
  for (auto e : candidates)
    if (std::find(item.candidates.begin(), item.candidates.end(), e) == item.candidates.end() &&
        item.candidates.size() < 2)
      item.candidates.push_back(e);
  item.vad = vad;
  item.machine_candidates = item.candidates;
  item.machine_vad = vad;
  item.validate();
  return item;
}

// Builds a review item from an annotation record: the per-model emotion
// labels (most frequent first, ties by label order) and the analytic VAD.
inline ReviewItem review_item_from_record(const AnnotationRecord& r, const std::string& image_ref) {
  std::map<Emotion, int> votes;
  for (const auto& [model, e] : r.per_model_emotion) ++votes[e];
  std::vector<std::pair<int, Emotion>> ranked;
  for (const auto& [e, n] : votes) ranked.emplace_back(-n, e);
  std::sort(ranked.begin(), ranked.end());
  std::vector<Emotion> candidates;
  for (const auto& [n, e] : ranked) candidates.push_back(e);
  if (candidates.empty()) candidates.push_back(r.emotion);
  const auto vad = analytic_vad(r).value_or(VadVector{});
  return make_review_item(r.stem, r.scene, image_ref, candidates, vad);
}

using CorrectedValue = std::variant<Emotion, double>;

struct FieldVerdict {
  ReviewField field = ReviewField::emotion_1;
  Answer verdict = Answer::yes;
  std::string rationale;
  std::optional<CorrectedValue> corrected;

  bool operator==(const FieldVerdict&) const = default;
};

struct ReviewDecision {
  std::string stem;
  std::string reviewer;
  std::int64_t timestamp_ms = 0;
  std::vector<FieldVerdict> verdicts;

  bool operator==(const ReviewDecision&) const = default;
};

enum class EntryKind { enqueue, decision };

struct AuditEntry {
  std::uint64_t seq = 0;
  EntryKind kind = EntryKind::decision;
  std::optional<ReviewDecision> decision;
  // Item state after the entry took effect.
  ReviewItem item;

  bool operator==(const AuditEntry&) const = default;
};

// ---------------------------------------------------------------------------
// Transition
// ---------------------------------------------------------------------------

namespace detail {

inline bool blank(std::string_view s) {
  return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

}  // namespace detail

// Checks a decision against the item without changing anything.
inline void check_decision(const ReviewItem& item, const ReviewDecision& d) {
  if (item.state == ItemState::finalized) throw Error(ErrorCode::AlreadyFinalized, item.stem, "item is finalized");
  if (d.stem != item.stem) throw Error(ErrorCode::IncompleteDecision, "stem", "decision is for another item");
  const auto presented = item.presented_fields();
  std::set<ReviewField> seen;
  for (const auto& v : d.verdicts) {
    const auto name = std::string{to_string(v.field)};
    if (std::find(presented.begin(), presented.end(), v.field) == presented.end())
      throw Error(ErrorCode::IncompleteDecision, name, "field was not presented");
    if (!seen.insert(v.field).second) throw Error(ErrorCode::IncompleteDecision, name, "field answered twice");
  }
  for (auto f : presented) {
    const auto name = std::string{to_string(f)};
    auto it = std::find_if(d.verdicts.begin(), d.verdicts.end(), [&](const auto& v) { return v.field == f; });
    if (it == d.verdicts.end()) throw Error(ErrorCode::IncompleteDecision, name, "no verdict for field");
    if (it->verdict == Answer::yes) {
      if (it->corrected) throw Error(ErrorCode::InvalidVerdict, name, "a corrected value requires a no verdict");
      continue;
    }
    if (detail::blank(it->rationale)) throw Error(ErrorCode::MissingRationale, name, "a no verdict needs a rationale");
    if (!it->corrected) continue;
    if (is_emotion_field(f)) {
      if (!std::holds_alternative<Emotion>(*it->corrected))
        throw Error(ErrorCode::InvalidVerdict, name, "correction must be an emotion label");
    } else {
      if (!std::holds_alternative<double>(*it->corrected) || !in_vad_range(std::get<double>(*it->corrected)))
        throw Error(ErrorCode::InvalidVerdict, name, "correction must be a score in [1,9]");
    }
  }
}

// Pure transition. All yes finalizes; any no sends the item to recheck with
// the next round's candidates built from the accepted labels followed by
// the corrections.
inline ReviewItem apply_decision(const ReviewItem& item, const ReviewDecision& d, int max_rounds = kDefaultMaxRounds) {
  check_decision(item, d);
  auto verdict_for = [&](ReviewField f) -> const FieldVerdict* {
    for (const auto& v : d.verdicts)
      if (v.field == f) return &v;
    return nullptr;
  };
  ReviewItem next = item;
  const bool all_yes =
      std::all_of(d.verdicts.begin(), d.verdicts.end(), [](const auto& v) { return v.verdict == Answer::yes; });
  if (all_yes) {
    next.state = ItemState::finalized;
    return next;
  }
  next.state = ItemState::recheck;
  next.round = item.round + 1;

  std::vector<Emotion> accepted, corrections;
  for (std::size_t k = 0; k < item.candidates.size(); ++k) {
    const auto* v = verdict_for(k == 0 ? ReviewField::emotion_1 : ReviewField::emotion_2);
    if (v->verdict == Answer::yes)
      accepted.push_back(item.candidates[k]);
    else if (v->corrected)
      corrections.push_back(std::get<Emotion>(*v->corrected));
  }
  std::vector<Emotion> candidates;
  for (auto e : accepted) candidates.push_back(e);
  for (auto e : corrections)
    if (std::find(candidates.begin(), candidates.end(), e) == candidates.end()) candidates.push_back(e);
  if (candidates.size() > 2) candidates.resize(2);
  if (candidates.empty()) {
    candidates = {Emotion::unknown};
    next.senior_review = true;
  }
  next.candidates = candidates;

  auto vad_field = [&](ReviewField f, double& slot) {
    const auto* v = verdict_for(f);
    if (v->verdict == Answer::no && v->corrected) slot = std::get<double>(*v->corrected);
  };
  vad_field(ReviewField::valence, next.vad.valence);
  vad_field(ReviewField::arousal, next.vad.arousal);
  vad_field(ReviewField::dominance, next.vad.dominance);
  if (next.round > max_rounds) next.adjudication = true;
  return next;
}

// ---------------------------------------------------------------------------
// JSON forms
// ---------------------------------------------------------------------------

inline nlohmann::json emotions_to_json(const std::vector<Emotion>& es) {
  auto a = nlohmann::json::array();
  for (auto e : es) a.push_back(std::string{to_string(e)});
  return a;
}

inline std::vector<Emotion> emotions_from_json(const nlohmann::json& a, const std::string& field) {
  if (!a.is_array()) throw Error(ErrorCode::SchemaViolation, field, "expected an array of labels");
  std::vector<Emotion> out;
  for (const auto& x : a) {
    auto e = x.is_string() ? parse_emotion(x.get<std::string>()) : std::nullopt;
    if (!e) throw Error(ErrorCode::SchemaViolation, field, "unknown emotion label");
    out.push_back(*e);
  }
  return out;
}

inline nlohmann::json vad_to_json(const VadVector& v) {
  return {{"valence", v.valence}, {"arousal", v.arousal}, {"dominance", v.dominance}};
}

inline VadVector vad_from_json(const nlohmann::json& j, const std::string& field) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaViolation, field, "expected an object");
  VadVector v;
  for (auto [key, slot] : {std::pair{"valence", &v.valence}, std::pair{"arousal", &v.arousal},
                           std::pair{"dominance", &v.dominance}}) {
    if (!j.contains(key) || !j[key].is_number()) throw Error(ErrorCode::SchemaViolation, field, "missing score");
    *slot = j[key].get<double>();
  }
  return v;
}

inline nlohmann::json to_json(const ReviewItem& item) {
  return {{"stem", item.stem},
          {"scene", item.scene},
          {"image_ref", item.image_ref},
          {"candidates", emotions_to_json(item.candidates)},
          {"vad", vad_to_json(item.vad)},
          {"state", std::string{to_string(item.state)}},
          {"round", item.round},
          {"senior_review", item.senior_review},
          {"adjudication", item.adjudication},
          {"machine_candidates", emotions_to_json(item.machine_candidates)},
          {"machine_vad", vad_to_json(item.machine_vad)}};
}

inline ReviewItem review_item_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::SchemaViolation, "item", "expected an object");
  try {
    ReviewItem item;
    item.stem = j.at("stem").get<std::string>();
    item.scene = j.value("scene", std::string{});
    item.image_ref = j.value("image_ref", std::string{});
    item.candidates = emotions_from_json(j.at("candidates"), "candidates");
    item.vad = vad_from_json(j.at("vad"), "vad");
    auto state = parse_item_state(j.at("state").get<std::string>());
    if (!state) throw Error(ErrorCode::SchemaViolation, "state", "unknown state");
    item.state = *state;
    item.round = j.at("round").get<int>();
    item.senior_review = j.value("senior_review", false);
    item.adjudication = j.value("adjudication", false);
    item.machine_candidates = emotions_from_json(j.value("machine_candidates", j.at("candidates")), "machine_candidates");
    item.machine_vad = j.contains("machine_vad") ? vad_from_json(j["machine_vad"], "machine_vad") : item.vad;
    item.validate();
    return item;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaViolation, "item", e.what());
  }
}

inline nlohmann::json to_json(const FieldVerdict& v) {
  nlohmann::json j = {{"field", std::string{to_string(v.field)}}, {"verdict", v.verdict == Answer::yes ? "yes" : "no"}};
  if (!v.rationale.empty()) j["rationale"] = v.rationale;
  if (v.corrected) {
    if (std::holds_alternative<Emotion>(*v.corrected))
      j["corrected_value"] = std::string{to_string(std::get<Emotion>(*v.corrected))};
    else
      j["corrected_value"] = std::get<double>(*v.corrected);
  }
  return j;
}

// Structural problems in a verdict are reported against the named field.
inline FieldVerdict field_verdict_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::IncompleteDecision, "verdicts", "each verdict must be an object");
  if (!j.contains("field") || !j["field"].is_string())
    throw Error(ErrorCode::IncompleteDecision, "verdicts", "verdict without a field name");
  const auto name = j["field"].get<std::string>();
  auto field = parse_review_field(name);
  if (!field) throw Error(ErrorCode::IncompleteDecision, name, "unknown field");
  FieldVerdict v;
  v.field = *field;
  const auto verdict = j.contains("verdict") && j["verdict"].is_string() ? j["verdict"].get<std::string>() : "";
  if (verdict == "yes")
    v.verdict = Answer::yes;
  else if (verdict == "no")
    v.verdict = Answer::no;
  else
    throw Error(ErrorCode::IncompleteDecision, name, "verdict must be yes or no");
  if (j.contains("rationale") && !j["rationale"].is_null()) {
    if (!j["rationale"].is_string()) throw Error(ErrorCode::InvalidVerdict, name, "rationale must be a string");
    v.rationale = j["rationale"].get<std::string>();
  }
  if (j.contains("corrected_value") && !j["corrected_value"].is_null()) {
    const auto& c = j["corrected_value"];
    if (is_emotion_field(v.field)) {
      auto e = c.is_string() ? parse_emotion(c.get<std::string>()) : std::nullopt;
      if (!e) throw Error(ErrorCode::InvalidVerdict, name, "correction must be an emotion label");
      v.corrected = *e;
    } else {
      if (!c.is_number()) throw Error(ErrorCode::InvalidVerdict, name, "correction must be a score in [1,9]");
      v.corrected = c.get<double>();
    }
  }
  return v;
}

inline nlohmann::json to_json(const ReviewDecision& d) {
  auto verdicts = nlohmann::json::array();
  for (const auto& v : d.verdicts) verdicts.push_back(to_json(v));
  return {{"stem", d.stem}, {"reviewer", d.reviewer}, {"timestamp_ms", d.timestamp_ms}, {"verdicts", verdicts}};
}

inline ReviewDecision review_decision_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw Error(ErrorCode::IncompleteDecision, "body", "expected a JSON object");
  ReviewDecision d;
  if (j.contains("stem") && j["stem"].is_string()) d.stem = j["stem"].get<std::string>();
  if (j.contains("reviewer") && j["reviewer"].is_string()) d.reviewer = j["reviewer"].get<std::string>();
  if (j.contains("timestamp_ms") && j["timestamp_ms"].is_number_integer())
    d.timestamp_ms = j["timestamp_ms"].get<std::int64_t>();
  if (!j.contains("verdicts") || !j["verdicts"].is_array())
    throw Error(ErrorCode::IncompleteDecision, "verdicts", "missing verdicts array");
  for (const auto& v : j["verdicts"]) d.verdicts.push_back(field_verdict_from_json(v));
  return d;
}

inline nlohmann::json to_json(const AuditEntry& e) {
  nlohmann::json j = {{"seq", e.seq}, {"kind", e.kind == EntryKind::enqueue ? "enqueue" : "decision"}};
  if (e.decision) j["decision"] = to_json(*e.decision);
  j["item"] = to_json(e.item);
  return j;
}

inline AuditEntry audit_entry_from_json(const nlohmann::json& j) {
  try {
    AuditEntry e;
    e.seq = j.at("seq").get<std::uint64_t>();
    const auto kind = j.at("kind").get<std::string>();
    if (kind == "enqueue")
      e.kind = EntryKind::enqueue;
    else if (kind == "decision")
      e.kind = EntryKind::decision;
    else
      throw Error(ErrorCode::SchemaViolation, "kind", "unknown entry kind");
    if (j.contains("decision")) e.decision = review_decision_from_json(j["decision"]);
    if (e.kind == EntryKind::decision && !e.decision)
      throw Error(ErrorCode::SchemaViolation, "decision", "decision entry without a decision");
    e.item = review_item_from_json(j.at("item"));
    return e;
  } catch (const nlohmann::json::exception& ex) {
    throw Error(ErrorCode::SchemaViolation, "audit", ex.what());
  }
}

inline std::vector<AuditEntry> read_audit_log(const fs::path& path) {
  std::vector<AuditEntry> entries;
  std::istringstream in(read_file(path));
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorCode::MalformedSyntax, "line " + std::to_string(line_no), e.what());
    }
    entries.push_back(audit_entry_from_json(j));
  }
  return entries;
}

// ---------------------------------------------------------------------------
// Queue
// ---------------------------------------------------------------------------

class ReviewQueue {
 public:
  using Clock = std::function<std::chrono::system_clock::time_point()>;

  struct Options {
    std::chrono::milliseconds lease = kDefaultLease;
    int max_rounds = kDefaultMaxRounds;
    // Audit log appended (and flushed) per entry when set.
    std::optional<fs::path> log_path;
    // Rewritten after every state change when set.
    std::optional<fs::path> snapshot_path;
    Clock clock = [] { return std::chrono::system_clock::now(); };
  };

  ReviewQueue() : ReviewQueue(Options{}) {}
  explicit ReviewQueue(Options options) : options_(std::move(options)) {
    if (options_.log_path) {
      if (options_.log_path->has_parent_path()) fs::create_directories(options_.log_path->parent_path());
      log_out_.open(*options_.log_path, std::ios::app | std::ios::binary);
      if (!log_out_) throw Error(ErrorCode::IoError, options_.log_path->string(), "cannot open audit log");
    }
  }

  // Rebuilds state from an existing log (verifying every recorded snapshot)
  // and keeps appending to it.
  static std::unique_ptr<ReviewQueue> open(Options options) {
    std::vector<AuditEntry> history;
    if (options.log_path && fs::exists(*options.log_path)) history = read_audit_log(*options.log_path);
    auto q = std::make_unique<ReviewQueue>(std::move(options));
    q->restore(history);
    return q;
  }

  // Replays entries from an empty queue without touching any file.
  static std::map<std::string, ReviewItem> replay(const std::vector<AuditEntry>& entries,
                                                  int max_rounds = kDefaultMaxRounds) {
    std::map<std::string, ReviewItem> items;
    std::uint64_t expected = 1;
    for (const auto& e : entries) {
      if (e.seq != expected)
        throw Error(ErrorCode::ReplayMismatch, "seq", "expected " + std::to_string(expected) + ", found " +
                                                          std::to_string(e.seq));
      ++expected;
      if (e.kind == EntryKind::enqueue) {
        if (items.contains(e.item.stem)) throw Error(ErrorCode::ReplayMismatch, e.item.stem, "enqueued twice");
        items.emplace(e.item.stem, e.item);
        continue;
      }
      auto it = items.find(e.decision->stem);
      if (it == items.end()) throw Error(ErrorCode::ReplayMismatch, e.decision->stem, "decision for unknown item");
      auto next = apply_decision(it->second, *e.decision, max_rounds);
      if (!(next == e.item))
        throw Error(ErrorCode::ReplayMismatch, e.decision->stem, "recorded state differs from replayed state");
      it->second = std::move(next);
    }
    return items;
  }

  void enqueue(ReviewItem item) {
    item.validate();
    std::unique_lock lock(mutex_);
    if (items_.contains(item.stem)) throw Error(ErrorCode::SchemaViolation, item.stem, "item already queued");
    AuditEntry entry{log_.size() + 1, EntryKind::enqueue, std::nullopt, item};
    append(entry);
    items_.emplace(item.stem, std::move(item));
    write_snapshot_locked();
  }

  // Highest-priority item not leased to someone else; the item is leased to
  // `reviewer` until the lease lapses or a decision is recorded.
  std::optional<ReviewItem> next_pending(const std::string& reviewer) {
    std::unique_lock lock(mutex_);
    const auto now = options_.clock();
    const ReviewItem* best = nullptr;
    for (const auto& [stem, item] : items_) {
      if (item.state == ItemState::finalized || item.adjudication) continue;
      auto lease = leases_.find(stem);
      if (lease != leases_.end() && lease->second.reviewer != reviewer && lease->second.expires > now) continue;
      if (!best || ahead(item, *best)) best = &item;
    }
    if (!best) return std::nullopt;
    leases_[best->stem] = Lease{reviewer, now + options_.lease};
    return *best;
  }

  // Validates, logs and commits a decision; nothing changes if any step fails.
  ReviewItem submit(ReviewDecision decision) {
    std::unique_lock lock(mutex_);
    auto it = items_.find(decision.stem);
    if (it == items_.end()) throw Error(ErrorCode::UnknownItem, decision.stem, "no such item");
    if (decision.timestamp_ms == 0)
      decision.timestamp_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                                  options_.clock().time_since_epoch())
                                  .count();
    auto next = apply_decision(it->second, decision, options_.max_rounds);
    AuditEntry entry{log_.size() + 1, EntryKind::decision, decision, next};
    append(entry);
    it->second = next;
    leases_.erase(decision.stem);
    write_snapshot_locked();
    return next;
  }

  std::optional<ReviewItem> find(const std::string& stem) const {
    std::shared_lock lock(mutex_);
    auto it = items_.find(stem);
    if (it == items_.end()) return std::nullopt;
    return it->second;
  }

  std::map<std::string, ReviewItem> items() const {
    std::shared_lock lock(mutex_);
    return items_;
  }

  std::vector<AuditEntry> log() const {
    std::shared_lock lock(mutex_);
    return log_;
  }

  std::string snapshot_json() const {
    std::shared_lock lock(mutex_);
    return snapshot_locked();
  }

 private:
  struct Lease {
    std::string reviewer;
    std::chrono::system_clock::time_point expires;
  };

  static bool ahead(const ReviewItem& a, const ReviewItem& b) {
    const bool ra = a.state == ItemState::recheck, rb = b.state == ItemState::recheck;
    if (ra != rb) return ra;
    if (a.round != b.round) return a.round > b.round;
    return a.stem < b.stem;
  }

  void restore(const std::vector<AuditEntry>& history) {
    auto items = replay(history, options_.max_rounds);
    std::unique_lock lock(mutex_);
    items_ = std::move(items);
    log_ = history;
  }

  void append(const AuditEntry& entry) {
    if (log_out_.is_open()) {
      log_out_ << to_json(entry).dump() << '\n';
      log_out_.flush();
      if (!log_out_) throw Error(ErrorCode::IoError, options_.log_path->string(), "audit append failed");
    }
    log_.push_back(entry);
  }

  std::string snapshot_locked() const {
    nlohmann::json items = nlohmann::json::array();
    for (const auto& [stem, item] : items_) items.push_back(to_json(item));
    nlohmann::json doc = {{"last_seq", log_.size()}, {"items", items}};
    return doc.dump(2) + "\n";
  }

  void write_snapshot_locked() {
    if (options_.snapshot_path) write_file(*options_.snapshot_path, snapshot_locked());
  }

  Options options_;
  mutable std::shared_mutex mutex_;
  std::map<std::string, ReviewItem> items_;
  std::map<std::string, Lease> leases_;
  std::vector<AuditEntry> log_;
  std::ofstream log_out_;
};

// Per-field export of what reviewers changed on finalized items.
inline nlohmann::json export_corrections(const std::map<std::string, ReviewItem>& items) {
  auto out = nlohmann::json::array();
  for (const auto& [stem, item] : items) {
    if (item.state != ItemState::finalized) continue;
    auto emit = [&](std::string_view field, nlohmann::json machine, nlohmann::json final_value) {
      if (machine == final_value) return;
      out.push_back({{"stem", stem}, {"field", field}, {"machine", machine}, {"final", final_value}});
    };
    for (std::size_t k = 0; k < 2; ++k) {
      nlohmann::json m = k < item.machine_candidates.size() ? nlohmann::json(std::string{to_string(item.machine_candidates[k])})
                                                            : nlohmann::json();
      nlohmann::json f = k < item.candidates.size() ? nlohmann::json(std::string{to_string(item.candidates[k])})
                                                    : nlohmann::json();
      emit(k == 0 ? "emotion_1" : "emotion_2", m, f);
    }
    emit("valence", item.machine_vad.valence, item.vad.valence);
    emit("arousal", item.machine_vad.arousal, item.vad.arousal);
    emit("dominance", item.machine_vad.dominance, item.vad.dominance);
  }
  return out;
}

// ---------------------------------------------------------------------------
// Agreement statistics
// ---------------------------------------------------------------------------

// Fleiss' kappa for an items x raters matrix of categorical labels. Every
// item needs the same number (>= 2) of ratings. When observed agreement is
// perfect the statistic is 1, including the single-category case where the
// textbook ratio is 0/0.
inline double fleiss_kappa(const std::vector<std::vector<std::string>>& ratings) {
  if (ratings.empty()) throw Error(ErrorCode::EmptyInput, "no rated items");
  const std::size_t n = ratings.front().size();
  if (n < 2) throw Error(ErrorCode::DegenerateInput, "raters", "need at least two ratings per item");
  std::map<std::string, double> totals;
  std::vector<double> per_item;
  for (const auto& row : ratings) {
    if (row.size() != n) throw Error(ErrorCode::LengthMismatch, "raters", "items have different rating counts");
    std::map<std::string, int> counts;
    for (const auto& r : row) ++counts[r];
    std::vector<double> sq;
    for (const auto& [label, c] : counts) {
      totals[label] += c;
      sq.push_back(static_cast<double>(c) * c);
    }
    std::sort(sq.begin(), sq.end());
    const double nn = static_cast<double>(n);
    per_item.push_back((pairwise_sum(sq) - nn) / (nn * (nn - 1.0)));
  }
  const double p_bar = mean(per_item);
  if (p_bar == 1.0) return 1.0;
  const double all = static_cast<double>(ratings.size() * n);
  // Sorted so that renaming categories cannot change the rounding.
  std::vector<double> marg_sq;
  for (const auto& [label, t] : totals) marg_sq.push_back((t / all) * (t / all));
  std::sort(marg_sq.begin(), marg_sq.end());
  const double p_e = pairwise_sum(marg_sq);
  return (p_bar - p_e) / (1.0 - p_e);
}

struct AgreementPair {
  Emotion machine_label = Emotion::unknown;
  VadVector machine_vad;
  Emotion human_label = Emotion::unknown;
  VadVector human_vad;
};

// A statistic or the reason it is undefined.
struct StatCell {
  std::optional<double> value;
  std::string error;
};

struct AgreementReport {
  std::size_t pairs = 0;
  StatCell accuracy;  // percent
  std::array<StatCell, 3> mse;
  std::array<StatCell, 3> pearson;
  StatCell fleiss_kappa;
};

namespace detail {

template <class F>
StatCell stat_cell(F&& f) {
  try {
    return {f(), {}};
  } catch (const Error& e) {
    return {std::nullopt, e.what()};
  }
}

}  // namespace detail

inline AgreementReport agreement_report(const std::vector<AgreementPair>& pairs,
                                        const std::optional<std::vector<std::vector<std::string>>>& multi_rater = {}) {
  AgreementReport r;
  r.pairs = pairs.size();
  r.accuracy = detail::stat_cell([&] {
    if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "no reviewed pairs");
    std::size_t hits = 0;
    for (const auto& p : pairs) hits += p.machine_label == p.human_label;
    return 100.0 * static_cast<double>(hits) / static_cast<double>(pairs.size());
  });
  std::array<std::vector<double>, 3> m, h;
  for (const auto& p : pairs) {
    m[0].push_back(p.machine_vad.valence);
    m[1].push_back(p.machine_vad.arousal);
    m[2].push_back(p.machine_vad.dominance);
    h[0].push_back(p.human_vad.valence);
    h[1].push_back(p.human_vad.arousal);
    h[2].push_back(p.human_vad.dominance);
  }
  for (std::size_t k = 0; k < 3; ++k) {
    r.mse[k] = detail::stat_cell([&] {
      if (pairs.empty()) throw Error(ErrorCode::EmptyInput, "no reviewed pairs");
      std::vector<double> sq;
      for (std::size_t i = 0; i < pairs.size(); ++i) sq.push_back((m[k][i] - h[k][i]) * (m[k][i] - h[k][i]));
      return mean(sq);
    });
    r.pearson[k] = detail::stat_cell([&] { return pearson_r(m[k], h[k]); });
  }
  if (multi_rater)
    r.fleiss_kappa = detail::stat_cell([&] { return fleiss_kappa(*multi_rater); });
  else
    r.fleiss_kappa = {std::nullopt, "no multi-rater ratings supplied"};
  return r;
}

// Machine vs. final labels over finalized items.
inline std::vector<AgreementPair> finalized_pairs(const std::map<std::string, ReviewItem>& items) {
  std::vector<AgreementPair> out;
  for (const auto& [stem, item] : items) {
    if (item.state != ItemState::finalized) continue;
    out.push_back({item.machine_candidates.front(), item.machine_vad, item.candidates.front(), item.vad});
  }
  return out;
}

namespace detail {

inline std::string fixed(const StatCell& c, int decimals) {
  if (!c.value) return "-";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, *c.value);
  return buf;
}

inline std::string grouped_count(std::size_t n) {
  auto s = std::to_string(n);
  for (int i = static_cast<int>(s.size()) - 3; i > 0; i -= 3) s.insert(static_cast<std::size_t>(i), ",");
  return s;
}

}  // namespace detail

// Two-row audit table:
//   Subset | Discrete (Acc./ κ) | VAD (MSE / r)
//   <label> (<n>) | 91.22%(Acc.) | 0.070 / 0.050 / 0.033(MSE)
//   Multi-rater | 0.85 (κ) | 0.960 / 0.984 / 0.901(r)
inline std::string format_agreement_table(const AgreementReport& r, const std::string& subset = "Audited") {
  std::string out = "Subset | Discrete (Acc./ κ) | VAD (MSE / r)\n";
  const auto acc = r.accuracy.value ? detail::fixed(r.accuracy, 2) + "%" : std::string{"-"};
  out += subset + " (" + detail::grouped_count(r.pairs) + ") | " + acc + "(Acc.) | " + detail::fixed(r.mse[0], 3) +
         " / " + detail::fixed(r.mse[1], 3) + " / " + detail::fixed(r.mse[2], 3) + "(MSE)\n";
  out += "Multi-rater | " + detail::fixed(r.fleiss_kappa, 2) + " (κ) | " + detail::fixed(r.pearson[0], 3) + " / " +
         detail::fixed(r.pearson[1], 3) + " / " + detail::fixed(r.pearson[2], 3) + "(r)\n";
  return out;
}

inline nlohmann::json to_json(const StatCell& c) {
  if (c.value) return *c.value;
  return nullptr;
}

inline nlohmann::json to_json(const AgreementReport& r) {
  nlohmann::json errors = nlohmann::json::object();
  auto note = [&](const std::string& key, const StatCell& c) {
    if (!c.value) errors[key] = c.error;
  };
  note("accuracy", r.accuracy);
  note("fleiss_kappa", r.fleiss_kappa);
  static constexpr std::array<const char*, 3> dims = {"valence", "arousal", "dominance"};
  nlohmann::json mse = nlohmann::json::object(), pearson = nlohmann::json::object();
  for (std::size_t k = 0; k < 3; ++k) {
    mse[dims[k]] = to_json(r.mse[k]);
    pearson[dims[k]] = to_json(r.pearson[k]);
    note(std::string{"mse."} + dims[k], r.mse[k]);
    note(std::string{"pearson."} + dims[k], r.pearson[k]);
  }
  return {{"pairs", r.pairs},         {"accuracy", to_json(r.accuracy)}, {"mse", mse},
          {"pearson", pearson},       {"fleiss_kappa", to_json(r.fleiss_kappa)},
          {"errors", errors},         {"table", format_agreement_table(r)}};
}

}  // namespace emoscene
