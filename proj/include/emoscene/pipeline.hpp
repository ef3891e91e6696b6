#pragma once

// Corpus-level drivers shared by the command-line tool and the tests. Work
// fans out over a worker pool; every result lands in the slot of its input
// so outputs never depend on scheduling.

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "emoscene/annotation.hpp"
#include "emoscene/config.hpp"
#include "emoscene/corpus.hpp"
#include "emoscene/curation.hpp"
#include "emoscene/error.hpp"
#include "emoscene/image.hpp"
#include "emoscene/parallel.hpp"
#include "emoscene/perceptual.hpp"

namespace emoscene {

inline constexpr std::string_view kToolVersion = "1.0.0";

struct FileError {
  std::string path;
  std::string message;
};

inline std::vector<FileError> orphan_errors(const CorpusScan& scan) {
  std::vector<FileError> out;
  for (const auto& o : scan.orphans) {
    std::string msg{to_string(o.kind)};
    if (!o.detail.empty()) msg += ": " + o.detail;
    out.push_back({o.path.string(), msg});
  }
  return out;
}

// ---------------------------------------------------------------------------
// validate
// ---------------------------------------------------------------------------

struct ValidationResult {
  std::size_t checked = 0;
  std::vector<FileError> violations;
};

// Orphans count as violations.
inline ValidationResult validate_corpus(const fs::path& root, unsigned workers = 1) {
  const auto scan = scan_corpus(root);
  ValidationResult r;
  r.checked = scan.pairs.size();
  std::vector<std::optional<FileError>> slots(scan.pairs.size());
  parallel_for(scan.pairs.size(), workers, [&](std::size_t i) {
    const auto& p = scan.pairs[i];
    try {
      parse_record(read_file(p.json_path), p.stem);
    } catch (const Error& e) {
      slots[i] = FileError{p.json_path.string(), e.what()};
    }
  });
  r.violations = orphan_errors(scan);
  for (auto& s : slots)
    if (s) r.violations.push_back(std::move(*s));
  return r;
}

// ---------------------------------------------------------------------------
// extract
// ---------------------------------------------------------------------------

struct ExtractedFile {
  CorpusPair pair;
  std::string bytes;
};

struct ExtractionResult {
  std::vector<ExtractedFile> files;
  std::vector<FileError> errors;
};

// Merges freshly extracted perceptual features into each paired JSON. A
// document that is a complete record afterwards is re-emitted in canonical
// form; otherwise the merged JSON is pretty-printed as is.
inline ExtractionResult extract_corpus(const fs::path& root, const ToolConfig& cfg) {
  cfg.extraction.validate();
  const auto scan = scan_corpus(root);
  std::vector<std::optional<ExtractedFile>> out(scan.pairs.size());
  std::vector<std::optional<FileError>> err(scan.pairs.size());
  parallel_for(scan.pairs.size(), cfg.workers, [&](std::size_t i) {
    const auto& p = scan.pairs[i];
    try {
      const auto img = load_image(p.image_path);
      const auto features = extract_all(img, cfg.extraction);
      json doc;
      try {
        doc = json::parse(read_file(p.json_path));
      } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedSyntax, e.what());
      }
      if (!doc.is_object()) throw Error(ErrorCode::SchemaViolation, "record", "top level must be an object");
      merge_features(doc, features);
      std::string bytes = doc.dump(2) + "\n";
      try {
        bytes = serialize_record(parse_record(bytes, p.stem));
      } catch (const Error&) {
      }
      out[i] = ExtractedFile{p, std::move(bytes)};
    } catch (const Error& e) {
      err[i] = FileError{p.json_path.string(), e.what()};
    }
  });
  ExtractionResult r;
  r.errors = orphan_errors(scan);
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out[i]) r.files.push_back(std::move(*out[i]));
    if (err[i]) r.errors.push_back(std::move(*err[i]));
  }
  return r;
}

// Writes results back over the paired JSONs, or under dest/<scene>/ when a
// destination is given.
inline void write_extracted(const ExtractionResult& r, const std::optional<fs::path>& dest = std::nullopt) {
  for (const auto& f : r.files) {
    const auto path = dest ? *dest / f.pair.scene / f.pair.json_path.filename() : f.pair.json_path;
    write_file(path, f.bytes);
  }
}

// ---------------------------------------------------------------------------
// filter / dedup
// ---------------------------------------------------------------------------

inline std::string corpus_id(const CorpusPair& p) { return p.scene + "/" + p.stem; }

struct FilterResult {
  std::vector<QualityReport> reports;
  std::optional<double> sharpness_threshold;
  std::vector<FileError> errors;
};

// Sharpness comes from the image, aesthetic and CLIP scores from the JSON.
// Without an absolute min_sharpness the threshold is the configured
// percentile of the corpus's own sharpness scores.
inline FilterResult filter_directory(const fs::path& root, const ToolConfig& cfg) {
  const auto scan = scan_corpus(root);
  std::vector<std::optional<QualityInput>> inputs(scan.pairs.size());
  std::vector<std::optional<FileError>> err(scan.pairs.size());
  parallel_for(scan.pairs.size(), cfg.workers, [&](std::size_t i) {
    const auto& p = scan.pairs[i];
    try {
      const auto img = load_image(p.image_path);
      QualityInput in;
      in.stem = corpus_id(p);
      if (img.width() >= 3 && img.height() >= 3) in.sharpness = sharpness_score(img);
      try {
        const auto doc = json::parse(read_file(p.json_path));
        if (doc.contains("aesthetic_score") && doc["aesthetic_score"].is_number())
          in.aesthetic_score = doc["aesthetic_score"].get<double>();
        if (doc.contains("clip_similarity") && doc["clip_similarity"].is_number())
          in.clip_similarity = doc["clip_similarity"].get<double>();
      } catch (const json::exception& e) {
        throw Error(ErrorCode::MalformedSyntax, e.what());
      }
      inputs[i] = std::move(in);
    } catch (const Error& e) {
      err[i] = FileError{p.json_path.string(), e.what()};
    }
  });
  FilterResult r;
  r.errors = orphan_errors(scan);
  std::vector<QualityInput> ok;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    if (inputs[i]) ok.push_back(*inputs[i]);
    if (err[i]) r.errors.push_back(*err[i]);
  }
  auto policy = cfg.quality;
  if (!policy.min_sharpness) {
    std::vector<double> scores;
    for (const auto& in : ok)
      if (in.sharpness) scores.push_back(*in.sharpness);
    if (!scores.empty()) policy.min_sharpness = percentile(scores, cfg.sharpness_percentile);
  }
  r.sharpness_threshold = policy.min_sharpness;
  r.reports = filter_corpus(ok, policy);
  return r;
}

inline std::string format_quality_reports(const std::vector<QualityReport>& reports) {
  auto opt = [](const std::optional<double>& v) { return v ? format_decimal(*v, 6) : std::string{"NA"}; };
  std::string out = "id\tverdict\tsharpness\taesthetic_score\tclip_similarity\treasons\n";
  for (const auto& r : reports) {
    std::string reasons;
    for (const auto& s : r.drop_reasons) reasons += (reasons.empty() ? "" : ",") + s;
    out += r.stem + "\t" + std::string{to_string(r.verdict)} + "\t" + opt(r.sharpness) + "\t" + opt(r.aesthetic_score) +
           "\t" + opt(r.clip_similarity) + "\t" + (reasons.empty() ? "-" : reasons) + "\n";
  }
  return out;
}

struct HashResult {
  std::vector<StemHash> hashes;
  std::vector<FileError> errors;
};

// Stems are qualified as scene/stem so that equal stems in different scene
// folders stay distinct.
inline HashResult hash_directory(const fs::path& root, unsigned workers) {
  const auto scan = scan_corpus(root);
  std::vector<std::optional<StemHash>> hashes(scan.pairs.size());
  std::vector<std::optional<FileError>> err(scan.pairs.size());
  parallel_for(scan.pairs.size(), workers, [&](std::size_t i) {
    const auto& p = scan.pairs[i];
    try {
      hashes[i] = StemHash{corpus_id(p), perceptual_hash(load_image(p.image_path))};
    } catch (const Error& e) {
      err[i] = FileError{p.image_path.string(), e.what()};
    }
  });
  HashResult r;
  r.errors = orphan_errors(scan);
  for (std::size_t i = 0; i < hashes.size(); ++i) {
    if (hashes[i]) r.hashes.push_back(*hashes[i]);
    if (err[i]) r.errors.push_back(*err[i]);
  }
  return r;
}

// ---------------------------------------------------------------------------
// records
// ---------------------------------------------------------------------------

struct RecordSet {
  std::vector<AnnotationRecord> records;
  std::vector<CorpusPair> pairs;  // parallel to records
  std::vector<FileError> errors;
};

inline RecordSet load_records(const fs::path& root, unsigned workers = 1) {
  const auto scan = scan_corpus(root);
  std::vector<std::optional<AnnotationRecord>> recs(scan.pairs.size());
  std::vector<std::optional<FileError>> err(scan.pairs.size());
  parallel_for(scan.pairs.size(), workers, [&](std::size_t i) {
    const auto& p = scan.pairs[i];
    try {
      recs[i] = parse_record(read_file(p.json_path), p.stem);
    } catch (const Error& e) {
      err[i] = FileError{p.json_path.string(), e.what()};
    }
  });
  RecordSet s;
  s.errors = orphan_errors(scan);
  for (std::size_t i = 0; i < recs.size(); ++i) {
    if (recs[i]) {
      s.records.push_back(std::move(*recs[i]));
      s.pairs.push_back(scan.pairs[i]);
    }
    if (err[i]) s.errors.push_back(*err[i]);
  }
  return s;
}

// ---------------------------------------------------------------------------
// manifests
// ---------------------------------------------------------------------------

inline nlohmann::json make_manifest(std::string_view command, const ToolConfig& cfg, const std::vector<FileError>& errors,
                                    nlohmann::json details = nlohmann::json::object()) {
  auto errs = nlohmann::json::array();
  for (const auto& e : errors) errs.push_back({{"path", e.path}, {"message", e.message}});
  return {{"tool", "emoscene"},    {"version", kToolVersion}, {"command", command},
          {"config", to_json(cfg)}, {"details", std::move(details)}, {"errors", errs}};
}

inline void write_manifest(const fs::path& out_dir, const nlohmann::json& manifest) {
  write_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
}

}  // namespace emoscene
