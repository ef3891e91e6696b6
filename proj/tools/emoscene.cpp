// emoscene: corpus tooling for dual-space (affect + perception) image
// annotations. Run `emoscene --help` or `emoscene <command> --help`.

#include <csignal>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "emoscene/emoscene.hpp"
#include "emoscene/pipeline.hpp"
#include "emoscene/service.hpp"

namespace es = emoscene;
namespace fs = std::filesystem;

namespace {

struct Common {
  std::string root;
  std::string out = "emoscene-out";
  std::string config;
  unsigned workers = 0;
  std::uint64_t seed = 0;
  bool dry_run = false;
  CLI::Option* workers_opt = nullptr;
  CLI::Option* seed_opt = nullptr;
};

// flags > config file > defaults
es::ToolConfig effective_config(const Common& c) {
  es::ToolConfig cfg = c.config.empty() ? es::ToolConfig{} : es::load_config(c.config);
  if (c.workers_opt && c.workers_opt->count()) cfg.workers = c.workers;
  if (c.seed_opt && c.seed_opt->count()) cfg.seed = c.seed;
  cfg.validate();
  return cfg;
}

void report_errors(const std::vector<es::FileError>& errors) {
  for (const auto& e : errors) std::fprintf(stderr, "%s: %s\n", e.path.c_str(), e.message.c_str());
}

fs::path require_root(const Common& c) {
  if (c.root.empty()) throw es::Error(es::ErrorCode::ConfigError, "root", "a corpus root is required");
  return c.root;
}

int cmd_validate(const Common& c) {
  const auto cfg = effective_config(c);
  const auto r = es::validate_corpus(require_root(c), cfg.workers);
  report_errors(r.violations);
  std::printf("%zu records checked, %zu violations\n", r.checked, r.violations.size());
  es::write_manifest(c.out, es::make_manifest("validate", cfg, r.violations, {{"checked", r.checked}}));
  return r.violations.empty() ? 0 : 1;
}

int cmd_extract(const Common& c) {
  const auto cfg = effective_config(c);
  const auto r = es::extract_corpus(require_root(c), cfg);
  // A dry run leaves the corpus alone and writes the would-be records under
  // <out>/records instead.
  if (c.dry_run)
    es::write_extracted(r, fs::path(c.out) / "records");
  else
    es::write_extracted(r);
  report_errors(r.errors);
  es::write_manifest(c.out, es::make_manifest("extract", cfg, r.errors,
                                              {{"extracted", r.files.size()}, {"dry_run", c.dry_run}}));
  std::printf("%zu records extracted, %zu errors\n", r.files.size(), r.errors.size());
  return r.errors.empty() ? 0 : 1;
}

int cmd_filter(const Common& c, std::optional<double> percentile) {
  auto cfg = effective_config(c);
  if (percentile) cfg.sharpness_percentile = *percentile;
  cfg.validate();
  const auto r = es::filter_directory(require_root(c), cfg);
  report_errors(r.errors);
  es::write_file(fs::path(c.out) / "quality.tsv", es::format_quality_reports(r.reports));
  std::size_t kept = 0;
  for (const auto& q : r.reports) kept += q.verdict == es::Verdict::keep;
  es::write_manifest(c.out, es::make_manifest("filter", cfg, r.errors,
                                              {{"records", r.reports.size()},
                                               {"kept", kept},
                                               {"sharpness_threshold", r.sharpness_threshold
                                                                           ? nlohmann::json(*r.sharpness_threshold)
                                                                           : nlohmann::json()}}));
  std::printf("%zu kept, %zu dropped\n", kept, r.reports.size() - kept);
  return r.errors.empty() ? 0 : 1;
}

int cmd_dedup(const Common& c, std::optional<int> threshold, const std::string& embeddings) {
  auto cfg = effective_config(c);
  if (threshold) cfg.hamming_threshold = *threshold;
  cfg.validate();
  const auto r = es::hash_directory(require_root(c), cfg.workers);
  report_errors(r.errors);
  const auto clusters = es::dedup(r.hashes, cfg.hamming_threshold);
  es::write_file(fs::path(c.out) / "duplicates.tsv", es::format_duplicate_list(clusters, r.hashes));
  nlohmann::json details = {{"images", r.hashes.size()}, {"clusters", clusters.size()}};
  if (!embeddings.empty()) {
    const auto set = es::parse_embeddings(es::read_file(embeddings));
    const auto emb = es::embedding_duplicates(set, cfg.embedding_cosine);
    std::string text;
    for (const auto& cl : emb)
      for (const auto& m : cl.member_stems)
        if (m != cl.representative_stem) text += cl.representative_stem + "\t" + m + "\n";
    es::write_file(fs::path(c.out) / "embedding_duplicates.tsv", text);
    details["embedding_clusters"] = emb.size();
  }
  es::write_manifest(c.out, es::make_manifest("dedup", cfg, r.errors, details));
  std::printf("%zu images hashed, %zu duplicate clusters\n", r.hashes.size(), clusters.size());
  return r.errors.empty() ? 0 : 1;
}

int cmd_stats(const Common& c, std::optional<int> bins, std::optional<double> sigma) {
  auto cfg = effective_config(c);
  if (bins) cfg.density_bins = *bins;
  if (sigma) cfg.density_sigma = *sigma;
  cfg.validate();
  const auto set = es::load_records(require_root(c), cfg.workers);
  report_errors(set.errors);
  std::vector<es::VadVector> points;
  for (const auto& r : set.records) {
    std::optional<es::VadVector> v;
    if (r.aggregated_vad)
      v = r.aggregated_vad->complete();
    else if (!r.per_model_vad.empty())
      v = es::aggregate_vad(r.per_model_vad, cfg.model_weights).complete();
    if (v) points.push_back(*v);
  }
  const fs::path out = c.out;
  for (auto plane : {es::Plane::VA, es::Plane::VD, es::Plane::AD}) {
    const auto grid = es::density_map(points, plane, cfg.density_bins, cfg.density_sigma);
    const auto name = "density_" + std::string{es::to_string(plane)};
    es::write_file(out / (name + ".txt"), es::format_density_grid(grid));
    es::write_file(out / (name + ".png"), es::encode_png(es::render_heatmap(grid)));
  }
  es::write_file(out / "emotion_summary.tsv", es::format_emotion_summary(es::per_emotion_summary(set.records)));
  es::write_file(out / "composition.tsv", es::format_composition(es::composition_by_emotion(set.records)));
  es::write_file(out / "correlation.tsv", es::format_correlation_matrix(es::correlation_matrix(set.records)));
  es::write_manifest(out, es::make_manifest("stats", cfg, set.errors,
                                            {{"records", set.records.size()}, {"vad_points", points.size()}}));
  std::printf("%zu records, %zu VAD points\n", set.records.size(), points.size());
  return set.errors.empty() ? 0 : 1;
}

int cmd_metrics(const Common& c, const std::vector<std::string>& preds, const std::string& target_path) {
  const auto cfg = effective_config(c);
  const auto target = es::parse_metric_set(es::read_file(target_path));
  std::vector<es::MethodReport> reports;
  for (const auto& p : preds) reports.push_back(es::evaluate_method(es::parse_metric_set(es::read_file(p)), target));
  const auto table = es::format_metric_table(reports);
  es::write_file(fs::path(c.out) / "metrics.tsv", es::format_metric_tsv(reports));
  es::write_file(fs::path(c.out) / "metrics_table.tsv", table);
  es::write_manifest(c.out, es::make_manifest("metrics", cfg, {}, {{"predictions", preds}, {"target", target_path}}));
  std::fputs(table.c_str(), stdout);
  return 0;
}

es::ReviewService* g_service = nullptr;

extern "C" void on_signal(int) {
  if (g_service) g_service->stop();
}

int cmd_review_serve(const Common& c, const std::string& host, int port, const std::string& state,
                     std::optional<int> lease_minutes) {
  auto cfg = effective_config(c);
  if (lease_minutes) cfg.lease_minutes = *lease_minutes;
  cfg.validate();
  es::ReviewQueue::Options opts;
  opts.lease = std::chrono::minutes(cfg.lease_minutes);
  opts.max_rounds = cfg.max_rounds;
  opts.log_path = fs::path(state) / "audit.jsonl";
  opts.snapshot_path = fs::path(state) / "snapshot.json";
  auto queue = es::ReviewQueue::open(opts);

  es::ImageIndex images;
  std::vector<es::FileError> errors;
  if (!c.root.empty()) {
    const auto scan = es::scan_corpus(c.root);
    images = es::image_index(scan);
    const auto set = es::load_records(c.root, cfg.workers);
    errors = set.errors;
    std::size_t added = 0;
    for (std::size_t i = 0; i < set.records.size(); ++i) {
      auto rec = set.records[i];
      if (queue->find(rec.stem)) continue;
      try {
        queue->enqueue(es::review_item_from_record(rec, set.pairs[i].image_path.string()));
        ++added;
      } catch (const es::Error& e) {
        errors.push_back({set.pairs[i].json_path.string(), e.what()});
      }
    }
    std::printf("%zu items enqueued\n", added);
  }
  report_errors(errors);
  es::ReviewService service(*queue, std::move(images));
  g_service = &service;
  std::signal(SIGINT, on_signal);
  std::signal(SIGTERM, on_signal);
  std::printf("listening on %s:%d\n", host.c_str(), port);
  std::fflush(stdout);
  service.run(host, port);
  g_service = nullptr;
  return 0;
}

int cmd_audit_replay(const Common& c, const std::string& log, const std::string& snapshot) {
  const auto cfg = effective_config(c);
  const auto entries = es::read_audit_log(log);
  const auto items = es::ReviewQueue::replay(entries, cfg.max_rounds);
  nlohmann::json replayed = nlohmann::json::array();
  for (const auto& [stem, item] : items) replayed.push_back(es::to_json(item));
  bool matches = true;
  if (!snapshot.empty()) {
    const auto doc = nlohmann::json::parse(es::read_file(snapshot));
    matches = doc.value("items", nlohmann::json::array()) == replayed &&
              doc.value("last_seq", std::uint64_t{0}) == entries.size();
  }
  const fs::path out = c.out;
  es::write_file(out / "snapshot.json",
                 nlohmann::json({{"last_seq", entries.size()}, {"items", replayed}}).dump(2) + "\n");
  es::write_file(out / "corrections.json", es::export_corrections(items).dump(2) + "\n");
  es::write_manifest(out, es::make_manifest("audit-replay", cfg, {},
                                            {{"entries", entries.size()},
                                             {"items", items.size()},
                                             {"snapshot_matches", snapshot.empty() ? nlohmann::json() : nlohmann::json(matches)}}));
  std::printf("replayed %zu entries, %zu items", entries.size(), items.size());
  if (!snapshot.empty()) std::printf("; snapshot %s", matches ? "matches" : "DIFFERS");
  std::printf("\n");
  return matches ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dataset engineering tools for dual-space emotion annotations"};
  app.require_subcommand(1);
  Common c;

  auto common = [&](CLI::App* sub, bool takes_root) {
    if (takes_root) sub->add_option("root,--root", c.root, "Corpus root (one directory per scene)");
    sub->add_option("--out", c.out, "Output directory")->capture_default_str();
    sub->add_option("--config", c.config, "JSON config file");
  };

  // Global flags are accepted before or after the subcommand.
  c.workers_opt = app.add_option("--workers", c.workers, "Worker threads")->check(CLI::PositiveNumber);
  c.seed_opt = app.add_option("--seed", c.seed, "Seed for sampled computations");
  app.add_flag("--dry-run", c.dry_run, "Do not modify the corpus");
  app.fallthrough();

  auto* validate = app.add_subcommand("validate", "Check every JSON against the annotation schema");
  common(validate, true);
  auto* extract = app.add_subcommand("extract", "Compute perceptual features and merge them into the JSONs");
  common(extract, true);
  auto* filter = app.add_subcommand("filter", "Quality filtering on sharpness and ingested scores");
  common(filter, true);
  std::optional<double> percentile;
  filter->add_option("--percentile", percentile, "Drop the sharpness bottom percentile (default 5)");
  auto* dedup = app.add_subcommand("dedup", "Perceptual-hash duplicate clusters");
  common(dedup, true);
  std::optional<int> threshold;
  std::string embeddings;
  dedup->add_option("--threshold", threshold, "Hamming threshold (default 8)");
  dedup->add_option("--embeddings", embeddings, "Embedding file for cosine duplicates");
  auto* stats = app.add_subcommand("stats", "Density grids, per-emotion summaries, composition, correlations");
  common(stats, true);
  std::optional<int> bins;
  std::optional<double> sigma;
  stats->add_option("--bins", bins, "Density bins per axis (default 64)");
  stats->add_option("--sigma", sigma, "Density smoothing in bins (default 1)");
  auto* metrics = app.add_subcommand("metrics", "Evaluate prediction files against a target file");
  common(metrics, false);
  std::vector<std::string> preds;
  std::string target;
  metrics->add_option("--pred", preds, "Prediction file (repeatable)")->required();
  metrics->add_option("--target", target, "Target file")->required();
  auto* serve = app.add_subcommand("review-serve", "Serve the review queue over HTTP");
  common(serve, true);
  std::string host = "127.0.0.1", state = "review-state";
  int port = 8080;
  std::optional<int> lease;
  serve->add_option("--host", host)->capture_default_str();
  serve->add_option("--port", port)->capture_default_str();
  serve->add_option("--state", state, "Directory holding audit.jsonl and snapshot.json")->capture_default_str();
  serve->add_option("--lease-minutes", lease, "Lease duration (default 15)");
  auto* replay = app.add_subcommand("audit-replay", "Rebuild queue state from an audit log");
  common(replay, false);
  std::string log, snapshot;
  replay->add_option("--log", log, "Audit log (JSONL)")->required();
  replay->add_option("--snapshot", snapshot, "Snapshot to verify against");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*validate) return cmd_validate(c);
    if (*extract) return cmd_extract(c);
    if (*filter) return cmd_filter(c, percentile);
    if (*dedup) return cmd_dedup(c, threshold, embeddings);
    if (*stats) return cmd_stats(c, bins, sigma);
    if (*metrics) return cmd_metrics(c, preds, target);
    if (*serve) return cmd_review_serve(c, host, port, state, lease);
    if (*replay) return cmd_audit_replay(c, log, snapshot);
  } catch (const es::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
