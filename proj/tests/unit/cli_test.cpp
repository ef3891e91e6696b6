#include <gtest/gtest.h>

#include "../support/cli_run.hpp"
#include "../support/fixtures.hpp"

using namespace emoscene;
using cli_run::quote;
using cli_run::run;
using fixtures::TempDir;
namespace fs = std::filesystem;

namespace {

std::map<std::string, std::string> json_files(const fs::path& root) {
  std::map<std::string, std::string> out;
  for (const auto& e : fs::recursive_directory_iterator(root))
    if (e.path().extension() == ".json") out[fs::relative(e.path(), root).string()] = read_file(e.path());
  return out;
}

}  // namespace

TEST(Cli, ValidateCleanCorpus) {
  TempDir dir;
  fixtures::write_corpus(dir.path() / "corpus", 9);
  const auto r = run("validate " + quote((dir.path() / "corpus").string()) + " --out " + quote(dir.path() / "out"));
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.out, "9 records checked, 0 violations\n");
  const auto manifest = nlohmann::json::parse(read_file(dir.path() / "out" / "manifest.json"));
  EXPECT_EQ(manifest["command"], "validate");
  EXPECT_EQ(manifest["details"]["checked"], 9);
}

TEST(Cli, ValidateReportsViolationsAndOrphans) {
  TempDir dir;
  const auto root = dir.path() / "corpus";
  fixtures::write_corpus(root, 6);
  write_file(root / "beach" / "img_0000.json", "{\"oops\": ");
  fs::remove(root / "forest" / "img_0001.jpg");
  const auto r = run("validate " + quote(root.string()) + " --out " + quote(dir.path() / "out"));
  EXPECT_EQ(r.exit_code, 1);
  const auto manifest = nlohmann::json::parse(read_file(dir.path() / "out" / "manifest.json"));
  EXPECT_EQ(manifest["errors"].size(), 2u);
}

TEST(Cli, ExtractIsIndependentOfWorkerCount) {
  TempDir dir;
  fixtures::write_corpus(dir.path() / "a", 12, false);
  fs::copy(dir.path() / "a", dir.path() / "b", fs::copy_options::recursive);
  const auto before = json_files(dir.path() / "a");
  EXPECT_EQ(run("extract " + quote(dir.path() / "a") + " --workers 1 --out " + quote(dir.path() / "o1")).exit_code, 0);
  EXPECT_EQ(run("extract " + quote(dir.path() / "b") + " --workers 8 --out " + quote(dir.path() / "o8")).exit_code, 0);
  const auto a = json_files(dir.path() / "a");
  EXPECT_EQ(a, json_files(dir.path() / "b"));
  EXPECT_NE(a, before);
  // Extraction writes the features of the image itself.
  const auto rec = parse_record(a.at("beach/img_0000.json"), "img_0000");
  const auto want = quantize_features(extract_all(load_image(dir.path() / "a" / "beach" / "img_0000.jpg")));
  EXPECT_EQ(rec.perceptual(), want);
}

TEST(Cli, ExtractDryRunLeavesCorpus) {
  TempDir dir;
  const auto root = dir.path() / "c";
  fixtures::write_corpus(root, 3, false);
  const auto before = json_files(root);
  EXPECT_EQ(run("extract " + quote(root) + " --dry-run --out " + quote(dir.path() / "o")).exit_code, 0);
  EXPECT_EQ(json_files(root), before);
  EXPECT_EQ(json_files(dir.path() / "o" / "records").size(), 3u);
}

TEST(Cli, FilterDedupStatsWriteOutputs) {
  TempDir dir;
  const auto root = dir.path() / "c";
  fixtures::write_corpus(root, 9);
  const auto out = dir.path() / "o";
  EXPECT_EQ(run("filter " + quote(root) + " --out " + quote(out)).exit_code, 0);
  EXPECT_TRUE(fs::exists(out / "quality.tsv"));
  EXPECT_EQ(run("dedup " + quote(root) + " --threshold 4 --out " + quote(out)).exit_code, 0);
  EXPECT_TRUE(fs::exists(out / "duplicates.tsv"));
  const auto r = run("stats " + quote(root) + " --bins 16 --out " + quote(out));
  EXPECT_EQ(r.exit_code, 0);
  for (auto f : {"density_VA.txt", "density_VD.png", "density_AD.txt", "emotion_summary.tsv", "composition.tsv",
                 "correlation.tsv"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  EXPECT_EQ(decode_png(read_file(out / "density_VA.png")).width(), 16 * 4);
}

TEST(Cli, MetricsTable) {
  TempDir dir;
  const auto m = fixtures::fixture_dir() + "/metrics/";
  const auto r = run("metrics --pred " + quote(m + "method_a.json") + " --pred " + quote(m + "method_b.json") +
                     " --target " + quote(m + "target.json") + " --out " + quote(dir.path()));
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.out, read_file(dir.path() / "metrics_table.tsv"));
  EXPECT_NE(r.out.find("method_a"), std::string::npos);
  EXPECT_NE(r.out.find("±"), std::string::npos);
}

TEST(Cli, AuditReplayChecksSnapshot) {
  TempDir dir;
  ReviewQueue::Options o;
  o.log_path = dir.path() / "audit.jsonl";
  o.snapshot_path = dir.path() / "snapshot.json";
  {
    ReviewQueue q(o);
    q.enqueue(fixtures::review_item("a"));
    q.enqueue(fixtures::review_item("b", 1));
    q.submit(fixtures::all_yes(*q.find("a")));
  }
  const auto args = "audit-replay --log " + quote(dir.path() / "audit.jsonl") + " --snapshot " +
                    quote(dir.path() / "snapshot.json") + " --out " + quote(dir.path() / "o");
  auto r = run(args);
  EXPECT_EQ(r.exit_code, 0);
  EXPECT_EQ(r.out, "replayed 3 entries, 2 items; snapshot matches\n");
  EXPECT_EQ(read_file(dir.path() / "o" / "snapshot.json"), read_file(dir.path() / "snapshot.json"));

  auto snap = nlohmann::json::parse(read_file(dir.path() / "snapshot.json"));
  snap["items"][1]["round"] = 2;
  write_file(dir.path() / "snapshot.json", snap.dump(2));
  r = run(args);
  EXPECT_EQ(r.exit_code, 1);
  EXPECT_NE(r.out.find("DIFFERS"), std::string::npos);
}

TEST(Cli, BadConfigAndMissingRoot) {
  TempDir dir;
  write_file(dir.path() / "bad.json", R"({"workers": 0})");
  fixtures::write_corpus(dir.path() / "c", 1);
  EXPECT_EQ(run("extract " + quote(dir.path() / "c") + " --config " + quote(dir.path() / "bad.json") + " --out " +
                quote(dir.path() / "o"))
                .exit_code,
            2);
  EXPECT_EQ(run("validate --out " + quote(dir.path() / "o")).exit_code, 2);
  EXPECT_NE(run("frobnicate").exit_code, 0);
}
