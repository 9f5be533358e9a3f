#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <string>

#include "cli.hpp"
#include "report.hpp"
#include "run_config.hpp"

namespace fs = std::filesystem;
using graphprobe::cli::dispatch;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / "graphprobe_unit" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path);
  out << text;
}

std::string tiny_config(int probe_epochs = 2) {
  return R"({
  "output_dir": "out",
  "seed": 3,
  "layer": 0,
  "sparsity": [0, 0.9],
  "variants": ["main", "alt"],
  "corpus": {"synthetic": {"documents": 40}},
  "lm": {"width": 16, "heads": 2, "depth": 1, "total_steps": 2, "window": 64, "batch_size": 2},
  "probe": {"width": 8, "max_epochs": )" +
         std::to_string(probe_epochs) + R"(},
  "matching": {"probe": {"width": 8, "max_epochs": 2},
               "experiments": [{"name": "self", "left": "main", "right": "main"},
                               {"name": "cross", "left": "main", "right": "alt"}]},
  "intervention": {"max_samples": 4}
})";
}

/// Last-write times of every file under `root`, keyed by relative path.
std::map<std::string, fs::file_time_type> snapshot(const fs::path& root) {
  std::map<std::string, fs::file_time_type> out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = e.last_write_time();
  }
  return out;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("sparsity tags") {
  CHECK(graphprobe::cli::sparsity_tag(0.0) == "dense");
  CHECK(graphprobe::cli::sparsity_tag(0.9) == "s90");
  CHECK(graphprobe::cli::sparsity_tag(0.99) == "s99");
  CHECK(graphprobe::cli::sparsity_tag(0.8) == "s80");
  CHECK(graphprobe::cli::sparsity_tag(0.995) == "s99.5");
}

TEST_CASE("usage errors exit with 1") {
  const auto dir = fresh_dir("usage");
  write_file(dir / "config.json", tiny_config());
  const std::string cfg = (dir / "config.json").string();
  CHECK(dispatch({}) == 1);
  CHECK(dispatch({"frobnicate"}) == 1);
  CHECK(dispatch({"corpus", "build"}) == 1);
  CHECK(dispatch({"corpus", "build", "--config", cfg, "--bogus"}) == 1);
  CHECK(dispatch({"corpus", "build", "--config", (dir / "missing.json").string()}) == 1);
  CHECK(dispatch({"graph", "sparsify", "--config", cfg, "--sparsity", "1.5"}) == 1);
  write_file(dir / "bad.json", R"({"output_dir": "out", "colour": "blue"})");
  CHECK(dispatch({"corpus", "build", "--config", (dir / "bad.json").string()}) == 1);
}

TEST_CASE("a missing upstream step is a data error") {
  const auto dir = fresh_dir("upstream");
  write_file(dir / "config.json", tiny_config());
  CHECK(dispatch({"probe", "train", "--config", (dir / "config.json").string()}) == 2);
}

TEST_CASE("probe eval on the bundled fixture writes metrics") {
  const auto dir = fresh_dir("fixture");
  fs::copy(GRAPHPROBE_TEST_DATA_DIR "/fixture", dir, fs::copy_options::recursive);
  const std::string cfg = (dir / "config.json").string();
  REQUIRE(dispatch({"probe", "eval", "--config", cfg}) == 0);
  const auto metrics = dir / "workspace/models/main/L0/probes/dense_h1_nl_r0/metrics.csv";
  REQUIRE(fs::exists(metrics));
  const auto table = graphprobe::cli::read_csv(metrics);
  CHECK(table.header == std::vector<std::string>{"count", "mse", "mae", "r2", "pearson", "spearman"});
  REQUIRE(table.rows.size() == 1);
  CHECK(table.rows[0][0] == "8");
}

TEST_CASE("pipeline runs, resumes as a no-op and refuses changed settings") {
  const auto dir = fresh_dir("pipeline");
  write_file(dir / "config.json", tiny_config());
  const std::string cfg = (dir / "config.json").string();
  REQUIRE(dispatch({"pipeline", "--config", cfg, "--deterministic"}) == 0);

  const auto out = dir / "out";
  for (const char* rel :
       {"corpus/sequences.jsonl", "models/main/L0/manifest_dense.jsonl", "models/alt/L0/manifest_s90.jsonl",
        "models/main/L0/stats/graph_stats_dense.csv", "models/main/L0/stats/degree_histogram_s90.csv",
        "models/main/L0/probes/s90_h1_nl_r0/metrics.csv", "models/main/L0/intervention/summary.csv",
        "matching/self/report.csv", "matching/cross/report.csv", "reports/probe_metrics.csv",
        "reports/matching.csv"}) {
    INFO(rel);
    CHECK(fs::exists(out / rel));
  }
  CHECK_FALSE(fs::exists(out / ".lock"));

  const auto before = snapshot(out);
  REQUIRE(dispatch({"pipeline", "--config", cfg, "--deterministic"}) == 0);
  CHECK(snapshot(out) == before);

  write_file(dir / "config.json", tiny_config(3));
  CHECK(dispatch({"probe", "train", "--config", cfg}) == 1);
  CHECK(snapshot(out) == before);
  CHECK(dispatch({"probe", "train", "--config", cfg, "--force"}) == 0);
  CHECK(snapshot(out) != before);
}

TEST_CASE("a held lock blocks a second run until forced") {
  const auto dir = fresh_dir("lock");
  write_file(dir / "config.json", tiny_config());
  const std::string cfg = (dir / "config.json").string();
  fs::create_directories(dir / "out");
  write_file(dir / "out" / ".lock", "12345\n");
  CHECK(dispatch({"corpus", "build", "--config", cfg}) != 0);
  CHECK(dispatch({"corpus", "build", "--config", cfg, "--force"}) == 0);
  CHECK(fs::exists(dir / "out/corpus/sequences.jsonl"));
}

}  // TEST_SUITE
