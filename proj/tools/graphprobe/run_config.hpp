#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "graphprobe/desk_corpus.hpp"
#include "graphprobe/probe.hpp"
#include "graphprobe/tinylm.hpp"

namespace graphprobe::cli {

inline constexpr const char* kDataRootEnv = "GRAPHPROBE_DATA_ROOT";

struct CorpusSettings {
  /// Plain-text files split into paragraphs. Empty means the built-in
  /// procedural corpus.
  std::vector<std::filesystem::path> paths;
  DeskCorpusOptions synthetic;
  std::size_t min_len = 256;
  std::size_t max_len = 1024;
  /// Keep only the first N assembled sequences (0 keeps all).
  std::size_t max_sequences = 0;
};

struct MatchExperiment {
  std::string name;
  std::string left;
  std::string right;
};

struct MatchingSettings {
  double sparsity = 0.8;
  ProbeConfig probe;
  std::vector<MatchExperiment> experiments;
};

struct InterventionSettings {
  double fraction = 0.1;
  /// Cap on test samples used (0 uses the whole test split).
  std::size_t max_samples = 0;
};

struct RunConfig {
  std::filesystem::path output_dir;
  std::uint64_t seed = 0;
  std::optional<int> layer;
  std::vector<double> sparsity{0.0};
  std::vector<std::string> variants{"main"};
  CorpusSettings corpus;
  LmConfig lm;
  ProbeConfig probe;
  std::size_t probe_seeds = 1;
  MatchingSettings matching;
  InterventionSettings intervention;
  unsigned threads = 0;
};

/// Reads a JSON run configuration. Relative paths resolve against
/// $GRAPHPROBE_DATA_ROOT when set, else against the config file's directory.
/// Unknown keys are rejected.
RunConfig load_run_config(const std::filesystem::path& path);
RunConfig parse_run_config(const nlohmann::json& doc, const std::filesystem::path& base_dir);

nlohmann::json to_json(const CorpusSettings& c);
nlohmann::json to_json(const LmConfig& c);
nlohmann::json to_json(const ProbeConfig& c);

/// Directory label for a sparsity level: "dense" for 0, otherwise "s" and the
/// percentage ("s90", "s99", "s99.5").
std::string sparsity_tag(double sparsity);

}  // namespace graphprobe::cli
