#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "graphprobe/corpus.hpp"
#include "graphprobe/probe.hpp"
#include "run_config.hpp"
#include "workspace.hpp"

namespace graphprobe::cli {

/// Flag values shared by every subcommand.
struct Options {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<int> layer;
  std::optional<std::vector<double>> sparsity;
  std::vector<std::string> variants;
  std::vector<std::string> experiments;
  std::optional<std::size_t> hops;
  bool linear = false;
  bool deterministic = false;
  bool force = false;
  bool emergence = false;
};

struct Context {
  RunConfig config;
  Workspace ws;
  StepLog steps;
  Options options;

  explicit Context(const Options& opts);

  int layer() const;
  std::uint64_t seed(const std::string& component) const;
  const std::vector<double>& sparsity_levels() const;
  std::vector<std::string> variants() const;
  /// Probe settings after --hops / --linear overrides.
  ProbeConfig probe_config() const;
  void log(const std::string& message) const;
};

void cmd_corpus_build(Context& ctx);
void cmd_lm_train(Context& ctx);
void cmd_trace_extract(Context& ctx);
void cmd_graph_build(Context& ctx);
void cmd_graph_sparsify(Context& ctx);
void cmd_graph_stats(Context& ctx);
void cmd_probe_train(Context& ctx);
void cmd_probe_eval(Context& ctx);
void cmd_intervene_run(Context& ctx);
void cmd_emergence_run(Context& ctx);
void cmd_match_train(Context& ctx);
void cmd_match_eval(Context& ctx);
void cmd_report_emit(Context& ctx);
void cmd_pipeline(Context& ctx);

/// Loads the graphs of one split listed in a manifest; paths are relative to
/// the workspace root.
std::vector<GraphSample> load_graph_samples(const Workspace& ws, const DatasetManifest& manifest,
                                            Split split);

/// Step names, shared by producers and consumers.
std::string step_lm(const std::string& variant);
std::string step_traces(const std::string& variant, int layer);
std::string step_graphs(const std::string& variant, int layer, const std::string& tag);
std::string step_probe(const char* kind, const std::string& variant, int layer,
                       const std::string& tag, std::size_t hops, bool nonlinear,
                       std::size_t repeat);

}  // namespace graphprobe::cli
