#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "graphprobe/corpus.hpp"
#include "graphprobe/metrics.hpp"
#include "graphprobe/probe.hpp"
#include "graphprobe/tinylm.hpp"

namespace graphprobe {

struct EmergenceOptions {
  int layer = 0;
  ProbeConfig probe;
  /// Fraction of off-diagonal pairs kept; 1 keeps the dense graph.
  double keep_fraction = 1.0;
  std::uint64_t split_seed = 0;
};

struct EmergencePoint {
  std::size_t step = 0;
  double mean_ppl_raw = 0.0;
  MetricsReport metrics;
  std::size_t train_samples = 0;
  std::size_t test_samples = 0;
};

/// Everything needed to train and score a probe for one checkpoint: labels
/// from that checkpoint's perplexities, graphs from its hidden states.
struct GraphDataset {
  DatasetManifest manifest;
  std::vector<GraphSample> train;
  std::vector<GraphSample> test;
  double mean_ppl_raw = 0.0;
};

GraphDataset build_graph_dataset(const LmCheckpoint& checkpoint,
                                 std::span<const TokenSequence> sequences, int layer,
                                 double keep_fraction, std::uint64_t split_seed);

/// Rebuilds the dataset and trains a fresh probe for every checkpoint.
/// Results are ordered by step.
std::vector<EmergencePoint> run_emergence_study(
    std::span<const LmCheckpoint> checkpoints, std::span<const TokenSequence> sequences,
    const EmergenceOptions& options,
    const std::function<void(const EmergencePoint&)>& progress = {});

}  // namespace graphprobe
