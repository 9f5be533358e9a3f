#include "graphprobe/emergence.hpp"

#include <algorithm>
#include <unordered_map>

#include "graphprobe/errors.hpp"
#include "graphprobe/parallel.hpp"
#include "graphprobe/topology.hpp"

namespace graphprobe {

GraphDataset build_graph_dataset(const LmCheckpoint& checkpoint,
                                 std::span<const TokenSequence> sequences, int layer,
                                 double keep_fraction, std::uint64_t split_seed) {
  if (sequences.empty()) throw DataError("build_graph_dataset: no sequences");
  std::vector<RawPerplexity> raw(sequences.size());
  std::vector<ConnectivityGraph> graphs(sequences.size());
  parallel_for(sequences.size(), [&](std::size_t k) {
    const auto& seq = sequences[k];
    auto fwd = forward_with_states(checkpoint, seq, layer);
    raw[k] = {seq.id, seq.length(), perplexity_from_logits(fwd.logits, seq.tokens).value};
    auto g = connectivity(fwd.trace);
    graphs[k] = keep_fraction < 1.0 ? sparsify(g, keep_fraction) : std::move(g);
  });

  GraphDataset ds;
  double sum = 0.0;
  for (const auto& r : raw) sum += r.ppl_raw;
  ds.mean_ppl_raw = sum / static_cast<double>(raw.size());
  ds.manifest = split_dataset(filter_and_normalize(raw), split_seed);

  std::unordered_map<std::string, std::size_t> index;
  for (std::size_t k = 0; k < sequences.size(); ++k) index.emplace(sequences[k].id, k);
  for (auto& rec : ds.manifest.samples) {
    rec.layer = layer;
    GraphSample s{rec.id, graphs[index.at(rec.id)], rec.ppl_norm};
    (rec.split == Split::kTrain ? ds.train : ds.test).push_back(std::move(s));
  }
  return ds;
}

std::vector<EmergencePoint> run_emergence_study(
    std::span<const LmCheckpoint> checkpoints, std::span<const TokenSequence> sequences,
    const EmergenceOptions& options, const std::function<void(const EmergencePoint&)>& progress) {
  if (checkpoints.size() < 2) {
    throw DataError("run_emergence_study: need at least 2 checkpoints, got " +
                    std::to_string(checkpoints.size()));
  }
  std::vector<const LmCheckpoint*> ordered;
  for (const auto& c : checkpoints) ordered.push_back(&c);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [](const LmCheckpoint* a, const LmCheckpoint* b) { return a->step < b->step; });

  std::vector<EmergencePoint> points;
  for (const auto* ckpt : ordered) {
    auto ds = build_graph_dataset(*ckpt, sequences, options.layer, options.keep_fraction,
                                  options.split_seed);
    if (ds.train.empty() || ds.test.empty()) {
      throw DataError("run_emergence_study: split left an empty train or test set");
    }
    auto trained = train_probe(ds.train, options.probe);
    EmergencePoint p;
    p.step = ckpt->step;
    p.mean_ppl_raw = ds.mean_ppl_raw;
    p.metrics = evaluate(trained.params, options.probe, ds.test);
    p.train_samples = ds.train.size();
    p.test_samples = ds.test.size();
    if (progress) progress(p);
    points.push_back(std::move(p));
  }
  return points;
}

}  // namespace graphprobe
