#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <mutex>

#include "graphprobe/desk_corpus.hpp"
#include "graphprobe/errors.hpp"
#include "graphprobe/parallel.hpp"
#include "graphprobe/tinylm.hpp"
#include "graphprobe/topology.hpp"
#include "hashing.hpp"
#include "report.hpp"

namespace graphprobe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

Context::Context(const Options& opts)
    : config(load_run_config(opts.config)), ws(config.output_dir), steps(ws, opts.force), options(opts) {
  if (opts.seed) config.seed = *opts.seed;
  set_default_threads(opts.deterministic ? 1u : config.threads);
}

int Context::layer() const {
  if (options.layer) return *options.layer;
  if (config.layer) return *config.layer;
  throw UsageError("no layer selected: set \"layer\" in the config or pass --layer");
}

std::uint64_t Context::seed(const std::string& component) const {
  return derive_seed(config.seed, component);
}

const std::vector<double>& Context::sparsity_levels() const {
  return options.sparsity ? *options.sparsity : config.sparsity;
}

std::vector<std::string> Context::variants() const {
  if (options.variants.empty()) return config.variants;
  for (const auto& v : options.variants) {
    if (std::find(config.variants.begin(), config.variants.end(), v) == config.variants.end()) {
      throw UsageError("variant '" + v + "' is not listed in the config");
    }
  }
  return options.variants;
}

ProbeConfig Context::probe_config() const {
  ProbeConfig p = config.probe;
  if (options.hops) p.hops = *options.hops;
  if (options.linear) p.nonlinear = false;
  p.validate();
  return p;
}

void Context::log(const std::string& message) const { std::cerr << message << "\n"; }

std::string step_lm(const std::string& variant) { return "lm_train." + variant; }
std::string step_traces(const std::string& variant, int layer) {
  return "trace_extract." + variant + ".L" + std::to_string(layer);
}
std::string step_graphs(const std::string& variant, int layer, const std::string& tag) {
  return "graph." + variant + ".L" + std::to_string(layer) + "." + tag;
}
std::string step_probe(const char* kind, const std::string& variant, int layer,
                       const std::string& tag, std::size_t hops, bool nonlinear,
                       std::size_t repeat) {
  return std::string(kind) + "." + variant + ".L" + std::to_string(layer) + "." + tag + ".h" +
         std::to_string(hops) + (nonlinear ? ".nl" : ".lin") + ".r" + std::to_string(repeat);
}

namespace {

std::string rel(const Workspace& ws, const fs::path& p) {
  return fs::relative(p, ws.root()).generic_string();
}

std::vector<TokenSequence> load_sequences(const Context& ctx) {
  ctx.steps.digest("corpus_build");
  return read_sequences(ctx.ws.sequences());
}

LmCheckpoint final_checkpoint(const Context& ctx, const std::string& variant) {
  return load_checkpoint(ctx.ws.checkpoint(variant, ctx.config.lm.total_steps));
}

}  // namespace

std::vector<GraphSample> load_graph_samples(const Workspace& ws, const DatasetManifest& manifest,
                                            Split split) {
  const auto records = manifest.select(split);
  std::vector<GraphSample> out(records.size());
  parallel_for(records.size(), [&](std::size_t k) {
    const auto* r = records[k];
    if (r->graph_path.empty()) throw DataError("manifest entry " + r->id + " has no graph");
    out[k] = {r->id, read_graph(ws.root() / r->graph_path), r->ppl_norm};
  });
  return out;
}

void cmd_corpus_build(Context& ctx) {
  const auto& c = ctx.config.corpus;
  json parts = {{"corpus", to_json(c)}};
  const std::string stamp = make_stamp(parts);
  if (ctx.steps.up_to_date("corpus_build", stamp)) {
    ctx.log("corpus build: up to date");
    return;
  }
  std::vector<std::string> texts;
  if (c.paths.empty()) {
    texts = generate_desk_corpus(c.synthetic);
  } else {
    for (const auto& p : c.paths) {
      auto paras = read_paragraphs(p);
      texts.insert(texts.end(), std::make_move_iterator(paras.begin()),
                   std::make_move_iterator(paras.end()));
    }
  }
  auto seqs = assemble_sequences(texts, ByteTokenizer{}, c.min_len, c.max_len);
  if (c.max_sequences > 0 && seqs.size() > c.max_sequences) seqs.resize(c.max_sequences);
  write_sequences(ctx.ws.sequences(), seqs);
  ctx.steps.record("corpus_build", stamp, {ctx.ws.sequences()});
  ctx.log("corpus build: " + std::to_string(seqs.size()) + " sequences from " +
          std::to_string(texts.size()) + " texts");
}

void cmd_lm_train(Context& ctx) {
  for (const auto& variant : ctx.variants()) {
    LmConfig cfg = ctx.config.lm;
    cfg.seed = ctx.seed("lm:" + variant);
    json parts = {{"lm", to_json(cfg)}, {"corpus", ctx.steps.digest("corpus_build")}};
    const std::string stamp = make_stamp(parts);
    const std::string step = step_lm(variant);
    if (ctx.steps.up_to_date(step, stamp)) {
      ctx.log("lm train [" + variant + "]: up to date");
      continue;
    }
    const auto seqs = load_sequences(ctx);
    ctx.log("lm train [" + variant + "]: " + std::to_string(cfg.total_steps) + " steps");
    auto result = train_lm(seqs, cfg, [&](const LmTrainLogEntry& e) {
      if ((e.step & (e.step - 1)) == 0 || e.step == cfg.total_steps) {
        char buf[96];
        std::snprintf(buf, sizeof buf, "  step %zu loss %.4f", e.step, e.loss);
        ctx.log(buf);
      }
    });
    std::vector<fs::path> outputs;
    for (const auto& ck : result.checkpoints) {
      const auto path = ctx.ws.checkpoint(variant, ck.step);
      save_checkpoint(path, ck);
      outputs.push_back(path);
    }
    CsvTable log{{"step", "loss", "learning_rate"}, {}};
    for (const auto& e : result.log) {
      log.rows.push_back({std::to_string(e.step), format_number(e.loss), format_number(e.learning_rate)});
    }
    const auto log_path = ctx.ws.lm_dir(variant) / "train_log.csv";
    write_text(log_path, log.str());
    outputs.push_back(log_path);
    ctx.steps.record(step, stamp, outputs);
  }
}

void cmd_trace_extract(Context& ctx) {
  const int layer = ctx.layer();
  for (const auto& variant : ctx.variants()) {
    json parts = {{"layer", layer},
                  {"lm", ctx.steps.digest(step_lm(variant))},
                  {"corpus", ctx.steps.digest("corpus_build")},
                  {"split_seed", ctx.seed("split")}};
    const std::string stamp = make_stamp(parts);
    const std::string step = step_traces(variant, layer);
    if (ctx.steps.up_to_date(step, stamp)) {
      ctx.log("trace extract [" + variant + "]: up to date");
      continue;
    }
    const auto ckpt = final_checkpoint(ctx, variant);
    if (layer < 0 || static_cast<std::size_t>(layer) >= ckpt.config.depth) {
      throw UsageError("layer " + std::to_string(layer) + " is outside the model's " +
                       std::to_string(ckpt.config.depth) + " blocks");
    }
    const auto seqs = load_sequences(ctx);
    std::vector<RawPerplexity> raw(seqs.size());
    std::vector<fs::path> trace_paths(seqs.size());
    std::vector<char> clamped(seqs.size(), 0);
    parallel_for(seqs.size(), [&](std::size_t k) {
      auto fwd = forward_with_states(ckpt, seqs[k], layer);
      const auto ppl = perplexity_from_logits(fwd.logits, seqs[k].tokens);
      raw[k] = {seqs[k].id, seqs[k].length(), ppl.value};
      clamped[k] = ppl.clamped;
      trace_paths[k] = ctx.ws.trace_dir(variant, layer) / (seqs[k].id + ".gprb");
      write_trace(trace_paths[k], fwd.trace);
    });
    if (auto n = std::count(clamped.begin(), clamped.end(), 1); n > 0) {
      ctx.log("trace extract [" + variant + "]: " + std::to_string(n) +
              " sequences hit the log-probability floor");
    }
    auto manifest = split_dataset(filter_and_normalize(raw), ctx.seed("split"));
    for (auto& r : manifest.samples) {
      r.layer = layer;
      r.trace_path = rel(ctx.ws, ctx.ws.trace_dir(variant, layer) / (r.id + ".gprb"));
    }
    const auto manifest_path = ctx.ws.manifest(variant, layer);
    write_manifest(manifest_path, manifest);
    trace_paths.push_back(manifest_path);
    ctx.steps.record(step, stamp, trace_paths);
    ctx.log("trace extract [" + variant + "]: " + std::to_string(manifest.samples.size()) +
            " samples kept of " + std::to_string(raw.size()));
  }
}

void cmd_graph_build(Context& ctx) {
  const int layer = ctx.layer();
  for (const auto& variant : ctx.variants()) {
    json parts = {{"traces", ctx.steps.digest(step_traces(variant, layer))}};
    const std::string stamp = make_stamp(parts);
    const std::string step = step_graphs(variant, layer, "dense");
    if (ctx.steps.up_to_date(step, stamp)) {
      ctx.log("graph build [" + variant + "]: up to date");
      continue;
    }
    auto manifest = read_manifest(ctx.ws.manifest(variant, layer));
    const auto dir = ctx.ws.graph_dir(variant, layer, "dense");
    std::vector<fs::path> outputs(manifest.samples.size());
    parallel_for(manifest.samples.size(), [&](std::size_t k) {
      auto& r = manifest.samples[k];
      const auto trace = read_trace(ctx.ws.root() / r.trace_path);
      outputs[k] = dir / (r.id + ".ggrf");
      write_graph(outputs[k], connectivity(trace));
      r.graph_path = rel(ctx.ws, outputs[k]);
    });
    const auto manifest_path = ctx.ws.manifest(variant, layer, "dense");
    write_manifest(manifest_path, manifest);
    outputs.push_back(manifest_path);
    ctx.steps.record(step, stamp, outputs);
    ctx.log("graph build [" + variant + "]: " + std::to_string(manifest.samples.size()) + " graphs");
  }
}

namespace {

void sparsify_level(Context& ctx, const std::string& variant, int layer, double sparsity) {
  const std::string tag = sparsity_tag(sparsity);
  json parts = {{"graphs", ctx.steps.digest(step_graphs(variant, layer, "dense"))},
                {"sparsity", sparsity}};
  const std::string stamp = make_stamp(parts);
  const std::string step = step_graphs(variant, layer, tag);
  if (ctx.steps.up_to_date(step, stamp)) {
    ctx.log("graph sparsify [" + variant + " " + tag + "]: up to date");
    return;
  }
  auto manifest = read_manifest(ctx.ws.manifest(variant, layer, "dense"));
  const auto dir = ctx.ws.graph_dir(variant, layer, tag);
  const double keep = 1.0 - sparsity;
  std::vector<fs::path> outputs(manifest.samples.size());
  parallel_for(manifest.samples.size(), [&](std::size_t k) {
    auto& r = manifest.samples[k];
    const auto dense = read_graph(ctx.ws.root() / r.graph_path);
    outputs[k] = dir / (r.id + ".ggrf");
    write_graph(outputs[k], sparsify(dense, keep));
    r.graph_path = rel(ctx.ws, outputs[k]);
  });
  const auto manifest_path = ctx.ws.manifest(variant, layer, tag);
  write_manifest(manifest_path, manifest);
  outputs.push_back(manifest_path);
  ctx.steps.record(step, stamp, outputs);
  ctx.log("graph sparsify [" + variant + " " + tag + "]: " +
          std::to_string(manifest.samples.size()) + " graphs");
}

}  // namespace

void cmd_graph_sparsify(Context& ctx) {
  const int layer = ctx.layer();
  for (const auto& variant : ctx.variants()) {
    for (double s : ctx.sparsity_levels()) {
      if (s > 0.0) sparsify_level(ctx, variant, layer, s);
    }
  }
}

void cmd_graph_stats(Context& ctx) {
  const int layer = ctx.layer();
  for (const auto& variant : ctx.variants()) {
    for (double s : ctx.sparsity_levels()) {
      const std::string tag = sparsity_tag(s);
      const std::string upstream = step_graphs(variant, layer, tag);
      json parts = {{"graphs", ctx.steps.digest(upstream)}};
      const std::string stamp = make_stamp(parts);
      const std::string step = "graph_stats." + variant + ".L" + std::to_string(layer) + "." + tag;
      if (ctx.steps.up_to_date(step, stamp)) continue;

      const auto manifest = read_manifest(ctx.ws.manifest(variant, layer, tag));
      std::vector<GraphStats> stats(manifest.samples.size());
      std::vector<double> kept(manifest.samples.size());
      parallel_for(manifest.samples.size(), [&](std::size_t k) {
        const auto g = read_graph(ctx.ws.root() / manifest.samples[k].graph_path);
        stats[k] = graph_stats(g, {0.0, static_cast<double>(g.size()), 20});
        kept[k] = g.density_fraction();
      });
      CsvTable per_sample{{"id", "split", "ppl_norm", "kept_fraction", "density", "mean_degree",
                           "max_degree"},
                          {}};
      std::vector<std::size_t> hist;
      HistogramSpec spec;
      for (std::size_t k = 0; k < stats.size(); ++k) {
        const auto& st = stats[k];
        double sum = 0.0, mx = 0.0;
        for (double d : st.degrees) {
          sum += d;
          mx = std::max(mx, d);
        }
        const auto& r = manifest.samples[k];
        per_sample.rows.push_back({r.id, std::string(to_string(r.split)), format_number(r.ppl_norm),
                                   format_number(kept[k]), format_number(st.density),
                                   format_number(sum / static_cast<double>(st.degrees.size())),
                                   format_number(mx)});
        if (hist.empty()) {
          hist.assign(st.degree_histogram.size(), 0);
          spec = st.histogram_spec;
        }
        for (std::size_t b = 0; b < hist.size(); ++b) hist[b] += st.degree_histogram[b];
      }
      CsvTable hist_table{{"bin_lo", "bin_hi", "count"}, {}};
      const double width = (spec.hi - spec.lo) / static_cast<double>(std::max<std::size_t>(1, spec.bins));
      for (std::size_t b = 0; b < hist.size(); ++b) {
        hist_table.rows.push_back({format_number(spec.lo + width * static_cast<double>(b)),
                                   format_number(spec.lo + width * static_cast<double>(b + 1)),
                                   std::to_string(hist[b])});
      }
      const auto dir = ctx.ws.layer_dir(variant, layer) / "stats";
      const auto a = dir / ("graph_stats_" + tag + ".csv");
      const auto b = dir / ("degree_histogram_" + tag + ".csv");
      write_text(a, per_sample.str());
      write_text(b, hist_table.str());
      ctx.steps.record(step, stamp, {a, b});
      ctx.log("graph stats [" + variant + " " + tag + "]: " + rel(ctx.ws, a));
    }
  }
}

}  // namespace graphprobe::cli
