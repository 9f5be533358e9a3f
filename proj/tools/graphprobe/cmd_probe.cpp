#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_map>

#include "commands.hpp"
#include "graphprobe/emergence.hpp"
#include "graphprobe/errors.hpp"
#include "graphprobe/metrics.hpp"
#include "graphprobe/parallel.hpp"
#include "graphprobe/tinylm.hpp"
#include "graphprobe/topology.hpp"
#include "report.hpp"

namespace graphprobe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

void cmd_probe_train(Context& ctx) {
  const int layer = ctx.layer();
  const ProbeConfig base = ctx.probe_config();
  for (const auto& variant : ctx.variants()) {
    for (double s : ctx.sparsity_levels()) {
      const std::string tag = sparsity_tag(s);
      for (std::size_t r = 0; r < ctx.config.probe_seeds; ++r) {
        ProbeConfig cfg = base;
        cfg.seed = ctx.seed("probe:" + std::to_string(r));
        json parts = {{"graphs", ctx.steps.digest(step_graphs(variant, layer, tag))},
                      {"probe", to_json(cfg)}};
        const std::string stamp = make_stamp(parts);
        const std::string step = step_probe("probe_train", variant, layer, tag, cfg.hops, cfg.nonlinear, r);
        const auto dir = ctx.ws.probe_dir(variant, layer, tag, cfg.hops, cfg.nonlinear, r);
        const std::string label = "probe train [" + variant + " " + dir.filename().string() + "]";
        if (ctx.steps.up_to_date(step, stamp)) {
          ctx.log(label + ": up to date");
          continue;
        }
        const auto manifest = read_manifest(ctx.ws.manifest(variant, layer, tag));
        const auto train = load_graph_samples(ctx.ws, manifest, Split::kTrain);
        const auto result = train_probe(train, cfg);

        CsvTable log{{"epoch", "learning_rate", "train_loss", "monitored_loss"}, {}};
        for (const auto& e : result.log) {
          log.rows.push_back({std::to_string(e.epoch), format_number(e.learning_rate),
                              format_number(e.train_loss), format_number(e.monitored_loss)});
        }
        json meta = {{"probe", to_json(cfg)},
                     {"monitor", result.monitor},
                     {"monitor_samples", result.monitor_samples},
                     {"best_epoch", result.best_epoch},
                     {"epochs_run", result.log.size()},
                     {"train_samples", train.size()},
                     {"sparsity", s}};
        const auto p_path = dir / "probe.gppb";
        const auto l_path = dir / "train_log.csv";
        const auto m_path = dir / "meta.json";
        save_probe(p_path, result.params, cfg);
        write_text(l_path, log.str());
        write_text(m_path, meta.dump(2) + "\n");
        ctx.steps.record(step, stamp, {p_path, l_path, m_path});
        ctx.log(label + ": best epoch " + std::to_string(result.best_epoch) + " of " +
                std::to_string(result.log.size()));
      }
    }
  }
}

void cmd_probe_eval(Context& ctx) {
  const int layer = ctx.layer();
  const ProbeConfig base = ctx.probe_config();
  for (const auto& variant : ctx.variants()) {
    for (double s : ctx.sparsity_levels()) {
      const std::string tag = sparsity_tag(s);
      for (std::size_t r = 0; r < ctx.config.probe_seeds; ++r) {
        const std::string upstream =
            step_probe("probe_train", variant, layer, tag, base.hops, base.nonlinear, r);
        json parts = {{"probe", ctx.steps.digest(upstream)},
                      {"graphs", ctx.steps.digest(step_graphs(variant, layer, tag))}};
        const std::string stamp = make_stamp(parts);
        const std::string step = step_probe("probe_eval", variant, layer, tag, base.hops, base.nonlinear, r);
        const auto dir = ctx.ws.probe_dir(variant, layer, tag, base.hops, base.nonlinear, r);
        if (ctx.steps.up_to_date(step, stamp)) continue;

        ProbeConfig cfg = base;
        const auto params = load_probe(dir / "probe.gppb", &cfg);
        const auto manifest = read_manifest(ctx.ws.manifest(variant, layer, tag));
        const auto test = load_graph_samples(ctx.ws, manifest, Split::kTest);
        if (test.empty()) throw DataError("probe eval: the test split is empty");
        const auto predictions = predict(params, cfg, test);
        std::vector<double> labels;
        CsvTable pred{{"id", "label", "prediction"}, {}};
        for (std::size_t k = 0; k < test.size(); ++k) {
          labels.push_back(test[k].label);
          pred.rows.push_back({test[k].id, format_number(test[k].label), format_number(predictions[k])});
        }
        const auto metrics = regression_metrics(predictions, labels);
        const auto pred_path = dir / "predictions.csv";
        const auto metrics_path = dir / "metrics.csv";
        write_text(pred_path, pred.str());
        write_text(metrics_path, metrics_csv_header() + "\n" + metrics_csv_row(metrics) + "\n");
        ctx.steps.record(step, stamp, {pred_path, metrics_path});
        char buf[160];
        std::snprintf(buf, sizeof buf, "probe eval [%s %s]: mse %.5f pearson %s r2 %s",
                      variant.c_str(), dir.filename().c_str(), metrics.mse,
                      metrics.pearson ? format_number(*metrics.pearson).substr(0, 6).c_str() : "NA",
                      metrics.r2 ? format_number(*metrics.r2).substr(0, 6).c_str() : "NA");
        ctx.log(buf);
      }
    }
  }
}

/// Neurons ordered by descending degree; ties go to the lower index.
std::vector<std::uint32_t> degree_order(const ConnectivityGraph& graph) {
  const auto stats = graph_stats(graph);
  std::vector<std::uint32_t> order(graph.size());
  std::iota(order.begin(), order.end(), 0u);
  std::stable_sort(order.begin(), order.end(), [&](std::uint32_t a, std::uint32_t b) {
    return stats.degrees[a] > stats.degrees[b];
  });
  return order;
}

void cmd_intervene_run(Context& ctx) {
  const int layer = ctx.layer();
  const auto& iv = ctx.config.intervention;
  for (const auto& variant : ctx.variants()) {
    json parts = {{"graphs", ctx.steps.digest(step_graphs(variant, layer, "dense"))},
                  {"lm", ctx.steps.digest(step_lm(variant))},
                  {"fraction", iv.fraction},
                  {"max_samples", iv.max_samples}};
    const std::string stamp = make_stamp(parts);
    const std::string step = "intervene." + variant + ".L" + std::to_string(layer);
    if (ctx.steps.up_to_date(step, stamp)) {
      ctx.log("intervene run [" + variant + "]: up to date");
      continue;
    }
    const auto ckpt = load_checkpoint(ctx.ws.checkpoint(variant, ctx.config.lm.total_steps));
    const auto manifest = read_manifest(ctx.ws.manifest(variant, layer, "dense"));
    auto records = manifest.select(Split::kTest);
    if (iv.max_samples > 0 && records.size() > iv.max_samples) records.resize(iv.max_samples);
    if (records.empty()) throw DataError("intervene run: the test split is empty");
    const auto seqs = read_sequences(ctx.ws.sequences());
    std::unordered_map<std::string, const TokenSequence*> by_id;
    for (const auto& s : seqs) by_id.emplace(s.id, &s);

    struct Row {
      double base = 0, top = 0, bottom = 0;
      std::size_t k = 0;
    };
    std::vector<Row> rows(records.size());
    parallel_for(records.size(), [&](std::size_t i) {
      const auto* r = records[i];
      const auto it = by_id.find(r->id);
      if (it == by_id.end()) throw DataError("intervene run: unknown sequence " + r->id);
      const auto graph = read_graph(ctx.ws.root() / r->graph_path);
      const auto order = degree_order(graph);
      const auto k = static_cast<std::size_t>(std::ceil(iv.fraction * order.size() - 1e-9));
      std::vector<std::uint32_t> top(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
      std::vector<std::uint32_t> bottom(order.end() - static_cast<std::ptrdiff_t>(k), order.end());
      const auto& tokens = it->second->tokens;
      rows[i] = {perplexity(ckpt, tokens).value,
                 intervened_perplexity(ckpt, tokens, layer, top).value,
                 intervened_perplexity(ckpt, tokens, layer, bottom).value, k};
    });

    CsvTable per{{"id", "ppl", "ppl_top_masked", "ppl_bottom_masked"}, {}};
    double sb = 0, st = 0, sm = 0;
    for (std::size_t i = 0; i < rows.size(); ++i) {
      per.rows.push_back({records[i]->id, format_number(rows[i].base), format_number(rows[i].top),
                          format_number(rows[i].bottom)});
      sb += rows[i].base;
      st += rows[i].top;
      sm += rows[i].bottom;
    }
    const double n = static_cast<double>(rows.size());
    CsvTable summary{{"samples", "masked_neurons", "mean_ppl", "mean_ppl_top_masked",
                      "mean_ppl_bottom_masked", "top_bottom_ratio"},
                     {{std::to_string(rows.size()), std::to_string(rows.front().k),
                       format_number(sb / n), format_number(st / n), format_number(sm / n),
                       format_number(st / sm)}}};
    const auto dir = ctx.ws.layer_dir(variant, layer) / "intervention";
    const auto a = dir / "intervention.csv";
    const auto b = dir / "summary.csv";
    write_text(a, per.str());
    write_text(b, summary.str());
    ctx.steps.record(step, stamp, {a, b});
    ctx.log("intervene run [" + variant + "]: top/bottom perplexity ratio " +
            format_number(st / sm).substr(0, 6));
  }
}

void cmd_emergence_run(Context& ctx) {
  const int layer = ctx.layer();
  for (const auto& variant : ctx.variants()) {
    ProbeConfig cfg = ctx.probe_config();
    cfg.seed = ctx.seed("probe:0");
    json parts = {{"lm", ctx.steps.digest(step_lm(variant))},
                  {"corpus", ctx.steps.digest("corpus_build")},
                  {"layer", layer},
                  {"probe", to_json(cfg)},
                  {"split_seed", ctx.seed("split")}};
    const std::string stamp = make_stamp(parts);
    const std::string step = "emergence." + variant + ".L" + std::to_string(layer);
    if (ctx.steps.up_to_date(step, stamp)) {
      ctx.log("emergence run [" + variant + "]: up to date");
      continue;
    }
    std::vector<LmCheckpoint> checkpoints;
    for (auto s : ctx.config.lm.checkpoint_schedule) {
      checkpoints.push_back(load_checkpoint(ctx.ws.checkpoint(variant, s)));
    }
    const auto seqs = read_sequences(ctx.ws.sequences());
    EmergenceOptions opts{layer, cfg, 1.0, ctx.seed("split")};
    const auto points = run_emergence_study(checkpoints, seqs, opts, [&](const EmergencePoint& p) {
      ctx.log("emergence run [" + variant + "]: step " + std::to_string(p.step) + " pearson " +
              (p.metrics.pearson ? format_number(*p.metrics.pearson).substr(0, 6) : "NA"));
    });
    auto opt = [](const std::optional<double>& v) { return v ? format_number(*v) : std::string("NA"); };
    CsvTable t{{"step", "mean_ppl_raw", "train", "test", "mse", "mae", "r2", "pearson", "spearman"}, {}};
    for (const auto& p : points) {
      t.rows.push_back({std::to_string(p.step), format_number(p.mean_ppl_raw),
                        std::to_string(p.train_samples), std::to_string(p.test_samples),
                        format_number(p.metrics.mse), format_number(p.metrics.mae),
                        opt(p.metrics.r2), opt(p.metrics.pearson), opt(p.metrics.spearman)});
    }
    const auto path = ctx.ws.layer_dir(variant, layer) / "emergence.csv";
    write_text(path, t.str());
    ctx.steps.record(step, stamp, {path});
  }
}

}  // namespace graphprobe::cli
