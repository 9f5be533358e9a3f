#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "commands.hpp"
#include "graphprobe/errors.hpp"
#include "hashing.hpp"
#include "report.hpp"

namespace graphprobe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<fs::path> sorted_dirs(const fs::path& dir) {
  std::vector<fs::path> out;
  if (!fs::is_directory(dir)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_directory()) out.push_back(e.path());
  }
  std::sort(out.begin(), out.end());
  return out;
}

std::size_t column(const CsvTable& t, const std::string& name) {
  for (std::size_t k = 0; k < t.header.size(); ++k) {
    if (t.header[k] == name) return k;
  }
  throw DataError("CSV column '" + name + "' missing");
}

double number(const std::string& s) {
  if (s == "NA") return std::nan("");
  return std::stod(s);
}

}  // namespace

void cmd_report_emit(Context& ctx) {
  const auto& ws = ctx.ws;
  std::vector<fs::path> inputs;

  CsvTable probes{{"variant", "layer", "probe", "sparsity", "hops", "nonlinear", "repeat", "count",
                   "mse", "mae", "r2", "pearson", "spearman"},
                  {}};
  CsvTable interventions{{"variant", "layer", "samples", "masked_neurons", "mean_ppl",
                          "mean_ppl_top_masked", "mean_ppl_bottom_masked", "top_bottom_ratio"},
                         {}};
  // (variant, layer) -> series name -> sparsity -> pearson values
  std::map<std::string, std::map<std::string, std::map<double, std::vector<double>>>> curves;
  std::vector<std::pair<std::string, CsvTable>> emergence;

  for (const auto& vdir : sorted_dirs(ws.root() / "models")) {
    const std::string variant = vdir.filename().string();
    for (const auto& ldir : sorted_dirs(vdir)) {
      const std::string lname = ldir.filename().string();
      if (lname.empty() || lname[0] != 'L') continue;
      const std::string layer = lname.substr(1);
      for (const auto& pdir : sorted_dirs(ldir / "probes")) {
        const auto mpath = pdir / "metrics.csv";
        const auto jpath = pdir / "meta.json";
        if (!fs::exists(mpath) || !fs::exists(jpath)) continue;
        inputs.push_back(mpath);
        const auto meta = json::parse(read_text(jpath));
        const auto m = read_csv(mpath);
        const auto& probe = meta.at("probe");
        const double sparsity = meta.at("sparsity").get<double>();
        const auto hops = probe.at("hops").get<std::size_t>();
        const bool nl = probe.at("nonlinear").get<bool>();
        const std::string name = pdir.filename().string();
        const std::string repeat = name.substr(name.rfind("_r") + 2);
        std::vector<std::string> row{variant, layer, name, format_number(sparsity),
                                     std::to_string(hops), nl ? "1" : "0", repeat};
        row.insert(row.end(), m.rows.at(0).begin(), m.rows.at(0).end());
        probes.rows.push_back(row);
        const std::string series = std::to_string(hops) + "-hop " + (nl ? "non-linear" : "linear");
        curves[variant + " L" + layer][series][sparsity].push_back(
            number(m.rows.at(0).at(column(m, "pearson"))));
      }
      if (const auto s = ldir / "intervention" / "summary.csv"; fs::exists(s)) {
        inputs.push_back(s);
        const auto t = read_csv(s);
        std::vector<std::string> row{variant, layer};
        row.insert(row.end(), t.rows.at(0).begin(), t.rows.at(0).end());
        interventions.rows.push_back(row);
      }
      if (const auto e = ldir / "emergence.csv"; fs::exists(e)) {
        inputs.push_back(e);
        emergence.emplace_back(variant + "_L" + layer, read_csv(e));
      }
    }
  }

  CsvTable matching{{"config", "auc", "gauc", "n", "sparsity"}, {}};
  for (const auto& mdir : sorted_dirs(ws.root() / "matching")) {
    const auto r = mdir / "report.csv";
    if (!fs::exists(r)) continue;
    inputs.push_back(r);
    for (const auto& row : read_csv(r).rows) matching.rows.push_back(row);
  }

  json parts = json::array();
  for (const auto& p : inputs) {
    parts.push_back({fs::relative(p, ws.root()).generic_string(), sha256_file(p)});
  }
  const std::string stamp = make_stamp(parts);
  if (ctx.steps.up_to_date("report_emit", stamp)) {
    ctx.log("report emit: up to date");
    return;
  }

  const auto dir = ws.reports_dir();
  std::vector<fs::path> outputs;
  auto emit = [&](const std::string& name, const std::string& content) {
    write_text(dir / name, content);
    outputs.push_back(dir / name);
  };
  emit("probe_metrics.csv", probes.str());
  emit("intervention.csv", interventions.str());
  emit("matching.csv", matching.str());

  for (const auto& [key, by_series] : curves) {
    std::vector<PlotSeries> series;
    for (const auto& [name, points] : by_series) {
      PlotSeries s{name, {}, {}};
      for (const auto& [sparsity, values] : points) {
        double sum = 0;
        for (double v : values) sum += v;
        s.x.push_back(sparsity * 100.0);
        s.y.push_back(sum / static_cast<double>(values.size()));
      }
      series.push_back(std::move(s));
    }
    std::string file = key;
    std::replace(file.begin(), file.end(), ' ', '_');
    emit("sparsity_" + file + ".svg",
         line_chart_svg({"Probe correlation vs sparsity (" + key + ")", "sparsity (%)",
                         "test Pearson correlation", false},
                        series));
  }
  for (const auto& [key, table] : emergence) {
    emit("emergence_" + key + ".csv", table.str());
    PlotSeries pearson{"test Pearson", {}, {}};
    PlotSeries ppl{"mean perplexity", {}, {}};
    const auto cs = column(table, "step"), cp = column(table, "pearson"),
               cm = column(table, "mean_ppl_raw");
    for (const auto& row : table.rows) {
      pearson.x.push_back(number(row[cs]));
      pearson.y.push_back(number(row[cp]));
      ppl.x.push_back(number(row[cs]));
      ppl.y.push_back(number(row[cm]));
    }
    emit("emergence_" + key + "_pearson.svg",
         line_chart_svg({"Predictability across training (" + key + ")", "training step",
                         "test Pearson correlation", true},
                        {pearson}));
    emit("emergence_" + key + "_perplexity.svg",
         line_chart_svg({"Mean perplexity across training (" + key + ")", "training step",
                         "mean perplexity", true},
                        {ppl}));
  }
  ctx.steps.record("report_emit", stamp, outputs);
  ctx.log("report emit: " + std::to_string(outputs.size()) + " files in " + dir.string());
}

void cmd_pipeline(Context& ctx) {
  cmd_corpus_build(ctx);
  cmd_lm_train(ctx);
  cmd_trace_extract(ctx);
  cmd_graph_build(ctx);
  {
    auto levels = ctx.sparsity_levels();
    if (!ctx.config.matching.experiments.empty()) levels.push_back(ctx.config.matching.sparsity);
    std::sort(levels.begin(), levels.end());
    levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
    const auto saved = ctx.options.sparsity;
    ctx.options.sparsity = levels;
    cmd_graph_sparsify(ctx);
    cmd_graph_stats(ctx);
    ctx.options.sparsity = saved;
  }
  cmd_probe_train(ctx);
  cmd_probe_eval(ctx);
  cmd_intervene_run(ctx);
  if (ctx.options.emergence) cmd_emergence_run(ctx);
  if (!ctx.config.matching.experiments.empty()) {
    cmd_match_train(ctx);
    cmd_match_eval(ctx);
  }
  cmd_report_emit(ctx);
}

}  // namespace graphprobe::cli
