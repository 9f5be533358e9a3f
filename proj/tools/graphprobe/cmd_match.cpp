#include <fstream>
#include <unordered_map>

#include "commands.hpp"
#include "graphprobe/errors.hpp"
#include "graphprobe/matching.hpp"
#include "graphprobe/parallel.hpp"
#include "graphprobe/topology.hpp"
#include "report.hpp"

namespace graphprobe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const MatchExperiment& find_experiment(const Context& ctx, const std::string& name) {
  for (const auto& e : ctx.config.matching.experiments) {
    if (e.name == name) return e;
  }
  throw UsageError("unknown matching experiment '" + name + "'");
}

std::vector<MatchExperiment> selected(const Context& ctx) {
  std::vector<MatchExperiment> out;
  if (ctx.options.experiments.empty()) return ctx.config.matching.experiments;
  for (const auto& n : ctx.options.experiments) out.push_back(find_experiment(ctx, n));
  return out;
}

struct PairRecord {
  std::string id;
  Split split = Split::kTrain;
  std::string left;
  std::string right;
};

/// Pairs every sample of the left manifest with the same text id on the
/// right. The left side's train/test label decides the pair's split.
std::vector<PairRecord> build_pairs(const DatasetManifest& left, const DatasetManifest& right) {
  std::unordered_map<std::string, const SampleRecord*> rmap;
  for (const auto& r : right.samples) rmap.emplace(r.id, &r);
  std::vector<PairRecord> pairs;
  for (const auto& l : left.samples) {
    auto it = rmap.find(l.id);
    if (it == rmap.end()) continue;
    pairs.push_back({l.id, l.split, l.graph_path, it->second->graph_path});
  }
  return pairs;
}

void write_pairs(const fs::path& path, const std::vector<PairRecord>& pairs) {
  std::string out;
  for (const auto& p : pairs) {
    json j = {{"id", p.id}, {"split", std::string(to_string(p.split))}, {"left", p.left}, {"right", p.right}};
    out += j.dump() + "\n";
  }
  write_text(path, out);
}

std::vector<PairRecord> read_pairs(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open pairing file " + path.string());
  std::vector<PairRecord> pairs;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = json::parse(line);
      pairs.push_back({j.at("id").get<std::string>(), split_from_string(j.at("split").get<std::string>()),
                       j.at("left").get<std::string>(), j.at("right").get<std::string>()});
    } catch (const json::exception& e) {
      throw DataError(path.string() + ": bad pairing record: " + e.what());
    }
  }
  return pairs;
}

std::vector<MatchPair> load_pairs(const Workspace& ws, const std::vector<PairRecord>& records,
                                  Split split) {
  std::vector<const PairRecord*> chosen;
  for (const auto& r : records) {
    if (r.split == split) chosen.push_back(&r);
  }
  std::vector<MatchPair> out(chosen.size());
  parallel_for(chosen.size(), [&](std::size_t k) {
    out[k] = {chosen[k]->id, read_graph(ws.root() / chosen[k]->left),
              read_graph(ws.root() / chosen[k]->right)};
  });
  return out;
}

MatchConfig match_config(const Context& ctx, const MatchExperiment& e) {
  MatchConfig mc;
  mc.left = ctx.config.matching.probe;
  mc.right = ctx.config.matching.probe;
  mc.shared = e.left == e.right;
  mc.seed = ctx.seed("match:" + e.name);
  return mc;
}

}  // namespace

void cmd_match_train(Context& ctx) {
  const int layer = ctx.layer();
  const std::string tag = sparsity_tag(ctx.config.matching.sparsity);
  for (const auto& e : selected(ctx)) {
    const auto mc = match_config(ctx, e);
    json parts = {{"left", ctx.steps.digest(step_graphs(e.left, layer, tag))},
                  {"right", ctx.steps.digest(step_graphs(e.right, layer, tag))},
                  {"probe", to_json(mc.left)},
                  {"shared", mc.shared},
                  {"seed", mc.seed}};
    const std::string stamp = make_stamp(parts);
    const std::string step = "match_train." + e.name;
    if (ctx.steps.up_to_date(step, stamp)) {
      ctx.log("match train [" + e.name + "]: up to date");
      continue;
    }
    const auto pairs = build_pairs(read_manifest(ctx.ws.manifest(e.left, layer, tag)),
                                   read_manifest(ctx.ws.manifest(e.right, layer, tag)));
    const auto dir = ctx.ws.matching_dir(e.name);
    const auto pairs_path = dir / "pairs.jsonl";
    write_pairs(pairs_path, pairs);
    const auto train = load_pairs(ctx.ws, pairs, Split::kTrain);
    const auto result = train_matcher(train, mc);

    CsvTable log{{"epoch", "learning_rate", "train_loss", "monitored_loss"}, {}};
    for (const auto& l : result.log) {
      log.rows.push_back({std::to_string(l.epoch), format_number(l.learning_rate),
                          format_number(l.train_loss), format_number(l.monitored_loss)});
    }
    json meta = {{"experiment", e.name},
                 {"left", e.left},
                 {"right", e.right},
                 {"shared", mc.shared},
                 {"sparsity", ctx.config.matching.sparsity},
                 {"probe", to_json(mc.left)},
                 {"monitor", result.monitor},
                 {"monitor_samples", result.monitor_samples},
                 {"best_epoch", result.best_epoch},
                 {"train_pairs", train.size()}};
    const auto lp = dir / "left.gppb";
    const auto rp = dir / "right.gppb";
    const auto log_path = dir / "train_log.csv";
    const auto meta_path = dir / "meta.json";
    save_probe(lp, result.left, mc.left);
    save_probe(rp, result.right, mc.right);
    write_text(log_path, log.str());
    write_text(meta_path, meta.dump(2) + "\n");
    ctx.steps.record(step, stamp, {pairs_path, lp, rp, log_path, meta_path});
    ctx.log("match train [" + e.name + "]: " + std::to_string(train.size()) + " pairs, best epoch " +
            std::to_string(result.best_epoch));
  }
}

void cmd_match_eval(Context& ctx) {
  for (const auto& e : selected(ctx)) {
    json parts = {{"train", ctx.steps.digest("match_train." + e.name)}};
    const std::string stamp = make_stamp(parts);
    const std::string step = "match_eval." + e.name;
    if (ctx.steps.up_to_date(step, stamp)) continue;

    const auto dir = ctx.ws.matching_dir(e.name);
    auto mc = match_config(ctx, e);
    MatchTrainResult model;
    model.left = load_probe(dir / "left.gppb", &mc.left);
    model.right = load_probe(dir / "right.gppb", &mc.right);
    const auto test = load_pairs(ctx.ws, read_pairs(dir / "pairs.jsonl"), Split::kTest);
    const auto report = auc_gauc(test, model, mc);
    CsvTable t{{"config", "auc", "gauc", "n", "sparsity"},
               {{e.name, format_number(report.auc), format_number(report.gauc),
                 std::to_string(report.count), format_number(ctx.config.matching.sparsity)}}};
    const auto path = dir / "report.csv";
    write_text(path, t.str());
    ctx.steps.record(step, stamp, {path});
    ctx.log("match eval [" + e.name + "]: AUC " + format_number(report.auc).substr(0, 6) +
            " GAUC " + format_number(report.gauc).substr(0, 6) + " over " +
            std::to_string(report.count) + " test pairs");
  }
}

}  // namespace graphprobe::cli
