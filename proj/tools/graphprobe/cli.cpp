#include "cli.hpp"

#include <CLI11.hpp>

#include <functional>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>

#include "commands.hpp"
#include "graphprobe/errors.hpp"

namespace graphprobe::cli {

namespace {

std::vector<double> parse_sparsity_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (item.empty()) continue;
    std::size_t used = 0;
    double v = 0;
    try {
      v = std::stod(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used != item.size() || !(v >= 0.0 && v < 1.0)) {
      throw UsageError("--sparsity expects fractions in [0, 1), got '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw UsageError("--sparsity needs at least one level");
  return out;
}

}  // namespace

int dispatch(const std::vector<std::string>& args) {
  CLI::App app{"Functional-connectivity graph probing for small language models", "graphprobe"};
  app.require_subcommand(1);

  Options opts;
  std::optional<std::string> sparsity;

  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config,-c", opts.config, "Run configuration (JSON)")->required();
    sub->add_option("--seed", opts.seed, "Override the global seed");
    sub->add_option("--layer", opts.layer, "Block whose output is probed");
    sub->add_option("--sparsity", sparsity, "Comma-separated sparsity levels, e.g. 0,0.9,0.99");
    sub->add_option("--variant", opts.variants, "Model variant(s) to process (default: all)");
    sub->add_flag("--deterministic", opts.deterministic, "Single-threaded, reproducible execution");
    sub->add_flag("--force", opts.force, "Redo steps whose inputs changed and break stale locks");
  };

  std::function<void(Context&)> action;
  auto leaf = [&](CLI::App* group, const std::string& name, const std::string& help,
                  void (*fn)(Context&)) {
    CLI::App* sub = group->add_subcommand(name, help);
    add_common(sub);
    sub->callback([&action, fn] { action = fn; });
    return sub;
  };
  auto group = [&](const std::string& name, const std::string& help) {
    CLI::App* g = app.add_subcommand(name, help);
    g->require_subcommand(1);
    return g;
  };

  auto* corpus = group("corpus", "Text corpus");
  leaf(corpus, "build", "Assemble token sequences", cmd_corpus_build);
  auto* lm = group("lm", "Tiny language model");
  leaf(lm, "train", "Train and checkpoint the model", cmd_lm_train);
  auto* trace = group("trace", "Hidden-state traces");
  leaf(trace, "extract", "Record traces and perplexities, split the dataset", cmd_trace_extract);
  auto* graph = group("graph", "Connectivity graphs");
  leaf(graph, "build", "Pearson connectivity graphs from traces", cmd_graph_build);
  leaf(graph, "sparsify", "Keep the strongest edges per graph", cmd_graph_sparsify);
  leaf(graph, "stats", "Degree and density statistics", cmd_graph_stats);
  auto* probe = group("probe", "Perplexity probes");
  for (auto* sub : {leaf(probe, "train", "Train probes", cmd_probe_train),
                    leaf(probe, "eval", "Evaluate probes on the test split", cmd_probe_eval)}) {
    sub->add_option("--hops", opts.hops, "Message-passing hops (overrides the config)");
    sub->add_flag("--linear", opts.linear, "Drop the ReLU between hops");
  }
  auto* intervene = group("intervene", "Neuron interventions");
  leaf(intervene, "run", "Mask high- and low-degree neurons", cmd_intervene_run);
  auto* emergence = group("emergence", "Predictability across training");
  leaf(emergence, "run", "Train a probe per checkpoint", cmd_emergence_run);
  auto* match = group("match", "Cross-model graph matching");
  for (auto* sub : {leaf(match, "train", "Train contrastive encoders", cmd_match_train),
                    leaf(match, "eval", "AUC and GAUC on the test pairs", cmd_match_eval)}) {
    sub->add_option("--experiment", opts.experiments, "Experiment name(s) (default: all)");
  }
  auto* report = group("report", "Reports");
  leaf(report, "emit", "Collect metrics into CSV tables and SVG charts", cmd_report_emit);
  auto* pipeline = app.add_subcommand("pipeline", "Run every step in order");
  add_common(pipeline);
  pipeline->add_flag("--emergence", opts.emergence, "Include the checkpoint study");
  pipeline->callback([&action] { action = cmd_pipeline; });

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    std::ostringstream out, err;
    const int code = app.exit(e, out, err);
    std::cout << out.str();
    std::cerr << err.str();
    return code == 0 ? 0 : static_cast<int>(ExitCode::kUsage);
  }

  try {
    if (sparsity) opts.sparsity = parse_sparsity_list(*sparsity);
    Context ctx(opts);
    RunLock lock(ctx.ws.root(), opts.force);
    action(ctx);
    return 0;
  } catch (const Error& e) {
    std::cerr << "graphprobe: " << e.what() << "\n";
    return static_cast<int>(e.code());
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "graphprobe: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "graphprobe: malformed JSON: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  } catch (const std::exception& e) {
    std::cerr << "graphprobe: " << e.what() << "\n";
    return static_cast<int>(ExitCode::kData);
  }
}

}  // namespace graphprobe::cli
