// Acceptance gate. Prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails.
//
// Set GRAPHPROBE_ACCEPTANCE_CACHE to a directory to reuse trained desk
// checkpoints between runs.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <numeric>
#include <random>
#include <string>
#include <unordered_map>
#include <vector>

#include "cli.hpp"
#include "graphprobe/corpus.hpp"
#include "graphprobe/desk_corpus.hpp"
#include "graphprobe/emergence.hpp"
#include "graphprobe/matching.hpp"
#include "graphprobe/parallel.hpp"
#include "graphprobe/probe.hpp"
#include "graphprobe/tinylm.hpp"
#include "graphprobe/topology.hpp"
#include "support/generators.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

namespace fs = std::filesystem;
using namespace graphprobe;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void report(const std::string& name, const std::function<Outcome()>& body) {
  const auto start = Clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(Clock::now() - start).count();
  std::printf("%s %s: %s (%.1fs)\n", o.pass ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(), secs);
  std::fflush(stdout);
  if (!o.pass) ++failures;
}

void note(const std::string& text) {
  std::printf("  .. %s\n", text.c_str());
  std::fflush(stdout);
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t m = v.size() / 2;
  return v.size() % 2 ? v[m] : 0.5 * (v[m - 1] + v[m]);
}

// ---------------------------------------------------------------------------
// Oracle and unit criteria

Outcome correlation_oracle() {
  std::mt19937_64 rng(101);
  double worst = 0;
  bool symmetric = true;
  bool unit_diagonal = true;
  for (int trial = 0; trial < 100; ++trial) {
    const auto trace = gen::random_trace(rng, 32, 128);
    const auto g = connectivity(trace);
    oracle::Matrix rows(32);
    for (int i = 0; i < 32; ++i) {
      for (int k = 0; k < 128; ++k) rows[i].push_back(trace.H(i, k));
    }
    const auto ref = oracle::correlation(rows);
    for (std::uint32_t i = 0; i < 32; ++i) {
      unit_diagonal = unit_diagonal && g.weight(i, i) == 1.0f;
      for (std::uint32_t j = 0; j < 32; ++j) {
        symmetric = symmetric && g.weight(i, j) == g.weight(j, i);
        worst = std::max(worst, std::abs(g.weight(i, j) - ref[i][j]));
      }
    }
  }
  return {worst <= 1e-5 && symmetric && unit_diagonal,
          "max |error| " + fmt("%.2e", worst) + (symmetric ? ", symmetric" : ", ASYMMETRIC") +
              (unit_diagonal ? ", unit diagonal" : ", BAD DIAGONAL")};
}

Outcome perplexity_oracle(const LmCheckpoint& ckpt) {
  std::mt19937_64 rng(102);
  double worst = 0;
  for (int trial = 0; trial < 50; ++trial) {
    const auto tokens = gen::random_tokens(rng, 2 + rng() % 1023);
    const MatF logits = forward_logits(ckpt, tokens);
    const std::vector<double> dumped(logits.data(), logits.data() + logits.size());
    const double ref = oracle::perplexity(dumped, ckpt.config.vocab_size, tokens);
    const double got = perplexity_from_logits(logits, tokens).value;
    worst = std::max(worst, std::abs(got - ref) / ref);
  }
  return {worst <= 1e-6, "max relative error " + fmt("%.2e", worst) + " over 50 sequences"};
}

Outcome gradient_check() {
  std::size_t checked = 0, skipped = 0, failed = 0;
  double worst = 0;
  for (std::size_t hops : {1u, 2u}) {
    for (bool nonlinear : {true, false}) {
      for (std::uint64_t trial = 0; trial < 20; ++trial) {
        const auto r = gradcheck::run(gradcheck::make_trial(hops, nonlinear, 1000 + trial));
        checked += r.checked;
        skipped += r.skipped;
        failed += r.failed;
        worst = std::max(worst, r.worst_relative);
      }
    }
  }
  return {failed == 0 && checked > 10 * skipped,
          std::to_string(checked) + " coordinates, " + std::to_string(skipped) +
              " skipped at kinks, worst relative error " + fmt("%.2e", worst)};
}

Outcome metric_units() {
  const auto eye = auc_gauc(MatD::Identity(50, 50));
  MatD two(2, 2);
  two << 0.5, 0.7, 0.2, 0.8;
  const auto ex = auc_gauc(two);
  // Tolerance on the mean over 20 trials.
  std::mt19937_64 rng(103);
  double auc = 0, gauc = 0, spread = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto r = auc_gauc(MatD(gen::random_matrix(rng, 100, 100).cast<double>()));
    auc += r.auc / 20;
    gauc += r.gauc / 20;
    spread = std::max({spread, std::abs(r.auc - 0.5), std::abs(r.gauc - 0.5)});
  }
  const bool ok = eye.auc == 1.0 && eye.gauc == 1.0 && ex.auc == 0.75 && ex.gauc == 0.75 &&
                  std::abs(auc - 0.5) <= 0.05 && std::abs(gauc - 0.5) <= 0.05;
  return {ok, "identity " + fmt("%g", eye.auc) + "/" + fmt("%g", eye.gauc) + ", 2x2 " + fmt("%g", ex.auc) +
                  "/" + fmt("%g", ex.gauc) + ", random mean " + fmt("%.4f", auc) + "/" + fmt("%.4f", gauc) +
                  " (largest single-trial deviation " + fmt("%.4f", spread) + ")"};
}

// ---------------------------------------------------------------------------
// Desk rig

struct Desk {
  std::vector<TokenSequence> sequences;
  LmCheckpoint lm_a;
  LmCheckpoint lm_b;
  GraphDataset data_a;
  GraphDataset data_b;
};

constexpr int kLayer = 1;
constexpr std::uint64_t kSplitSeed = 7;

LmConfig desk_lm(std::uint64_t seed) {
  LmConfig c;
  c.total_steps = 512;
  c.window = 512;
  c.seed = seed;
  c.checkpoint_schedule = {c.total_steps};
  return c;
}

LmCheckpoint desk_checkpoint(const std::vector<TokenSequence>& seqs, std::uint64_t seed) {
  const char* cache = std::getenv("GRAPHPROBE_ACCEPTANCE_CACHE");
  fs::path path;
  if (cache && *cache) {
    fs::create_directories(cache);
    path = fs::path(cache) / ("desk_lm_seed" + std::to_string(seed) + ".bin");
    if (fs::exists(path)) {
      auto ckpt = load_checkpoint(path);
      note("loaded cached LM seed " + std::to_string(seed));
      return ckpt;
    }
  }
  const auto start = Clock::now();
  auto result = train_lm(seqs, desk_lm(seed));
  const auto& log = result.log;
  note("trained LM seed " + std::to_string(seed) + ": loss " + fmt("%.3f", log.front().loss) + " -> " +
       fmt("%.3f", log.back().loss) + " in " +
       fmt("%.0fs", std::chrono::duration<double>(Clock::now() - start).count()));
  if (!path.empty()) save_checkpoint(path, result.checkpoints.back());
  return std::move(result.checkpoints.back());
}

Desk build_desk() {
  Desk d;
  const auto docs = generate_desk_corpus({});
  d.sequences = assemble_sequences(docs, ByteTokenizer{});
  std::size_t tokens = 0;
  for (const auto& s : d.sequences) tokens += s.length();
  note("desk corpus: " + std::to_string(d.sequences.size()) + " sequences, " + std::to_string(tokens) +
       " tokens");
  d.lm_a = desk_checkpoint(d.sequences, 0);
  d.lm_b = desk_checkpoint(d.sequences, 1);
  d.data_a = build_graph_dataset(d.lm_a, d.sequences, kLayer, 1.0, kSplitSeed);
  d.data_b = build_graph_dataset(d.lm_b, d.sequences, kLayer, 1.0, kSplitSeed);
  note("desk dataset: " + std::to_string(d.data_a.train.size()) + " train / " +
       std::to_string(d.data_a.test.size()) + " test, mean perplexity " + fmt("%.2f", d.data_a.mean_ppl_raw));
  return d;
}

std::vector<GraphSample> sparsified(const std::vector<GraphSample>& in, double keep) {
  std::vector<GraphSample> out(in.size());
  parallel_for(in.size(), [&](std::size_t k) { out[k] = {in[k].id, sparsify(in[k].graph, keep), in[k].label}; });
  return out;
}

struct ProbeRun {
  MetricsReport test;
  std::size_t epochs = 0;
};

ProbeRun run_probe(const std::vector<GraphSample>& train, const std::vector<GraphSample>& test,
                   std::size_t hops, bool nonlinear, std::uint64_t seed) {
  ProbeConfig cfg;
  cfg.hops = hops;
  cfg.nonlinear = nonlinear;
  cfg.seed = seed;
  const auto r = train_probe(train, cfg);
  return {evaluate(r.params, cfg, test), r.log.size()};
}

std::string describe(const MetricsReport& m) {
  return "mse " + fmt("%.5f", m.mse) + " r2 " + fmt("%.4f", m.r2.value_or(NAN)) + " pearson " +
         fmt("%.4f", m.pearson.value_or(NAN));
}

struct ProbeSweep {
  std::vector<ProbeRun> dense_nl, dense_lin, s90_h1, s90_h2;
  ProbeRun s99_h1;
};

ProbeSweep sweep(const Desk& d) {
  ProbeSweep s;
  const auto& train = d.data_a.train;
  const auto& test = d.data_a.test;
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    s.dense_nl.push_back(run_probe(train, test, 1, true, seed));
    s.dense_lin.push_back(run_probe(train, test, 1, false, seed));
    note("dense seed " + std::to_string(seed) + ": non-linear " + describe(s.dense_nl.back().test) +
         " | linear " + describe(s.dense_lin.back().test));
  }
  const auto train90 = sparsified(train, 0.1);
  const auto test90 = sparsified(test, 0.1);
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    s.s90_h1.push_back(run_probe(train90, test90, 1, true, seed));
    s.s90_h2.push_back(run_probe(train90, test90, 2, true, seed));
    note("90% sparse seed " + std::to_string(seed) + ": 1-hop " + describe(s.s90_h1.back().test) +
         " | 2-hop " + describe(s.s90_h2.back().test));
  }
  s.s99_h1 = run_probe(sparsified(train, 0.01), sparsified(test, 0.01), 1, true, 0);
  note("99% sparse: 1-hop " + describe(s.s99_h1.test));
  return s;
}

double test_label_mse_of_mean(const GraphDataset& data) {
  double mean = 0;
  for (const auto& s : data.train) mean += s.label / static_cast<double>(data.train.size());
  double mse = 0;
  for (const auto& s : data.test) mse += (s.label - mean) * (s.label - mean) / static_cast<double>(data.test.size());
  return mse;
}

Outcome predictability(const Desk& d, const ProbeSweep& s) {
  const auto& m = s.dense_nl.front().test;
  const double baseline = test_label_mse_of_mean(d.data_a);
  const double r = m.pearson.value_or(NAN);
  const double r2 = m.r2.value_or(NAN);
  return {r >= 0.5 && r2 >= 0.2 && m.mse < baseline,
          describe(m) + ", mean-predictor mse " + fmt("%.5f", baseline)};
}

Outcome nonlinearity(const ProbeSweep& s) {
  std::vector<double> nl, lin;
  for (const auto& r : s.dense_nl) nl.push_back(r.test.mse);
  for (const auto& r : s.dense_lin) lin.push_back(r.test.mse);
  const double a = median(nl), b = median(lin);
  return {a <= b, "median test mse non-linear " + fmt("%.6f", a) + " vs linear " + fmt("%.6f", b)};
}

Outcome sparsity(const ProbeSweep& s) {
  std::vector<double> dense, s90;
  int two_hop_wins = 0;
  for (std::size_t k = 0; k < 3; ++k) {
    dense.push_back(s.dense_nl[k].test.pearson.value_or(NAN));
    s90.push_back(s.s90_h1[k].test.pearson.value_or(NAN));
    two_hop_wins += s.s90_h2[k].test.pearson.value_or(NAN) >= s.s90_h1[k].test.pearson.value_or(NAN);
  }
  const double dm = median(dense), sm = median(s90);
  const double s99 = s.s99_h1.test.pearson.value_or(NAN);
  const bool ok = sm >= 0.7 * dm && s99 > 0 && two_hop_wins >= 2;
  return {ok, "median pearson dense " + fmt("%.4f", dm) + ", 90% " + fmt("%.4f", sm) + " (ratio " +
                  fmt("%.3f", sm / dm) + "), 99% " + fmt("%.4f", s99) + "; 2-hop >= 1-hop in " +
                  std::to_string(two_hop_wins) + " of 3 seeds"};
}

Outcome intervention(const Desk& d) {
  std::unordered_map<std::string, const TokenSequence*> by_id;
  for (const auto& s : d.sequences) by_id[s.id] = &s;
  const auto& test = d.data_a.test;
  const std::uint32_t n = static_cast<std::uint32_t>(d.lm_a.config.width);
  const auto k = static_cast<std::size_t>(std::ceil(0.1 * n));
  std::vector<double> top(test.size()), bottom(test.size());
  parallel_for(test.size(), [&](std::size_t i) {
    const auto stats = graph_stats(test[i].graph);
    std::vector<std::uint32_t> order(n);
    std::iota(order.begin(), order.end(), 0u);
    std::stable_sort(order.begin(), order.end(),
                     [&](std::uint32_t a, std::uint32_t b) { return stats.degrees[a] > stats.degrees[b]; });
    const std::vector<std::uint32_t> hi(order.begin(), order.begin() + static_cast<long>(k));
    const std::vector<std::uint32_t> lo(order.end() - static_cast<long>(k), order.end());
    const auto& tokens = by_id.at(test[i].id)->tokens;
    top[i] = intervened_perplexity(d.lm_a, tokens, kLayer, hi).value;
    bottom[i] = intervened_perplexity(d.lm_a, tokens, kLayer, lo).value;
  });
  const double mt = std::accumulate(top.begin(), top.end(), 0.0) / static_cast<double>(top.size());
  const double mb = std::accumulate(bottom.begin(), bottom.end(), 0.0) / static_cast<double>(bottom.size());
  return {mt / mb >= 2.0, "mean perplexity top-" + std::to_string(k) + " masked " + fmt("%.3f", mt) +
                              ", bottom-" + std::to_string(k) + " masked " + fmt("%.3f", mb) + ", ratio " +
                              fmt("%.3f", mt / mb) + " over " + std::to_string(test.size()) + " test samples"};
}

std::vector<MatchPair> match_pairs(const GraphDataset& left, const GraphDataset& right, bool test) {
  std::unordered_map<std::string, const ConnectivityGraph*> rhs;
  for (const auto* part : {&right.train, &right.test}) {
    for (const auto& s : *part) rhs[s.id] = &s.graph;
  }
  const auto& lhs = test ? left.test : left.train;
  std::vector<MatchPair> out(lhs.size());
  std::vector<char> found(lhs.size(), 0);
  parallel_for(lhs.size(), [&](std::size_t k) {
    const auto it = rhs.find(lhs[k].id);
    if (it == rhs.end()) return;
    out[k] = {lhs[k].id, sparsify(lhs[k].graph, 0.2), sparsify(*it->second, 0.2)};
    found[k] = 1;
  });
  std::vector<MatchPair> kept;
  for (std::size_t k = 0; k < out.size(); ++k) {
    if (found[k]) kept.push_back(std::move(out[k]));
  }
  return kept;
}

AucReport run_matching(const GraphDataset& left, const GraphDataset& right, bool shared) {
  const auto train = match_pairs(left, right, false);
  const auto test = match_pairs(left, right, true);
  MatchConfig cfg;
  cfg.shared = shared;
  cfg.seed = 5;
  const auto model = train_matcher(train, cfg);
  note(std::string(shared ? "self" : "cross-seed") + " matcher: " + std::to_string(train.size()) +
       " train pairs, " + std::to_string(model.log.size()) + " epochs");
  return auc_gauc(test, model, cfg);
}

Outcome self_matching(const Desk& d) {
  const auto r = run_matching(d.data_a, d.data_a, true);
  return {r.auc >= 0.95 && r.gauc >= 0.95 && r.count >= 200,
          "AUC " + fmt("%.4f", r.auc) + " GAUC " + fmt("%.4f", r.gauc) + " on " + std::to_string(r.count) +
              " test pairs"};
}

Outcome cross_seed_matching(const Desk& d) {
  const auto r = run_matching(d.data_a, d.data_b, false);
  return {r.auc >= 0.75, "AUC " + fmt("%.4f", r.auc) + " GAUC " + fmt("%.4f", r.gauc) + " on " +
                             std::to_string(r.count) + " test pairs"};
}

// ---------------------------------------------------------------------------
// Determinism

std::string read_bytes(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

Outcome determinism() {
  const auto root = fs::temp_directory_path() / "graphprobe_acceptance_determinism";
  fs::remove_all(root);
  const std::string config = R"({
  "output_dir": "out",
  "seed": 17,
  "layer": 1,
  "sparsity": [0, 0.9],
  "variants": ["main", "alt"],
  "corpus": {"synthetic": {"documents": 150}},
  "lm": {"width": 32, "heads": 2, "total_steps": 16, "window": 256, "batch_size": 2},
  "probe": {"max_epochs": 6, "seeds": 2},
  "matching": {"probe": {"max_epochs": 4},
               "experiments": [{"name": "self", "left": "main", "right": "main"},
                               {"name": "cross_seed", "left": "main", "right": "alt"}]},
  "intervention": {"max_samples": 20}
})";
  std::vector<fs::path> outs;
  for (const char* run : {"a", "b"}) {
    const auto dir = root / run;
    fs::create_directories(dir);
    std::ofstream(dir / "config.json") << config;
    const int code = cli::dispatch(
        {"pipeline", "--config", (dir / "config.json").string(), "--deterministic", "--emergence"});
    if (code != 0) return {false, std::string("pipeline run ") + run + " exited with " + std::to_string(code)};
    outs.push_back(dir / "out");
  }
  std::size_t files = 0;
  std::vector<std::string> differing;
  for (const auto& e : fs::recursive_directory_iterator(outs[0])) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), outs[0]);
    ++files;
    if (!fs::exists(outs[1] / rel) || read_bytes(e.path()) != read_bytes(outs[1] / rel)) {
      differing.push_back(rel.string());
    }
  }
  std::size_t files_b = 0;
  for (const auto& e : fs::recursive_directory_iterator(outs[1])) files_b += e.is_regular_file();
  std::string detail = std::to_string(files) + " files compared";
  if (files != files_b) detail += ", file counts differ (" + std::to_string(files_b) + ")";
  if (!differing.empty()) detail += ", " + std::to_string(differing.size()) + " differ, first " + differing.front();
  const bool ok = differing.empty() && files == files_b && files > 0;
  if (ok) fs::remove_all(root);
  return {ok, detail};
}

}  // namespace

int main() {
  std::printf("graphprobe acceptance suite\n");
  std::fflush(stdout);
  report("correlation-oracle", correlation_oracle);
  report("gradient-check", gradient_check);
  report("metric-units", metric_units);
  report("determinism", determinism);

  Desk desk;
  bool desk_ready = false;
  {
    const auto start = Clock::now();
    try {
      desk = build_desk();
      desk_ready = true;
    } catch (const std::exception& e) {
      std::printf("desk rig failed: %s\n", e.what());
    }
    note("desk rig ready in " + fmt("%.0fs", std::chrono::duration<double>(Clock::now() - start).count()));
  }
  const auto needs_desk = [&](const std::function<Outcome()>& body) -> std::function<Outcome()> {
    return [&, body] { return desk_ready ? body() : Outcome{false, "desk rig unavailable"}; };
  };

  report("perplexity-oracle", needs_desk([&] { return perplexity_oracle(desk.lm_a); }));
  ProbeSweep probes;
  bool probes_ready = false;
  if (desk_ready) {
    try {
      probes = sweep(desk);
      probes_ready = true;
    } catch (const std::exception& e) {
      std::printf("probe sweep failed: %s\n", e.what());
    }
  }
  const auto needs_probes = [&](const std::function<Outcome()>& body) -> std::function<Outcome()> {
    return [&, body] { return probes_ready ? body() : Outcome{false, "probe sweep unavailable"}; };
  };
  report("desk-predictability", needs_probes([&] { return predictability(desk, probes); }));
  report("nonlinear-vs-linear", needs_probes([&] { return nonlinearity(probes); }));
  report("sparsity-robustness", needs_probes([&] { return sparsity(probes); }));
  report("intervention-direction", needs_desk([&] { return intervention(desk); }));
  report("self-matching", needs_desk([&] { return self_matching(desk); }));
  report("cross-seed-matching", needs_desk([&] { return cross_seed_matching(desk); }));

  std::printf("%d criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
