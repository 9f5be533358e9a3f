#include "run_config.hpp"

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <set>

#include "graphprobe/errors.hpp"

namespace graphprobe::cli {

using nlohmann::json;

namespace {

void allow_keys(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) throw UsageError("config: '" + where + "' must be an object");
  std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items()) {
    if (!allowed.count(k)) throw UsageError("config: unknown key '" + k + "' in " + where);
  }
}

template <typename T>
void read(const json& obj, const char* key, T& out) {
  if (auto it = obj.find(key); it != obj.end()) {
    try {
      out = it->get<T>();
    } catch (const json::exception& e) {
      throw UsageError(std::string("config: bad value for '") + key + "': " + e.what());
    }
  }
}

ProbeConfig parse_probe(const json& obj, const std::string& where, ProbeConfig p) {
  allow_keys(obj, where,
             {"hops", "width", "nonlinear", "learning_rate", "batch_size", "max_epochs",
              "patience_decay", "decay_factor", "patience_stop", "holdout_fraction", "seeds"});
  read(obj, "hops", p.hops);
  read(obj, "width", p.width);
  read(obj, "nonlinear", p.nonlinear);
  read(obj, "learning_rate", p.learning_rate);
  read(obj, "batch_size", p.batch_size);
  read(obj, "max_epochs", p.max_epochs);
  read(obj, "patience_decay", p.patience_decay);
  read(obj, "decay_factor", p.decay_factor);
  read(obj, "patience_stop", p.patience_stop);
  read(obj, "holdout_fraction", p.holdout_fraction);
  p.validate();
  return p;
}

std::filesystem::path resolve(const std::filesystem::path& p, const std::filesystem::path& base) {
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv(kDataRootEnv); root && *root) return std::filesystem::path(root) / p;
  return base / p;
}

}  // namespace

RunConfig parse_run_config(const json& doc, const std::filesystem::path& base_dir) {
  allow_keys(doc, "run config",
             {"output_dir", "seed", "layer", "sparsity", "variants", "corpus", "lm", "probe",
              "matching", "intervention", "threads"});
  RunConfig rc;
  std::string out;
  read(doc, "output_dir", out);
  if (out.empty()) throw UsageError("config: 'output_dir' is required");
  rc.output_dir = resolve(out, base_dir);
  read(doc, "seed", rc.seed);
  if (doc.contains("layer")) rc.layer = doc.at("layer").get<int>();
  read(doc, "sparsity", rc.sparsity);
  read(doc, "variants", rc.variants);
  read(doc, "threads", rc.threads);
  if (rc.variants.empty()) throw UsageError("config: 'variants' must not be empty");
  for (double s : rc.sparsity) {
    if (!(s >= 0.0 && s < 1.0)) throw UsageError("config: sparsity levels must lie in [0, 1)");
  }

  if (auto it = doc.find("corpus"); it != doc.end()) {
    allow_keys(*it, "corpus", {"paths", "synthetic", "min_len", "max_len", "max_sequences"});
    std::vector<std::string> paths;
    read(*it, "paths", paths);
    for (const auto& p : paths) rc.corpus.paths.push_back(resolve(p, base_dir));
    if (auto s = it->find("synthetic"); s != it->end()) {
      allow_keys(*s, "corpus.synthetic",
                 {"documents", "seed", "min_bytes", "max_bytes", "corrupted_fraction",
                  "max_corruption"});
      auto& o = rc.corpus.synthetic;
      read(*s, "documents", o.documents);
      read(*s, "seed", o.seed);
      read(*s, "min_bytes", o.min_bytes);
      read(*s, "max_bytes", o.max_bytes);
      read(*s, "corrupted_fraction", o.corrupted_fraction);
      read(*s, "max_corruption", o.max_corruption);
    }
    read(*it, "min_len", rc.corpus.min_len);
    read(*it, "max_len", rc.corpus.max_len);
    read(*it, "max_sequences", rc.corpus.max_sequences);
  }

  if (auto it = doc.find("lm"); it != doc.end()) {
    allow_keys(*it, "lm",
               {"width", "depth", "heads", "context", "total_steps", "batch_size", "window",
                "learning_rate", "warmup_steps", "grad_clip"});
    auto& c = rc.lm;
    read(*it, "width", c.width);
    read(*it, "depth", c.depth);
    read(*it, "heads", c.heads);
    read(*it, "context", c.context);
    read(*it, "total_steps", c.total_steps);
    read(*it, "batch_size", c.batch_size);
    read(*it, "window", c.window);
    read(*it, "learning_rate", c.learning_rate);
    read(*it, "warmup_steps", c.warmup_steps);
    read(*it, "grad_clip", c.grad_clip);
  }
  rc.lm.checkpoint_schedule = power_of_two_schedule(rc.lm.total_steps);
  rc.lm.validate();

  if (auto it = doc.find("probe"); it != doc.end()) {
    rc.probe = parse_probe(*it, "probe", rc.probe);
    read(*it, "seeds", rc.probe_seeds);
    if (rc.probe_seeds == 0) throw UsageError("config: probe.seeds must be >= 1");
  }
  rc.matching.probe = rc.probe;
  if (auto it = doc.find("matching"); it != doc.end()) {
    allow_keys(*it, "matching", {"sparsity", "probe", "experiments"});
    read(*it, "sparsity", rc.matching.sparsity);
    if (!(rc.matching.sparsity >= 0.0 && rc.matching.sparsity < 1.0)) {
      throw UsageError("config: matching.sparsity must lie in [0, 1)");
    }
    if (auto p = it->find("probe"); p != it->end()) {
      rc.matching.probe = parse_probe(*p, "matching.probe", rc.matching.probe);
    }
    if (auto ex = it->find("experiments"); ex != it->end()) {
      std::set<std::string> names;
      for (const auto& e : *ex) {
        allow_keys(e, "matching.experiments[]", {"name", "left", "right"});
        MatchExperiment m{e.value("name", ""), e.value("left", ""), e.value("right", "")};
        if (m.name.empty() || m.left.empty() || m.right.empty()) {
          throw UsageError("config: matching experiments need name, left and right");
        }
        if (!names.insert(m.name).second) throw UsageError("config: duplicate experiment " + m.name);
        rc.matching.experiments.push_back(m);
      }
    }
  }
  if (auto it = doc.find("intervention"); it != doc.end()) {
    allow_keys(*it, "intervention", {"fraction", "max_samples"});
    read(*it, "fraction", rc.intervention.fraction);
    read(*it, "max_samples", rc.intervention.max_samples);
    if (!(rc.intervention.fraction > 0.0 && rc.intervention.fraction <= 0.5)) {
      throw UsageError("config: intervention.fraction must lie in (0, 0.5]");
    }
  }
  return rc;
}

RunConfig load_run_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open config " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw UsageError("config " + path.string() + ": " + e.what());
  }
  return parse_run_config(doc, std::filesystem::absolute(path).parent_path());
}

json to_json(const CorpusSettings& c) {
  json paths = json::array();
  for (const auto& p : c.paths) paths.push_back(p.string());
  const auto& s = c.synthetic;
  return {{"paths", paths},
          {"synthetic",
           {{"documents", s.documents},
            {"seed", s.seed},
            {"min_bytes", s.min_bytes},
            {"max_bytes", s.max_bytes},
            {"corrupted_fraction", s.corrupted_fraction},
            {"max_corruption", s.max_corruption}}},
          {"min_len", c.min_len},
          {"max_len", c.max_len},
          {"max_sequences", c.max_sequences}};
}

json to_json(const LmConfig& c) {
  return {{"vocab_size", c.vocab_size},     {"width", c.width},
          {"depth", c.depth},               {"heads", c.heads},
          {"context", c.context},           {"seed", c.seed},
          {"total_steps", c.total_steps},   {"checkpoint_schedule", c.checkpoint_schedule},
          {"batch_size", c.batch_size},     {"window", c.window},
          {"learning_rate", c.learning_rate}, {"warmup_steps", c.warmup_steps},
          {"grad_clip", c.grad_clip}};
}

json to_json(const ProbeConfig& c) {
  return {{"hops", c.hops},
          {"width", c.width},
          {"nonlinear", c.nonlinear},
          {"learning_rate", c.learning_rate},
          {"batch_size", c.batch_size},
          {"max_epochs", c.max_epochs},
          {"patience_decay", c.patience_decay},
          {"decay_factor", c.decay_factor},
          {"patience_stop", c.patience_stop},
          {"holdout_fraction", c.holdout_fraction},
          {"seed", c.seed}};
}

std::string sparsity_tag(double sparsity) {
  if (sparsity == 0.0) return "dense";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4g", sparsity * 100.0);
  return std::string("s") + buf;
}

}  // namespace graphprobe::cli
