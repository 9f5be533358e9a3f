#include "workspace.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "graphprobe/errors.hpp"
#include "hashing.hpp"

namespace graphprobe::cli {

namespace fs = std::filesystem;
using nlohmann::json;

fs::path Workspace::checkpoint(const std::string& variant, std::size_t step) const {
  char name[32];
  std::snprintf(name, sizeof name, "ckpt_%06zu.bin", step);
  return lm_dir(variant) / name;
}

fs::path Workspace::manifest(const std::string& variant, int layer, const std::string& tag) const {
  return layer_dir(variant, layer) / (tag.empty() ? "manifest.jsonl" : "manifest_" + tag + ".jsonl");
}

fs::path Workspace::probe_dir(const std::string& variant, int layer, const std::string& tag,
                              std::size_t hops, bool nonlinear, std::size_t repeat) const {
  return layer_dir(variant, layer) / "probes" /
         (tag + "_h" + std::to_string(hops) + (nonlinear ? "_nl" : "_lin") + "_r" +
          std::to_string(repeat));
}

RunLock::RunLock(const fs::path& root, bool force) : path_(root / ".lock") {
  fs::create_directories(root);
  for (int attempt = 0; attempt < 2; ++attempt) {
    const int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd >= 0) {
      const std::string pid = std::to_string(::getpid()) + "\n";
      [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
      ::close(fd);
      return;
    }
    if (errno != EEXIST) {
      throw DataError("cannot create lock " + path_.string() + ": " + std::strerror(errno));
    }
    if (!force || attempt > 0) break;
    fs::remove(path_);
  }
  throw DataError("output directory is locked by another run (" + path_.string() +
                  "); remove the file or pass --force if no run is active");
}

RunLock::~RunLock() {
  std::error_code ec;
  fs::remove(path_, ec);
}

fs::path StepLog::record_path(const std::string& step) const {
  return ws_.steps_dir() / (step + ".json");
}

bool StepLog::exists(const std::string& step) const { return fs::exists(record_path(step)); }

bool StepLog::up_to_date(const std::string& step, const std::string& stamp) const {
  const auto path = record_path(step);
  if (!fs::exists(path)) return false;
  json rec;
  try {
    std::ifstream in(path);
    rec = json::parse(in);
  } catch (const json::exception&) {
    return false;
  }
  if (rec.value("stamp", "") != stamp) {
    if (force_) return false;
    throw UsageError("step '" + step + "' was produced from different inputs or settings; "
                     "pass --force to overwrite it");
  }
  for (const auto& [rel, hash] : rec.at("outputs").items()) {
    const auto file = ws_.root() / rel;
    if (!fs::exists(file) || sha256_file(file) != hash.get<std::string>()) return false;
  }
  return true;
}

void StepLog::record(const std::string& step, const std::string& stamp,
                     const std::vector<fs::path>& outputs) const {
  json files = json::object();
  for (const auto& p : outputs) {
    files[fs::relative(p, ws_.root()).generic_string()] = sha256_file(p);
  }
  json rec = {{"step", step}, {"stamp", stamp}, {"outputs", files}};
  fs::create_directories(ws_.steps_dir());
  const auto path = record_path(step);
  const auto tmp = fs::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp);
    out << rec.dump(2) << "\n";
    if (!out) throw DataError("cannot write " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string StepLog::digest(const std::string& step) const {
  const auto path = record_path(step);
  if (!fs::exists(path)) {
    throw DataError("missing upstream step '" + step + "'; run it first");
  }
  return sha256_file(path);
}

std::string make_stamp(const json& parts) { return sha256_hex(parts.dump()); }

}  // namespace graphprobe::cli
