#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace graphprobe::cli {

/// Output-directory layout shared by every subcommand.
class Workspace {
 public:
  explicit Workspace(std::filesystem::path root) : root_(std::move(root)) {}

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path sequences() const { return root_ / "corpus" / "sequences.jsonl"; }
  std::filesystem::path lm_dir(const std::string& variant) const {
    return root_ / "models" / variant / "lm";
  }
  std::filesystem::path checkpoint(const std::string& variant, std::size_t step) const;
  std::filesystem::path layer_dir(const std::string& variant, int layer) const {
    return root_ / "models" / variant / ("L" + std::to_string(layer));
  }
  std::filesystem::path trace_dir(const std::string& variant, int layer) const {
    return layer_dir(variant, layer) / "traces";
  }
  std::filesystem::path graph_dir(const std::string& variant, int layer, const std::string& tag) const {
    return layer_dir(variant, layer) / "graphs" / tag;
  }
  /// Trace-level manifest when `tag` is empty, otherwise the manifest whose
  /// graph paths point at graphs/<tag>.
  std::filesystem::path manifest(const std::string& variant, int layer,
                                 const std::string& tag = {}) const;
  std::filesystem::path probe_dir(const std::string& variant, int layer, const std::string& tag,
                                  std::size_t hops, bool nonlinear, std::size_t repeat) const;
  std::filesystem::path matching_dir(const std::string& name) const {
    return root_ / "matching" / name;
  }
  std::filesystem::path reports_dir() const { return root_ / "reports"; }
  std::filesystem::path steps_dir() const { return root_ / ".steps"; }

 private:
  std::filesystem::path root_;
};

/// Exclusive lock on an output directory, released on destruction.
class RunLock {
 public:
  RunLock(const std::filesystem::path& root, bool force);
  ~RunLock();
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;

 private:
  std::filesystem::path path_;
};

/// Per-step completion records: <out>/.steps/<step>.json holding the input
/// stamp and the SHA-256 of every produced file.
class StepLog {
 public:
  StepLog(const Workspace& ws, bool force) : ws_(ws), force_(force) {}

  /// True when the step already ran with this stamp and its outputs are
  /// unchanged. A record with a different stamp is refused unless forced.
  bool up_to_date(const std::string& step, const std::string& stamp) const;
  void record(const std::string& step, const std::string& stamp,
              const std::vector<std::filesystem::path>& outputs) const;
  /// Hash of a finished step's record, used to stamp downstream steps.
  std::string digest(const std::string& step) const;
  bool exists(const std::string& step) const;

 private:
  std::filesystem::path record_path(const std::string& step) const;

  const Workspace& ws_;
  bool force_;
};

/// Stamp of a step: hash of its configuration slice and upstream digests.
std::string make_stamp(const nlohmann::json& parts);

}  // namespace graphprobe::cli
