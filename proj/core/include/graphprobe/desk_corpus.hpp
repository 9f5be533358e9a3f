#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace graphprobe {

/// Options for the built-in procedural text corpus used by desk-scale runs.
struct DeskCorpusOptions {
  std::size_t documents = 2400;
  std::uint64_t seed = 20250101;
  std::size_t min_bytes = 280;
  std::size_t max_bytes = 1100;
  /// Fraction of documents that receive random character corruption.
  double corrupted_fraction = 0.5;
  /// Upper bound of the per-document corruption rate.
  double max_corruption = 0.25;
};

/// Generates a deterministic mix of prose, dialogue, source code and tabular
/// records. Each document draws its own corruption rate, so next-byte
/// difficulty varies continuously across documents.
std::vector<std::string> generate_desk_corpus(const DeskCorpusOptions& options);

}  // namespace graphprobe
