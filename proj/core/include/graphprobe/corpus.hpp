#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace graphprobe {

using Token = std::uint32_t;

inline constexpr std::size_t kDefaultMinLength = 256;
inline constexpr std::size_t kDefaultMaxLength = 1024;

struct TokenSequence {
  std::string id;
  std::vector<Token> tokens;

  std::size_t length() const noexcept { return tokens.size(); }
};

/// Byte-level tokenizer: every byte is its own token, vocabulary of 256.
class ByteTokenizer {
 public:
  static constexpr std::size_t kVocabSize = 256;

  std::size_t vocab_size() const noexcept { return kVocabSize; }
  std::vector<Token> encode(std::string_view text) const;
  std::string decode(std::span<const Token> tokens) const;
};

/// Concatenates consecutive texts until a run holds at least `min_len`
/// tokens, then cuts the run into `max_len` chunks. Chunks shorter than
/// `min_len` (the tail of a run, or leftovers at the end of the corpus) are
/// dropped. Sequence ids are "s" followed by a zero-padded ordinal.
std::vector<TokenSequence> assemble_sequences(std::span<const std::string> raw_texts,
                                              const ByteTokenizer& tokenizer,
                                              std::size_t min_len = kDefaultMinLength,
                                              std::size_t max_len = kDefaultMaxLength);

enum class Split { kTrain, kTest };

std::string_view to_string(Split split) noexcept;
Split split_from_string(std::string_view text);

struct SampleRecord {
  std::string id;
  std::size_t length = 0;
  double ppl_raw = 0.0;
  double ppl_norm = 0.0;
  std::string trace_path;
  std::string graph_path;
  int layer = 0;
  Split split = Split::kTrain;
};

struct DatasetManifest {
  std::vector<SampleRecord> samples;
  double ppl_min = 0.0;
  double ppl_max = 0.0;

  std::size_t count(Split split) const;
  std::vector<const SampleRecord*> select(Split split) const;
};

struct RawPerplexity {
  std::string id;
  std::size_t length = 0;
  double ppl_raw = 0.0;
};

/// Number of samples trimmed from each end of the perplexity ranking:
/// ceil(0.01 * n).
std::size_t outlier_trim_count(std::size_t n);

/// Drops the top and bottom 1% by perplexity and min-max normalizes the
/// survivors to [0, 1]. Survivors keep input order. Ties in the ranking are
/// broken by input position.
DatasetManifest filter_and_normalize(std::span<const RawPerplexity> samples);

/// Rounded train count for an a:b split of n samples.
std::size_t train_count(std::size_t n, unsigned train_parts = 8, unsigned test_parts = 2);

/// Labels samples train/test by a seeded random permutation: the first
/// train_count() positions of the permutation are train. Sample order is kept.
DatasetManifest split_dataset(DatasetManifest manifest, std::uint64_t seed,
                              unsigned train_parts = 8, unsigned test_parts = 2);

/// Line-delimited JSON: one header record carrying ppl_min/ppl_max, then one
/// record per sample.
void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest);
DatasetManifest read_manifest(const std::filesystem::path& path);

/// One JSON record per line: {"id": ..., "tokens": [...]}.
void write_sequences(const std::filesystem::path& path, std::span<const TokenSequence> sequences);
std::vector<TokenSequence> read_sequences(const std::filesystem::path& path);

/// Splits a plain-text file into paragraphs separated by blank lines.
/// Each paragraph keeps its trailing newline.
std::vector<std::string> read_paragraphs(const std::filesystem::path& path);

}  // namespace graphprobe
