#include "graphprobe/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <random>
#include <sstream>

#include <nlohmann/json.hpp>

#include "graphprobe/errors.hpp"

namespace graphprobe {

using nlohmann::json;

std::vector<Token> ByteTokenizer::encode(std::string_view text) const {
  std::vector<Token> tokens;
  tokens.reserve(text.size());
  for (unsigned char c : text) tokens.push_back(static_cast<Token>(c));
  return tokens;
}

std::string ByteTokenizer::decode(std::span<const Token> tokens) const {
  std::string text;
  text.reserve(tokens.size());
  for (Token t : tokens) {
    if (t >= kVocabSize) throw DataError("token " + std::to_string(t) + " outside byte vocabulary");
    text.push_back(static_cast<char>(t));
  }
  return text;
}

namespace {

std::string sequence_id(std::size_t ordinal) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "s%06zu", ordinal);
  return buf;
}

}  // namespace

std::vector<TokenSequence> assemble_sequences(std::span<const std::string> raw_texts,
                                              const ByteTokenizer& tokenizer, std::size_t min_len,
                                              std::size_t max_len) {
  if (raw_texts.empty()) throw DataError("assemble_sequences: empty corpus");
  if (min_len == 0 || min_len > max_len) {
    throw UsageError("assemble_sequences: need 0 < min_len <= max_len");
  }

  std::vector<TokenSequence> out;
  std::vector<Token> run;
  auto flush = [&] {
    for (std::size_t begin = 0; begin < run.size(); begin += max_len) {
      const std::size_t end = std::min(run.size(), begin + max_len);
      if (end - begin < min_len) break;
      TokenSequence seq;
      seq.id = sequence_id(out.size());
      seq.tokens.assign(run.begin() + static_cast<std::ptrdiff_t>(begin),
                        run.begin() + static_cast<std::ptrdiff_t>(end));
      out.push_back(std::move(seq));
    }
    run.clear();
  };

  for (const auto& text : raw_texts) {
    auto tokens = tokenizer.encode(text);
    run.insert(run.end(), tokens.begin(), tokens.end());
    if (run.size() >= min_len) flush();
  }
  return out;
}

std::string_view to_string(Split split) noexcept {
  return split == Split::kTrain ? "train" : "test";
}

Split split_from_string(std::string_view text) {
  if (text == "train") return Split::kTrain;
  if (text == "test") return Split::kTest;
  throw DataError("unknown split label '" + std::string(text) + "'");
}

std::size_t DatasetManifest::count(Split split) const {
  return static_cast<std::size_t>(std::count_if(
      samples.begin(), samples.end(), [split](const SampleRecord& s) { return s.split == split; }));
}

std::vector<const SampleRecord*> DatasetManifest::select(Split split) const {
  std::vector<const SampleRecord*> out;
  for (const auto& s : samples) {
    if (s.split == split) out.push_back(&s);
  }
  return out;
}

std::size_t outlier_trim_count(std::size_t n) { return (n + 99) / 100; }

DatasetManifest filter_and_normalize(std::span<const RawPerplexity> samples) {
  if (samples.size() < 3) throw DataError("filter_and_normalize: need at least 3 samples");
  for (const auto& s : samples) {
    if (!std::isfinite(s.ppl_raw) || s.ppl_raw <= 0.0) {
      throw DataError("filter_and_normalize: non-positive or non-finite perplexity for " + s.id);
    }
  }

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return samples[a].ppl_raw < samples[b].ppl_raw;
  });

  const std::size_t trim = outlier_trim_count(samples.size());
  std::vector<bool> keep(samples.size(), false);
  for (std::size_t r = trim; r + trim < order.size(); ++r) keep[order[r]] = true;
  if (order.size() <= 2 * trim) throw DataError("filter_and_normalize: nothing survives trimming");

  DatasetManifest manifest;
  manifest.ppl_min = samples[order[trim]].ppl_raw;
  manifest.ppl_max = samples[order[order.size() - trim - 1]].ppl_raw;
  const double range = manifest.ppl_max - manifest.ppl_min;
  if (!(range > 0.0)) throw DataError("filter_and_normalize: degenerate perplexity range");

  for (std::size_t i = 0; i < samples.size(); ++i) {
    if (!keep[i]) continue;
    SampleRecord rec;
    rec.id = samples[i].id;
    rec.length = samples[i].length;
    rec.ppl_raw = samples[i].ppl_raw;
    rec.ppl_norm = (samples[i].ppl_raw - manifest.ppl_min) / range;
    manifest.samples.push_back(std::move(rec));
  }
  return manifest;
}

std::size_t train_count(std::size_t n, unsigned train_parts, unsigned test_parts) {
  if (train_parts + test_parts == 0) throw UsageError("split ratio must be positive");
  const double exact = static_cast<double>(n) * train_parts / (train_parts + test_parts);
  return static_cast<std::size_t>(std::llround(exact));
}

DatasetManifest split_dataset(DatasetManifest manifest, std::uint64_t seed, unsigned train_parts,
                              unsigned test_parts) {
  const std::size_t n = manifest.samples.size();
  if (n == 0) throw DataError("split_dataset: empty manifest");
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), 0);
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  const std::size_t n_train = train_count(n, train_parts, test_parts);
  for (std::size_t r = 0; r < n; ++r) {
    manifest.samples[perm[r]].split = r < n_train ? Split::kTrain : Split::kTest;
  }
  return manifest;
}

namespace {

std::ofstream open_for_write(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot open " + path.string() + " for writing");
  return out;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

}  // namespace

void write_manifest(const std::filesystem::path& path, const DatasetManifest& manifest) {
  auto out = open_for_write(path);
  json header = {{"format", "graphprobe-manifest"},
                 {"version", 1},
                 {"ppl_min", manifest.ppl_min},
                 {"ppl_max", manifest.ppl_max},
                 {"count", manifest.samples.size()}};
  out << header.dump() << '\n';
  for (const auto& s : manifest.samples) {
    json rec = {{"id", s.id},
                {"length", s.length},
                {"ppl_raw", s.ppl_raw},
                {"ppl_norm", s.ppl_norm},
                {"trace_path", s.trace_path},
                {"graph_path", s.graph_path},
                {"layer", s.layer},
                {"split", to_string(s.split)}};
    out << rec.dump() << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

DatasetManifest read_manifest(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  DatasetManifest manifest;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  try {
    while (std::getline(in, line)) {
      ++line_no;
      if (line.empty()) continue;
      const json rec = json::parse(line);
      if (!have_header) {
        if (rec.value("format", "") != "graphprobe-manifest") {
          throw DataError(path.string() + ": missing manifest header");
        }
        manifest.ppl_min = rec.at("ppl_min").get<double>();
        manifest.ppl_max = rec.at("ppl_max").get<double>();
        have_header = true;
        continue;
      }
      SampleRecord s;
      s.id = rec.at("id").get<std::string>();
      s.length = rec.at("length").get<std::size_t>();
      s.ppl_raw = rec.at("ppl_raw").get<double>();
      s.ppl_norm = rec.at("ppl_norm").get<double>();
      s.trace_path = rec.at("trace_path").get<std::string>();
      s.graph_path = rec.at("graph_path").get<std::string>();
      s.layer = rec.at("layer").get<int>();
      s.split = split_from_string(rec.at("split").get<std::string>());
      manifest.samples.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
  }
  if (!have_header) throw DataError(path.string() + ": empty manifest");
  return manifest;
}

void write_sequences(const std::filesystem::path& path, std::span<const TokenSequence> sequences) {
  auto out = open_for_write(path);
  for (const auto& s : sequences) {
    json rec = {{"id", s.id}, {"tokens", s.tokens}};
    out << rec.dump() << '\n';
  }
  if (!out) throw DataError("failed writing " + path.string());
}

std::vector<TokenSequence> read_sequences(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  std::vector<TokenSequence> out;
  std::string line;
  try {
    while (std::getline(in, line)) {
      if (line.empty()) continue;
      const json rec = json::parse(line);
      TokenSequence s;
      s.id = rec.at("id").get<std::string>();
      s.tokens = rec.at("tokens").get<std::vector<Token>>();
      out.push_back(std::move(s));
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return out;
}

std::vector<std::string> read_paragraphs(const std::filesystem::path& path) {
  auto in = open_for_read(path);
  std::vector<std::string> paragraphs;
  std::string current;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) {
      if (!current.empty()) paragraphs.push_back(std::move(current));
      current.clear();
      continue;
    }
    current += line;
    current += '\n';
  }
  if (!current.empty()) paragraphs.push_back(std::move(current));
  return paragraphs;
}

}  // namespace graphprobe
