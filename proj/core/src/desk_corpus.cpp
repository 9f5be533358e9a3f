#include "graphprobe/desk_corpus.hpp"

#include <array>
#include <cctype>
#include <cstdio>
#include <random>
#include <span>
#include <string_view>

#include "graphprobe/errors.hpp"

namespace graphprobe {
namespace {

constexpr std::array<std::string_view, 96> kNouns = {
    "river", "house", "garden", "letter", "window", "morning", "city", "road", "friend", "table",
    "mountain", "village", "child", "teacher", "book", "market", "ship", "harbor", "forest", "field",
    "bridge", "tower", "winter", "summer", "voice", "story", "machine", "engine", "station", "train",
    "doctor", "farmer", "king", "queen", "soldier", "painter", "song", "island", "storm", "lamp",
    "door", "wall", "horse", "dog", "bird", "cloud", "stone", "fire", "water", "light",
    "shadow", "road", "clock", "paper", "coat", "hat", "kitchen", "room", "street", "valley",
    "church", "school", "library", "garden", "evening", "night", "question", "answer", "journey", "dream",
    "memory", "letter", "sister", "brother", "mother", "father", "captain", "crowd", "beach", "sea",
    "moon", "star", "planet", "number", "signal", "system", "method", "problem", "result", "theory",
    "model", "network", "graph", "circle", "square", "line"};

constexpr std::array<std::string_view, 60> kVerbs = {
    "watched", "found", "carried", "opened", "closed", "followed", "remembered", "built", "crossed",
    "painted", "heard", "lifted", "moved", "asked", "answered", "left", "reached", "turned",
    "covered", "held", "kept", "wrote", "read", "drew", "pushed", "pulled", "called", "sent",
    "measured", "counted", "studied", "explained", "described", "changed", "joined", "broke",
    "fixed", "cleaned", "visited", "entered", "passed", "noticed", "touched", "raised", "lowered",
    "sold", "bought", "gave", "took", "showed", "hid", "met", "saw", "knew", "loved", "feared",
    "chose", "shared", "tested", "solved"};

constexpr std::array<std::string_view, 56> kAdjectives = {
    "old", "young", "small", "large", "quiet", "bright", "dark", "cold", "warm", "green",
    "red", "blue", "heavy", "light", "narrow", "wide", "strange", "simple", "careful", "happy",
    "tired", "early", "late", "long", "short", "soft", "hard", "empty", "full", "distant",
    "near", "sudden", "gentle", "brave", "clever", "silent", "broken", "golden", "silver", "wooden",
    "ancient", "modern", "famous", "hidden", "open", "secret", "proud", "poor", "rich", "clear",
    "sharp", "round", "deep", "high", "low", "white"};

constexpr std::array<std::string_view, 28> kAdverbs = {
    "slowly", "quickly", "quietly", "again", "never", "always", "often", "suddenly", "carefully",
    "gently", "finally", "almost", "together", "alone", "still", "soon", "once", "already",
    "nearly", "simply", "clearly", "rarely", "away", "back", "forward", "inside", "outside", "later"};

constexpr std::array<std::string_view, 20> kIdentifiers = {
    "count", "index", "value", "total", "buffer", "result", "offset", "width", "height", "node",
    "edge", "weight", "score", "limit", "state", "cache", "item", "key", "step", "delta"};

constexpr std::array<std::string_view, 12> kNames = {
    "Anna", "Boris", "Clara", "David", "Elena", "Felix", "Greta", "Hugo", "Ines", "Jonas", "Karla",
    "Leo"};

class Writer {
 public:
  explicit Writer(std::mt19937_64& rng) : rng_(rng) {}

  template <std::size_t N>
  std::string_view zipf(const std::array<std::string_view, N>& words) {
    static const auto weights = [] {
      std::array<double, N> w{};
      for (std::size_t i = 0; i < N; ++i) w[i] = 1.0 / static_cast<double>(i + 1);
      return w;
    }();
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    return words[pick(rng_)];
  }

  template <std::size_t N>
  std::string_view uniform(const std::array<std::string_view, N>& words) {
    return words[std::uniform_int_distribution<std::size_t>(0, N - 1)(rng_)];
  }

  bool chance(double p) { return std::bernoulli_distribution(p)(rng_); }
  int integer(int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng_); }
  double real(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

  std::string sentence() {
    std::string s;
    switch (integer(0, 4)) {
      case 0:
        s = "the " + w(zipf(kAdjectives)) + " " + w(zipf(kNouns)) + " " + w(zipf(kVerbs)) +
            " the " + w(zipf(kNouns));
        break;
      case 1:
        s = w(uniform(kNames)) + " " + w(zipf(kAdverbs)) + " " + w(zipf(kVerbs)) + " a " +
            w(zipf(kAdjectives)) + " " + w(zipf(kNouns)) + " near the " + w(zipf(kNouns));
        break;
      case 2:
        s = "in the " + w(zipf(kNouns)) + ", the " + w(zipf(kNouns)) + " was " +
            w(zipf(kAdjectives)) + " and " + w(zipf(kAdjectives));
        break;
      case 3:
        s = "when the " + w(zipf(kNouns)) + " " + w(zipf(kVerbs)) + " the " + w(zipf(kNouns)) +
            ", " + w(uniform(kNames)) + " " + w(zipf(kVerbs)) + " it " + w(zipf(kAdverbs));
        break;
      default:
        s = "there was a " + w(zipf(kAdjectives)) + " " + w(zipf(kNouns)) + " in the " +
            w(zipf(kAdjectives)) + " " + w(zipf(kNouns));
        break;
    }
    s[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(s[0])));
    s += chance(0.15) ? "!" : ".";
    return s;
  }

 private:
  static std::string w(std::string_view v) { return std::string(v); }
  std::mt19937_64& rng_;
};

std::string prose(Writer& wr, std::size_t target) {
  std::string doc;
  while (doc.size() < target) {
    doc += wr.sentence();
    doc += wr.chance(0.12) ? "\n" : " ";
  }
  return doc;
}

std::string dialogue(Writer& wr, std::size_t target) {
  std::string doc;
  while (doc.size() < target) {
    doc += std::string(wr.uniform(kNames)) + ": did the " + std::string(wr.zipf(kNouns)) + " " +
           std::string(wr.zipf(kVerbs)) + " the " + std::string(wr.zipf(kNouns)) + "?\n";
    doc += std::string(wr.uniform(kNames)) + ": " + wr.sentence() + "\n";
  }
  return doc;
}

std::string code(Writer& wr, std::size_t target) {
  std::string doc;
  char buf[160];
  while (doc.size() < target) {
    const auto fn = wr.uniform(kIdentifiers);
    const auto a = wr.uniform(kIdentifiers);
    const auto b = wr.uniform(kIdentifiers);
    std::snprintf(buf, sizeof(buf), "int update_%.*s(int %.*s, int %.*s) {\n",
                  static_cast<int>(fn.size()), fn.data(), static_cast<int>(a.size()), a.data(),
                  static_cast<int>(b.size()), b.data());
    doc += buf;
    const int lines = wr.integer(1, 4);
    for (int i = 0; i < lines; ++i) {
      const auto lhs = wr.uniform(kIdentifiers);
      std::snprintf(buf, sizeof(buf), "  %.*s = %.*s %c %d;\n", static_cast<int>(lhs.size()),
                    lhs.data(), static_cast<int>(a.size()), a.data(), "+-*/"[wr.integer(0, 3)],
                    wr.integer(0, 99));
      doc += buf;
    }
    std::snprintf(buf, sizeof(buf), "  return %.*s;\n}\n\n", static_cast<int>(b.size()), b.data());
    doc += buf;
  }
  return doc;
}

std::string records(Writer& wr, std::size_t target) {
  std::string doc = "id,name,amount,ratio\n";
  char buf[96];
  int id = wr.integer(100, 9000);
  while (doc.size() < target) {
    std::snprintf(buf, sizeof(buf), "%d,%s,%d,%.4f\n", id++, std::string(wr.uniform(kNames)).c_str(),
                  wr.integer(0, 99999), wr.real(0.0, 1.0));
    doc += buf;
  }
  return doc;
}

void corrupt(std::string& doc, double rate, std::mt19937_64& rng) {
  if (rate <= 0.0) return;
  std::bernoulli_distribution hit(rate);
  std::uniform_int_distribution<int> printable(33, 126);
  for (char& c : doc) {
    if (c != '\n' && hit(rng)) c = static_cast<char>(printable(rng));
  }
}

}  // namespace

std::vector<std::string> generate_desk_corpus(const DeskCorpusOptions& options) {
  if (options.min_bytes == 0 || options.min_bytes > options.max_bytes) {
    throw UsageError("desk corpus: need 0 < min_bytes <= max_bytes");
  }
  std::mt19937_64 rng(options.seed);
  Writer wr(rng);
  std::discrete_distribution<int> style({0.45, 0.15, 0.2, 0.2});
  std::uniform_int_distribution<std::size_t> length(options.min_bytes, options.max_bytes);

  std::vector<std::string> docs;
  docs.reserve(options.documents);
  for (std::size_t d = 0; d < options.documents; ++d) {
    const std::size_t target = length(rng);
    std::string doc;
    switch (style(rng)) {
      case 0: doc = prose(wr, target); break;
      case 1: doc = dialogue(wr, target); break;
      case 2: doc = code(wr, target); break;
      default: doc = records(wr, target); break;
    }
    if (doc.size() > target) doc.resize(target);
    if (doc.back() != '\n') doc.push_back('\n');
    if (wr.chance(options.corrupted_fraction)) {
      corrupt(doc, wr.real(0.0, options.max_corruption), rng);
    }
    docs.push_back(std::move(doc));
  }
  return docs;
}

}  // namespace graphprobe
