#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "graphprobe/corpus.hpp"
#include "graphprobe/linalg.hpp"

namespace graphprobe {

/// Architecture and training schedule of the built-in decoder-only model.
struct LmConfig {
  std::size_t vocab_size = ByteTokenizer::kVocabSize;
  std::size_t width = 64;
  std::size_t depth = 2;
  std::size_t heads = 4;
  std::size_t context = 1024;
  std::uint64_t seed = 0;
  std::size_t total_steps = 256;
  std::vector<std::size_t> checkpoint_schedule;

  std::size_t batch_size = 4;
  /// Tokens per training window; at most `context`.
  std::size_t window = 1024;
  double learning_rate = 3e-3;
  std::size_t warmup_steps = 16;
  double grad_clip = 1.0;

  /// Throws UsageError when an invariant is violated.
  void validate() const;
};

/// {1, 2, 4, ...} up to total_steps, with total_steps appended if it is not a
/// power of two.
std::vector<std::size_t> power_of_two_schedule(std::size_t total_steps);

template <typename T>
struct BlockWeights {
  Mat<T> ln1_gain, ln1_bias;
  Mat<T> qkv_weight, qkv_bias;    // C x 3C, 1 x 3C
  Mat<T> proj_weight, proj_bias;  // C x C
  Mat<T> ln2_gain, ln2_bias;
  Mat<T> fc_weight, fc_bias;    // C x 4C
  Mat<T> out_weight, out_bias;  // 4C x C
};

template <typename T>
struct LmWeights {
  Mat<T> token_embedding;     // V x C
  Mat<T> position_embedding;  // context x C
  std::vector<BlockWeights<T>> blocks;
  Mat<T> final_gain, final_bias;
  Mat<T> head_weight, head_bias;  // C x V, 1 x V

  /// Calls f(name, tensor) for every tensor in a fixed order.
  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  /// Zero-filled weights with the shapes implied by `config`.
  static LmWeights zeros(const LmConfig& config);

  template <typename U>
  LmWeights<U> cast() const {
    LmWeights<U> out;
    out.token_embedding = token_embedding.template cast<U>();
    out.position_embedding = position_embedding.template cast<U>();
    for (const auto& b : blocks) {
      BlockWeights<U> c;
      c.ln1_gain = b.ln1_gain.template cast<U>();
      c.ln1_bias = b.ln1_bias.template cast<U>();
      c.qkv_weight = b.qkv_weight.template cast<U>();
      c.qkv_bias = b.qkv_bias.template cast<U>();
      c.proj_weight = b.proj_weight.template cast<U>();
      c.proj_bias = b.proj_bias.template cast<U>();
      c.ln2_gain = b.ln2_gain.template cast<U>();
      c.ln2_bias = b.ln2_bias.template cast<U>();
      c.fc_weight = b.fc_weight.template cast<U>();
      c.fc_bias = b.fc_bias.template cast<U>();
      c.out_weight = b.out_weight.template cast<U>();
      c.out_bias = b.out_bias.template cast<U>();
      out.blocks.push_back(std::move(c));
    }
    out.final_gain = final_gain.template cast<U>();
    out.final_bias = final_bias.template cast<U>();
    out.head_weight = head_weight.template cast<U>();
    out.head_bias = head_bias.template cast<U>();
    return out;
  }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f) {
    f("token_embedding", self.token_embedding);
    f("position_embedding", self.position_embedding);
    for (std::size_t i = 0; i < self.blocks.size(); ++i) {
      auto& b = self.blocks[i];
      const std::string p = "block" + std::to_string(i) + ".";
      f(p + "ln1_gain", b.ln1_gain);
      f(p + "ln1_bias", b.ln1_bias);
      f(p + "qkv_weight", b.qkv_weight);
      f(p + "qkv_bias", b.qkv_bias);
      f(p + "proj_weight", b.proj_weight);
      f(p + "proj_bias", b.proj_bias);
      f(p + "ln2_gain", b.ln2_gain);
      f(p + "ln2_bias", b.ln2_bias);
      f(p + "fc_weight", b.fc_weight);
      f(p + "fc_bias", b.fc_bias);
      f(p + "out_weight", b.out_weight);
      f(p + "out_bias", b.out_bias);
    }
    f("final_gain", self.final_gain);
    f("final_bias", self.final_bias);
    f("head_weight", self.head_weight);
    f("head_bias", self.head_bias);
  }
};

struct LmCheckpoint {
  std::size_t step = 0;
  LmConfig config;
  LmWeights<float> weights;
};

/// Randomly initialized, untrained model (step 0).
LmCheckpoint init_checkpoint(const LmConfig& config);

/// Per-neuron activation time series of one sequence at one block output.
/// H has one row per neuron and one column per token position.
struct ActivationTrace {
  std::string sample_id;
  int layer = 0;
  MatF H;

  std::size_t neurons() const noexcept { return static_cast<std::size_t>(H.rows()); }
  std::size_t steps() const noexcept { return static_cast<std::size_t>(H.cols()); }
};

/// Called on the residual stream (t x width) right after block `layer`.
/// Changes are seen by every later block.
using BlockHook = std::function<void(std::size_t layer, MatF& residual)>;

struct ForwardResult {
  MatF logits;  // t x vocab
  ActivationTrace trace;
};

/// Teacher-forced forward pass. The trace is the residual stream after block
/// `layer` (post residual addition, before any later normalization).
ForwardResult forward_with_states(const LmCheckpoint& checkpoint, const TokenSequence& sequence,
                                  int layer);

/// Logits only, with an optional hook on each block output.
MatF forward_logits(const LmCheckpoint& checkpoint, std::span<const Token> tokens,
                    const BlockHook& hook = {});

/// Log-probabilities below this floor are clamped and the result flagged.
inline constexpr double kLogProbFloor = -690.7755278982137;  // log(1e-300)

struct PerplexityResult {
  double value = 0.0;
  bool clamped = false;
};

/// exp of the mean negative log-likelihood of tokens[1..] given their
/// prefixes, evaluated in double precision from the logits.
PerplexityResult perplexity_from_logits(const MatF& logits, std::span<const Token> tokens);
PerplexityResult perplexity(const LmCheckpoint& checkpoint, std::span<const Token> tokens);

/// Perplexity with neurons in `mask` zeroed at every position of block
/// `layer`'s output.
PerplexityResult intervened_perplexity(const LmCheckpoint& checkpoint,
                                       std::span<const Token> tokens, int layer,
                                       std::span<const std::uint32_t> mask);

/// Mean next-token cross-entropy over a token window (what the trainer
/// reports), computed in the model's float arithmetic.
double sequence_loss(const LmCheckpoint& checkpoint, std::span<const Token> tokens);

/// Loss and exact gradients for one window. Instantiated for float and double.
template <typename T>
double lm_loss_and_gradients(const LmConfig& config, const LmWeights<T>& weights,
                             std::span<const Token> tokens, LmWeights<T>* gradients);

struct LmTrainLogEntry {
  std::size_t step = 0;
  double loss = 0.0;
  double learning_rate = 0.0;
};

struct LmTrainResult {
  std::vector<LmCheckpoint> checkpoints;  // ordered by step
  std::vector<LmTrainLogEntry> log;
};

using LmProgress = std::function<void(const LmTrainLogEntry&)>;

/// Adam with linear warmup and global-norm clipping on random windows of the
/// concatenated corpus. Checkpoints at every scheduled step and the final one.
LmTrainResult train_lm(std::span<const TokenSequence> corpus, const LmConfig& config,
                       const LmProgress& progress = {});

void save_checkpoint(const std::filesystem::path& path, const LmCheckpoint& checkpoint);
LmCheckpoint load_checkpoint(const std::filesystem::path& path);

/// "GPRB" trace files: magic, version, n, t (u32), then row-major f32 H.
void write_trace(const std::filesystem::path& path, const ActivationTrace& trace);
ActivationTrace read_trace(const std::filesystem::path& path);

}  // namespace graphprobe
