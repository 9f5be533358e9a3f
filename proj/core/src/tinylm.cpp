#include "graphprobe/tinylm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "graphprobe/errors.hpp"

namespace graphprobe {

void LmConfig::validate() const {
  if (vocab_size == 0 || width == 0 || depth == 0 || heads == 0 || context < 2) {
    throw UsageError("LmConfig: sizes must be positive and context >= 2");
  }
  if (width % heads != 0) throw UsageError("LmConfig: width must be divisible by heads");
  if (window < 2 || window > context) throw UsageError("LmConfig: need 2 <= window <= context");
  if (batch_size == 0) throw UsageError("LmConfig: batch_size must be positive");
  if (!(learning_rate > 0.0)) throw UsageError("LmConfig: learning_rate must be positive");
  for (std::size_t i = 0; i < checkpoint_schedule.size(); ++i) {
    if (checkpoint_schedule[i] == 0) throw UsageError("LmConfig: checkpoint steps start at 1");
    if (i > 0 && checkpoint_schedule[i] <= checkpoint_schedule[i - 1]) {
      throw UsageError("LmConfig: checkpoint_schedule must be strictly increasing");
    }
  }
  if (!checkpoint_schedule.empty() && checkpoint_schedule.back() > total_steps) {
    throw UsageError("LmConfig: checkpoint_schedule exceeds total_steps");
  }
}

std::vector<std::size_t> power_of_two_schedule(std::size_t total_steps) {
  std::vector<std::size_t> steps;
  for (std::size_t s = 1; s <= total_steps; s *= 2) steps.push_back(s);
  if (total_steps > 0 && steps.back() != total_steps) steps.push_back(total_steps);
  return steps;
}

template <typename T>
LmWeights<T> LmWeights<T>::zeros(const LmConfig& cfg) {
  const auto C = static_cast<Eigen::Index>(cfg.width);
  const auto V = static_cast<Eigen::Index>(cfg.vocab_size);
  LmWeights<T> w;
  w.token_embedding = Mat<T>::Zero(V, C);
  w.position_embedding = Mat<T>::Zero(static_cast<Eigen::Index>(cfg.context), C);
  for (std::size_t i = 0; i < cfg.depth; ++i) {
    BlockWeights<T> b;
    b.ln1_gain = Mat<T>::Zero(1, C);
    b.ln1_bias = Mat<T>::Zero(1, C);
    b.qkv_weight = Mat<T>::Zero(C, 3 * C);
    b.qkv_bias = Mat<T>::Zero(1, 3 * C);
    b.proj_weight = Mat<T>::Zero(C, C);
    b.proj_bias = Mat<T>::Zero(1, C);
    b.ln2_gain = Mat<T>::Zero(1, C);
    b.ln2_bias = Mat<T>::Zero(1, C);
    b.fc_weight = Mat<T>::Zero(C, 4 * C);
    b.fc_bias = Mat<T>::Zero(1, 4 * C);
    b.out_weight = Mat<T>::Zero(4 * C, C);
    b.out_bias = Mat<T>::Zero(1, C);
    w.blocks.push_back(std::move(b));
  }
  w.final_gain = Mat<T>::Zero(1, C);
  w.final_bias = Mat<T>::Zero(1, C);
  w.head_weight = Mat<T>::Zero(C, V);
  w.head_bias = Mat<T>::Zero(1, V);
  return w;
}

template struct LmWeights<float>;
template struct LmWeights<double>;

LmCheckpoint init_checkpoint(const LmConfig& config) {
  config.validate();
  LmCheckpoint ckpt;
  ckpt.config = config;
  ckpt.weights = LmWeights<float>::zeros(config);
  std::mt19937_64 rng(config.seed);
  const float base = 0.02f;
  const float residual = base / std::sqrt(2.0f * static_cast<float>(config.depth));
  ckpt.weights.visit([&](const std::string& name, MatF& m) {
    const bool gain = name.ends_with("_gain");
    const bool bias = name.ends_with("_bias");
    if (gain) {
      m.setOnes();
      return;
    }
    if (bias) return;
    const bool scaled = name.ends_with("proj_weight") || name.ends_with("out_weight");
    std::normal_distribution<float> dist(0.0f, scaled ? residual : base);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  });
  return ckpt;
}

namespace {

constexpr double kLayerNormEps = 1e-5;

template <typename T>
struct NormCache {
  Mat<T> xhat;
  Vec<T> rstd;
};

template <typename T>
Mat<T> layer_norm(const Mat<T>& x, const Mat<T>& gain, const Mat<T>& bias, NormCache<T>* cache) {
  const Eigen::Index rows = x.rows();
  const Eigen::Index cols = x.cols();
  Mat<T> xhat(rows, cols);
  Vec<T> rstd(rows);
  for (Eigen::Index i = 0; i < rows; ++i) {
    const T mean = x.row(i).sum() / static_cast<T>(cols);
    T var = 0;
    for (Eigen::Index j = 0; j < cols; ++j) {
      const T c = x(i, j) - mean;
      var += c * c;
    }
    var /= static_cast<T>(cols);
    const T r = T(1) / std::sqrt(var + static_cast<T>(kLayerNormEps));
    rstd(i) = r;
    for (Eigen::Index j = 0; j < cols; ++j) xhat(i, j) = (x(i, j) - mean) * r;
  }
  Mat<T> y = (xhat.array().rowwise() * gain.array().row(0)).rowwise() + bias.array().row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->rstd = std::move(rstd);
  }
  return y;
}

template <typename T>
Mat<T> layer_norm_backward(const Mat<T>& dy, const NormCache<T>& cache, const Mat<T>& gain,
                           Mat<T>& dgain, Mat<T>& dbias) {
  dgain += dy.cwiseProduct(cache.xhat).colwise().sum();
  dbias += dy.colwise().sum();
  const Mat<T> dxhat = dy.array().rowwise() * gain.array().row(0);
  const Eigen::Index cols = dy.cols();
  Mat<T> dx(dy.rows(), cols);
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const T mean_d = dxhat.row(i).sum() / static_cast<T>(cols);
    const T mean_dx = dxhat.row(i).dot(cache.xhat.row(i)) / static_cast<T>(cols);
    dx.row(i) = cache.rstd(i) * (dxhat.row(i).array() - mean_d - cache.xhat.row(i).array() * mean_dx)
                                    .matrix();
  }
  return dx;
}

template <typename T>
Mat<T> linear(const Mat<T>& x, const Mat<T>& w, const Mat<T>& b) {
  Mat<T> y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

template <typename T>
Mat<T> linear_backward(const Mat<T>& dy, const Mat<T>& x, const Mat<T>& w, Mat<T>& dw, Mat<T>& db) {
  dw.noalias() += x.transpose() * dy;
  db += dy.colwise().sum();
  return dy * w.transpose();
}

constexpr double kGeluC = 0.7978845608028654;  // sqrt(2 / pi)

template <typename T>
T gelu(T x) {
  return T(0.5) * x * (T(1) + std::tanh(static_cast<T>(kGeluC) * (x + T(0.044715) * x * x * x)));
}

template <typename T>
T gelu_grad(T x) {
  const T inner = static_cast<T>(kGeluC) * (x + T(0.044715) * x * x * x);
  const T th = std::tanh(inner);
  return T(0.5) * (T(1) + th) +
         T(0.5) * x * (T(1) - th * th) * static_cast<T>(kGeluC) * (T(1) + T(3 * 0.044715) * x * x);
}

template <typename T>
struct BlockCache {
  Mat<T> x_in;
  NormCache<T> ln1;
  Mat<T> normed1;
  Mat<T> qkv;
  std::vector<Mat<T>> probs;  // per head, lower triangular
  Mat<T> attended;
  Mat<T> x_mid;
  NormCache<T> ln2;
  Mat<T> normed2;
  Mat<T> pre_act;
  Mat<T> act;
};

template <typename T>
struct ForwardCache {
  std::vector<BlockCache<T>> blocks;
  Mat<T> x_out;
  NormCache<T> final_norm;
  Mat<T> normed_final;
};

template <typename T>
using ResidualHook = std::function<void(std::size_t, Mat<T>&)>;

// Causal multi-head attention on a packed (t x 3C) qkv matrix. Row i only
// reads rows j <= i, and every sum runs in a fixed order so results for a
// prefix do not depend on the tokens that follow it.
template <typename T>
Mat<T> attention(const Mat<T>& qkv, std::size_t heads, std::vector<Mat<T>>* probs_out) {
  const Eigen::Index n = qkv.rows();
  const Eigen::Index C = qkv.cols() / 3;
  const Eigen::Index hd = C / static_cast<Eigen::Index>(heads);
  const Eigen::Index stride = qkv.cols();
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  Mat<T> out = Mat<T>::Zero(n, C);
  std::vector<T> row(static_cast<std::size_t>(n));
  for (std::size_t h = 0; h < heads; ++h) {
    const Eigen::Index qo = static_cast<Eigen::Index>(h) * hd;
    const Eigen::Index ko = C + qo;
    const Eigen::Index vo = 2 * C + qo;
    Mat<T> probs;
    if (probs_out) probs = Mat<T>::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const T* q = qkv.data() + i * stride + qo;
      T mx = -std::numeric_limits<T>::infinity();
      for (Eigen::Index j = 0; j <= i; ++j) {
        const T* k = qkv.data() + j * stride + ko;
        T s = 0;
        for (Eigen::Index c = 0; c < hd; ++c) s += q[c] * k[c];
        s *= scale;
        row[static_cast<std::size_t>(j)] = s;
        mx = std::max(mx, s);
      }
      T sum = 0;
      for (Eigen::Index j = 0; j <= i; ++j) {
        const T e = std::exp(row[static_cast<std::size_t>(j)] - mx);
        row[static_cast<std::size_t>(j)] = e;
        sum += e;
      }
      const T inv = T(1) / sum;
      T* o = out.data() + i * C + qo;
      for (Eigen::Index j = 0; j <= i; ++j) {
        const T p = row[static_cast<std::size_t>(j)] * inv;
        if (probs_out) probs(i, j) = p;
        const T* v = qkv.data() + j * stride + vo;
        for (Eigen::Index c = 0; c < hd; ++c) o[c] += p * v[c];
      }
    }
    if (probs_out) probs_out->push_back(std::move(probs));
  }
  return out;
}

template <typename T>
Mat<T> attention_backward(const Mat<T>& d_out, const Mat<T>& qkv, const std::vector<Mat<T>>& probs,
                          std::size_t heads) {
  const Eigen::Index n = qkv.rows();
  const Eigen::Index C = qkv.cols() / 3;
  const Eigen::Index hd = C / static_cast<Eigen::Index>(heads);
  const Eigen::Index stride = qkv.cols();
  const T scale = T(1) / std::sqrt(static_cast<T>(hd));
  Mat<T> d_qkv = Mat<T>::Zero(n, 3 * C);
  std::vector<T> dp(static_cast<std::size_t>(n));
  for (std::size_t h = 0; h < heads; ++h) {
    const Eigen::Index qo = static_cast<Eigen::Index>(h) * hd;
    const Eigen::Index ko = C + qo;
    const Eigen::Index vo = 2 * C + qo;
    const Mat<T>& P = probs[h];
    for (Eigen::Index i = 0; i < n; ++i) {
      const T* dout = d_out.data() + i * C + qo;
      T weighted = 0;
      for (Eigen::Index j = 0; j <= i; ++j) {
        const T* v = qkv.data() + j * stride + vo;
        T* dv = d_qkv.data() + j * stride + vo;
        const T p = P(i, j);
        T s = 0;
        for (Eigen::Index c = 0; c < hd; ++c) {
          s += dout[c] * v[c];
          dv[c] += p * dout[c];
        }
        dp[static_cast<std::size_t>(j)] = s;
        weighted += p * s;
      }
      const T* q = qkv.data() + i * stride + qo;
      T* dq = d_qkv.data() + i * stride + qo;
      for (Eigen::Index j = 0; j <= i; ++j) {
        const T ds = P(i, j) * (dp[static_cast<std::size_t>(j)] - weighted) * scale;
        const T* k = qkv.data() + j * stride + ko;
        T* dk = d_qkv.data() + j * stride + ko;
        for (Eigen::Index c = 0; c < hd; ++c) {
          dq[c] += ds * k[c];
          dk[c] += ds * q[c];
        }
      }
    }
  }
  return d_qkv;
}

template <typename T>
Mat<T> run_forward(const LmConfig& cfg, const LmWeights<T>& w, std::span<const Token> tokens,
                   ForwardCache<T>* cache, const ResidualHook<T>* hook) {
  const auto n = static_cast<Eigen::Index>(tokens.size());
  if (tokens.empty()) throw DataError("forward: empty token sequence");
  if (tokens.size() > cfg.context) {
    throw DataError("forward: sequence of " + std::to_string(tokens.size()) +
                    " tokens exceeds context " + std::to_string(cfg.context));
  }
  const auto C = static_cast<Eigen::Index>(cfg.width);
  Mat<T> x(n, C);
  for (Eigen::Index i = 0; i < n; ++i) {
    const Token tok = tokens[static_cast<std::size_t>(i)];
    if (tok >= cfg.vocab_size) throw DataError("forward: token outside vocabulary");
    x.row(i) = w.token_embedding.row(tok) + w.position_embedding.row(i);
  }
  if (cache) cache->blocks.resize(cfg.depth);

  for (std::size_t b = 0; b < cfg.depth; ++b) {
    const auto& blk = w.blocks[b];
    BlockCache<T>* bc = cache ? &cache->blocks[b] : nullptr;
    NormCache<T> ln1;
    Mat<T> normed1 = layer_norm(x, blk.ln1_gain, blk.ln1_bias, bc ? &ln1 : nullptr);
    Mat<T> qkv = linear(normed1, blk.qkv_weight, blk.qkv_bias);
    std::vector<Mat<T>> probs;
    Mat<T> attended = attention(qkv, cfg.heads, bc ? &probs : nullptr);
    Mat<T> x_mid = x + linear(attended, blk.proj_weight, blk.proj_bias);
    NormCache<T> ln2;
    Mat<T> normed2 = layer_norm(x_mid, blk.ln2_gain, blk.ln2_bias, bc ? &ln2 : nullptr);
    Mat<T> pre_act = linear(normed2, blk.fc_weight, blk.fc_bias);
    Mat<T> act = pre_act.unaryExpr([](T v) { return gelu(v); });
    Mat<T> x_out = x_mid + linear(act, blk.out_weight, blk.out_bias);
    if (bc) {
      bc->x_in = std::move(x);
      bc->ln1 = std::move(ln1);
      bc->normed1 = std::move(normed1);
      bc->qkv = std::move(qkv);
      bc->probs = std::move(probs);
      bc->attended = std::move(attended);
      bc->x_mid = std::move(x_mid);
      bc->ln2 = std::move(ln2);
      bc->normed2 = std::move(normed2);
      bc->pre_act = std::move(pre_act);
      bc->act = std::move(act);
    }
    x = std::move(x_out);
    if (hook && *hook) (*hook)(b, x);
  }

  NormCache<T> lnf;
  Mat<T> normed = layer_norm(x, w.final_gain, w.final_bias, cache ? &lnf : nullptr);
  Mat<T> logits = linear(normed, w.head_weight, w.head_bias);
  if (cache) {
    cache->x_out = std::move(x);
    cache->final_norm = std::move(lnf);
    cache->normed_final = std::move(normed);
  }
  return logits;
}

template <typename T>
void run_backward(const LmConfig& cfg, const LmWeights<T>& w, std::span<const Token> tokens,
                  const ForwardCache<T>& cache, const Mat<T>& d_logits, LmWeights<T>& g) {
  Mat<T> dx = linear_backward(d_logits, cache.normed_final, w.head_weight, g.head_weight,
                              g.head_bias);
  dx = layer_norm_backward(dx, cache.final_norm, w.final_gain, g.final_gain, g.final_bias);

  for (std::size_t bi = cfg.depth; bi-- > 0;) {
    const auto& blk = w.blocks[bi];
    auto& gb = g.blocks[bi];
    const auto& bc = cache.blocks[bi];

    // x_out = x_mid + mlp(x_mid)
    Mat<T> d_act = linear_backward(dx, bc.act, blk.out_weight, gb.out_weight, gb.out_bias);
    Mat<T> d_pre = d_act.binaryExpr(bc.pre_act, [](T d, T v) { return d * gelu_grad(v); });
    Mat<T> d_norm2 = linear_backward(d_pre, bc.normed2, blk.fc_weight, gb.fc_weight, gb.fc_bias);
    Mat<T> d_mid = dx + layer_norm_backward(d_norm2, bc.ln2, blk.ln2_gain, gb.ln2_gain, gb.ln2_bias);

    // x_mid = x_in + attn(x_in)
    Mat<T> d_att =
        linear_backward(d_mid, bc.attended, blk.proj_weight, gb.proj_weight, gb.proj_bias);
    Mat<T> d_qkv = attention_backward(d_att, bc.qkv, bc.probs, cfg.heads);
    Mat<T> d_norm1 = linear_backward(d_qkv, bc.normed1, blk.qkv_weight, gb.qkv_weight, gb.qkv_bias);
    dx = d_mid + layer_norm_backward(d_norm1, bc.ln1, blk.ln1_gain, gb.ln1_gain, gb.ln1_bias);
  }

  for (std::size_t i = 0; i < tokens.size(); ++i) {
    g.token_embedding.row(tokens[i]) += dx.row(static_cast<Eigen::Index>(i));
    g.position_embedding.row(static_cast<Eigen::Index>(i)) += dx.row(static_cast<Eigen::Index>(i));
  }
}

// Mean next-token cross-entropy over positions 0..n-2; optionally fills the
// gradient with respect to the logits.
template <typename T>
double cross_entropy(const Mat<T>& logits, std::span<const Token> tokens, Mat<T>* d_logits) {
  const Eigen::Index n = logits.rows();
  const Eigen::Index predictions = n - 1;
  if (d_logits) *d_logits = Mat<T>::Zero(n, logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < predictions; ++i) {
    const Token target = tokens[static_cast<std::size_t>(i + 1)];
    const T mx = logits.row(i).maxCoeff();
    T sum = 0;
    for (Eigen::Index v = 0; v < logits.cols(); ++v) sum += std::exp(logits(i, v) - mx);
    const T log_z = mx + std::log(sum);
    total += static_cast<double>(log_z - logits(i, static_cast<Eigen::Index>(target)));
    if (d_logits) {
      const T inv = T(1) / static_cast<T>(predictions);
      for (Eigen::Index v = 0; v < logits.cols(); ++v) {
        (*d_logits)(i, v) = std::exp(logits(i, v) - log_z) * inv;
      }
      (*d_logits)(i, static_cast<Eigen::Index>(target)) -= inv;
    }
  }
  return total / static_cast<double>(predictions);
}

}  // namespace

template <typename T>
double lm_loss_and_gradients(const LmConfig& config, const LmWeights<T>& weights,
                             std::span<const Token> tokens, LmWeights<T>* gradients) {
  if (tokens.size() < 2) throw DataError("lm loss: need at least 2 tokens");
  ForwardCache<T> cache;
  const Mat<T> logits = run_forward<T>(config, weights, tokens, gradients ? &cache : nullptr, nullptr);
  Mat<T> d_logits;
  const double loss = cross_entropy(logits, tokens, gradients ? &d_logits : nullptr);
  if (gradients) run_backward(config, weights, tokens, cache, d_logits, *gradients);
  return loss;
}

template double lm_loss_and_gradients<float>(const LmConfig&, const LmWeights<float>&,
                                             std::span<const Token>, LmWeights<float>*);
template double lm_loss_and_gradients<double>(const LmConfig&, const LmWeights<double>&,
                                              std::span<const Token>, LmWeights<double>*);

MatF forward_logits(const LmCheckpoint& checkpoint, std::span<const Token> tokens,
                    const BlockHook& hook) {
  const ResidualHook<float>* hp = hook ? &hook : nullptr;
  return run_forward<float>(checkpoint.config, checkpoint.weights, tokens, nullptr, hp);
}

ForwardResult forward_with_states(const LmCheckpoint& checkpoint, const TokenSequence& sequence,
                                  int layer) {
  if (layer < 0 || static_cast<std::size_t>(layer) >= checkpoint.config.depth) {
    throw UsageError("forward_with_states: layer " + std::to_string(layer) + " out of range");
  }
  ForwardResult result;
  result.trace.sample_id = sequence.id;
  result.trace.layer = layer;
  const BlockHook capture = [&](std::size_t b, MatF& residual) {
    if (b == static_cast<std::size_t>(layer)) result.trace.H = residual.transpose();
  };
  result.logits = forward_logits(checkpoint, sequence.tokens, capture);
  return result;
}

PerplexityResult perplexity_from_logits(const MatF& logits, std::span<const Token> tokens) {
  if (tokens.size() < 2) throw DataError("perplexity: need at least 2 tokens");
  if (static_cast<std::size_t>(logits.rows()) != tokens.size()) {
    throw UsageError("perplexity: logits rows do not match token count");
  }
  PerplexityResult result;
  double nll = 0.0;
  const std::size_t predictions = tokens.size() - 1;
  for (std::size_t i = 0; i < predictions; ++i) {
    const auto row = static_cast<Eigen::Index>(i);
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index v = 0; v < logits.cols(); ++v) mx = std::max(mx, double(logits(row, v)));
    double sum = 0.0;
    for (Eigen::Index v = 0; v < logits.cols(); ++v) sum += std::exp(double(logits(row, v)) - mx);
    double logp = double(logits(row, static_cast<Eigen::Index>(tokens[i + 1]))) - mx - std::log(sum);
    if (!(logp >= kLogProbFloor)) {
      logp = kLogProbFloor;
      result.clamped = true;
    }
    nll -= logp;
  }
  result.value = std::exp(nll / static_cast<double>(predictions));
  return result;
}

PerplexityResult perplexity(const LmCheckpoint& checkpoint, std::span<const Token> tokens) {
  return perplexity_from_logits(forward_logits(checkpoint, tokens), tokens);
}

PerplexityResult intervened_perplexity(const LmCheckpoint& checkpoint,
                                       std::span<const Token> tokens, int layer,
                                       std::span<const std::uint32_t> mask) {
  const auto& cfg = checkpoint.config;
  if (layer < 0 || static_cast<std::size_t>(layer) >= cfg.depth) {
    throw UsageError("intervened_perplexity: layer out of range");
  }
  for (auto m : mask) {
    if (m >= cfg.width) throw UsageError("intervened_perplexity: neuron index out of range");
  }
  const BlockHook zero = [&](std::size_t b, MatF& residual) {
    if (b != static_cast<std::size_t>(layer)) return;
    for (auto m : mask) residual.col(static_cast<Eigen::Index>(m)).setZero();
  };
  return perplexity_from_logits(forward_logits(checkpoint, tokens, zero), tokens);
}

double sequence_loss(const LmCheckpoint& checkpoint, std::span<const Token> tokens) {
  return lm_loss_and_gradients<float>(checkpoint.config, checkpoint.weights, tokens, nullptr);
}

namespace {

struct AdamState {
  LmWeights<float> m;
  LmWeights<float> v;
};

double lr_at(const LmConfig& cfg, std::size_t step) {
  const double base = cfg.learning_rate;
  if (cfg.warmup_steps > 0 && step <= cfg.warmup_steps) {
    return base * static_cast<double>(step) / static_cast<double>(cfg.warmup_steps);
  }
  const double span = static_cast<double>(std::max<std::size_t>(1, cfg.total_steps - cfg.warmup_steps));
  const double progress = std::min(1.0, static_cast<double>(step - cfg.warmup_steps) / span);
  return base * (0.1 + 0.9 * 0.5 * (1.0 + std::cos(std::numbers::pi * progress)));
}

}  // namespace

LmTrainResult train_lm(std::span<const TokenSequence> corpus, const LmConfig& config,
                       const LmProgress& progress) {
  config.validate();
  std::vector<Token> stream;
  for (const auto& s : corpus) {
    for (Token t : s.tokens) {
      if (t >= config.vocab_size) throw DataError("train_lm: token outside vocabulary");
    }
    stream.insert(stream.end(), s.tokens.begin(), s.tokens.end());
  }
  if (stream.size() < 2) throw DataError("train_lm: corpus has fewer than 2 tokens");
  const std::size_t window = std::min(config.window, stream.size());

  LmTrainResult result;
  LmCheckpoint current = init_checkpoint(config);
  AdamState adam{LmWeights<float>::zeros(config), LmWeights<float>::zeros(config)};
  std::mt19937_64 rng(config.seed ^ 0x5851f42d4c957f2dULL);
  std::uniform_int_distribution<std::size_t> offset(0, stream.size() - window);

  auto schedule = config.checkpoint_schedule;
  if (schedule.empty() || schedule.back() != config.total_steps) schedule.push_back(config.total_steps);
  std::size_t next_ckpt = 0;

  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.99;
  constexpr double kEps = 1e-8;

  for (std::size_t step = 1; step <= config.total_steps; ++step) {
    LmWeights<float> grads = LmWeights<float>::zeros(config);
    double loss = 0.0;
    for (std::size_t b = 0; b < config.batch_size; ++b) {
      const std::size_t start = offset(rng);
      std::span<const Token> win(stream.data() + start, window);
      loss += lm_loss_and_gradients<float>(config, current.weights, win, &grads);
    }
    loss /= static_cast<double>(config.batch_size);
    if (!std::isfinite(loss)) {
      throw NumericError("train_lm: loss became non-finite at step " + std::to_string(step));
    }

    double norm_sq = 0.0;
    const float inv_batch = 1.0f / static_cast<float>(config.batch_size);
    grads.visit([&](const std::string&, MatF& g) {
      g *= inv_batch;
      norm_sq += static_cast<double>(g.squaredNorm());
    });
    const double norm = std::sqrt(norm_sq);
    if (!std::isfinite(norm)) {
      throw NumericError("train_lm: gradient norm became non-finite at step " + std::to_string(step));
    }
    const float clip = norm > config.grad_clip ? static_cast<float>(config.grad_clip / norm) : 1.0f;

    const double lr = lr_at(config, step);
    const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(step));
    const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(step));
    const float step_size = static_cast<float>(lr / bc1);
    const float denom_scale = static_cast<float>(1.0 / std::sqrt(bc2));

    std::vector<MatF*> params, gs, ms, vs;
    current.weights.visit([&](const std::string&, MatF& p) { params.push_back(&p); });
    grads.visit([&](const std::string&, MatF& p) { gs.push_back(&p); });
    adam.m.visit([&](const std::string&, MatF& p) { ms.push_back(&p); });
    adam.v.visit([&](const std::string&, MatF& p) { vs.push_back(&p); });
    for (std::size_t k = 0; k < params.size(); ++k) {
      const MatF g = *gs[k] * clip;
      *ms[k] = float(kBeta1) * *ms[k] + float(1 - kBeta1) * g;
      *vs[k] = float(kBeta2) * *vs[k] + float(1 - kBeta2) * g.cwiseProduct(g);
      params[k]->array() -=
          step_size * ms[k]->array() / (vs[k]->array().sqrt() * denom_scale + float(kEps));
    }
    current.step = step;

    LmTrainLogEntry entry{step, loss, lr};
    result.log.push_back(entry);
    if (progress) progress(entry);

    while (next_ckpt < schedule.size() && schedule[next_ckpt] == step) {
      result.checkpoints.push_back(current);
      ++next_ckpt;
    }
  }
  return result;
}

}  // namespace graphprobe
