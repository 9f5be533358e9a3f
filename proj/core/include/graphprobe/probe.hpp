#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "graphprobe/linalg.hpp"
#include "graphprobe/metrics.hpp"
#include "graphprobe/topology.hpp"

namespace graphprobe {

struct ProbeConfig {
  std::size_t hops = 1;
  std::size_t width = 32;
  bool nonlinear = true;
  double learning_rate = 1e-3;
  std::size_t batch_size = 16;
  std::size_t max_epochs = 100;
  std::size_t patience_decay = 5;
  double decay_factor = 0.1;
  std::size_t patience_stop = 20;
  /// Share of the training set held out to drive decay and early stopping.
  double holdout_fraction = 0.1;
  std::uint64_t seed = 0;

  void validate() const;
};

/// Learnable probe state. The node-embedding table is indexed by neuron
/// position and shared by every graph. Matching-only encoders leave the head
/// empty.
template <typename T>
struct ProbeParams {
  Mat<T> node_embeddings;           // n x d
  std::vector<Mat<T>> hop_weights;  // L matrices, d x d
  Mat<T> head_hidden;               // 2d x d
  Mat<T> head_out;                  // d x 1

  bool has_head() const noexcept { return head_hidden.size() > 0; }
  std::size_t nodes() const noexcept { return static_cast<std::size_t>(node_embeddings.rows()); }
  std::size_t width() const noexcept { return static_cast<std::size_t>(node_embeddings.cols()); }

  /// Gaussian node embeddings (std 1/sqrt(d)), Glorot-uniform hop weights,
  /// fan-in uniform head weights.
  static ProbeParams init(std::size_t nodes, const ProbeConfig& config, std::uint64_t seed,
                          bool with_head = true);
  /// Zeros with the same shapes as `like`.
  static ProbeParams zeros_like(const ProbeParams& like);

  template <typename F>
  void visit(F&& f) {
    visit_impl(*this, f);
  }
  template <typename F>
  void visit(F&& f) const {
    visit_impl(*this, f);
  }

  template <typename U>
  ProbeParams<U> cast() const {
    ProbeParams<U> out;
    out.node_embeddings = node_embeddings.template cast<U>();
    for (const auto& w : hop_weights) out.hop_weights.push_back(w.template cast<U>());
    out.head_hidden = head_hidden.template cast<U>();
    out.head_out = head_out.template cast<U>();
    return out;
  }

 private:
  template <typename Self, typename F>
  static void visit_impl(Self& self, F& f) {
    f(std::string("node_embeddings"), self.node_embeddings);
    for (std::size_t l = 0; l < self.hop_weights.size(); ++l) {
      f("hop_weights[" + std::to_string(l + 1) + "]", self.hop_weights[l]);
    }
    if (self.head_hidden.size() > 0) {
      f(std::string("head_hidden"), self.head_hidden);
      f(std::string("head_out"), self.head_out);
    }
  }
};

/// Compressed-row adjacency used by the probe. Exact zeros are dropped, so a
/// dense graph and its zero-filled sparse equivalent produce the same
/// structure and the same arithmetic.
template <typename T>
struct Adjacency {
  std::uint32_t n = 0;
  std::vector<std::uint32_t> row_start;  // n + 1
  std::vector<std::uint32_t> column;
  std::vector<T> value;

  static Adjacency from_graph(const ConnectivityGraph& graph);
  std::size_t nonzeros() const noexcept { return value.size(); }
};

template <typename T>
struct GcnCache {
  std::vector<Mat<T>> aggregated;  // A * Phi^{l-1}, per hop
  std::vector<Mat<T>> pre_activation;
  Mat<T> output;                            // Phi^L
  std::vector<Eigen::Index> argmax;         // per feature column
  RowVec<T> representation;                 // z
  RowVec<T> head_pre;                       // z * W1
};

/// z = avg-pool(Phi^L) || max-pool(Phi^L), Phi^l = sigma(A Phi^{l-1} Theta^l).
template <typename T>
RowVec<T> gcn_forward(const Adjacency<T>& adjacency, const ProbeParams<T>& params,
                      const ProbeConfig& config, GcnCache<T>* cache = nullptr);
template <typename T>
RowVec<T> gcn_forward(const ConnectivityGraph& graph, const ProbeParams<T>& params,
                      const ProbeConfig& config);

/// Accumulates gradients of the encoder (node embeddings and hop weights)
/// given dLoss/dz.
template <typename T>
void gcn_backward(const Adjacency<T>& adjacency, const ProbeParams<T>& params,
                  const ProbeConfig& config, const GcnCache<T>& cache, const RowVec<T>& d_z,
                  ProbeParams<T>& gradients);

/// p = W2^T ReLU(W1^T z), no biases.
template <typename T>
T predict_ppl(const RowVec<T>& z, const ProbeParams<T>& params, RowVec<T>* head_pre = nullptr);

template <typename T>
struct LabeledGraph {
  Adjacency<T> adjacency;
  T label = 0;
};

/// Mean squared error over the batch and its exact gradient with respect to
/// every parameter group (accumulated into `gradients`). Throws NumericError
/// naming the offending group if anything is non-finite.
template <typename T>
double probe_gradients(std::span<const LabeledGraph<T>> batch, const ProbeParams<T>& params,
                       const ProbeConfig& config, ProbeParams<T>& gradients);

/// Loss only (no gradients).
template <typename T>
double probe_loss(std::span<const LabeledGraph<T>> batch, const ProbeParams<T>& params,
                  const ProbeConfig& config);

/// A connectivity graph with its normalized perplexity label.
struct GraphSample {
  std::string id;
  ConnectivityGraph graph;
  double label = 0.0;
};

struct ProbeEpochLog {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;
  double monitored_loss = 0.0;
};

struct ProbeTrainResult {
  ProbeParams<float> params;  // best monitored loss
  std::vector<ProbeEpochLog> log;
  /// "holdout" when a held-out slice drove the schedule, "train" otherwise.
  std::string monitor;
  std::size_t monitor_samples = 0;
  std::size_t best_epoch = 0;
};

ProbeTrainResult train_probe(std::span<const GraphSample> train_set, const ProbeConfig& config);

std::vector<double> predict(const ProbeParams<float>& params, const ProbeConfig& config,
                            std::span<const GraphSample> samples);

MetricsReport evaluate(const ProbeParams<float>& params, const ProbeConfig& config,
                       std::span<const GraphSample> test_set);

/// "GPPB" probe files: magic, version, architecture header, f32 tensors.
void save_probe(const std::filesystem::path& path, const ProbeParams<float>& params,
                const ProbeConfig& config);
ProbeParams<float> load_probe(const std::filesystem::path& path, ProbeConfig* config = nullptr);

/// Adam over probe parameter groups (beta1 0.9, beta2 0.999, eps 1e-8).
template <typename T>
class ProbeAdam {
 public:
  explicit ProbeAdam(const ProbeParams<T>& like);
  void step(ProbeParams<T>& params, const ProbeParams<T>& gradients, double learning_rate);

 private:
  ProbeParams<T> m_;
  ProbeParams<T> v_;
  std::size_t t_ = 0;
};

/// Reduce-on-plateau learning-rate decay with early stopping on the same
/// monitored loss.
class PlateauSchedule {
 public:
  PlateauSchedule(double learning_rate, double decay_factor, std::size_t patience_decay,
                  std::size_t patience_stop);

  /// Records one epoch's monitored loss; returns true when it is a new best.
  bool observe(double monitored_loss);
  bool should_stop() const noexcept { return since_best_ >= patience_stop_; }
  double learning_rate() const noexcept { return lr_; }
  double best() const noexcept { return best_; }

 private:
  double lr_;
  double decay_factor_;
  std::size_t patience_decay_;
  std::size_t patience_stop_;
  double best_ = std::numeric_limits<double>::infinity();
  std::size_t since_improvement_ = 0;
  std::size_t since_best_ = 0;
};

}  // namespace graphprobe
