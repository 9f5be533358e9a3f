#include "graphprobe/probe.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "binary_io.hpp"
#include "graphprobe/errors.hpp"

namespace graphprobe {

void ProbeConfig::validate() const {
  if (hops == 0) throw UsageError("ProbeConfig: hops must be >= 1");
  if (width == 0) throw UsageError("ProbeConfig: width must be positive");
  if (batch_size == 0) throw UsageError("ProbeConfig: batch_size must be positive");
  if (!(learning_rate > 0.0)) throw UsageError("ProbeConfig: learning_rate must be positive");
  if (!(decay_factor > 0.0 && decay_factor < 1.0)) {
    throw UsageError("ProbeConfig: decay_factor must lie in (0, 1)");
  }
  if (patience_decay >= patience_stop) {
    throw UsageError("ProbeConfig: patience_decay must be smaller than patience_stop");
  }
  if (!(holdout_fraction >= 0.0 && holdout_fraction < 1.0)) {
    throw UsageError("ProbeConfig: holdout_fraction must lie in [0, 1)");
  }
}

template <typename T>
ProbeParams<T> ProbeParams<T>::init(std::size_t nodes, const ProbeConfig& config,
                                    std::uint64_t seed, bool with_head) {
  config.validate();
  if (nodes == 0) throw UsageError("probe init: graph has no nodes");
  const auto n = static_cast<Eigen::Index>(nodes);
  const auto d = static_cast<Eigen::Index>(config.width);
  std::mt19937_64 rng(seed);
  ProbeParams p;

  std::normal_distribution<double> embed(0.0, 1.0 / std::sqrt(static_cast<double>(d)));
  p.node_embeddings.resize(n, d);
  for (Eigen::Index i = 0; i < p.node_embeddings.size(); ++i) {
    p.node_embeddings.data()[i] = static_cast<T>(embed(rng));
  }
  auto uniform_fill = [&](Mat<T>& m, double bound) {
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = static_cast<T>(u(rng));
  };
  for (std::size_t l = 0; l < config.hops; ++l) {
    Mat<T> w(d, d);
    uniform_fill(w, std::sqrt(6.0 / static_cast<double>(2 * d)));
    p.hop_weights.push_back(std::move(w));
  }
  if (with_head) {
    p.head_hidden.resize(2 * d, d);
    uniform_fill(p.head_hidden, 1.0 / std::sqrt(static_cast<double>(2 * d)));
    p.head_out.resize(d, 1);
    uniform_fill(p.head_out, 1.0 / std::sqrt(static_cast<double>(d)));
  }
  return p;
}

template <typename T>
ProbeParams<T> ProbeParams<T>::zeros_like(const ProbeParams& like) {
  ProbeParams p;
  p.node_embeddings = Mat<T>::Zero(like.node_embeddings.rows(), like.node_embeddings.cols());
  for (const auto& w : like.hop_weights) p.hop_weights.push_back(Mat<T>::Zero(w.rows(), w.cols()));
  p.head_hidden = Mat<T>::Zero(like.head_hidden.rows(), like.head_hidden.cols());
  p.head_out = Mat<T>::Zero(like.head_out.rows(), like.head_out.cols());
  return p;
}

template <typename T>
Adjacency<T> Adjacency<T>::from_graph(const ConnectivityGraph& graph) {
  Adjacency<T> a;
  a.n = graph.size();
  a.row_start.assign(a.n + 1, 0);
  if (graph.is_dense()) {
    const auto& v = graph.dense_values();
    for (std::uint32_t i = 0; i < a.n; ++i) {
      for (std::uint32_t j = 0; j < a.n; ++j) {
        const float w = v[std::size_t(i) * a.n + j];
        if (w == 0.0f) continue;
        a.column.push_back(j);
        a.value.push_back(static_cast<T>(w));
      }
      a.row_start[i + 1] = static_cast<std::uint32_t>(a.column.size());
    }
    return a;
  }
  // Bucket both orientations of each edge plus the unit diagonal, then emit
  // rows with ascending columns.
  std::vector<std::vector<std::pair<std::uint32_t, float>>> rows(a.n);
  for (std::uint32_t i = 0; i < a.n; ++i) rows[i].push_back({i, 1.0f});
  for (const auto& e : graph.edges()) {
    if (e.w == 0.0f) continue;
    rows[e.i].push_back({e.j, e.w});
    rows[e.j].push_back({e.i, e.w});
  }
  for (std::uint32_t i = 0; i < a.n; ++i) {
    std::sort(rows[i].begin(), rows[i].end());
    for (const auto& [j, w] : rows[i]) {
      a.column.push_back(j);
      a.value.push_back(static_cast<T>(w));
    }
    a.row_start[i + 1] = static_cast<std::uint32_t>(a.column.size());
  }
  return a;
}

namespace {

// out = A * in, rows accumulated in ascending column order.
template <typename T>
void aggregate(const Adjacency<T>& a, const Mat<T>& in, Mat<T>& out) {
  const Eigen::Index d = in.cols();
  out = Mat<T>::Zero(in.rows(), d);
  for (std::uint32_t i = 0; i < a.n; ++i) {
    T* o = out.data() + Eigen::Index(i) * d;
    for (std::uint32_t k = a.row_start[i]; k < a.row_start[i + 1]; ++k) {
      const T w = a.value[k];
      const T* x = in.data() + Eigen::Index(a.column[k]) * d;
      for (Eigen::Index c = 0; c < d; ++c) o[c] += w * x[c];
    }
  }
}

// out = A^T * in.
template <typename T>
void aggregate_transposed(const Adjacency<T>& a, const Mat<T>& in, Mat<T>& out) {
  const Eigen::Index d = in.cols();
  out = Mat<T>::Zero(in.rows(), d);
  for (std::uint32_t i = 0; i < a.n; ++i) {
    const T* x = in.data() + Eigen::Index(i) * d;
    for (std::uint32_t k = a.row_start[i]; k < a.row_start[i + 1]; ++k) {
      const T w = a.value[k];
      T* o = out.data() + Eigen::Index(a.column[k]) * d;
      for (Eigen::Index c = 0; c < d; ++c) o[c] += w * x[c];
    }
  }
}

}  // namespace

template <typename T>
RowVec<T> gcn_forward(const Adjacency<T>& adjacency, const ProbeParams<T>& params,
                      const ProbeConfig& config, GcnCache<T>* cache) {
  if (adjacency.n != params.nodes()) {
    throw UsageError("gcn_forward: graph has " + std::to_string(adjacency.n) +
                     " nodes but the probe has " + std::to_string(params.nodes()) + " embeddings");
  }
  if (params.hop_weights.size() != config.hops) {
    throw UsageError("gcn_forward: hop count differs between config and parameters");
  }
  const Eigen::Index d = params.node_embeddings.cols();
  Mat<T> h = params.node_embeddings;
  Mat<T> agg;
  if (cache) {
    cache->aggregated.clear();
    cache->pre_activation.clear();
  }
  for (std::size_t l = 0; l < config.hops; ++l) {
    aggregate(adjacency, h, agg);
    Mat<T> pre = agg * params.hop_weights[l];
    h = config.nonlinear ? Mat<T>(pre.cwiseMax(T(0))) : pre;
    if (cache) {
      cache->aggregated.push_back(agg);
      cache->pre_activation.push_back(std::move(pre));
    }
  }

  RowVec<T> z(2 * d);
  std::vector<Eigen::Index> argmax(static_cast<std::size_t>(d), 0);
  const T inv_n = T(1) / static_cast<T>(h.rows());
  for (Eigen::Index c = 0; c < d; ++c) {
    T sum = 0;
    T best = h(0, c);
    for (Eigen::Index r = 0; r < h.rows(); ++r) {
      const T v = h(r, c);
      sum += v;
      if (v > best) {
        best = v;
        argmax[static_cast<std::size_t>(c)] = r;
      }
    }
    z(c) = sum * inv_n;
    z(d + c) = best;
  }
  if (cache) {
    cache->output = std::move(h);
    cache->argmax = std::move(argmax);
    cache->representation = z;
  }
  return z;
}

template <typename T>
RowVec<T> gcn_forward(const ConnectivityGraph& graph, const ProbeParams<T>& params,
                      const ProbeConfig& config) {
  return gcn_forward(Adjacency<T>::from_graph(graph), params, config);
}

template <typename T>
void gcn_backward(const Adjacency<T>& adjacency, const ProbeParams<T>& params,
                  const ProbeConfig& config, const GcnCache<T>& cache, const RowVec<T>& d_z,
                  ProbeParams<T>& gradients) {
  const Eigen::Index n = cache.output.rows();
  const Eigen::Index d = cache.output.cols();
  Mat<T> dh(n, d);
  const T inv_n = T(1) / static_cast<T>(n);
  for (Eigen::Index c = 0; c < d; ++c) dh.col(c).setConstant(d_z(c) * inv_n);
  for (Eigen::Index c = 0; c < d; ++c) dh(cache.argmax[static_cast<std::size_t>(c)], c) += d_z(d + c);

  Mat<T> d_agg;
  Mat<T> d_prev;
  for (std::size_t l = config.hops; l-- > 0;) {
    Mat<T> d_pre = config.nonlinear
                       ? Mat<T>(dh.cwiseProduct(
                             (cache.pre_activation[l].array() > T(0)).template cast<T>().matrix()))
                       : dh;
    gradients.hop_weights[l].noalias() += cache.aggregated[l].transpose() * d_pre;
    d_agg.noalias() = d_pre * params.hop_weights[l].transpose();
    aggregate_transposed(adjacency, d_agg, d_prev);
    dh = std::move(d_prev);
  }
  gradients.node_embeddings += dh;
}

template <typename T>
T predict_ppl(const RowVec<T>& z, const ProbeParams<T>& params, RowVec<T>* head_pre) {
  if (!params.has_head()) throw UsageError("predict_ppl: probe has no regression head");
  if (z.size() != params.head_hidden.rows()) {
    throw UsageError("predict_ppl: representation width does not match head");
  }
  RowVec<T> pre = z * params.head_hidden;
  const T p = (pre.cwiseMax(T(0)) * params.head_out)(0, 0);
  if (head_pre) *head_pre = std::move(pre);
  return p;
}

namespace {

template <typename T>
void check_finite(const ProbeParams<T>& p, const char* what) {
  p.visit([&](const std::string& name, const Mat<T>& m) {
    if (!m.allFinite()) {
      throw NumericError(std::string(what) + ": non-finite values in " + name);
    }
  });
}

}  // namespace

template <typename T>
double probe_gradients(std::span<const LabeledGraph<T>> batch, const ProbeParams<T>& params,
                       const ProbeConfig& config, ProbeParams<T>& gradients) {
  if (batch.empty()) throw DataError("probe_gradients: empty batch");
  const T scale = T(2) / static_cast<T>(batch.size());
  double loss = 0.0;
  GcnCache<T> cache;
  RowVec<T> head_pre;
  for (const auto& sample : batch) {
    const RowVec<T> z = gcn_forward(sample.adjacency, params, config, &cache);
    const T p = predict_ppl(z, params, &head_pre);
    const T residual = p - sample.label;
    loss += static_cast<double>(residual) * static_cast<double>(residual);

    const T dp = scale * residual;
    const RowVec<T> hidden = head_pre.cwiseMax(T(0));
    gradients.head_out.noalias() += hidden.transpose() * dp;
    RowVec<T> d_pre = params.head_out.transpose() * dp;
    for (Eigen::Index c = 0; c < d_pre.size(); ++c) {
      if (!(head_pre(c) > T(0))) d_pre(c) = T(0);
    }
    gradients.head_hidden.noalias() += z.transpose() * d_pre;
    const RowVec<T> d_z = d_pre * params.head_hidden.transpose();
    gcn_backward(sample.adjacency, params, config, cache, d_z, gradients);
  }
  loss /= static_cast<double>(batch.size());
  if (!std::isfinite(loss)) throw NumericError("probe_gradients: non-finite loss");
  check_finite(gradients, "probe_gradients");
  return loss;
}

template <typename T>
double probe_loss(std::span<const LabeledGraph<T>> batch, const ProbeParams<T>& params,
                  const ProbeConfig& config) {
  if (batch.empty()) throw DataError("probe_loss: empty batch");
  double loss = 0.0;
  for (const auto& sample : batch) {
    const T p = predict_ppl(gcn_forward(sample.adjacency, params, config), params);
    const double r = static_cast<double>(p) - static_cast<double>(sample.label);
    loss += r * r;
  }
  return loss / static_cast<double>(batch.size());
}

template <typename T>
ProbeAdam<T>::ProbeAdam(const ProbeParams<T>& like)
    : m_(ProbeParams<T>::zeros_like(like)), v_(ProbeParams<T>::zeros_like(like)) {}

template <typename T>
void ProbeAdam<T>::step(ProbeParams<T>& params, const ProbeParams<T>& gradients,
                        double learning_rate) {
  constexpr double kBeta1 = 0.9;
  constexpr double kBeta2 = 0.999;
  constexpr double kEps = 1e-8;
  ++t_;
  const double bc1 = 1.0 - std::pow(kBeta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(kBeta2, static_cast<double>(t_));
  const T step = static_cast<T>(learning_rate / bc1);
  const T denom = static_cast<T>(1.0 / std::sqrt(bc2));

  std::vector<Mat<T>*> p, m, v;
  std::vector<const Mat<T>*> g;
  params.visit([&](const std::string&, Mat<T>& x) { p.push_back(&x); });
  m_.visit([&](const std::string&, Mat<T>& x) { m.push_back(&x); });
  v_.visit([&](const std::string&, Mat<T>& x) { v.push_back(&x); });
  gradients.visit([&](const std::string&, const Mat<T>& x) { g.push_back(&x); });
  for (std::size_t k = 0; k < p.size(); ++k) {
    m[k]->array() = T(kBeta1) * m[k]->array() + T(1 - kBeta1) * g[k]->array();
    v[k]->array() = T(kBeta2) * v[k]->array() + T(1 - kBeta2) * g[k]->array().square();
    p[k]->array() -= step * m[k]->array() / (v[k]->array().sqrt() * denom + T(kEps));
  }
}

PlateauSchedule::PlateauSchedule(double learning_rate, double decay_factor,
                                 std::size_t patience_decay, std::size_t patience_stop)
    : lr_(learning_rate),
      decay_factor_(decay_factor),
      patience_decay_(patience_decay),
      patience_stop_(patience_stop) {}

bool PlateauSchedule::observe(double monitored_loss) {
  if (monitored_loss < best_) {
    best_ = monitored_loss;
    since_improvement_ = 0;
    since_best_ = 0;
    return true;
  }
  ++since_best_;
  if (++since_improvement_ >= patience_decay_) {
    lr_ *= decay_factor_;
    since_improvement_ = 0;
  }
  return false;
}

namespace {

std::vector<LabeledGraph<float>> to_labeled(std::span<const GraphSample> samples) {
  std::vector<LabeledGraph<float>> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    out.push_back({Adjacency<float>::from_graph(s.graph), static_cast<float>(s.label)});
  }
  return out;
}

}  // namespace

ProbeTrainResult train_probe(std::span<const GraphSample> train_set, const ProbeConfig& config) {
  config.validate();
  if (train_set.empty()) throw DataError("train_probe: empty training set");
  const std::uint32_t n = train_set.front().graph.size();
  for (const auto& s : train_set) {
    if (s.graph.size() != n) throw DataError("train_probe: graphs differ in node count");
    if (!(s.label >= 0.0 && s.label <= 1.0)) {
      throw DataError("train_probe: label of " + s.id + " outside [0, 1]");
    }
  }

  const auto data = to_labeled(train_set);
  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto held = static_cast<std::size_t>(std::floor(config.holdout_fraction * data.size()));

  std::vector<LabeledGraph<float>> fit, monitor;
  for (std::size_t k = 0; k < order.size(); ++k) {
    (k < held ? monitor : fit).push_back(data[order[k]]);
  }

  ProbeTrainResult result;
  result.monitor = held > 0 ? "holdout" : "train";
  result.monitor_samples = held > 0 ? held : fit.size();
  const auto& monitored = held > 0 ? monitor : fit;

  auto params = ProbeParams<float>::init(n, config, rng());
  ProbeAdam<float> adam(params);
  PlateauSchedule schedule(config.learning_rate, config.decay_factor, config.patience_decay,
                           config.patience_stop);
  result.params = params;

  std::vector<std::size_t> batch_order(fit.size());
  std::iota(batch_order.begin(), batch_order.end(), 0);
  std::vector<LabeledGraph<float>> batch;
  for (std::size_t epoch = 1; epoch <= config.max_epochs; ++epoch) {
    const double lr = schedule.learning_rate();
    std::shuffle(batch_order.begin(), batch_order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < fit.size(); start += config.batch_size) {
      const std::size_t end = std::min(fit.size(), start + config.batch_size);
      batch.clear();
      for (std::size_t k = start; k < end; ++k) batch.push_back(fit[batch_order[k]]);
      auto grads = ProbeParams<float>::zeros_like(params);
      loss_sum += probe_gradients<float>(batch, params, config, grads);
      ++batches;
      adam.step(params, grads, lr);
    }
    const double monitored_loss = probe_loss<float>(monitored, params, config);
    if (!std::isfinite(monitored_loss)) {
      throw NumericError("train_probe: monitored loss became non-finite at epoch " +
                         std::to_string(epoch));
    }
    result.log.push_back({epoch, lr, loss_sum / static_cast<double>(batches), monitored_loss});
    if (schedule.observe(monitored_loss)) {
      result.params = params;
      result.best_epoch = epoch;
    }
    if (schedule.should_stop()) break;
  }
  return result;
}

std::vector<double> predict(const ProbeParams<float>& params, const ProbeConfig& config,
                            std::span<const GraphSample> samples) {
  std::vector<double> out;
  out.reserve(samples.size());
  for (const auto& s : samples) {
    const auto adj = Adjacency<float>::from_graph(s.graph);
    out.push_back(static_cast<double>(predict_ppl(gcn_forward(adj, params, config), params)));
  }
  return out;
}

MetricsReport evaluate(const ProbeParams<float>& params, const ProbeConfig& config,
                       std::span<const GraphSample> test_set) {
  if (test_set.empty()) throw DataError("evaluate: empty test set");
  for (const auto& s : test_set) {
    if (s.graph.size() != params.nodes()) throw DataError("evaluate: graph size mismatch");
  }
  const auto predictions = predict(params, config, test_set);
  std::vector<double> labels;
  labels.reserve(test_set.size());
  for (const auto& s : test_set) labels.push_back(s.label);
  return regression_metrics(predictions, labels);
}

namespace {
constexpr std::uint32_t kProbeVersion = 1;
}

void save_probe(const std::filesystem::path& path, const ProbeParams<float>& params,
                const ProbeConfig& config) {
  detail::BinaryWriter w(path);
  w.magic("GPPB");
  w.u32(kProbeVersion);
  w.u32(static_cast<std::uint32_t>(params.nodes()));
  w.u32(static_cast<std::uint32_t>(params.width()));
  w.u32(static_cast<std::uint32_t>(params.hop_weights.size()));
  w.u32(config.nonlinear ? 1u : 0u);
  w.u32(params.has_head() ? 1u : 0u);
  w.u64(config.seed);
  params.visit([&](const std::string&, const MatF& m) {
    w.u32(static_cast<std::uint32_t>(m.rows()));
    w.u32(static_cast<std::uint32_t>(m.cols()));
    w.floats(m.data(), static_cast<std::size_t>(m.size()));
  });
  w.finish();
}

ProbeParams<float> load_probe(const std::filesystem::path& path, ProbeConfig* config) {
  detail::BinaryReader r(path);
  r.expect_magic("GPPB");
  if (const auto v = r.u32(); v != kProbeVersion) {
    throw DataError(path.string() + ": unsupported probe version " + std::to_string(v));
  }
  const auto n = r.u32();
  const auto d = r.u32();
  const auto hops = r.u32();
  const bool nonlinear = r.u32() != 0;
  const bool head = r.u32() != 0;
  const auto seed = r.u64();
  if (n == 0 || d == 0 || hops == 0 || hops > 64) throw DataError(path.string() + ": bad probe header");
  ProbeParams<float> p;
  p.node_embeddings.resize(n, d);
  p.hop_weights.assign(hops, MatF(d, d));
  if (head) {
    p.head_hidden.resize(2 * d, d);
    p.head_out.resize(d, 1);
  }
  p.visit([&](const std::string& name, MatF& m) {
    if (r.u32() != m.rows() || r.u32() != m.cols()) {
      throw DataError(path.string() + ": shape mismatch for " + name);
    }
    r.floats(m.data(), static_cast<std::size_t>(m.size()));
  });
  r.expect_end();
  if (config) {
    config->hops = hops;
    config->width = d;
    config->nonlinear = nonlinear;
    config->seed = seed;
  }
  return p;
}

#define GRAPHPROBE_INSTANTIATE_PROBE(T)                                                           \
  template struct ProbeParams<T>;                                                                 \
  template struct Adjacency<T>;                                                                   \
  template RowVec<T> gcn_forward<T>(const Adjacency<T>&, const ProbeParams<T>&,                   \
                                    const ProbeConfig&, GcnCache<T>*);                            \
  template RowVec<T> gcn_forward<T>(const ConnectivityGraph&, const ProbeParams<T>&,              \
                                    const ProbeConfig&);                                          \
  template void gcn_backward<T>(const Adjacency<T>&, const ProbeParams<T>&, const ProbeConfig&,   \
                                const GcnCache<T>&, const RowVec<T>&, ProbeParams<T>&);           \
  template T predict_ppl<T>(const RowVec<T>&, const ProbeParams<T>&, RowVec<T>*);                 \
  template double probe_gradients<T>(std::span<const LabeledGraph<T>>, const ProbeParams<T>&,     \
                                     const ProbeConfig&, ProbeParams<T>&);                        \
  template double probe_loss<T>(std::span<const LabeledGraph<T>>, const ProbeParams<T>&,          \
                                const ProbeConfig&);                                              \
  template class ProbeAdam<T>;

GRAPHPROBE_INSTANTIATE_PROBE(float)
GRAPHPROBE_INSTANTIATE_PROBE(double)

#undef GRAPHPROBE_INSTANTIATE_PROBE

}  // namespace graphprobe
