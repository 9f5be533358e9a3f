#include "graphprobe/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "graphprobe/errors.hpp"
#include "graphprobe/metrics.hpp"
#include "graphprobe/parallel.hpp"

namespace graphprobe {

template <typename T>
Mat<T> similarity_matrix(const Mat<T>& left, const Mat<T>& right) {
  if (left.cols() != right.cols()) {
    throw UsageError("similarity_matrix: representation widths differ (" +
                     std::to_string(left.cols()) + " vs " + std::to_string(right.cols()) + ")");
  }
  Mat<T> s(left.rows(), right.rows());
  for (Eigen::Index i = 0; i < left.rows(); ++i) {
    for (Eigen::Index j = 0; j < right.rows(); ++j) s(i, j) = left.row(i).dot(right.row(j));
  }
  return s;
}

namespace {

// Cross-entropy of each line against its diagonal entry. `line(k)` yields the
// k-th row (or column) as a vector of doubles.
template <typename T, typename Line>
double softmax_ce(Eigen::Index b, Line line, Mat<T>* gradient, bool by_row) {
  double total = 0.0;
  std::vector<double> p(static_cast<std::size_t>(b));
  for (Eigen::Index k = 0; k < b; ++k) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index m = 0; m < b; ++m) mx = std::max(mx, line(k, m));
    double sum = 0.0;
    for (Eigen::Index m = 0; m < b; ++m) {
      p[std::size_t(m)] = std::exp(line(k, m) - mx);
      sum += p[std::size_t(m)];
    }
    total += std::log(sum) + mx - line(k, k);
    if (gradient) {
      for (Eigen::Index m = 0; m < b; ++m) {
        const double g = p[std::size_t(m)] / sum - (m == k ? 1.0 : 0.0);
        auto& cell = by_row ? (*gradient)(k, m) : (*gradient)(m, k);
        cell += static_cast<T>(g);
      }
    }
  }
  return total;
}

}  // namespace

template <typename T>
double contrastive_loss(const Mat<T>& s, Mat<T>* gradient) {
  if (s.rows() != s.cols()) throw UsageError("contrastive_loss: similarity matrix is not square");
  const Eigen::Index b = s.rows();
  if (gradient) *gradient = Mat<T>::Zero(b, b);
  auto row = [&](Eigen::Index k, Eigen::Index m) { return static_cast<double>(s(k, m)); };
  auto col = [&](Eigen::Index k, Eigen::Index m) { return static_cast<double>(s(m, k)); };
  return softmax_ce<T>(b, row, gradient, true) + softmax_ce<T>(b, col, gradient, false);
}

template MatF similarity_matrix<float>(const MatF&, const MatF&);
template MatD similarity_matrix<double>(const MatD&, const MatD&);
template double contrastive_loss<float>(const MatF&, MatF*);
template double contrastive_loss<double>(const MatD&, MatD*);

MatF encode(const ProbeParams<float>& params, const ProbeConfig& config,
            std::span<const ConnectivityGraph> graphs) {
  MatF z(static_cast<Eigen::Index>(graphs.size()), static_cast<Eigen::Index>(2 * params.width()));
  parallel_for(graphs.size(), [&](std::size_t k) {
    z.row(static_cast<Eigen::Index>(k)) =
        gcn_forward(Adjacency<float>::from_graph(graphs[k]), params, config);
  });
  return z;
}

namespace {

void check_pairs(std::span<const MatchPair> pairs) {
  if (pairs.empty()) throw DataError("train_matcher: no pairs");
  const auto nl = pairs.front().left.size();
  const auto nr = pairs.front().right.size();
  for (const auto& p : pairs) {
    if (p.left.size() != nl || p.right.size() != nr) {
      throw DataError("matching: pair " + p.id + " has a different node count than the first pair");
    }
  }
}

MatF encode_all(const std::vector<const Adjacency<float>*>& graphs,
                const ProbeParams<float>& params, const ProbeConfig& config) {
  MatF z(static_cast<Eigen::Index>(graphs.size()), static_cast<Eigen::Index>(2 * params.width()));
  for (std::size_t k = 0; k < graphs.size(); ++k) {
    z.row(static_cast<Eigen::Index>(k)) = gcn_forward(*graphs[k], params, config);
  }
  return z;
}

}  // namespace

MatchTrainResult train_matcher(std::span<const MatchPair> pairs, const MatchConfig& config) {
  config.left.validate();
  config.right.validate();
  check_pairs(pairs);
  const std::uint32_t nl = pairs.front().left.size();
  const std::uint32_t nr = pairs.front().right.size();
  if (config.shared) {
    if (nl != nr) throw UsageError("train_matcher: shared encoder needs equal node counts");
    if (config.left.hops != config.right.hops || config.left.width != config.right.width ||
        config.left.nonlinear != config.right.nonlinear) {
      throw UsageError("train_matcher: shared encoder needs identical probe configs");
    }
  } else if (config.left.width != config.right.width) {
    throw UsageError("train_matcher: both sides need the same representation width");
  }
  const ProbeConfig& sched = config.left;

  std::vector<Adjacency<float>> left_adj, right_adj;
  left_adj.reserve(pairs.size());
  right_adj.reserve(pairs.size());
  for (const auto& p : pairs) {
    left_adj.push_back(Adjacency<float>::from_graph(p.left));
    right_adj.push_back(Adjacency<float>::from_graph(p.right));
  }

  std::mt19937_64 rng(config.seed);
  std::vector<std::size_t> order(pairs.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  auto held = static_cast<std::size_t>(std::floor(sched.holdout_fraction * pairs.size()));
  if (held < 2) held = 0;
  std::vector<std::size_t> fit(order.begin() + static_cast<std::ptrdiff_t>(held), order.end());
  std::vector<std::size_t> monitor(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(held));
  if (fit.size() < 2) throw DataError("train_matcher: need at least two training pairs");

  MatchTrainResult result;
  result.monitor = held > 0 ? "holdout" : "train";
  const auto& monitored = held > 0 ? monitor : fit;
  result.monitor_samples = monitored.size();

  ProbeParams<float> left = ProbeParams<float>::init(nl, config.left, rng(), false);
  ProbeParams<float> right =
      config.shared ? left : ProbeParams<float>::init(nr, config.right, rng(), false);
  ProbeAdam<float> adam_left(left);
  ProbeAdam<float> adam_right(right);
  PlateauSchedule schedule(sched.learning_rate, sched.decay_factor, sched.patience_decay,
                           sched.patience_stop);
  result.left = left;
  result.right = right;

  auto monitored_loss = [&]() {
    std::vector<const Adjacency<float>*> l, r;
    for (auto k : monitored) {
      l.push_back(&left_adj[k]);
      r.push_back(&right_adj[k]);
    }
    const MatF zl = encode_all(l, left, config.left);
    const MatF zr = encode_all(r, config.shared ? left : right, config.right);
    return contrastive_loss<float>(similarity_matrix(zl, zr)) /
           (2.0 * static_cast<double>(monitored.size()));
  };

  std::vector<GcnCache<float>> cache_l, cache_r;
  for (std::size_t epoch = 1; epoch <= sched.max_epochs; ++epoch) {
    const double lr = schedule.learning_rate();
    std::shuffle(fit.begin(), fit.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < fit.size(); start += sched.batch_size) {
      const std::size_t end = std::min(fit.size(), start + sched.batch_size);
      const std::size_t b = end - start;
      if (b < 2) continue;  // a single pair carries no contrast
      cache_l.assign(b, {});
      cache_r.assign(b, {});
      MatF zl(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(2 * left.width()));
      MatF zr(static_cast<Eigen::Index>(b), static_cast<Eigen::Index>(2 * right.width()));
      const ProbeParams<float>& rp = config.shared ? left : right;
      for (std::size_t k = 0; k < b; ++k) {
        const auto idx = fit[start + k];
        const auto row = static_cast<Eigen::Index>(k);
        zl.row(row) = gcn_forward(left_adj[idx], left, config.left, &cache_l[k]);
        zr.row(row) = gcn_forward(right_adj[idx], rp, config.right, &cache_r[k]);
      }
      MatF ds;
      const double loss = contrastive_loss<float>(similarity_matrix(zl, zr), &ds);
      if (!std::isfinite(loss)) {
        throw NumericError("train_matcher: non-finite loss at epoch " + std::to_string(epoch));
      }
      const MatF dzl = ds * zr;
      const MatF dzr = ds.transpose() * zl;
      auto grad_l = ProbeParams<float>::zeros_like(left);
      auto grad_r = ProbeParams<float>::zeros_like(rp);
      auto& grad_r_target = config.shared ? grad_l : grad_r;
      for (std::size_t k = 0; k < b; ++k) {
        const auto idx = fit[start + k];
        const auto row = static_cast<Eigen::Index>(k);
        gcn_backward<float>(left_adj[idx], left, config.left, cache_l[k], dzl.row(row), grad_l);
        gcn_backward<float>(right_adj[idx], rp, config.right, cache_r[k], dzr.row(row),
                            grad_r_target);
      }
      adam_left.step(left, grad_l, lr);
      if (!config.shared) adam_right.step(right, grad_r, lr);
      loss_sum += loss;
      ++batches;
    }
    const double mon = monitored_loss();
    if (!std::isfinite(mon)) {
      throw NumericError("train_matcher: monitored loss became non-finite at epoch " +
                         std::to_string(epoch));
    }
    result.log.push_back(
        {epoch, lr, batches ? loss_sum / static_cast<double>(batches) : 0.0, mon});
    if (schedule.observe(mon)) {
      result.left = left;
      result.right = config.shared ? left : right;
      result.best_epoch = epoch;
    }
    if (schedule.should_stop()) break;
  }
  return result;
}

double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> positive) {
  if (scores.size() != positive.size()) throw UsageError("roc_auc: length mismatch");
  const auto ranks = average_ranks(scores);
  double rank_sum = 0.0;
  std::size_t pos = 0;
  for (std::size_t k = 0; k < scores.size(); ++k) {
    if (!std::isfinite(scores[k])) throw NumericError("roc_auc: non-finite score");
    if (positive[k]) {
      rank_sum += ranks[k];
      ++pos;
    }
  }
  const std::size_t neg = scores.size() - pos;
  if (pos == 0 || neg == 0) throw DataError("roc_auc: both classes must be present");
  const double p = static_cast<double>(pos);
  return (rank_sum - p * (p + 1.0) / 2.0) / (p * static_cast<double>(neg));
}

AucReport auc_gauc(const MatD& s) {
  if (s.rows() != s.cols()) throw UsageError("auc_gauc: similarity grid is not square");
  const auto n = static_cast<std::size_t>(s.rows());
  if (n < 2) throw DataError("auc_gauc: need at least 2 test pairs, got " + std::to_string(n));

  std::vector<double> flat(n * n);
  std::vector<std::uint8_t> target(n * n, 0);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < n; ++j) flat[i * n + j] = s(Eigen::Index(i), Eigen::Index(j));
    target[i * n + i] = 1;
  }

  AucReport report;
  report.count = n;
  report.auc = roc_auc(flat, target);

  std::vector<double> line_auc(2 * n);
  parallel_for(2 * n, [&](std::size_t k) {
    const bool by_row = k < n;
    const std::size_t idx = by_row ? k : k - n;
    std::vector<double> line(n);
    std::vector<std::uint8_t> pos(n);
    for (std::size_t m = 0; m < n; ++m) {
      line[m] = by_row ? s(Eigen::Index(idx), Eigen::Index(m)) : s(Eigen::Index(m), Eigen::Index(idx));
      pos[m] = m == idx;
    }
    line_auc[k] = roc_auc(line, pos);
  });
  double sum = 0.0;
  for (double a : line_auc) sum += a;
  report.gauc = sum / static_cast<double>(2 * n);
  return report;
}

AucReport auc_gauc(std::span<const MatchPair> test_pairs, const MatchTrainResult& model,
                   const MatchConfig& config) {
  if (test_pairs.size() < 2) {
    throw DataError("auc_gauc: need at least 2 test pairs, got " + std::to_string(test_pairs.size()));
  }
  check_pairs(test_pairs);
  if (test_pairs.front().left.size() != model.left.nodes() ||
      test_pairs.front().right.size() != model.right.nodes()) {
    throw DataError("auc_gauc: test graphs do not match the trained encoders");
  }
  std::vector<ConnectivityGraph> l, r;
  for (const auto& p : test_pairs) {
    l.push_back(p.left);
    r.push_back(p.right);
  }
  const MatF zl = encode(model.left, config.left, l);
  const MatF zr = encode(model.right, config.right, r);
  return auc_gauc(similarity_matrix<double>(zl.cast<double>(), zr.cast<double>()));
}

}  // namespace graphprobe
