#include "graphprobe/topology.hpp"

#include <algorithm>
#include <cmath>

#include "binary_io.hpp"
#include "graphprobe/errors.hpp"

namespace graphprobe {

bool operator==(const Edge& a, const Edge& b) { return a.i == b.i && a.j == b.j && a.w == b.w; }

ConnectivityGraph ConnectivityGraph::from_dense(std::uint32_t n, std::vector<float> values) {
  if (values.size() != std::size_t(n) * n) throw UsageError("dense graph: value count != n*n");
  ConnectivityGraph g;
  g.n_ = n;
  g.dense_ = true;
  g.dense_values_ = std::move(values);
  return g;
}

ConnectivityGraph ConnectivityGraph::from_edges(std::uint32_t n, std::vector<Edge> edges) {
  for (std::size_t k = 0; k < edges.size(); ++k) {
    const auto& e = edges[k];
    if (!(e.i < e.j && e.j < n)) throw UsageError("sparse graph: edge indices must satisfy i < j < n");
    if (k > 0) {
      const auto& p = edges[k - 1];
      if (!(p.i < e.i || (p.i == e.i && p.j < e.j))) {
        throw UsageError("sparse graph: edges must be sorted and unique");
      }
    }
  }
  ConnectivityGraph g;
  g.n_ = n;
  g.dense_ = false;
  g.edges_ = std::move(edges);
  return g;
}

std::uint64_t ConnectivityGraph::stored_pairs() const noexcept {
  return dense_ ? pair_count() : edges_.size();
}

double ConnectivityGraph::density_fraction() const noexcept {
  const auto m = pair_count();
  return m == 0 ? 1.0 : static_cast<double>(stored_pairs()) / static_cast<double>(m);
}

float ConnectivityGraph::weight(std::uint32_t i, std::uint32_t j) const {
  if (i >= n_ || j >= n_) throw UsageError("graph weight: index out of range");
  if (dense_) return dense_values_[std::size_t(i) * n_ + j];
  if (i == j) return 1.0f;
  if (i > j) std::swap(i, j);
  auto it = std::lower_bound(edges_.begin(), edges_.end(), Edge{i, j, 0.0f},
                             [](const Edge& a, const Edge& b) {
                               return a.i < b.i || (a.i == b.i && a.j < b.j);
                             });
  return (it != edges_.end() && it->i == i && it->j == j) ? it->w : 0.0f;
}

MatF ConnectivityGraph::to_dense() const {
  const auto n = static_cast<Eigen::Index>(n_);
  if (dense_) return Eigen::Map<const MatF>(dense_values_.data(), n, n);
  MatF a = MatF::Identity(n, n);
  for (const auto& e : edges_) {
    a(e.i, e.j) = e.w;
    a(e.j, e.i) = e.w;
  }
  return a;
}

std::vector<Edge> ConnectivityGraph::upper_edges() const {
  if (!dense_) {
    std::vector<Edge> out;
    for (const auto& e : edges_) {
      if (e.w != 0.0f) out.push_back(e);
    }
    return out;
  }
  std::vector<Edge> out;
  for (std::uint32_t i = 0; i < n_; ++i) {
    for (std::uint32_t j = i + 1; j < n_; ++j) {
      const float w = dense_values_[std::size_t(i) * n_ + j];
      if (w != 0.0f) out.push_back({i, j, w});
    }
  }
  return out;
}

bool operator==(const ConnectivityGraph& a, const ConnectivityGraph& b) {
  if (a.n_ != b.n_) return false;
  if (a.dense_ && b.dense_) return a.dense_values_ == b.dense_values_;
  if (!a.dense_ && !b.dense_) return a.edges_ == b.edges_;
  return a.to_dense() == b.to_dense();
}

ConnectivityGraph connectivity(const ActivationTrace& trace) {
  const auto n = static_cast<std::size_t>(trace.H.rows());
  const auto t = static_cast<std::size_t>(trace.H.cols());
  if (t < kMinTraceLength) {
    throw DataError("connectivity: trace has " + std::to_string(t) + " steps, need at least " +
                    std::to_string(kMinTraceLength));
  }
  if (!trace.H.allFinite()) throw DataError("connectivity: non-finite activation in trace");

  // Each row is centered and scaled to unit norm; a_ij is then a plain dot
  // product, evaluated once per unordered pair so symmetry is exact.
  std::vector<double> z(n * t);
  std::vector<bool> degenerate(n, false);
  std::vector<std::uint32_t> degenerate_ids;
  for (std::size_t i = 0; i < n; ++i) {
    double sum = 0.0;
    double raw_sq = 0.0;
    for (std::size_t k = 0; k < t; ++k) {
      const double v = trace.H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k));
      sum += v;
      raw_sq += v * v;
    }
    const double mean = sum / static_cast<double>(t);
    double ss = 0.0;
    double* zi = z.data() + i * t;
    for (std::size_t k = 0; k < t; ++k) {
      zi[k] = trace.H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) - mean;
      ss += zi[k] * zi[k];
    }
    if (ss <= 1e-12 * raw_sq || ss == 0.0) {
      degenerate[i] = true;
      degenerate_ids.push_back(static_cast<std::uint32_t>(i));
      continue;
    }
    const double inv = 1.0 / std::sqrt(ss);
    for (std::size_t k = 0; k < t; ++k) zi[k] *= inv;
  }

  std::vector<float> a(n * n, 0.0f);
  for (std::size_t i = 0; i < n; ++i) {
    a[i * n + i] = 1.0f;
    if (degenerate[i]) continue;
    const double* zi = z.data() + i * t;
    for (std::size_t j = i + 1; j < n; ++j) {
      if (degenerate[j]) continue;
      const double* zj = z.data() + j * t;
      double s = 0.0;
      for (std::size_t k = 0; k < t; ++k) s += zi[k] * zj[k];
      const float w = static_cast<float>(std::clamp(s, -1.0, 1.0));
      a[i * n + j] = w;
      a[j * n + i] = w;
    }
  }
  auto g = ConnectivityGraph::from_dense(static_cast<std::uint32_t>(n), std::move(a));
  g.set_degenerate_neurons(std::move(degenerate_ids));
  return g;
}

GraphStats graph_stats(const ConnectivityGraph& graph, const HistogramSpec& spec) {
  if (spec.bins == 0 || !(spec.hi > spec.lo)) throw UsageError("graph_stats: bad histogram spec");
  const std::uint32_t n = graph.size();
  GraphStats stats;
  stats.histogram_spec = spec;
  stats.degrees.assign(n, 0.0);
  if (graph.is_dense()) {
    const auto& v = graph.dense_values();
    for (std::uint32_t i = 0; i < n; ++i) {
      double d = 0.0;
      for (std::uint32_t j = 0; j < n; ++j) d += std::fabs(double(v[std::size_t(i) * n + j]));
      stats.degrees[i] = d;
    }
  } else {
    for (std::uint32_t i = 0; i < n; ++i) stats.degrees[i] = 1.0;
    for (const auto& e : graph.edges()) {
      stats.degrees[e.i] += std::fabs(double(e.w));
      stats.degrees[e.j] += std::fabs(double(e.w));
    }
  }
  for (double d : stats.degrees) stats.density += d;

  stats.degree_histogram.assign(spec.bins, 0);
  const double width = (spec.hi - spec.lo) / static_cast<double>(spec.bins);
  for (double d : stats.degrees) {
    auto bin = static_cast<std::ptrdiff_t>(std::floor((d - spec.lo) / width));
    bin = std::clamp<std::ptrdiff_t>(bin, 0, static_cast<std::ptrdiff_t>(spec.bins) - 1);
    ++stats.degree_histogram[static_cast<std::size_t>(bin)];
  }
  return stats;
}

std::uint64_t kept_pair_count(double keep_fraction, std::uint64_t pairs) {
  const long double exact = static_cast<long double>(keep_fraction) * pairs;
  const long double nearest = std::round(exact);
  if (std::fabs(exact - nearest) <= 1e-9L * std::max<long double>(1.0L, exact)) {
    return static_cast<std::uint64_t>(nearest);
  }
  return static_cast<std::uint64_t>(std::ceil(exact));
}

ConnectivityGraph sparsify(const ConnectivityGraph& graph, double keep_fraction) {
  if (!(keep_fraction > 0.0) || keep_fraction > 1.0) {
    throw UsageError("sparsify: keep_fraction must lie in (0, 1]");
  }
  const std::uint32_t n = graph.size();
  const std::uint64_t m = graph.pair_count();
  const std::uint64_t keep = kept_pair_count(keep_fraction, m);
  if (keep >= m) return graph;

  auto nonzero = graph.upper_edges();
  std::sort(nonzero.begin(), nonzero.end(), [](const Edge& a, const Edge& b) {
    const float wa = std::fabs(a.w);
    const float wb = std::fabs(b.w);
    if (wa != wb) return wa > wb;
    return a.i < b.i || (a.i == b.i && a.j < b.j);
  });

  std::vector<Edge> kept;
  if (keep <= nonzero.size()) {
    kept.assign(nonzero.begin(), nonzero.begin() + static_cast<std::ptrdiff_t>(keep));
  } else {
    // Every nonzero pair survives; the remaining slots go to zero-weight
    // pairs in lexicographic order.
    kept = nonzero;
    std::vector<Edge> by_index = nonzero;
    std::sort(by_index.begin(), by_index.end(), [](const Edge& a, const Edge& b) {
      return a.i < b.i || (a.i == b.i && a.j < b.j);
    });
    std::size_t cursor = 0;
    for (std::uint32_t i = 0; i < n && kept.size() < keep; ++i) {
      for (std::uint32_t j = i + 1; j < n && kept.size() < keep; ++j) {
        if (cursor < by_index.size() && by_index[cursor].i == i && by_index[cursor].j == j) {
          ++cursor;
          continue;
        }
        kept.push_back({i, j, 0.0f});
      }
    }
  }
  std::sort(kept.begin(), kept.end(), [](const Edge& a, const Edge& b) {
    return a.i < b.i || (a.i == b.i && a.j < b.j);
  });
  auto out = ConnectivityGraph::from_edges(n, std::move(kept));
  out.set_degenerate_neurons(graph.degenerate_neurons());
  return out;
}

namespace {
constexpr std::uint32_t kGraphVersion = 1;
}

void write_graph(const std::filesystem::path& path, const ConnectivityGraph& graph) {
  detail::BinaryWriter w(path);
  std::uint32_t flags = kGraphFlagUnitDiagonal;
  if (graph.is_dense()) flags |= kGraphFlagDense;
  if (!graph.degenerate_neurons().empty()) flags |= kGraphFlagDegenerate;
  w.magic("GGRF");
  w.u32(kGraphVersion);
  w.u32(graph.size());
  w.u32(static_cast<std::uint32_t>(graph.stored_pairs()));
  w.u32(flags);
  if (graph.is_dense()) {
    w.floats(graph.dense_values().data(), graph.dense_values().size());
  } else {
    for (const auto& e : graph.edges()) {
      w.u32(e.i);
      w.u32(e.j);
      w.f32(e.w);
    }
  }
  if (flags & kGraphFlagDegenerate) {
    w.u32(static_cast<std::uint32_t>(graph.degenerate_neurons().size()));
    for (auto d : graph.degenerate_neurons()) w.u32(d);
  }
  w.finish();
}

ConnectivityGraph read_graph(const std::filesystem::path& path) {
  detail::BinaryReader r(path);
  r.expect_magic("GGRF");
  if (const auto v = r.u32(); v != kGraphVersion) {
    throw DataError(path.string() + ": unsupported graph version " + std::to_string(v));
  }
  const auto n = r.u32();
  const auto m = r.u32();
  const auto flags = r.u32();
  if (!(flags & kGraphFlagUnitDiagonal)) throw DataError(path.string() + ": unit diagonal flag missing");
  auto check = [&](float w) {
    if (!std::isfinite(w) || std::fabs(w) > 1.0f + 1e-6f) {
      throw DataError(path.string() + ": edge weight outside [-1, 1]");
    }
  };
  ConnectivityGraph g;
  try {
    if (flags & kGraphFlagDense) {
      std::vector<float> values(std::size_t(n) * n);
      r.floats(values.data(), values.size());
      for (float w : values) check(w);
      g = ConnectivityGraph::from_dense(n, std::move(values));
    } else {
      std::vector<Edge> edges(m);
      for (auto& e : edges) {
        e.i = r.u32();
        e.j = r.u32();
        e.w = r.f32();
        check(e.w);
      }
      g = ConnectivityGraph::from_edges(n, std::move(edges));
    }
  } catch (const UsageError& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (flags & kGraphFlagDegenerate) {
    const auto count = r.u32();
    if (count > n) throw DataError(path.string() + ": bad degenerate neuron list");
    std::vector<std::uint32_t> d(count);
    for (auto& x : d) x = r.u32();
    g.set_degenerate_neurons(std::move(d));
  }
  r.expect_end();
  return g;
}

}  // namespace graphprobe
