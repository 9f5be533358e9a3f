#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "graphprobe/linalg.hpp"
#include "graphprobe/tinylm.hpp"

namespace graphprobe {

struct Edge {
  std::uint32_t i = 0;
  std::uint32_t j = 0;  // i < j
  float w = 0.0f;
};

/// Symmetric signed functional-connectivity graph with a unit diagonal.
/// Stored either as a dense row-major n x n matrix or as an upper-triangle
/// edge list (i < j) with the diagonal implicit.
class ConnectivityGraph {
 public:
  ConnectivityGraph() = default;

  /// Takes a full n x n row-major matrix. The caller guarantees symmetry.
  static ConnectivityGraph from_dense(std::uint32_t n, std::vector<float> values);
  /// Edges must satisfy i < j < n, sorted by (i, j), without duplicates.
  static ConnectivityGraph from_edges(std::uint32_t n, std::vector<Edge> edges);

  std::uint32_t size() const noexcept { return n_; }
  bool is_dense() const noexcept { return dense_; }
  /// Number of unordered off-diagonal pairs n(n-1)/2.
  std::uint64_t pair_count() const noexcept { return std::uint64_t(n_) * (n_ - (n_ > 0)) / 2; }
  /// Stored off-diagonal pairs: every pair when dense, the edge count otherwise.
  std::uint64_t stored_pairs() const noexcept;
  /// stored_pairs() / pair_count().
  double density_fraction() const noexcept;

  float weight(std::uint32_t i, std::uint32_t j) const;
  const std::vector<float>& dense_values() const noexcept { return dense_values_; }
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  /// Row-major n x n matrix, zeros for missing edges.
  MatF to_dense() const;
  /// Upper-triangle list of every pair with a nonzero weight.
  std::vector<Edge> upper_edges() const;

  /// Neurons whose activation series had zero variance.
  const std::vector<std::uint32_t>& degenerate_neurons() const noexcept { return degenerate_; }
  void set_degenerate_neurons(std::vector<std::uint32_t> d) { degenerate_ = std::move(d); }

  friend bool operator==(const ConnectivityGraph& a, const ConnectivityGraph& b);

 private:
  std::uint32_t n_ = 0;
  bool dense_ = true;
  std::vector<float> dense_values_;
  std::vector<Edge> edges_;
  std::vector<std::uint32_t> degenerate_;
};

bool operator==(const Edge& a, const Edge& b);

inline constexpr std::size_t kMinTraceLength = 3;

/// Pearson correlation between every pair of neuron rows, computed in double
/// precision and rounded to float once. Zero-variance rows correlate 0 with
/// every other neuron; the diagonal is exactly 1.
ConnectivityGraph connectivity(const ActivationTrace& trace);

struct HistogramSpec {
  double lo = 0.0;
  double hi = 1.0;
  std::size_t bins = 20;
};

struct GraphStats {
  std::vector<double> degrees;  // sum_j |a_ij|, diagonal included
  double density = 0.0;         // sum_ij |a_ij|
  std::vector<std::size_t> degree_histogram;
  HistogramSpec histogram_spec;
};

/// Degrees outside [lo, hi) fall into the first or last bin.
GraphStats graph_stats(const ConnectivityGraph& graph, const HistogramSpec& spec = {});

/// ceil(keep_fraction * pairs), robust to floating-point noise in the product.
std::uint64_t kept_pair_count(double keep_fraction, std::uint64_t pairs);

/// Keeps the strongest ceil(keep_fraction * m) off-diagonal pairs by |w|.
/// Ties go to the lexicographically smaller (i, j). Signed weights survive
/// unchanged and the diagonal always stays.
ConnectivityGraph sparsify(const ConnectivityGraph& graph, double keep_fraction);

/// "GGRF" graph files. Header: magic, version, n, m, flags (u32). Sparse
/// payload: m records (u32 i, u32 j, f32 w) with i < j. Dense payload:
/// n*n row-major f32.
inline constexpr std::uint32_t kGraphFlagUnitDiagonal = 1u << 0;
inline constexpr std::uint32_t kGraphFlagDense = 1u << 1;
inline constexpr std::uint32_t kGraphFlagDegenerate = 1u << 2;

void write_graph(const std::filesystem::path& path, const ConnectivityGraph& graph);
ConnectivityGraph read_graph(const std::filesystem::path& path);

}  // namespace graphprobe
