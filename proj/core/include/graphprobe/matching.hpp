#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "graphprobe/linalg.hpp"
#include "graphprobe/probe.hpp"
#include "graphprobe/topology.hpp"

namespace graphprobe {

/// S[i][j] = <left_i, right_j>. Rows are graph representations.
template <typename T>
Mat<T> similarity_matrix(const Mat<T>& left, const Mat<T>& right);

/// Row-wise plus column-wise softmax cross-entropy against the identity
/// target. When `gradient` is given it receives dLoss/dS.
template <typename T>
double contrastive_loss(const Mat<T>& similarity, Mat<T>* gradient = nullptr);

/// Graphs of one text as seen by two models.
struct MatchPair {
  std::string id;
  ConnectivityGraph left;
  ConnectivityGraph right;
};

struct MatchConfig {
  ProbeConfig left;
  ProbeConfig right;
  /// One encoder for both sides. Requires equal node counts and is meant for
  /// matching a model against itself.
  bool shared = false;
  /// Seed for parameter init, held-out slice and batch order.
  std::uint64_t seed = 0;
};

struct MatchEpochLog {
  std::size_t epoch = 0;
  double learning_rate = 0.0;
  double train_loss = 0.0;      // mean batch loss
  double monitored_loss = 0.0;  // per-row/column cross-entropy on the monitored grid
};

struct MatchTrainResult {
  ProbeParams<float> left;
  ProbeParams<float> right;  // equal to `left` when shared
  std::vector<MatchEpochLog> log;
  std::string monitor;
  std::size_t monitor_samples = 0;
  std::size_t best_epoch = 0;
};

/// Jointly trains two matching-only encoders (no regression head) on
/// in-batch contrastive loss. Batch size, learning rate and plateau schedule
/// come from `config.left`.
MatchTrainResult train_matcher(std::span<const MatchPair> pairs, const MatchConfig& config);

/// Representations of every graph, one row each.
MatF encode(const ProbeParams<float>& params, const ProbeConfig& config,
            std::span<const ConnectivityGraph> graphs);

/// Area under the ROC curve by rank sums; tied scores count one half.
/// Throws DataError unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const std::uint8_t> positive);

struct AucReport {
  double auc = 0.0;
  double gauc = 0.0;
  std::size_t count = 0;
};

/// AUC of the flattened N x N grid against the identity, and GAUC as the
/// mean of the N per-row and N per-column AUCs.
AucReport auc_gauc(const MatD& similarity);
AucReport auc_gauc(std::span<const MatchPair> test_pairs, const MatchTrainResult& model,
                   const MatchConfig& config);

}  // namespace graphprobe
