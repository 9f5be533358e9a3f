#include <doctest.h>

#include <cmath>
#include <random>

#include "graphprobe/errors.hpp"
#include "graphprobe/matching.hpp"
#include "support/generators.hpp"
#include "support/oracles.hpp"

using namespace graphprobe;

namespace {

MatD random_grid(std::mt19937_64& rng, Eigen::Index n) {
  return gen::random_matrix(rng, n, n).cast<double>();
}

oracle::Matrix to_rows(const MatD& m) {
  oracle::Matrix out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)].push_back(m(i, j));
  }
  return out;
}

/// Row-plus-column softmax cross-entropy, written out with plain loops.
double reference_loss(const MatD& s) {
  const auto n = s.rows();
  double total = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    double row = 0, col = 0;
    for (Eigen::Index j = 0; j < n; ++j) {
      row += std::exp(s(i, j));
      col += std::exp(s(j, i));
    }
    total += std::log(row) - s(i, i) + std::log(col) - s(i, i);
  }
  return total;
}

}  // namespace

TEST_SUITE("matching") {

TEST_CASE("similarity is the matrix of inner products") {
  const MatD eye = MatD::Identity(3, 4);
  CHECK(similarity_matrix<double>(eye, eye) == MatD::Identity(3, 3));
  CHECK(similarity_matrix<double>(eye, MatD::Zero(3, 4)).isZero(0.0));

  std::mt19937_64 rng(1);
  const MatD l = gen::random_matrix(rng, 3, 4).cast<double>();
  const MatD r = gen::random_matrix(rng, 3, 4).cast<double>();
  const auto s = similarity_matrix<double>(l, r);
  const auto ref = oracle::matmul(to_rows(l), to_rows(MatD(r.transpose())));
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) CHECK(std::abs(s(i, j) - ref[i][j]) < 1e-6);
  }
  CHECK_THROWS(similarity_matrix<double>(l, MatD::Zero(3, 5)));
}

TEST_CASE("contrastive loss examples") {
  CHECK(contrastive_loss<double>(MatD::Constant(1, 1, 3.7)) == 0.0);
  CHECK(contrastive_loss<double>(MatD::Zero(2, 2)) == doctest::Approx(4.0 * std::log(2.0)).epsilon(1e-15));
  double prev = contrastive_loss<double>(MatD::Zero(4, 4));
  for (double s : {0.5, 1.0, 2.0, 5.0, 10.0, 40.0}) {
    const double now = contrastive_loss<double>(MatD(s * MatD::Identity(4, 4)));
    CHECK(now < prev);
    CHECK(now >= 0.0);
    prev = now;
  }
  CHECK(prev < 1e-15);
}

TEST_CASE("contrastive loss and its gradient match references") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    MatD s = 3.0 * random_grid(rng, 2 + trial % 5);
    MatD grad;
    const double loss = contrastive_loss<double>(s, &grad);
    CHECK(loss == doctest::Approx(reference_loss(s)).epsilon(1e-12));
    CHECK(loss >= 0.0);
    const double h = 1e-6;
    for (Eigen::Index k = 0; k < s.size(); ++k) {
      const double keep = s.data()[k];
      s.data()[k] = keep + h;
      const double up = reference_loss(s);
      s.data()[k] = keep - h;
      const double down = reference_loss(s);
      s.data()[k] = keep;
      CHECK(grad.data()[k] == doctest::Approx((up - down) / (2 * h)).epsilon(1e-6));
    }
  }
}

TEST_CASE("AUC examples") {
  auto r = auc_gauc(MatD::Identity(5, 5));
  CHECK(r.auc == 1.0);
  CHECK(r.gauc == 1.0);
  CHECK(r.count == 5);

  MatD s(2, 2);
  s << 0.5, 0.7, 0.2, 0.8;
  r = auc_gauc(s);
  CHECK(r.auc == 0.75);
  CHECK(r.gauc == 0.75);

  CHECK_THROWS_AS(auc_gauc(MatD::Identity(1, 1)), DataError);
  const std::vector<double> scores{1, 2};
  const std::vector<std::uint8_t> one_class{1, 1};
  CHECK_THROWS_AS(roc_auc(scores, one_class), DataError);
}

TEST_CASE("random grids score near chance") {
  std::mt19937_64 rng(3);
  double mean = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const auto r = auc_gauc(random_grid(rng, 100));
    CHECK(std::abs(r.auc - 0.5) <= 0.15);
    CHECK(std::abs(r.gauc - 0.5) <= 0.15);
    mean += r.auc / 20;
  }
  CHECK(std::abs(mean - 0.5) < 0.02);
}

TEST_CASE("rank AUC agrees with exhaustive pair counting, including ties") {
  std::mt19937_64 rng(4);
  for (int trial = 0; trial < 30; ++trial) {
    const Eigen::Index n = 2 + static_cast<Eigen::Index>(rng() % 12);
    MatD s = random_grid(rng, n);
    if (trial % 2 == 0) s = (s.array() * 2.0).round().matrix();
    const auto r = auc_gauc(s);
    const auto [auc, gauc] = oracle::auc_gauc(to_rows(s));
    CHECK(r.auc == doctest::Approx(auc).epsilon(1e-12));
    CHECK(r.gauc == doctest::Approx(gauc).epsilon(1e-12));
  }
}

TEST_CASE("AUC ignores monotone transforms and transposition") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 10; ++trial) {
    const MatD s = random_grid(rng, 12) + 2.0 * MatD::Identity(12, 12);
    const auto r = auc_gauc(s);
    const auto m = auc_gauc(MatD((3.0 * s.array()).exp().matrix()));
    const auto t = auc_gauc(MatD(s.transpose()));
    CHECK(m.auc == r.auc);
    CHECK(m.gauc == r.gauc);
    CHECK(t.auc == r.auc);
    CHECK(t.gauc == doctest::Approx(r.gauc).epsilon(1e-15));
  }
}

TEST_CASE("self-matching training lowers the loss and is deterministic") {
  std::mt19937_64 rng(6);
  std::vector<MatchPair> pairs;
  for (int k = 0; k < 64; ++k) {
    const auto g = gen::random_graph(rng, 10, 16);
    pairs.push_back({"p" + std::to_string(k), g, g});
  }
  MatchConfig cfg;
  cfg.shared = true;
  cfg.seed = 4;
  cfg.left.width = 8;
  cfg.left.max_epochs = 8;
  cfg.left.learning_rate = 1e-2;
  cfg.right = cfg.left;
  const auto a = train_matcher(pairs, cfg);
  REQUIRE(a.log.size() >= 3);
  CHECK(a.log[1].train_loss < a.log[0].train_loss);
  CHECK(a.log[2].train_loss < a.log[1].train_loss);
  CHECK(a.left.node_embeddings == a.right.node_embeddings);
  CHECK_FALSE(a.left.has_head());

  const auto b = train_matcher(pairs, cfg);
  REQUIRE(b.log.size() == a.log.size());
  for (std::size_t k = 0; k < a.log.size(); ++k) CHECK(b.log[k].train_loss == a.log[k].train_loss);

  const auto report = auc_gauc(pairs, a, cfg);
  CHECK(report.count == 64);
  CHECK(report.auc > 0.5);
}

TEST_CASE("cross matching accepts different node counts") {
  std::mt19937_64 rng(7);
  std::vector<MatchPair> pairs;
  for (int k = 0; k < 20; ++k) {
    pairs.push_back({"p" + std::to_string(k), gen::random_graph(rng, 6), gen::random_graph(rng, 9)});
  }
  MatchConfig cfg;
  cfg.left.width = 4;
  cfg.left.max_epochs = 2;
  cfg.right = cfg.left;
  const auto r = train_matcher(pairs, cfg);
  CHECK(r.left.nodes() == 6);
  CHECK(r.right.nodes() == 9);
  cfg.shared = true;
  CHECK_THROWS(train_matcher(pairs, cfg));
}

}  // TEST_SUITE
