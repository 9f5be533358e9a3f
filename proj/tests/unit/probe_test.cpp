#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <random>

#include "graphprobe/errors.hpp"
#include "graphprobe/probe.hpp"
#include "support/generators.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace graphprobe;

namespace {

oracle::Matrix to_rows(const MatD& m) {
  oracle::Matrix out(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(i)].push_back(m(i, j));
  }
  return out;
}

ProbeConfig small_config(std::size_t hops, bool nonlinear, std::size_t width = 4) {
  ProbeConfig c;
  c.hops = hops;
  c.width = width;
  c.nonlinear = nonlinear;
  return c;
}

std::vector<GraphSample> random_samples(std::mt19937_64& rng, std::size_t count, std::size_t nodes) {
  std::uniform_real_distribution<double> label(0.0, 1.0);
  std::vector<GraphSample> out;
  for (std::size_t k = 0; k < count; ++k) {
    out.push_back({"g" + std::to_string(k), gen::random_graph(rng, nodes, 24), label(rng)});
  }
  return out;
}

std::filesystem::path temp_file(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / "graphprobe_unit";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST_SUITE("probe") {

TEST_CASE("config invariants are enforced") {
  ProbeConfig c;
  CHECK_NOTHROW(c.validate());
  c.hops = 0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.decay_factor = 1.0;
  CHECK_THROWS_AS(c.validate(), UsageError);
  c = {};
  c.patience_decay = 20;
  CHECK_THROWS_AS(c.validate(), UsageError);
}

TEST_CASE("single node with identity weights pools to ReLU(v) twice") {
  const auto cfg = small_config(1, true, 3);
  auto p = ProbeParams<double>::init(1, cfg, 1);
  p.node_embeddings << 0.5, -1.25, 2.0;
  p.hop_weights[0] = MatD::Identity(3, 3);
  const auto g = ConnectivityGraph::from_dense(1, {1.0f});
  const auto z = gcn_forward<double>(g, p, cfg);
  REQUIRE(z.size() == 6);
  const double expect[] = {0.5, 0.0, 2.0, 0.5, 0.0, 2.0};
  for (int k = 0; k < 6; ++k) CHECK(z(k) == expect[k]);
}

TEST_CASE("zero hop weights annihilate the representation") {
  std::mt19937_64 rng(1);
  for (bool nonlinear : {true, false}) {
    const auto cfg = small_config(2, nonlinear);
    auto p = ProbeParams<double>::init(5, cfg, 2);
    p.hop_weights[1].setZero();
    CHECK(gcn_forward<double>(gen::random_graph(rng, 5), p, cfg).isZero(0.0));
  }
}

TEST_CASE("2-node forward matches the matrix-product oracle") {
  const auto g = ConnectivityGraph::from_dense(2, {1.0f, -0.625f, -0.625f, 1.0f});
  for (bool nonlinear : {true, false}) {
    for (std::size_t hops : {1u, 2u}) {
      const auto cfg = small_config(hops, nonlinear, 3);
      auto p = ProbeParams<double>::init(2, cfg, 7 + hops);
      const oracle::Matrix a{{1.0, -0.625}, {-0.625, 1.0}};
      std::vector<oracle::Matrix> theta;
      for (const auto& w : p.hop_weights) theta.push_back(to_rows(w));
      const auto ref = oracle::gcn(a, to_rows(p.node_embeddings), theta, nonlinear);
      const auto z = gcn_forward<double>(g, p, cfg);
      for (std::size_t k = 0; k < ref.size(); ++k) CHECK(std::abs(z(static_cast<Eigen::Index>(k)) - ref[k]) < 1e-6);
    }
  }
}

TEST_CASE("random graphs match the oracle") {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 10; ++trial) {
    const auto cfg = small_config(1 + trial % 3, trial % 2 == 0, 5);
    auto graph = gen::random_graph(rng, 9);
    if (trial % 4 == 1) graph = sparsify(graph, 0.3);
    const auto p = ProbeParams<double>::init(9, cfg, rng());
    std::vector<oracle::Matrix> theta;
    for (const auto& w : p.hop_weights) theta.push_back(to_rows(w));
    const auto ref = oracle::gcn(to_rows(graph.to_dense().cast<double>()), to_rows(p.node_embeddings),
                                 theta, cfg.nonlinear);
    const auto z = gcn_forward<double>(graph, p, cfg);
    for (std::size_t k = 0; k < ref.size(); ++k) CHECK(std::abs(z(static_cast<Eigen::Index>(k)) - ref[k]) < 1e-9);
  }
}

TEST_CASE("head matches the oracle and has no bias") {
  std::mt19937_64 rng(4);
  const auto cfg = small_config(1, true, 5);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = ProbeParams<double>::init(3, cfg, rng());
    RowVec<double> z = gen::random_matrix(rng, 1, 10).cast<double>();
    const double ref = oracle::head({z.data(), z.data() + z.size()}, to_rows(p.head_hidden), to_rows(p.head_out));
    CHECK(std::abs(predict_ppl(z, p) - ref) < 1e-6);
    CHECK(predict_ppl(RowVec<double>(RowVec<double>::Zero(10)), p) == 0.0);
    p.head_out.setZero();
    CHECK(predict_ppl(z, p) == 0.0);
  }
}

TEST_CASE("shape mismatches are usage errors") {
  std::mt19937_64 rng(5);
  const auto cfg = small_config(1, true);
  const auto p = ProbeParams<float>::init(6, cfg, 1);
  CHECK_THROWS_AS(gcn_forward<float>(gen::random_graph(rng, 5), p, cfg), UsageError);
  CHECK_THROWS_AS(gcn_forward<float>(gen::random_graph(rng, 6), p, small_config(2, true)), UsageError);
  const auto headless = ProbeParams<float>::init(6, cfg, 1, false);
  CHECK_FALSE(headless.has_head());
  CHECK_THROWS_AS(predict_ppl(RowVec<float>(RowVec<float>::Zero(8)), headless), UsageError);
}

TEST_CASE("gradients match central differences") {
  for (std::size_t hops : {1u, 2u}) {
    for (bool nonlinear : {true, false}) {
      for (std::uint64_t seed = 1; seed <= 3; ++seed) {
        const auto r = gradcheck::run(gradcheck::make_trial(hops, nonlinear, seed));
        INFO("hops " << hops << " nonlinear " << nonlinear << " worst " << r.worst_relative << " at "
                     << r.worst_name);
        CHECK(r.failed == 0);
        CHECK(r.checked > 3 * r.skipped);
      }
    }
  }
}

TEST_CASE("a zero residual gives zero gradients") {
  auto t = gradcheck::make_trial(2, true, 9);
  for (auto& s : t.batch) s.label = predict_ppl(gcn_forward(s.adjacency, t.params, t.config), t.params);
  auto grads = ProbeParams<double>::zeros_like(t.params);
  CHECK(probe_gradients<double>(t.batch, t.params, t.config, grads) == 0.0);
  grads.visit([](const std::string& name, const MatD& m) {
    INFO(name);
    CHECK(m.isZero(0.0));
  });
}

TEST_CASE("doubling residuals doubles the output-weight gradient") {
  auto t = gradcheck::make_trial(1, true, 10);
  auto doubled = t;
  for (std::size_t k = 0; k < t.batch.size(); ++k) {
    const double p = predict_ppl(gcn_forward(t.batch[k].adjacency, t.params, t.config), t.params);
    doubled.batch[k].label = p - 2.0 * (p - t.batch[k].label);
  }
  auto g1 = ProbeParams<double>::zeros_like(t.params);
  auto g2 = ProbeParams<double>::zeros_like(t.params);
  probe_gradients<double>(t.batch, t.params, t.config, g1);
  probe_gradients<double>(doubled.batch, doubled.params, doubled.config, g2);
  CHECK((g2.head_out - 2.0 * g1.head_out).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("non-finite parameters are reported by group") {
  auto t = gradcheck::make_trial(1, true, 11);
  t.params.hop_weights[0](0, 0) = std::numeric_limits<double>::quiet_NaN();
  auto g = ProbeParams<double>::zeros_like(t.params);
  CHECK_THROWS_AS(probe_gradients<double>(t.batch, t.params, t.config, g), NumericError);
}

TEST_CASE("sparse and zero-filled dense graphs give bit-identical outputs") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto cfg = small_config(1 + trial % 2, true, 8);
    const auto sparse = sparsify(gen::random_graph(rng, 16), 0.2);
    const auto d = sparse.to_dense();
    const auto dense = ConnectivityGraph::from_dense(16, std::vector<float>(d.data(), d.data() + d.size()));
    const auto p = ProbeParams<float>::init(16, cfg, rng());
    CHECK(gcn_forward<float>(sparse, p, cfg) == gcn_forward<float>(dense, p, cfg));
  }
}

TEST_CASE("linear average pooling is linear in the node embeddings, max pooling is homogeneous") {
  std::mt19937_64 rng(13);
  const auto cfg = small_config(2, false, 5);
  const auto graph = gen::random_graph(rng, 7);
  for (int trial = 0; trial < 10; ++trial) {
    auto p = ProbeParams<double>::init(7, cfg, rng());
    auto q = p;
    q.node_embeddings = gen::random_matrix(rng, 7, 5).cast<double>();
    auto sum = p;
    sum.node_embeddings = p.node_embeddings + q.node_embeddings;
    auto scaled = p;
    const double alpha = 0.1 + static_cast<double>(rng() % 100) / 10.0;
    scaled.node_embeddings = alpha * p.node_embeddings;

    const auto zp = gcn_forward<double>(graph, p, cfg);
    const auto zq = gcn_forward<double>(graph, q, cfg);
    const auto zs = gcn_forward<double>(graph, sum, cfg);
    const auto za = gcn_forward<double>(graph, scaled, cfg);
    CHECK((zs.head(5) - zp.head(5) - zq.head(5)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((za.head(5) - alpha * zp.head(5)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((za.tail(5) - alpha * zp.tail(5)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("plateau schedule decays by the factor and stops") {
  PlateauSchedule s(1e-3, 0.1, 2, 5);
  CHECK(s.observe(1.0));
  CHECK_FALSE(s.observe(1.0));
  CHECK(s.learning_rate() == 1e-3);
  CHECK_FALSE(s.observe(2.0));
  CHECK(s.learning_rate() == doctest::Approx(1e-4).epsilon(1e-15));
  CHECK(s.observe(0.5));
  CHECK(s.learning_rate() == doctest::Approx(1e-4).epsilon(1e-15));
  for (int k = 0; k < 4; ++k) {
    CHECK_FALSE(s.observe(0.6));
    CHECK_FALSE(s.should_stop());
  }
  CHECK_FALSE(s.observe(0.6));
  CHECK(s.should_stop());
  CHECK(s.best() == 0.5);
}

TEST_CASE("a single sample is overfit") {
  std::mt19937_64 rng(14);
  auto samples = random_samples(rng, 1, 8);
  samples[0].label = 0.6;
  ProbeConfig cfg;
  cfg.width = 8;
  cfg.max_epochs = 400;
  cfg.patience_stop = 400;
  cfg.patience_decay = 50;
  cfg.learning_rate = 1e-2;
  cfg.seed = 3;
  const auto r = train_probe(samples, cfg);
  CHECK(r.monitor == "train");
  const auto p = predict(r.params, cfg, samples);
  CHECK((p[0] - 0.6) * (p[0] - 0.6) < 1e-4);
}

TEST_CASE("training is deterministic and its learning rate only drops by the factor") {
  std::mt19937_64 rng(15);
  const auto samples = random_samples(rng, 40, 8);
  ProbeConfig cfg;
  cfg.width = 6;
  cfg.max_epochs = 40;
  cfg.patience_decay = 2;
  cfg.patience_stop = 6;
  cfg.seed = 77;
  const auto a = train_probe(samples, cfg);
  const auto b = train_probe(samples, cfg);
  REQUIRE(a.log.size() == b.log.size());
  for (std::size_t k = 0; k < a.log.size(); ++k) {
    CHECK(a.log[k].train_loss == b.log[k].train_loss);
    CHECK(a.log[k].monitored_loss == b.log[k].monitored_loss);
    CHECK(a.log[k].learning_rate == b.log[k].learning_rate);
  }
  CHECK(a.monitor == "holdout");
  CHECK(a.monitor_samples == 4);
  for (std::size_t k = 1; k < a.log.size(); ++k) {
    const double prev = a.log[k - 1].learning_rate;
    const double now = a.log[k].learning_rate;
    CHECK(now <= prev);
    if (now != prev) CHECK(now == doctest::Approx(prev * 0.1).epsilon(1e-12));
  }
  double best = a.log[a.best_epoch - 1].monitored_loss;
  for (const auto& e : a.log) CHECK(e.monitored_loss >= best);
}

TEST_CASE("training rejects bad inputs") {
  std::mt19937_64 rng(16);
  ProbeConfig cfg;
  CHECK_THROWS_AS(train_probe(std::vector<GraphSample>{}, cfg), DataError);
  auto samples = random_samples(rng, 3, 5);
  samples[1].label = 1.5;
  CHECK_THROWS_AS(train_probe(samples, cfg), DataError);
  samples = random_samples(rng, 3, 5);
  samples.push_back({"odd", gen::random_graph(rng, 6), 0.5});
  CHECK_THROWS_AS(train_probe(samples, cfg), DataError);
}

TEST_CASE("probe files round-trip") {
  ProbeConfig cfg;
  cfg.hops = 2;
  cfg.width = 5;
  cfg.nonlinear = false;
  cfg.seed = 99;
  const auto p = ProbeParams<float>::init(7, cfg, 3);
  const auto path = temp_file("probe.gppb");
  save_probe(path, p, cfg);
  ProbeConfig back_cfg;
  const auto back = load_probe(path, &back_cfg);
  CHECK(back_cfg.hops == 2);
  CHECK(back_cfg.width == 5);
  CHECK(back_cfg.nonlinear == false);
  CHECK(back_cfg.seed == 99);
  CHECK(back.node_embeddings == p.node_embeddings);
  CHECK(back.hop_weights[1] == p.hop_weights[1]);
  CHECK(back.head_hidden == p.head_hidden);
  CHECK(back.head_out == p.head_out);
}

}  // TEST_SUITE
