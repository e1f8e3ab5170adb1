#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Dense>

#include <cmath>
#include <sstream>
#include <vector>

#include "fairgraph/gnn.hpp"
#include "fairgraph/graph.hpp"
#include "fairgraph/rng.hpp"

using namespace fairgraph;

namespace {

AttributedGraph toy_graph(int n, std::vector<std::pair<int, int>> edges,
                          Eigen::MatrixXd attrs, Eigen::VectorXi labels) {
  Eigen::VectorXi s = Eigen::VectorXi::Zero(n);
  for (int i = 0; i < n; ++i) s[i] = i % 2;
  std::vector<std::string> names;
  for (int j = 0; j < attrs.cols(); ++j) names.push_back("f" + std::to_string(j));
  return AttributedGraph::build(n, std::move(edges), std::move(attrs), s,
                                std::move(labels), -1, -1, names);
}

AttributedGraph random_graph(int n, int d, double p_edge, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::pair<int, int>> edges;
  for (int u = 0; u < n; ++u)
    for (int v = u + 1; v < n; ++v)
      if (rng.uniform01() < p_edge) edges.push_back({u, v});
  Eigen::MatrixXd X(n, d);
  for (int i = 0; i < n; ++i)
    for (int j = 0; j < d; ++j) X(i, j) = rng.normal();
  Eigen::VectorXi y(n);
  for (int i = 0; i < n; ++i) y[i] = rng.uniform01() < 0.5 ? 1 : 0;
  y[0] = 1;
  y[1] = 0;
  return toy_graph(n, std::move(edges), std::move(X), std::move(y));
}

}  // namespace

TEST_CASE("normalized adjacency of a single node is the identity") {
  SparseMatrix A(1, 1);
  const auto N = normalize_adjacency(A);
  REQUIRE(N.coeff(0, 0) == 1.0);
}

TEST_CASE("normalized adjacency of an edge is all one-half") {
  SparseMatrix A(2, 2);
  A.insert(0, 1) = 1.0;
  A.insert(1, 0) = 1.0;
  const auto N = normalize_adjacency(A);
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) REQUIRE(N.coeff(i, j) == Catch::Approx(0.5).margin(1e-15));
}

TEST_CASE("normalized adjacency of a triangle is uniform one-third") {
  SparseMatrix A(3, 3);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      if (i != j) A.insert(i, j) = 1.0;
  const auto N = normalize_adjacency(A);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j)
      REQUIRE(N.coeff(i, j) == Catch::Approx(1.0 / 3.0).margin(1e-15));
}

TEST_CASE("normalized adjacency is symmetric with spectral radius at most one") {
  const auto g = random_graph(20, 3, 0.2, 81);
  const auto N = normalize_adjacency(g.adjacency());
  const Eigen::MatrixXd Nd(N);
  REQUIRE((Nd - Nd.transpose()).cwiseAbs().maxCoeff() < 1e-15);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Nd);
  REQUIRE(es.eigenvalues().maxCoeff() <= 1.0 + 1e-9);
}

TEST_CASE("mean propagation averages neighbors and zeroes isolated rows") {
  SparseMatrix A(3, 3);
  A.insert(0, 1) = 1.0;
  A.insert(1, 0) = 1.0;  // node 2 isolated
  const auto P = mean_propagation(A);
  REQUIRE(P.coeff(0, 1) == 1.0);
  REQUIRE(P.coeff(1, 0) == 1.0);
  for (int j = 0; j < 3; ++j) REQUIRE(P.coeff(2, j) == 0.0);
}

TEST_CASE("zero weights produce zero logits and all-positive predictions") {
  const auto g = random_graph(10, 3, 0.3, 83);
  for (auto arch : {Architecture::gcn, Architecture::sage, Architecture::gin}) {
    ModelConfig cfg;
    cfg.architecture = arch;
    cfg.layers = 2;
    cfg.hidden = 4;
    cfg.seed = 7;
    auto model = GnnModel::init(cfg, 3);
    for (auto& p : model.mutable_parameters()) p.setZero();
    const auto P = propagation_matrix(arch, g.adjacency());
    const auto logits = model.forward(P, g.attributes());
    REQUIRE(logits.cwiseAbs().maxCoeff() == 0.0);
    const auto pred = PredictionSet::from_logits(logits);
    for (Eigen::Index i = 0; i < pred.predicted.size(); ++i)
      REQUIRE(pred.predicted[i] == 1);
  }
}

TEST_CASE("one-layer gcn on a single node is the linear map") {
  Eigen::MatrixXd X(1, 1);
  X << 1.0;
  Eigen::VectorXi y(1);
  y << 1;
  const auto g = toy_graph(1, {}, X, y);
  ModelConfig cfg;
  cfg.architecture = Architecture::gcn;
  cfg.layers = 1;
  cfg.seed = 3;
  auto model = GnnModel::init(cfg, 1);
  model.mutable_parameters()[0](0, 0) = 0.75;  // W
  model.mutable_parameters()[1](0, 0) = 0.0;   // b
  const auto P = propagation_matrix(cfg.architecture, g.adjacency());
  const auto logits = model.forward(P, g.attributes());
  REQUIRE(logits[0] == Catch::Approx(0.75).margin(1e-15));
}

TEST_CASE("two-node gcn matches a desk calculation") {
  Eigen::MatrixXd X(2, 2);
  X << 1, 2, 3, 4;
  Eigen::VectorXi y(2);
  y << 0, 1;
  const auto g = toy_graph(2, {{0, 1}}, X, y);
  ModelConfig cfg;
  cfg.architecture = Architecture::gcn;
  cfg.layers = 1;
  cfg.seed = 5;
  auto model = GnnModel::init(cfg, 2);
  auto& params = model.mutable_parameters();
  params[0].resize(2, 1);
  params[0] << 0.1, -0.2;
  params[1](0, 0) = 0.05;
  const auto P = propagation_matrix(cfg.architecture, g.adjacency());
  const auto logits = model.forward(P, g.attributes());
  // normalized adjacency is all 0.5, so each aggregated row is (2, 3):
  // logit = 2*0.1 - 3*0.2 + 0.05 = -0.35 for both nodes
  REQUIRE(logits[0] == Catch::Approx(-0.35).margin(1e-12));
  REQUIRE(logits[1] == Catch::Approx(-0.35).margin(1e-12));
}

TEST_CASE("two-node sage matches a desk calculation") {
  Eigen::MatrixXd X(2, 1);
  X << 2, 6;
  Eigen::VectorXi y(2);
  y << 0, 1;
  const auto g = toy_graph(2, {{0, 1}}, X, y);
  ModelConfig cfg;
  cfg.architecture = Architecture::sage;
  cfg.layers = 1;
  cfg.seed = 5;
  auto model = GnnModel::init(cfg, 1);
  auto& params = model.mutable_parameters();
  params[0](0, 0) = 1.0;   // W_self
  params[1](0, 0) = 0.5;   // W_nb
  params[2](0, 0) = -1.0;  // b
  const auto P = propagation_matrix(cfg.architecture, g.adjacency());
  const auto logits = model.forward(P, g.attributes());
  // node 0: 2*1 + 6*0.5 - 1 = 4;  node 1: 6*1 + 2*0.5 - 1 = 6
  REQUIRE(logits[0] == Catch::Approx(4.0).margin(1e-12));
  REQUIRE(logits[1] == Catch::Approx(6.0).margin(1e-12));
}

TEST_CASE("gin sums neighbors and feeds the layer mlp") {
  Eigen::MatrixXd X(3, 1);
  X << 1, 2, 4;
  Eigen::VectorXi y(3);
  y << 0, 1, 0;
  const auto g = toy_graph(3, {{0, 1}, {1, 2}}, X, y);
  ModelConfig cfg;
  cfg.architecture = Architecture::gin;
  cfg.layers = 1;
  cfg.hidden = 1;
  cfg.seed = 5;
  auto model = GnnModel::init(cfg, 1);
  auto& params = model.mutable_parameters();
  params[0](0, 0) = 0.5;  // eps
  params[1](0, 0) = 1.0;  // W1
  params[2](0, 0) = 0.0;  // b1
  params[3](0, 0) = 2.0;  // W2
  params[4](0, 0) = 1.0;  // b2
  const auto P = propagation_matrix(cfg.architecture, g.adjacency());
  const auto logits = model.forward(P, g.attributes());
  // z0 = 1.5*x + sum_nb: node0 = 1.5+2 = 3.5; node1 = 3+5 = 8; node2 = 6+2 = 8
  // mlp: relu(z0*1)*2 + 1
  REQUIRE(logits[0] == Catch::Approx(8.0).margin(1e-12));
  REQUIRE(logits[1] == Catch::Approx(17.0).margin(1e-12));
  REQUIRE(logits[2] == Catch::Approx(17.0).margin(1e-12));
}

TEST_CASE("gradient check passes for all three architectures") {
  const auto g = random_graph(8, 3, 0.4, 91);
  for (auto arch : {Architecture::gcn, Architecture::sage, Architecture::gin}) {
    ModelConfig cfg;
    cfg.architecture = arch;
    cfg.layers = 2;
    cfg.hidden = 4;
    cfg.seed = 13;
    const double err = gradient_check(cfg, g, g.attributes());
    INFO("architecture " << architecture_name(arch));
    REQUIRE(err < 1e-4);
  }
}

TEST_CASE("gradient check also covers single-layer models") {
  const auto g = random_graph(8, 2, 0.5, 93);
  for (auto arch : {Architecture::gcn, Architecture::sage, Architecture::gin}) {
    ModelConfig cfg;
    cfg.architecture = arch;
    cfg.layers = 1;
    cfg.hidden = 3;
    cfg.seed = 17;
    REQUIRE(gradient_check(cfg, g, g.attributes()) < 1e-4);
  }
}

TEST_CASE("training separates a separable toy problem") {
  // 20 isolated nodes, feature margin decides the label
  const int n = 20;
  Eigen::MatrixXd X(n, 2);
  Eigen::VectorXi y(n);
  Rng rng(19);
  for (int i = 0; i < n; ++i) {
    y[i] = i % 2;
    X(i, 0) = y[i] == 1 ? 2.0 + rng.uniform01() : -2.0 - rng.uniform01();
    X(i, 1) = rng.uniform01();
  }
  const auto g = toy_graph(n, {}, X, y);
  const auto split = stratified_split(g.labels(), {0.8, 0.1, 0.1}, 1);

  ModelConfig cfg;
  cfg.architecture = Architecture::gin;
  cfg.layers = 2;
  cfg.hidden = 8;
  cfg.dropout = 0.0;
  cfg.weight_decay = 0.0;
  cfg.learning_rate = 0.05;
  cfg.epochs = 200;
  cfg.seed = 2;
  const auto result = train(cfg, g, g.attributes(), split);
  int correct = 0;
  for (int u : split.train)
    correct += (result.full_logits[u] >= 0.0 ? 1 : 0) == y[u] ? 1 : 0;
  REQUIRE(correct == static_cast<int>(split.train.size()));
}

TEST_CASE("training is deterministic per seed") {
  const auto g = random_graph(16, 3, 0.25, 95);
  const auto split = stratified_split(g.labels(), {0.6, 0.2, 0.2}, 3);
  ModelConfig cfg;
  cfg.architecture = Architecture::gcn;
  cfg.epochs = 60;
  cfg.hidden = 8;
  cfg.dropout = 0.3;
  cfg.seed = 21;
  const auto r1 = train(cfg, g, g.attributes(), split);
  const auto r2 = train(cfg, g, g.attributes(), split);
  REQUIRE(r1.model.parameters().size() == r2.model.parameters().size());
  for (std::size_t i = 0; i < r1.model.parameters().size(); ++i)
    REQUIRE((r1.model.parameters()[i] - r2.model.parameters()[i]).cwiseAbs().maxCoeff() ==
            0.0);
  REQUIRE((r1.full_logits - r2.full_logits).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("zero learning rate leaves weights at initialization") {
  const auto g = random_graph(12, 2, 0.3, 97);
  const auto split = stratified_split(g.labels(), {0.6, 0.2, 0.2}, 5);
  ModelConfig cfg;
  cfg.architecture = Architecture::sage;
  cfg.epochs = 30;
  cfg.hidden = 4;
  cfg.learning_rate = 0.0;
  cfg.dropout = 0.0;
  cfg.seed = 23;
  const auto result = train(cfg, g, g.attributes(), split);
  const auto fresh = GnnModel::init(cfg, 2);
  for (std::size_t i = 0; i < fresh.parameters().size(); ++i)
    REQUIRE((result.model.parameters()[i] - fresh.parameters()[i]).cwiseAbs().maxCoeff() ==
            0.0);
}

TEST_CASE("non-finite loss aborts with the epoch in the message") {
  const int n = 8;
  Eigen::MatrixXd X(n, 2);
  X.setConstant(1e308);  // neighbor sums overflow immediately
  Eigen::VectorXi y(n);
  for (int i = 0; i < n; ++i) y[i] = i % 2;
  const auto g = toy_graph(n, {{0, 1}, {2, 3}, {4, 5}, {6, 7}}, X, y);
  const auto split = stratified_split(g.labels(), {0.6, 0.2, 0.2}, 1);
  ModelConfig cfg;
  cfg.architecture = Architecture::gin;
  cfg.epochs = 10;
  cfg.dropout = 0.0;
  cfg.seed = 29;
  try {
    train(cfg, g, g.attributes(), split);
    FAIL("expected NonFiniteLoss");
  } catch (const NonFiniteLoss& e) {
    REQUIRE(std::string(e.what()).find("epoch") != std::string::npos);
  }
}

TEST_CASE("training loss stays finite and mostly decreases on a regular problem") {
  const auto g = random_graph(24, 3, 0.2, 99);
  const auto split = stratified_split(g.labels(), {0.6, 0.2, 0.2}, 7);
  ModelConfig cfg;
  cfg.architecture = Architecture::gcn;
  cfg.epochs = 120;
  cfg.dropout = 0.0;
  cfg.seed = 31;
  const auto result = train(cfg, g, g.attributes(), split);
  for (double l : result.loss_history) REQUIRE(std::isfinite(l));
  REQUIRE(result.loss_history.back() < result.loss_history.front());
}

TEST_CASE("prediction thresholds are inclusive") {
  Eigen::VectorXd logits(3);
  logits << -0.5, 0.0, 0.5;
  const auto p = PredictionSet::from_logits(logits);
  REQUIRE(p.predicted[0] == 0);
  REQUIRE(p.predicted[1] == 1);
  REQUIRE(p.predicted[2] == 1);
  for (Eigen::Index i = 0; i < 3; ++i)
    REQUIRE(p.predicted[i] == (p.logits[i] >= p.threshold ? 1 : 0));
}

TEST_CASE("node permutation permutes logits identically") {
  const auto g = random_graph(12, 3, 0.3, 101);
  ModelConfig cfg;
  cfg.architecture = Architecture::gcn;
  cfg.layers = 2;
  cfg.hidden = 5;
  cfg.seed = 37;
  const auto model = GnnModel::init(cfg, 3);

  // permutation: rotate indices by 5
  const int n = 12;
  std::vector<int> perm(n);
  for (int i = 0; i < n; ++i) perm[i] = (i + 5) % n;

  std::vector<std::pair<int, int>> perm_edges;
  for (auto [u, v] : g.edge_list()) perm_edges.push_back({perm[u], perm[v]});
  Eigen::MatrixXd Xp(n, 3);
  Eigen::VectorXi yp(n), sp(n);
  for (int i = 0; i < n; ++i) {
    Xp.row(perm[i]) = g.attributes().row(i);
    yp[perm[i]] = g.labels()[i];
    sp[perm[i]] = g.sensitive()[i];
  }
  const auto gp = AttributedGraph::build(n, perm_edges, Xp, sp, yp, -1, -1,
                                         g.attribute_names());

  const auto P = propagation_matrix(cfg.architecture, g.adjacency());
  const auto Pp = propagation_matrix(cfg.architecture, gp.adjacency());
  const auto base = model.forward(P, g.attributes());
  const auto moved = model.forward(Pp, gp.attributes());
  for (int i = 0; i < n; ++i)
    REQUIRE(moved[perm[i]] == Catch::Approx(base[i]).margin(1e-9));
}

TEST_CASE("weights survive a serialization round trip bitwise") {
  for (auto arch : {Architecture::gcn, Architecture::sage, Architecture::gin}) {
    ModelConfig cfg;
    cfg.architecture = arch;
    cfg.layers = 2;
    cfg.hidden = 6;
    cfg.seed = 41;
    const auto model = GnnModel::init(cfg, 4);
    std::stringstream buf;
    model.save_weights(buf);
    auto loaded = GnnModel::init(cfg, 4);
    // clobber, then restore from the stream
    for (auto& p : loaded.mutable_parameters()) p.setConstant(9.9);
    loaded.load_weights(buf);
    for (std::size_t i = 0; i < model.parameters().size(); ++i)
      REQUIRE((model.parameters()[i] - loaded.parameters()[i]).cwiseAbs().maxCoeff() == 0.0);
  }
}

TEST_CASE("weight loading rejects corrupted or mismatched streams") {
  ModelConfig cfg;
  cfg.architecture = Architecture::gcn;
  cfg.seed = 43;
  auto model = GnnModel::init(cfg, 3);
  std::stringstream bad("not a weights file");
  REQUIRE_THROWS_AS(model.load_weights(bad), ParseError);

  ModelConfig other = cfg;
  other.architecture = Architecture::gin;
  const auto donor = GnnModel::init(other, 3);
  std::stringstream buf;
  donor.save_weights(buf);
  REQUIRE_THROWS_AS(model.load_weights(buf), ParseError);
}

TEST_CASE("dropout masks differ between epochs but eval mode is stable") {
  const auto g = random_graph(14, 3, 0.3, 103);
  ModelConfig cfg;
  cfg.architecture = Architecture::gcn;
  cfg.layers = 2;
  cfg.hidden = 8;
  cfg.dropout = 0.5;
  cfg.seed = 47;
  const auto model = GnnModel::init(cfg, 3);
  const auto P = propagation_matrix(cfg.architecture, g.adjacency());

  Rng stream(Rng::mix(cfg.seed, 1));
  const auto t1 = model.forward_trace(P, g.attributes(), &stream);
  const auto t2 = model.forward_trace(P, g.attributes(), &stream);
  REQUIRE((t1.mask[0] - t2.mask[0]).cwiseAbs().maxCoeff() > 0.0);

  const auto e1 = model.forward(P, g.attributes());
  const auto e2 = model.forward(P, g.attributes());
  REQUIRE((e1 - e2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("model config validation rejects bad values") {
  ModelConfig cfg;
  cfg.layers = 0;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
  cfg.layers = 2;
  cfg.dropout = 1.0;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
  cfg.dropout = 0.5;
  cfg.epochs = 0;
  REQUIRE_THROWS_AS(cfg.validate(), ConfigError);
  cfg.epochs = 500;
  REQUIRE_NOTHROW(cfg.validate());
}

TEST_CASE("training split must contain both classes") {
  const int n = 9;
  Eigen::MatrixXd X = Eigen::MatrixXd::Ones(n, 2);
  Eigen::VectorXi y(n);
  y << 1, 1, 1, 1, 1, 1, 0, 0, 0;
  const auto g = toy_graph(n, {{0, 1}}, X, y);
  Split split;
  split.train = {0, 1, 2};  // all positive
  split.validation = {3, 6};
  split.test = {4, 5, 7, 8};
  ModelConfig cfg;
  cfg.epochs = 5;
  REQUIRE_THROWS_AS(train(cfg, g, g.attributes(), split), SingleClass);
}
