#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fairgraph/error.hpp"
#include "fairgraph/graph.hpp"
#include "fairgraph/rng.hpp"

namespace fairgraph {

enum class Architecture { gcn, sage, gin };

inline std::string architecture_name(Architecture a) {
  switch (a) {
    case Architecture::gcn: return "gcn";
    case Architecture::sage: return "sage";
    case Architecture::gin: return "gin";
  }
  return "gcn";
}

inline Architecture architecture_from(const std::string& name) {
  if (name == "gcn") return Architecture::gcn;
  if (name == "sage" || name == "graphsage") return Architecture::sage;
  if (name == "gin") return Architecture::gin;
  throw ConfigError("unknown architecture: " + name);
}

struct ModelConfig {
  Architecture architecture = Architecture::gcn;
  int layers = 2;
  int hidden = 16;
  double dropout = 0.5;
  double weight_decay = 5e-4;
  double learning_rate = 1e-2;
  int epochs = 500;  // presets 500/1000/1500/2000; any positive value is legal
  std::uint64_t seed = 0;

  void validate() const {
    if (layers < 1) throw ConfigError("model: layers must be >= 1");
    if (hidden < 1) throw ConfigError("model: hidden must be >= 1");
    if (dropout < 0.0 || dropout >= 1.0) throw ConfigError("model: dropout must lie in [0,1)");
    if (weight_decay < 0.0) throw ConfigError("model: weight_decay must be >= 0");
    if (learning_rate < 0.0) throw ConfigError("model: learning_rate must be >= 0");
    if (epochs < 1) throw ConfigError("model: epochs must be >= 1");
  }
};

struct PredictionSet {
  Eigen::VectorXd logits;
  Eigen::VectorXi predicted;
  double threshold = 0.0;

  static PredictionSet from_logits(Eigen::VectorXd logits, double threshold = 0.0) {
    PredictionSet p;
    p.logits = std::move(logits);
    p.threshold = threshold;
    p.predicted.resize(p.logits.size());
    for (Eigen::Index i = 0; i < p.logits.size(); ++i)
      p.predicted[i] = p.logits[i] >= threshold ? 1 : 0;
    return p;
  }
};

// GCN propagation: D̃^{-1/2}(A+I)D̃^{-1/2} with D̃ the degrees of A+I.
inline SparseMatrix normalize_adjacency(const SparseMatrix& A) {
  const int n = static_cast<int>(A.rows());
  SparseMatrix AI = A;
  for (int i = 0; i < n; ++i) AI.coeffRef(i, i) += 1.0;
  Eigen::VectorXd deg = AI * Eigen::VectorXd::Ones(n);
  Eigen::VectorXd inv_sqrt(n);
  for (int i = 0; i < n; ++i) inv_sqrt[i] = 1.0 / std::sqrt(deg[i]);
  for (int j = 0; j < AI.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(AI, j); it; ++it)
      it.valueRef() *= inv_sqrt[it.row()] * inv_sqrt[it.col()];
  AI.makeCompressed();
  return AI;
}

// Mean-over-neighbors propagation D^{-1}A; isolated nodes keep zero rows.
inline SparseMatrix mean_propagation(const SparseMatrix& A) {
  const int n = static_cast<int>(A.rows());
  Eigen::VectorXd deg = A * Eigen::VectorXd::Ones(n);
  SparseMatrix P = A;
  for (int j = 0; j < P.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(P, j); it; ++it)
      it.valueRef() *= deg[it.row()] > 0.0 ? 1.0 / deg[it.row()] : 0.0;
  P.prune(0.0, 0.0);
  P.makeCompressed();
  return P;
}

inline SparseMatrix propagation_matrix(Architecture a, const SparseMatrix& A) {
  switch (a) {
    case Architecture::gcn: return normalize_adjacency(A);
    case Architecture::sage: return mean_propagation(A);
    case Architecture::gin: return A;
  }
  return A;
}

namespace detail {

inline double softplus(double z) {
  return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z)));
}

inline double sigmoid(double z) {
  return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

}  // namespace detail

// Full-batch GNN with a single output logit per node. Parameters live in a
// flat tensor list whose per-layer layout depends on the architecture:
//   gcn : W, b
//   sage: W_self, W_nb, b
//   gin : eps (1×1), W1, b1, W2, b2   (the layer MLP is Lin-ReLU-Lin)
// Hidden layers apply ReLU (and dropout when training); the final layer is
// linear. Biases are stored as 1×d row matrices.
class GnnModel {
public:
  static GnnModel init(const ModelConfig& cfg, int input_dim) {
    cfg.validate();
    if (input_dim < 1) throw ConfigError("model: input dimension must be >= 1");
    GnnModel m;
    m.cfg_ = cfg;
    m.input_dim_ = input_dim;
    Rng rng(Rng::mix(cfg.seed, 0));
    auto glorot = [&](int rows, int cols) {
      const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
      Eigen::MatrixXd W(rows, cols);
      for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) W(i, j) = rng.uniform(-limit, limit);
      return W;
    };
    for (int l = 0; l < cfg.layers; ++l) {
      const int in = l == 0 ? input_dim : cfg.hidden;
      const int out = l == cfg.layers - 1 ? 1 : cfg.hidden;
      switch (cfg.architecture) {
        case Architecture::gcn:
          m.params_.push_back(glorot(in, out));
          m.params_.push_back(Eigen::MatrixXd::Zero(1, out));
          break;
        case Architecture::sage:
          m.params_.push_back(glorot(in, out));
          m.params_.push_back(glorot(in, out));
          m.params_.push_back(Eigen::MatrixXd::Zero(1, out));
          break;
        case Architecture::gin:
          m.params_.push_back(Eigen::MatrixXd::Zero(1, 1));  // eps
          m.params_.push_back(glorot(in, cfg.hidden));
          m.params_.push_back(Eigen::MatrixXd::Zero(1, cfg.hidden));
          m.params_.push_back(glorot(cfg.hidden, out));
          m.params_.push_back(Eigen::MatrixXd::Zero(1, out));
          break;
      }
    }
    return m;
  }

  const ModelConfig& config() const { return cfg_; }
  int input_dim() const { return input_dim_; }
  const std::vector<Eigen::MatrixXd>& parameters() const { return params_; }
  std::vector<Eigen::MatrixXd>& mutable_parameters() { return params_; }

  struct Trace {
    std::vector<Eigen::MatrixXd> H;     // H[0] = X, H[l+1] = layer l output
    std::vector<Eigen::MatrixXd> pre;   // final pre-activation per layer
    std::vector<Eigen::MatrixXd> agg;   // P·H (gcn/sage) or (1+eps)H + P·H (gin)
    std::vector<Eigen::MatrixXd> t1;    // gin MLP hidden pre-activation
    std::vector<Eigen::MatrixXd> mask;  // scaled dropout masks; empty in eval
    Eigen::VectorXd logits;
  };

  // Forward pass over the whole graph -- `P` must come from
  // propagation_matrix(config().architecture, A). A null dropout_rng (or zero
  // dropout) runs in evaluation mode.
  Trace forward_trace(const SparseMatrix& P, const Eigen::MatrixXd& X,
                      Rng* dropout_rng = nullptr) const {
    if (static_cast<int>(X.cols()) != input_dim_)
      throw DimensionMismatch("forward: input width does not match the model");
    if (X.rows() != P.rows()) throw DimensionMismatch("forward: X rows != graph size");
    const int L = cfg_.layers;
    Trace tr;
    tr.H.resize(static_cast<std::size_t>(L) + 1);
    tr.pre.resize(static_cast<std::size_t>(L));
    tr.agg.resize(static_cast<std::size_t>(L));
    tr.t1.resize(static_cast<std::size_t>(L));
    tr.mask.resize(static_cast<std::size_t>(L));
    tr.H[0] = X;

    const bool drop = dropout_rng != nullptr && cfg_.dropout > 0.0;
    for (int l = 0; l < L; ++l) {
      const auto& in = tr.H[static_cast<std::size_t>(l)];
      Eigen::MatrixXd z;
      switch (cfg_.architecture) {
        case Architecture::gcn: {
          tr.agg[static_cast<std::size_t>(l)] = P * in;
          z = tr.agg[static_cast<std::size_t>(l)] * w(l, 0);
          z.rowwise() += w(l, 1).row(0);
          break;
        }
        case Architecture::sage: {
          tr.agg[static_cast<std::size_t>(l)] = P * in;
          z = in * w(l, 0) + tr.agg[static_cast<std::size_t>(l)] * w(l, 1);
          z.rowwise() += w(l, 2).row(0);
          break;
        }
        case Architecture::gin: {
          const double eps = w(l, 0)(0, 0);
          tr.agg[static_cast<std::size_t>(l)] = (1.0 + eps) * in + P * in;
          tr.t1[static_cast<std::size_t>(l)] = tr.agg[static_cast<std::size_t>(l)] * w(l, 1);
          tr.t1[static_cast<std::size_t>(l)].rowwise() += w(l, 2).row(0);
          z = tr.t1[static_cast<std::size_t>(l)].cwiseMax(0.0) * w(l, 3);
          z.rowwise() += w(l, 4).row(0);
          break;
        }
      }
      tr.pre[static_cast<std::size_t>(l)] = z;
      if (l < L - 1) {
        Eigen::MatrixXd h = z.cwiseMax(0.0);
        if (drop) {
          const double keep = 1.0 - cfg_.dropout;
          Eigen::MatrixXd& mask = tr.mask[static_cast<std::size_t>(l)];
          mask.resize(h.rows(), h.cols());
          for (Eigen::Index i = 0; i < h.rows(); ++i)
            for (Eigen::Index j = 0; j < h.cols(); ++j)
              mask(i, j) = dropout_rng->uniform01() < keep ? 1.0 / keep : 0.0;
          h = h.cwiseProduct(mask);
        }
        tr.H[static_cast<std::size_t>(l) + 1] = std::move(h);
      } else {
        tr.H[static_cast<std::size_t>(l) + 1] = z;
      }
    }
    tr.logits = tr.H[static_cast<std::size_t>(L)].col(0);
    return tr;
  }

  Eigen::VectorXd forward(const SparseMatrix& P, const Eigen::MatrixXd& X) const {
    return forward_trace(P, X).logits;
  }

  // Gradients of a scalar loss with upstream dLoss/dlogits, reusing the
  // forward trace. `Pt` is P transposed (equal to P for gcn/gin).
  std::vector<Eigen::MatrixXd> backward(const SparseMatrix& P, const SparseMatrix& Pt,
                                        const Trace& tr,
                                        const Eigen::VectorXd& dlogits) const {
    const int L = cfg_.layers;
    std::vector<Eigen::MatrixXd> g(params_.size());
    for (std::size_t i = 0; i < params_.size(); ++i)
      g[i] = Eigen::MatrixXd::Zero(params_[i].rows(), params_[i].cols());

    Eigen::MatrixXd dH = dlogits;
    for (int l = L - 1; l >= 0; --l) {
      Eigen::MatrixXd dZ = std::move(dH);
      if (l < L - 1) {
        if (tr.mask[static_cast<std::size_t>(l)].size() > 0)
          dZ = dZ.cwiseProduct(tr.mask[static_cast<std::size_t>(l)]);
        dZ = dZ.cwiseProduct(
            (tr.pre[static_cast<std::size_t>(l)].array() > 0.0).cast<double>().matrix());
      }
      const auto& in = tr.H[static_cast<std::size_t>(l)];
      switch (cfg_.architecture) {
        case Architecture::gcn: {
          gw(g, l, 0) = tr.agg[static_cast<std::size_t>(l)].transpose() * dZ;
          gw(g, l, 1) = dZ.colwise().sum();
          dH = P * (dZ * w(l, 0).transpose());
          break;
        }
        case Architecture::sage: {
          gw(g, l, 0) = in.transpose() * dZ;
          gw(g, l, 1) = tr.agg[static_cast<std::size_t>(l)].transpose() * dZ;
          gw(g, l, 2) = dZ.colwise().sum();
          dH = dZ * w(l, 0).transpose() + Pt * (dZ * w(l, 1).transpose());
          break;
        }
        case Architecture::gin: {
          const Eigen::MatrixXd relu_t1 =
              tr.t1[static_cast<std::size_t>(l)].cwiseMax(0.0);
          gw(g, l, 3) = relu_t1.transpose() * dZ;
          gw(g, l, 4) = dZ.colwise().sum();
          Eigen::MatrixXd dT1 = (dZ * w(l, 3).transpose())
                                    .cwiseProduct((tr.t1[static_cast<std::size_t>(l)].array() > 0.0)
                                                      .cast<double>()
                                                      .matrix());
          gw(g, l, 1) = tr.agg[static_cast<std::size_t>(l)].transpose() * dT1;
          gw(g, l, 2) = dT1.colwise().sum();
          const Eigen::MatrixXd dZ0 = dT1 * w(l, 1).transpose();
          gw(g, l, 0)(0, 0) = dZ0.cwiseProduct(in).sum();
          const double eps = w(l, 0)(0, 0);
          dH = (1.0 + eps) * dZ0 + P * dZ0;
          break;
        }
      }
    }
    return g;
  }

  void save_weights(std::ostream& os) const {
    const char magic[4] = {'F', 'G', 'N', 'N'};
    os.write(magic, 4);
    write_u32(os, 1);  // format version
    write_u32(os, static_cast<std::uint32_t>(cfg_.architecture));
    write_u32(os, static_cast<std::uint32_t>(params_.size()));
    for (const auto& Wm : params_) {
      write_u32(os, static_cast<std::uint32_t>(Wm.rows()));
      write_u32(os, static_cast<std::uint32_t>(Wm.cols()));
      for (Eigen::Index i = 0; i < Wm.rows(); ++i)
        for (Eigen::Index j = 0; j < Wm.cols(); ++j) {
          const double v = Wm(i, j);
          os.write(reinterpret_cast<const char*>(&v), sizeof(double));
        }
    }
  }

  void load_weights(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "FGNN", 4) != 0)
      throw ParseError("weights: bad magic header");
    if (read_u32(is) != 1) throw ParseError("weights: unsupported format version");
    if (read_u32(is) != static_cast<std::uint32_t>(cfg_.architecture))
      throw ParseError("weights: architecture mismatch");
    if (read_u32(is) != params_.size()) throw ParseError("weights: tensor count mismatch");
    for (auto& Wm : params_) {
      const std::uint32_t rows = read_u32(is), cols = read_u32(is);
      if (rows != static_cast<std::uint32_t>(Wm.rows()) ||
          cols != static_cast<std::uint32_t>(Wm.cols()))
        throw ParseError("weights: tensor shape mismatch");
      for (Eigen::Index i = 0; i < Wm.rows(); ++i)
        for (Eigen::Index j = 0; j < Wm.cols(); ++j) {
          double v;
          is.read(reinterpret_cast<char*>(&v), sizeof(double));
          if (!is) throw ParseError("weights: truncated tensor data");
          Wm(i, j) = v;
        }
    }
  }

private:
  GnnModel() = default;

  int tensors_per_layer() const {
    switch (cfg_.architecture) {
      case Architecture::gcn: return 2;
      case Architecture::sage: return 3;
      case Architecture::gin: return 5;
    }
    return 2;
  }

  const Eigen::MatrixXd& w(int layer, int slot) const {
    return params_[static_cast<std::size_t>(layer * tensors_per_layer() + slot)];
  }
  Eigen::MatrixXd& gw(std::vector<Eigen::MatrixXd>& g, int layer, int slot) const {
    return g[static_cast<std::size_t>(layer * tensors_per_layer() + slot)];
  }

  static void write_u32(std::ostream& os, std::uint32_t v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(v));
  }
  static std::uint32_t read_u32(std::istream& is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), sizeof(v));
    if (!is) throw ParseError("weights: truncated header");
    return v;
  }

  ModelConfig cfg_;
  int input_dim_ = 0;
  std::vector<Eigen::MatrixXd> params_;
};

namespace detail {

// Mean sigmoid cross-entropy over the given nodes plus (wd/2)·sum of squared
// parameters. dlogits (if provided) receives the per-node loss gradient.
inline double bce_loss(const Eigen::VectorXd& logits, const Eigen::VectorXi& labels,
                       const std::vector<int>& nodes, Eigen::VectorXd* dlogits) {
  double total = 0.0;
  if (dlogits) dlogits->setZero(logits.size());
  for (int u : nodes) {
    const double z = logits[u];
    total += softplus(z) - static_cast<double>(labels[u]) * z;
    if (dlogits) (*dlogits)[u] = sigmoid(z) - static_cast<double>(labels[u]);
  }
  const double inv = 1.0 / static_cast<double>(nodes.size());
  if (dlogits) *dlogits *= inv;
  return total * inv;
}

struct Adam {
  std::vector<Eigen::MatrixXd> m, v;
  long t = 0;
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

  explicit Adam(const std::vector<Eigen::MatrixXd>& params) {
    for (const auto& p : params) {
      m.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
      v.push_back(Eigen::MatrixXd::Zero(p.rows(), p.cols()));
    }
  }

  void step(std::vector<Eigen::MatrixXd>& params, const std::vector<Eigen::MatrixXd>& g,
            double lr) {
    ++t;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
      v[i] = beta2 * v[i] + (1.0 - beta2) * g[i].cwiseProduct(g[i]);
      params[i] -= (lr / c1) * m[i].cwiseQuotient(
                       ((v[i] / c2).cwiseSqrt().array() + eps).matrix());
    }
  }
};

}  // namespace detail

struct TrainResult {
  GnnModel model;
  PredictionSet test_predictions;
  Eigen::VectorXd full_logits;       // evaluation-mode logits for every node
  std::vector<double> loss_history;  // regularized training loss per epoch
};

// Full-batch training: Adam on mean sigmoid cross-entropy over the train
// split plus (weight_decay/2)·||params||². Returns the model exactly as it
// stands after the last epoch, with evaluation-mode predictions on the test
// split. Deterministic for a fixed config seed.
inline TrainResult train(const ModelConfig& cfg, const AttributedGraph& g,
                         const Eigen::MatrixXd& X, const Split& split) {
  cfg.validate();
  if (split.train.empty() || split.test.empty())
    throw ConfigError("train: split has an empty train or test set");
  bool has_pos = false, has_neg = false;
  for (int u : split.train) (g.labels()[u] == 1 ? has_pos : has_neg) = true;
  if (!has_pos || !has_neg)
    throw SingleClass("train: training split must contain both classes");

  const SparseMatrix P = propagation_matrix(cfg.architecture, g.adjacency());
  const SparseMatrix Pt = SparseMatrix(P.transpose());

  TrainResult out{GnnModel::init(cfg, static_cast<int>(X.cols())), {}, {}, {}};
  detail::Adam adam(out.model.parameters());
  Rng dropout_rng(Rng::mix(cfg.seed, 1));

  out.loss_history.reserve(static_cast<std::size_t>(cfg.epochs));
  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    const auto tr = out.model.forward_trace(P, X, &dropout_rng);
    Eigen::VectorXd dlogits;
    double loss = detail::bce_loss(tr.logits, g.labels(), split.train, &dlogits);
    auto grads = out.model.backward(P, Pt, tr, dlogits);
    if (cfg.weight_decay > 0.0) {
      double sq = 0.0;
      const auto& params = out.model.parameters();
      for (std::size_t i = 0; i < params.size(); ++i) {
        sq += params[i].squaredNorm();
        grads[i] += cfg.weight_decay * params[i];
      }
      loss += 0.5 * cfg.weight_decay * sq;
    }
    if (!std::isfinite(loss))
      throw NonFiniteLoss("train: non-finite loss at epoch " + std::to_string(epoch));
    out.loss_history.push_back(loss);
    adam.step(out.model.mutable_parameters(), grads, cfg.learning_rate);
  }

  out.full_logits = out.model.forward(P, X);
  Eigen::VectorXd test_logits(static_cast<Eigen::Index>(split.test.size()));
  for (std::size_t i = 0; i < split.test.size(); ++i)
    test_logits[static_cast<Eigen::Index>(i)] = out.full_logits[split.test[i]];
  out.test_predictions = PredictionSet::from_logits(std::move(test_logits));
  return out;
}

// Max relative error between analytic and central finite-difference gradients
// over every parameter entry (h = 1e-5, dropout and weight decay disabled,
// all nodes in the loss).
inline double gradient_check(const ModelConfig& cfg_in, const AttributedGraph& g,
                             const Eigen::MatrixXd& X) {
  ModelConfig cfg = cfg_in;
  cfg.dropout = 0.0;
  cfg.weight_decay = 0.0;
  cfg.validate();
  const int n = g.num_nodes();
  if (n > 20) throw ConfigError("gradient_check: use a graph with at most 20 nodes");

  const SparseMatrix P = propagation_matrix(cfg.architecture, g.adjacency());
  const SparseMatrix Pt = SparseMatrix(P.transpose());
  std::vector<int> all_nodes(static_cast<std::size_t>(n));
  std::iota(all_nodes.begin(), all_nodes.end(), 0);

  GnnModel model = GnnModel::init(cfg, static_cast<int>(X.cols()));
  const auto tr = model.forward_trace(P, X);
  Eigen::VectorXd dlogits;
  detail::bce_loss(tr.logits, g.labels(), all_nodes, &dlogits);
  const auto analytic = model.backward(P, Pt, tr, dlogits);

  auto loss_at = [&]() {
    const Eigen::VectorXd logits = model.forward(P, X);
    return detail::bce_loss(logits, g.labels(), all_nodes, nullptr);
  };

  const double h = 1e-5;
  double max_rel = 0.0;
  auto& params = model.mutable_parameters();
  for (std::size_t p = 0; p < params.size(); ++p)
    for (Eigen::Index i = 0; i < params[p].rows(); ++i)
      for (Eigen::Index j = 0; j < params[p].cols(); ++j) {
        const double orig = params[p](i, j);
        params[p](i, j) = orig + h;
        const double up = loss_at();
        params[p](i, j) = orig - h;
        const double down = loss_at();
        params[p](i, j) = orig;
        const double fd = (up - down) / (2.0 * h);
        const double an = analytic[p](i, j);
        const double rel = std::abs(an - fd) / std::max({1.0, std::abs(an), std::abs(fd)});
        max_rel = std::max(max_rel, rel);
      }
  return max_rel;
}

}  // namespace fairgraph
