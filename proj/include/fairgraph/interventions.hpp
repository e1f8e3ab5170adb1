#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fairgraph/error.hpp"
#include "fairgraph/gnn.hpp"
#include "fairgraph/graph.hpp"
#include "fairgraph/metrics.hpp"
#include "fairgraph/netembed.hpp"
#include "fairgraph/pfr.hpp"
#include "fairgraph/reverser.hpp"
#include "fairgraph/rng.hpp"

namespace fairgraph {

// Drops the sensitive attribute column. The sensitive vector itself stays on
// the graph for evaluation; only the model inputs lose it.
inline AttributedGraph unaware(const AttributedGraph& g) {
  const int d = static_cast<int>(g.attributes().cols());
  if (d < 2) throw ConfigError("unaware: need at least two attribute columns");
  const int sc = g.sensitive_index();
  if (sc < 0) throw ConfigError("unaware: graph has no sensitive attribute column");
  Eigen::MatrixXd X(g.num_nodes(), d - 1);
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(d - 1));
  Eigen::Index out = 0;
  for (int j = 0; j < d; ++j) {
    if (j == sc) continue;
    X.col(out++) = g.attributes().col(j);
    names.push_back(g.attribute_names()[static_cast<std::size_t>(j)]);
  }
  const int rank = g.ranking_index();
  const int new_rank = rank < 0 ? -1 : (rank < sc ? rank : rank - 1);
  return g.with_attributes(std::move(X), -1, new_rank, std::move(names));
}

namespace detail {

// Fair affinity pair for a graph: kNN kernel over the given rows and the
// between-group quantile graph over the ranking variable.
inline AffinityPair graph_affinities(const AttributedGraph& g, const Eigen::MatrixXd& rows,
                                     const PfrConfig& cfg) {
  AffinityPair w;
  w.WX = knn_affinity(rows, cfg.k, cfg.t);
  w.WF = quantile_graph(g.ranking_values(), g.sensitive(), cfg.p);
  return w;
}

// Scaled attribute rows with the sensitive column removed.
inline Eigen::MatrixXd debias_input(const AttributedGraph& g) {
  const int d = static_cast<int>(g.attributes().cols());
  if (d < 2) throw ConfigError("pfr: need at least one non-sensitive attribute column");
  const int sc = g.sensitive_index();
  if (sc < 0) throw ConfigError("pfr: graph has no sensitive attribute column");
  Eigen::MatrixXd X(g.num_nodes(), d - 1);
  Eigen::Index out = 0;
  for (int j = 0; j < d; ++j)
    if (j != sc) X.col(out++) = g.attributes().col(j);
  return minmax_scale(X);
}

inline std::vector<std::pair<int, int>> sparse_edge_list(const SparseMatrix& A) {
  std::vector<std::pair<int, int>> edges;
  for (int j = 0; j < A.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(A, j); it; ++it)
      if (it.row() < it.col())
        edges.emplace_back(static_cast<int>(it.row()), static_cast<int>(it.col()));
  return edges;
}

}  // namespace detail

// Attribute-only debiasing: the attributes become the fair spectral
// representation of the (scaled, sensitive-free) attribute rows, with the
// sensitive bit re-appended unchanged as the last column so every
// intervention except Unaware feeds the model the same protected indicator.
// The adjacency is untouched.
inline AttributedGraph pfr_x(const AttributedGraph& g, const PfrConfig& cfg,
                             EigSolver solver = EigSolver::automatic) {
  const Eigen::MatrixXd rows = detail::debias_input(g);
  cfg.validate(g.num_nodes(), static_cast<int>(rows.cols()));
  const auto w = detail::graph_affinities(g, rows, cfg);
  const int r = cfg.resolved_dims(static_cast<int>(rows.cols()));
  const PfrResult res = pfr_transform(rows, w.WX, w.WF, cfg.alpha, r, solver);
  Eigen::MatrixXd X(g.num_nodes(), r + 1);
  X.leftCols(r) = res.representation;
  X.col(r) = g.sensitive().cast<double>();
  std::vector<std::string> names;
  names.reserve(static_cast<std::size_t>(r + 1));
  for (int j = 0; j < r; ++j) names.push_back("z" + std::to_string(j));
  names.push_back(g.attribute_names()[static_cast<std::size_t>(g.sensitive_index())]);
  return g.with_attributes(std::move(X), r, -1, std::move(names));
}

// Adjacency-only debiasing: DeepWalk-embed the graph, debias the embedding
// with the same fair spectral transform, and reconstruct an adjacency from
// the debiased embedding under the original degree budget. Attributes are
// untouched.
inline AttributedGraph pfr_a(const AttributedGraph& g, const NetembedConfig& netembed,
                             const PfrConfig& cfg, int rounds = 10,
                             EigSolver solver = EigSolver::automatic) {
  netembed.validate(g.num_nodes());
  const Eigen::MatrixXd M = deepwalk_matrix(g.adjacency(), netembed.C, netembed.b,
                                            netembed.volume);
  const Embedding E = embed(M, netembed.k);
  cfg.validate(g.num_nodes(), static_cast<int>(E.cols()));
  const auto w = detail::graph_affinities(g, E, cfg);
  const int r = cfg.resolved_dims(static_cast<int>(E.cols()));
  const PfrResult res = pfr_transform(E, w.WX, w.WF, cfg.alpha, r, solver);
  const SparseMatrix A =
      reverse_embedding(res.representation, degree_vector(g), g.num_edges(), rounds);
  return g.with_edges(detail::sparse_edge_list(A));
}

// Full intervention: debiased attributes and debiased adjacency, both
// computed from the original graph (the two branches are independent).
inline AttributedGraph pfr_ax(const AttributedGraph& g, const NetembedConfig& netembed,
                              const PfrConfig& cfg, int rounds = 10,
                              EigSolver solver = EigSolver::automatic) {
  const AttributedGraph attrs = pfr_x(g, cfg, solver);
  const AttributedGraph adj = pfr_a(g, netembed, cfg, rounds, solver);
  return attrs.with_edges(adj.edge_list());
}

struct PostProcessConfig {
  double gamma = 0.1;
  int trials = 20;
  std::uint64_t seed = 0;
  // Empty: flipped logits get max(observed logits) + 1, or 1 when every
  // observed logit is non-positive. Set: that fixed value.
  std::optional<double> fixed_max_score;

  void validate() const {
    if (gamma < 0.0 || gamma > 1.0) throw ConfigError("postprocess: gamma must lie in [0,1]");
    if (trials < 1) throw ConfigError("postprocess: trials must be >= 1");
  }
};

// Flips floor(gamma * |S1-Y0|) uniformly chosen protected negatives to
// positive predictions with a sufficiently large logit. Protected nodes
// already predicted positive are never touched, nor is anyone else.
inline PredictionSet postprocess(const PredictionSet& preds, const Eigen::VectorXi& s,
                                 const PostProcessConfig& cfg) {
  cfg.validate();
  if (s.size() != preds.logits.size())
    throw DimensionMismatch("postprocess: group vector length != prediction count");
  PredictionSet out = preds;
  std::vector<int> s1y0;
  for (Eigen::Index i = 0; i < s.size(); ++i)
    if (s[i] == 1 && preds.predicted[i] == 0) s1y0.push_back(static_cast<int>(i));
  if (s1y0.empty()) return out;
  const int flips = static_cast<int>(
      std::floor(cfg.gamma * static_cast<double>(s1y0.size())));
  if (flips == 0) return out;
  double max_score;
  if (cfg.fixed_max_score) {
    max_score = *cfg.fixed_max_score;
  } else {
    const double observed = preds.logits.size() > 0 ? preds.logits.maxCoeff() : 0.0;
    max_score = observed > 0.0 ? observed + 1.0 : 1.0;
  }
  Rng rng(cfg.seed);
  for (const int pick : rng.sample_indices(static_cast<int>(s1y0.size()), flips)) {
    out.predicted[s1y0[static_cast<std::size_t>(pick)]] = 1;
    out.logits[s1y0[static_cast<std::size_t>(pick)]] = max_score;
  }
  return out;
}

inline std::vector<double> default_gamma_grid() { return {0.1, 0.2, 0.3, 0.4}; }

// Per-gamma metric statistics over repeated seeded flip trials.
struct GammaSweepResult {
  std::vector<double> grid;
  std::vector<double> auc_mean, auc_std;
  std::vector<double> f1_mean, f1_std;
  std::vector<double> dsp_mean, dsp_std;
  std::vector<double> deo_mean, deo_std;

  std::size_t size() const { return grid.size(); }

  std::string to_csv() const {
    std::ostringstream os;
    os.precision(17);
    os << "gamma,auc_mean,auc_std,f1_mean,f1_std,dsp_mean,dsp_std,deo_mean,deo_std\n";
    for (std::size_t i = 0; i < grid.size(); ++i)
      os << grid[i] << ',' << auc_mean[i] << ',' << auc_std[i] << ',' << f1_mean[i] << ','
         << f1_std[i] << ',' << dsp_mean[i] << ',' << dsp_std[i] << ',' << deo_mean[i] << ','
         << deo_std[i] << '\n';
    return os.str();
  }
};

// Runs postprocess at every grid point with `trials` independent seeds and
// records mean and (population) standard deviation of each metric. Trial t
// uses the same derived seed at every gamma, so curves over gamma share
// their random draws.
inline GammaSweepResult gamma_sweep(const PredictionSet& preds, const Eigen::VectorXi& s_test,
                                    const Eigen::VectorXi& labels_test,
                                    const std::vector<double>& grid, int trials,
                                    std::uint64_t seed) {
  if (grid.empty()) throw ConfigError("gamma_sweep: gamma grid is empty");
  for (std::size_t i = 1; i < grid.size(); ++i)
    if (grid[i] <= grid[i - 1])
      throw ConfigError("gamma_sweep: gamma grid must be strictly increasing");
  if (trials < 1) throw ConfigError("gamma_sweep: trials must be >= 1");

  GammaSweepResult res;
  res.grid = grid;
  const auto push_stats = [trials](std::vector<double>& means, std::vector<double>& stds,
                                   double sum, double sum_sq) {
    const double mean = sum / trials;
    const double var = std::max(0.0, sum_sq / trials - mean * mean);
    means.push_back(mean);
    stds.push_back(std::sqrt(var));
  };
  for (const double gamma : grid) {
    double auc = 0, auc2 = 0, f1 = 0, f12 = 0, dsp = 0, dsp2 = 0, deo = 0, deo2 = 0;
    for (int t = 0; t < trials; ++t) {
      PostProcessConfig cfg;
      cfg.gamma = gamma;
      cfg.trials = trials;
      cfg.seed = Rng::mix(seed, static_cast<std::uint64_t>(t));
      const PredictionSet flipped = postprocess(preds, s_test, cfg);
      const EvalReport rep = evaluate(flipped.logits, labels_test, s_test);
      auc += rep.auc;
      auc2 += rep.auc * rep.auc;
      f1 += rep.f1;
      f12 += rep.f1 * rep.f1;
      dsp += rep.disparity;
      dsp2 += rep.disparity * rep.disparity;
      deo += rep.inequality;
      deo2 += rep.inequality * rep.inequality;
    }
    push_stats(res.auc_mean, res.auc_std, auc, auc2);
    push_stats(res.f1_mean, res.f1_std, f1, f12);
    push_stats(res.dsp_mean, res.dsp_std, dsp, dsp2);
    push_stats(res.deo_mean, res.deo_std, deo, deo2);
  }
  return res;
}

// gamma_plus: grid point with the lowest mean disparity. gamma_minus: grid
// point whose mean disparity is closest to the midpoint of the original
// disparity and the gamma_plus disparity. Ties resolve to the smaller gamma.
inline std::pair<double, double> select_plus_minus(const GammaSweepResult& sweep,
                                                   double original_disparity) {
  if (sweep.size() == 0) throw ConfigError("select_plus_minus: empty sweep");
  std::size_t plus = 0;
  for (std::size_t i = 1; i < sweep.size(); ++i)
    if (sweep.dsp_mean[i] < sweep.dsp_mean[plus]) plus = i;
  const double target = 0.5 * (original_disparity + sweep.dsp_mean[plus]);
  std::size_t minus = 0;
  for (std::size_t i = 1; i < sweep.size(); ++i)
    if (std::abs(sweep.dsp_mean[i] - target) < std::abs(sweep.dsp_mean[minus] - target))
      minus = i;
  return {sweep.grid[plus], sweep.grid[minus]};
}

}  // namespace fairgraph
