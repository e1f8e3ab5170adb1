#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <algorithm>
#include <array>
#include <cstdint>
#include <iostream>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "fairgraph/error.hpp"
#include "fairgraph/rng.hpp"

namespace fairgraph {

using SparseMatrix = Eigen::SparseMatrix<double>;
using Embedding = Eigen::MatrixXd;

// Undirected, unweighted attributed graph. Immutable after construction;
// the transforms below return new instances instead of mutating.
class AttributedGraph {
public:
  // Validates and normalizes the edge list: self-loops are dropped (with a
  // warning), duplicates deduplicated, adjacency stored symmetric with unit
  // entries and zero diagonal.
  static AttributedGraph build(int n,
                               std::vector<std::pair<int, int>> edges,
                               Eigen::MatrixXd attributes,
                               Eigen::VectorXi sensitive,
                               Eigen::VectorXi labels,
                               int sensitive_index,
                               int ranking_index,
                               std::vector<std::string> attribute_names) {
    if (n < 1) throw Error("graph needs at least one node");
    if (attributes.rows() != n) throw DimensionMismatch("attribute row count != n");
    if (sensitive.size() != n) throw DimensionMismatch("sensitive length != n");
    if (labels.size() != n) throw DimensionMismatch("labels length != n");
    const int d = static_cast<int>(attributes.cols());
    if (attribute_names.size() != static_cast<std::size_t>(d))
      throw DimensionMismatch("attribute_names length != d");
    if (sensitive_index >= d) throw Error("sensitive_index out of range");
    if (ranking_index >= d) throw Error("ranking_index out of range");
    if (ranking_index >= 0 && ranking_index == sensitive_index)
      throw Error("ranking_index must differ from sensitive_index");
    for (int u = 0; u < n; ++u) {
      if (sensitive[u] != 0 && sensitive[u] != 1) throw Error("sensitive values must be 0/1");
      if (labels[u] != 0 && labels[u] != 1) throw Error("label values must be 0/1");
    }

    int dropped_loops = 0;
    std::set<std::pair<int, int>> unique_edges;
    for (auto [u, v] : edges) {
      if (u < 0 || u >= n || v < 0 || v >= n)
        throw ParseError("edge endpoint out of range: (" + std::to_string(u) + "," +
                         std::to_string(v) + ") with n=" + std::to_string(n));
      if (u == v) {
        ++dropped_loops;
        continue;
      }
      unique_edges.emplace(std::min(u, v), std::max(u, v));
    }
    if (dropped_loops > 0)
      std::cerr << "warning: dropped " << dropped_loops << " self-loop(s)\n";

    AttributedGraph g;
    g.n_ = n;
    g.m_ = static_cast<long>(unique_edges.size());
    g.attributes_ = std::move(attributes);
    g.sensitive_ = std::move(sensitive);
    g.labels_ = std::move(labels);
    g.sensitive_index_ = sensitive_index;
    g.ranking_index_ = ranking_index;
    g.attribute_names_ = std::move(attribute_names);
    g.edges_.assign(unique_edges.begin(), unique_edges.end());

    std::vector<Eigen::Triplet<double>> trips;
    trips.reserve(2 * unique_edges.size());
    for (auto [u, v] : g.edges_) {
      trips.emplace_back(u, v, 1.0);
      trips.emplace_back(v, u, 1.0);
    }
    g.adjacency_.resize(n, n);
    g.adjacency_.setFromTriplets(trips.begin(), trips.end());
    g.adjacency_.makeCompressed();
    return g;
  }

  int num_nodes() const { return n_; }
  long num_edges() const { return m_; }
  const SparseMatrix& adjacency() const { return adjacency_; }
  const Eigen::MatrixXd& attributes() const { return attributes_; }
  const Eigen::VectorXi& sensitive() const { return sensitive_; }
  const Eigen::VectorXi& labels() const { return labels_; }
  // -1 when the column is absent (e.g. after Unaware or a PFR transform).
  int sensitive_index() const { return sensitive_index_; }
  int ranking_index() const { return ranking_index_; }
  const std::vector<std::string>& attribute_names() const { return attribute_names_; }
  // Canonical (u < v) edge list, ascending.
  const std::vector<std::pair<int, int>>& edge_list() const { return edges_; }

  AttributedGraph with_attributes(Eigen::MatrixXd attrs,
                                  int sensitive_index,
                                  int ranking_index,
                                  std::vector<std::string> names) const {
    return build(n_, edges_, std::move(attrs), sensitive_, labels_, sensitive_index,
                 ranking_index, std::move(names));
  }

  AttributedGraph with_edges(std::vector<std::pair<int, int>> edges) const {
    return build(n_, std::move(edges), attributes_, sensitive_, labels_, sensitive_index_,
                 ranking_index_, attribute_names_);
  }

  Eigen::VectorXd ranking_values() const {
    if (ranking_index_ < 0) throw Error("graph has no ranking column");
    return attributes_.col(ranking_index_);
  }

private:
  AttributedGraph() = default;

  int n_ = 0;
  long m_ = 0;
  SparseMatrix adjacency_;
  Eigen::MatrixXd attributes_;
  Eigen::VectorXi sensitive_;
  Eigen::VectorXi labels_;
  int sensitive_index_ = -1;
  int ranking_index_ = -1;
  std::vector<std::string> attribute_names_;
  std::vector<std::pair<int, int>> edges_;
};

inline Eigen::VectorXi degree_vector(const AttributedGraph& g) {
  Eigen::VectorXi deg = Eigen::VectorXi::Zero(g.num_nodes());
  for (auto [u, v] : g.edge_list()) {
    ++deg[u];
    ++deg[v];
  }
  return deg;
}

// Fraction of edges whose endpoints agree on `values`.
inline double homophily(const AttributedGraph& g, const Eigen::VectorXi& values) {
  if (values.size() != g.num_nodes()) throw DimensionMismatch("values length != n");
  if (g.num_edges() == 0) throw EmptyGraph("homophily undefined on an edgeless graph");
  long same = 0;
  for (auto [u, v] : g.edge_list())
    if (values[u] == values[v]) ++same;
  return static_cast<double>(same) / static_cast<double>(g.num_edges());
}

// Column-wise (x - min) / (max - min); constant columns map to 0.
inline Eigen::MatrixXd minmax_scale(const Eigen::MatrixXd& X) {
  if (X.rows() < 1) throw Error("minmax_scale needs at least one row");
  Eigen::MatrixXd out(X.rows(), X.cols());
  for (Eigen::Index j = 0; j < X.cols(); ++j) {
    const double lo = X.col(j).minCoeff();
    const double hi = X.col(j).maxCoeff();
    if (hi > lo)
      out.col(j) = (X.col(j).array() - lo) / (hi - lo);
    else
      out.col(j).setZero();
  }
  return out;
}

struct Split {
  std::vector<int> train, validation, test;
  std::array<double, 3> fractions{};
  std::uint64_t seed = 0;
};

// Stratified partition of {0..n-1}: within each label class, counts follow
// largest-remainder rounding of the fractions (ties resolved in train, val,
// test order), then members are shuffled by the seed and dealt out.
inline Split stratified_split(const Eigen::VectorXi& labels,
                              const std::array<double, 3>& fractions,
                              std::uint64_t seed) {
  const double total = fractions[0] + fractions[1] + fractions[2];
  for (double f : fractions)
    if (!(f > 0.0)) throw ConfigError("split fractions must all be positive");
  if (std::abs(total - 1.0) > 1e-9) throw ConfigError("split fractions must sum to 1");

  const int n = static_cast<int>(labels.size());
  std::vector<std::vector<int>> classes(2);
  for (int u = 0; u < n; ++u) classes[static_cast<std::size_t>(labels[u])].push_back(u);
  for (const auto& members : classes)
    if (!members.empty() && members.size() < 3)
      throw DegenerateClass("label class smaller than the number of split sets");
  if (classes[0].empty() || classes[1].empty())
    throw DegenerateClass("each label class must be nonempty");

  Split split;
  split.fractions = fractions;
  split.seed = seed;
  Rng rng(seed);
  std::vector<int>* sets[3] = {&split.train, &split.validation, &split.test};

  for (auto& members : classes) {
    const int g = static_cast<int>(members.size());
    int counts[3];
    double remainders[3];
    int assigned = 0;
    for (int i = 0; i < 3; ++i) {
      const double ideal = g * fractions[static_cast<std::size_t>(i)];
      counts[i] = static_cast<int>(std::floor(ideal));
      remainders[i] = ideal - counts[i];
      assigned += counts[i];
    }
    int leftover = g - assigned;
    while (leftover > 0) {
      int best = 0;
      for (int i = 1; i < 3; ++i)
        if (remainders[i] > remainders[best]) best = i;
      ++counts[best];
      remainders[best] = -1.0;
      --leftover;
    }
    rng.shuffle(members);
    int pos = 0;
    for (int i = 0; i < 3; ++i)
      for (int c = 0; c < counts[i]; ++c) sets[i]->push_back(members[static_cast<std::size_t>(pos++)]);
  }
  for (auto* s : sets) std::sort(s->begin(), s->end());
  return split;
}

}  // namespace fairgraph
