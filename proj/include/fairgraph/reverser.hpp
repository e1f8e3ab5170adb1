#pragma once

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include <algorithm>
#include <set>
#include <utility>
#include <vector>

#include "fairgraph/error.hpp"
#include "fairgraph/graph.hpp"

namespace fairgraph {

// Rebuilds a simple undirected graph from embedding geometry while preserving
// the target degree sequence. Each round recomputes, for every unfinished
// node u, its d_u nearest unfinished neighbors by Euclidean distance (ties
// toward the lower index); the sequential sweep then adds (u,v) only when the
// nearest-neighbor relation is mutual and neither endpoint has reached its
// target degree. Stops after `rounds` rounds or `m_target` edges.
// Deterministic for fixed inputs.
inline SparseMatrix reverse_embedding(const Embedding& U_hat,
                                      const Eigen::VectorXi& target_degrees,
                                      long m_target, int rounds = 10) {
  const int n = static_cast<int>(U_hat.rows());
  if (target_degrees.size() != n)
    throw DimensionMismatch("reverse_embedding: target_degrees length != n");
  if (rounds < 0) throw ConfigError("reverse_embedding: rounds must be >= 0");
  long degree_sum = 0;
  for (int u = 0; u < n; ++u) {
    if (target_degrees[u] < 0) throw ConfigError("reverse_embedding: negative target degree");
    degree_sum += target_degrees[u];
  }
  if (degree_sum != 2 * m_target)
    throw ConfigError("reverse_embedding: target degrees must sum to 2*m_target");

  std::vector<int> degree(static_cast<std::size_t>(n), 0);
  std::vector<char> completed(static_cast<std::size_t>(n), 0);
  for (int u = 0; u < n; ++u)
    if (target_degrees[u] == 0) completed[static_cast<std::size_t>(u)] = 1;

  std::vector<std::pair<int, int>> edges;
  std::set<std::pair<int, int>> linked;
  long added = 0;

  for (int round = 0; round < rounds && added < m_target; ++round) {
    std::vector<int> active;
    for (int u = 0; u < n; ++u)
      if (!completed[static_cast<std::size_t>(u)]) active.push_back(u);
    if (active.size() < 2) break;

    // Per-node candidate lists against this round's unfinished set. The
    // lists are frozen at round start; the sweep below mutates degrees.
    std::vector<std::vector<int>> nearest(static_cast<std::size_t>(n));
    std::vector<std::pair<double, int>> dist;
    for (int u : active) {
      dist.clear();
      for (int v : active)
        if (v != u) dist.push_back({(U_hat.row(u) - U_hat.row(v)).squaredNorm(), v});
      const int du = std::min<int>(target_degrees[u], static_cast<int>(dist.size()));
      std::partial_sort(dist.begin(), dist.begin() + du, dist.end());
      auto& lst = nearest[static_cast<std::size_t>(u)];
      lst.reserve(static_cast<std::size_t>(du));
      for (int i = 0; i < du; ++i) lst.push_back(dist[static_cast<std::size_t>(i)].second);
    }

    auto mutual = [&](int u, int v) {
      const auto& lst = nearest[static_cast<std::size_t>(v)];
      return std::find(lst.begin(), lst.end(), u) != lst.end();
    };

    for (std::size_t ai = 0; ai < active.size() && added < m_target; ++ai) {
      const int u = active[ai];
      if (completed[static_cast<std::size_t>(u)]) continue;
      for (int v : nearest[static_cast<std::size_t>(u)]) {
        if (added >= m_target) break;
        if (completed[static_cast<std::size_t>(v)]) continue;
        if (degree[static_cast<std::size_t>(v)] >= target_degrees[v]) continue;
        if (degree[static_cast<std::size_t>(u)] >= target_degrees[u]) break;
        const std::pair<int, int> key{std::min(u, v), std::max(u, v)};
        if (linked.count(key)) continue;
        if (!mutual(u, v)) continue;
        linked.insert(key);
        edges.emplace_back(key.first, key.second);
        ++added;
        ++degree[static_cast<std::size_t>(u)];
        ++degree[static_cast<std::size_t>(v)];
        if (degree[static_cast<std::size_t>(v)] >= target_degrees[v])
          completed[static_cast<std::size_t>(v)] = 1;
      }
      if (degree[static_cast<std::size_t>(u)] >= target_degrees[u])
        completed[static_cast<std::size_t>(u)] = 1;
    }
  }

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(2 * edges.size());
  for (auto [u, v] : edges) {
    trips.emplace_back(u, v, 1.0);
    trips.emplace_back(v, u, 1.0);
  }
  SparseMatrix A(n, n);
  A.setFromTriplets(trips.begin(), trips.end());
  A.makeCompressed();
  return A;
}

}  // namespace fairgraph
