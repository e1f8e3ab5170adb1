#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>
#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <vector>

#include "fairgraph/error.hpp"
#include "fairgraph/graph.hpp"
#include "fairgraph/rng.hpp"

namespace fairgraph {

// kNN affinity graph plus between-group quantile graph.
struct AffinityPair {
  SparseMatrix WX;
  SparseMatrix WF;
};

struct PfrConfig {
  int k = 10;
  std::optional<double> t;  // kernel scale; empty selects it from the data
  int p = 4;
  double alpha = 0.5;
  int out_dims = 0;  // 0 derives min(input columns, 32)

  void validate(int n, int q) const {
    if (k < 1) throw ConfigError("pfr: k must be >= 1");
    if (t && *t <= 0.0) throw ConfigError("pfr: t must be positive");
    if (p < 1) throw ConfigError("pfr: p must be >= 1");
    if (alpha < 0.0 || alpha > 1.0) throw ConfigError("pfr: alpha must lie in [0,1]");
    const int r = resolved_dims(q);
    if (r < 1 || r >= n) throw ConfigError("pfr: out_dims must satisfy 1 <= r < n");
  }

  int resolved_dims(int q) const { return out_dims > 0 ? out_dims : std::min(q, 32); }
};

// W(u,v) = exp(-||x_u - x_v||^2 / t) whenever u is among v's k nearest
// neighbors or vice versa; ties in distance break toward the smaller index.
// An empty t picks the mean squared distance over the selected pairs.
inline SparseMatrix knn_affinity(const Eigen::MatrixXd& X, int k,
                                 std::optional<double> t = std::nullopt) {
  const int n = static_cast<int>(X.rows());
  if (k < 1) throw ConfigError("knn_affinity: k must be >= 1");
  if (k >= n) throw InvalidK("knn_affinity: k must be smaller than the number of rows");
  if (t && *t <= 0.0) throw ConfigError("knn_affinity: t must be positive");

  std::vector<std::pair<int, int>> pairs;
  pairs.reserve(static_cast<std::size_t>(n) * static_cast<std::size_t>(k));
  std::vector<std::pair<double, int>> dist(static_cast<std::size_t>(n));
  for (int v = 0; v < n; ++v) {
    for (int u = 0; u < n; ++u)
      dist[static_cast<std::size_t>(u)] = {(X.row(u) - X.row(v)).squaredNorm(), u};
    dist[static_cast<std::size_t>(v)].first = std::numeric_limits<double>::infinity();
    std::partial_sort(dist.begin(), dist.begin() + k, dist.end());
    for (int i = 0; i < k; ++i) {
      const int u = dist[static_cast<std::size_t>(i)].second;
      pairs.emplace_back(std::min(u, v), std::max(u, v));
    }
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());

  double scale;
  if (t) {
    scale = *t;
  } else {
    double total = 0.0;
    for (auto [u, v] : pairs) total += (X.row(u) - X.row(v)).squaredNorm();
    scale = pairs.empty() ? 1.0 : total / static_cast<double>(pairs.size());
    if (scale <= 0.0) scale = 1.0;  // all selected pairs coincide
  }

  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(2 * pairs.size());
  for (auto [u, v] : pairs) {
    const double w = std::exp(-(X.row(u) - X.row(v)).squaredNorm() / scale);
    trips.emplace_back(u, v, w);
    trips.emplace_back(v, u, w);
  }
  SparseMatrix W(n, n);
  W.setFromTriplets(trips.begin(), trips.end());
  W.makeCompressed();
  return W;
}

// Connects every protected node to every non-protected node that falls in the
// same within-group quantile bucket of the ranking variable Z. Bucket i of a
// group of g members spans sorted positions [ceil(i*g/p), ceil((i+1)*g/p)),
// ranking ties broken by node index.
inline SparseMatrix quantile_graph(const Eigen::VectorXd& Z, const Eigen::VectorXi& s,
                                   int p) {
  const int n = static_cast<int>(Z.size());
  if (s.size() != n) throw DimensionMismatch("quantile_graph: Z/s length mismatch");
  if (p < 1) throw ConfigError("quantile_graph: p must be >= 1");

  std::vector<int> group[2];
  for (int u = 0; u < n; ++u) group[s[u]].push_back(u);
  if (group[0].empty() || group[1].empty())
    throw EmptyGroup("quantile_graph: both sensitive groups must be nonempty");
  const int min_size = static_cast<int>(std::min(group[0].size(), group[1].size()));
  if (p > min_size)
    throw TooManyQuantiles("quantile_graph: p exceeds the smaller group size");

  std::array<std::vector<std::vector<int>>, 2> buckets;
  for (int g = 0; g < 2; ++g) {
    auto members = group[g];
    std::sort(members.begin(), members.end(),
              [&](int a, int b) { return Z[a] != Z[b] ? Z[a] < Z[b] : a < b; });
    const int size = static_cast<int>(members.size());
    buckets[g].resize(static_cast<std::size_t>(p));
    for (int i = 0; i < p; ++i) {
      const int lo = (i * size + p - 1) / p;
      const int hi = ((i + 1) * size + p - 1) / p;
      for (int pos = lo; pos < hi; ++pos)
        buckets[g][static_cast<std::size_t>(i)].push_back(members[static_cast<std::size_t>(pos)]);
    }
  }

  std::vector<Eigen::Triplet<double>> trips;
  for (int i = 0; i < p; ++i)
    for (int u : buckets[1][static_cast<std::size_t>(i)])
      for (int v : buckets[0][static_cast<std::size_t>(i)]) {
        trips.emplace_back(u, v, 1.0);
        trips.emplace_back(v, u, 1.0);
      }
  SparseMatrix W(n, n);
  W.setFromTriplets(trips.begin(), trips.end());
  W.makeCompressed();
  return W;
}

// Unnormalized graph Laplacian D - W.
inline SparseMatrix sparse_laplacian(const SparseMatrix& W) {
  const int n = static_cast<int>(W.rows());
  Eigen::VectorXd deg = W * Eigen::VectorXd::Ones(n);
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(W.nonZeros()) + static_cast<std::size_t>(n));
  for (int j = 0; j < W.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(W, j); it; ++it)
      if (it.row() != it.col()) trips.emplace_back(it.row(), it.col(), -it.value());
  for (int i = 0; i < n; ++i) trips.emplace_back(i, i, deg[i]);
  SparseMatrix L(n, n);
  L.setFromTriplets(trips.begin(), trips.end());
  L.makeCompressed();
  return L;
}

// Connected components of the graph whose edges are the nonzero off-diagonal
// entries of W (or of a Laplacian).
inline int count_components(const SparseMatrix& W, std::vector<int>* component_of = nullptr) {
  const int n = static_cast<int>(W.rows());
  std::vector<int> parent(static_cast<std::size_t>(n));
  std::iota(parent.begin(), parent.end(), 0);
  std::function<int(int)> find = [&](int x) {
    while (parent[static_cast<std::size_t>(x)] != x) {
      parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
      x = parent[static_cast<std::size_t>(x)];
    }
    return x;
  };
  for (int j = 0; j < W.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(W, j); it; ++it) {
      if (it.row() == it.col() || it.value() == 0.0) continue;
      const int a = find(static_cast<int>(it.row())), b = find(static_cast<int>(it.col()));
      if (a != b) parent[static_cast<std::size_t>(a)] = b;
    }
  std::vector<int> roots;
  std::vector<int> label(static_cast<std::size_t>(n), -1);
  int c = 0;
  for (int u = 0; u < n; ++u) {
    const int r = find(u);
    if (label[static_cast<std::size_t>(r)] < 0) label[static_cast<std::size_t>(r)] = c++;
    if (component_of) (*component_of)[static_cast<std::size_t>(u)] = label[static_cast<std::size_t>(r)];
  }
  return c;
}

enum class EigSolver { automatic, dense, lanczos };

struct SpectralBasis {
  Eigen::MatrixXd vectors;  // n×k, orthonormal columns
  Eigen::VectorXd values;   // ascending
};

namespace detail {

inline SpectralBasis dense_smallest(const SparseMatrix& L, int k) {
  const Eigen::MatrixXd Ld(L);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Ld);
  if (es.info() != Eigen::Success)
    throw ConvergenceFailure("dense eigensolver failed to converge");
  SpectralBasis out;
  out.vectors = es.eigenvectors().leftCols(k);
  out.values = es.eigenvalues().head(k);
  return out;
}

// Shift-invert Lanczos with full reorthogonalization for the k smallest
// eigenpairs. The Laplacian kernel (one indicator vector per connected
// component) is known in closed form, so it is deflated exactly and the
// iteration only resolves the nonzero end of the spectrum. Deterministic:
// the start vector comes from a fixed-seed generator.
inline SpectralBasis lanczos_smallest(const SparseMatrix& L, int k) {
  const int n = static_cast<int>(L.rows());
  std::vector<int> comp(static_cast<std::size_t>(n));
  const int c = count_components(L, &comp);

  Eigen::MatrixXd Q(n, c);
  Q.setZero();
  {
    std::vector<int> sizes(static_cast<std::size_t>(c), 0);
    for (int u = 0; u < n; ++u) ++sizes[static_cast<std::size_t>(comp[static_cast<std::size_t>(u)])];
    for (int u = 0; u < n; ++u)
      Q(u, comp[static_cast<std::size_t>(u)]) =
          1.0 / std::sqrt(static_cast<double>(sizes[static_cast<std::size_t>(comp[static_cast<std::size_t>(u)])]));
  }

  SpectralBasis out;
  if (k <= c) {
    out.vectors = Q.leftCols(k);
    out.values = Eigen::VectorXd::Zero(k);
    return out;
  }
  const int want = k - c;  // nonzero eigenpairs to resolve

  const double sigma = 0.1;
  SparseMatrix M = L;
  for (int i = 0; i < n; ++i) M.coeffRef(i, i) += sigma;
  Eigen::SimplicialLDLT<SparseMatrix> chol(M);
  if (chol.info() != Eigen::Success)
    throw ConvergenceFailure("lanczos: shift factorization failed");

  const int mmax = std::min(n - c, std::max(4 * want + 80, 160));
  Eigen::MatrixXd V(n, mmax + 1);
  Eigen::VectorXd a(mmax), b(mmax);

  Rng rng(0x5EED0F5EEDULL);
  Eigen::VectorXd v(n);
  for (int i = 0; i < n; ++i) v[i] = rng.normal();
  v -= Q * (Q.transpose() * v);
  v.normalize();
  V.col(0) = v;

  int m = 0;
  double worst_residual = 0.0;
  auto ritz_converged = [&](int steps) {
    if (steps < want) return false;
    Eigen::MatrixXd T = Eigen::MatrixXd::Zero(steps, steps);
    for (int i = 0; i < steps; ++i) {
      T(i, i) = a[i];
      if (i + 1 < steps) T(i, i + 1) = T(i + 1, i) = b[i];
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
    worst_residual = 0.0;
    for (int i = 0; i < want; ++i) {
      const int idx = steps - 1 - i;  // largest Ritz values of the inverse
      const double res = std::abs(b[steps - 1] * es.eigenvectors()(steps - 1, idx));
      worst_residual = std::max(worst_residual, res);
    }
    return worst_residual < 1e-10;
  };

  bool converged = false;
  for (int j = 0; j < mmax; ++j) {
    Eigen::VectorXd w = chol.solve(V.col(j));
    a[j] = V.col(j).dot(w);
    w -= a[j] * V.col(j);
    if (j > 0 && b[j - 1] != 0.0) w -= b[j - 1] * V.col(j - 1);
    // exact kernel deflation + full reorthogonalization, two passes
    for (int pass = 0; pass < 2; ++pass) {
      w -= Q * (Q.transpose() * w);
      w -= V.leftCols(j + 1) * (V.leftCols(j + 1).transpose() * w);
    }
    const double norm = w.norm();
    m = j + 1;
    if (norm < 1e-13) {
      // span(V) is an invariant subspace; its Ritz pairs are exact. If more
      // eigenpairs are needed (degenerate eigenvalues yield one copy per
      // Krylov sequence), restart with a fresh direction orthogonal to
      // everything found so far; b stays 0 at the seam.
      b[j] = 0.0;
      if (ritz_converged(m) || m >= n - c) {
        converged = ritz_converged(m);
        break;
      }
      bool refreshed = false;
      for (int attempt = 0; attempt < 8 && !refreshed; ++attempt) {
        Eigen::VectorXd f(n);
        for (int i = 0; i < n; ++i) f[i] = rng.normal();
        for (int pass = 0; pass < 2; ++pass) {
          f -= Q * (Q.transpose() * f);
          f -= V.leftCols(m) * (V.leftCols(m).transpose() * f);
        }
        const double fn = f.norm();
        if (fn > 1e-8) {
          V.col(m) = f / fn;
          refreshed = true;
        }
      }
      if (!refreshed) {
        converged = ritz_converged(m);
        break;
      }
      continue;
    }
    b[j] = norm;
    V.col(j + 1) = w / norm;
    if ((m >= want + 2 && m % 8 == 0) || j == mmax - 1) {
      if (ritz_converged(m)) {
        converged = true;
        break;
      }
    }
  }
  if (!converged && !ritz_converged(m)) {
    std::ostringstream os;
    os << "lanczos failed to converge: residual norm " << worst_residual << " after " << m
       << " iterations";
    throw ConvergenceFailure(os.str());
  }

  Eigen::MatrixXd T = Eigen::MatrixXd::Zero(m, m);
  for (int i = 0; i < m; ++i) {
    T(i, i) = a[i];
    if (i + 1 < m) T(i, i + 1) = T(i + 1, i) = b[i];
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(T);
  const int avail = std::min(want, m);
  if (avail < want)
    throw ConvergenceFailure("lanczos: Krylov space exhausted before finding all eigenpairs");

  std::vector<std::pair<double, int>> lams;  // eigenvalue of L, Ritz index
  for (int i = 0; i < want; ++i) {
    const int idx = m - 1 - i;
    const double theta = es.eigenvalues()[idx];
    lams.emplace_back(1.0 / theta - sigma, idx);
  }
  std::sort(lams.begin(), lams.end());

  out.vectors.resize(n, k);
  out.values.resize(k);
  out.vectors.leftCols(c) = Q;
  out.values.head(c).setZero();
  for (int i = 0; i < want; ++i) {
    out.values[c + i] = lams[static_cast<std::size_t>(i)].first;
    out.vectors.col(c + i) = V.leftCols(m) * es.eigenvectors().col(lams[static_cast<std::size_t>(i)].second);
    out.vectors.col(c + i).normalize();
  }
  return out;
}

}  // namespace detail

// k smallest eigenpairs of a symmetric PSD matrix (ascending eigenvalues).
// The automatic policy uses the dense solver up to n = 2000 and the sparse
// iterative solver beyond.
inline SpectralBasis smallest_eigenpairs(const SparseMatrix& L, int k,
                                         EigSolver solver = EigSolver::automatic) {
  const int n = static_cast<int>(L.rows());
  if (k < 1 || k > n) throw ConfigError("smallest_eigenpairs: need 1 <= k <= n");
  if (solver == EigSolver::automatic)
    solver = n <= 2000 ? EigSolver::dense : EigSolver::lanczos;
  return solver == EigSolver::dense ? detail::dense_smallest(L, k)
                                    : detail::lanczos_smallest(L, k);
}

struct PfrResult {
  Eigen::MatrixXd representation;  // n×r
  Eigen::VectorXd eigenvalues;     // the r selected eigenvalues, ascending
  double objective = 0.0;          // sum of selected eigenvalues
};

namespace detail {

inline void check_affinity(const SparseMatrix& W, bool binary, const char* name) {
  SparseMatrix Wt = SparseMatrix(W.transpose());
  if ((W - Wt).squaredNorm() != 0.0)
    throw Error(std::string(name) + " must be symmetric");
  for (int j = 0; j < W.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(W, j); it; ++it) {
      if (it.row() == it.col() && it.value() != 0.0)
        throw Error(std::string(name) + " must have a zero diagonal");
      if (it.value() < 0.0 || it.value() > 1.0)
        throw Error(std::string(name) + " entries must lie in [0,1]");
      if (binary && it.value() != 0.0 && it.value() != 1.0)
        throw Error(std::string(name) + " must be binary");
    }
}

}  // namespace detail

// Minimizes (1-alpha)·Σ WX_uv ||x̃_u - x̃_v||² + alpha·Σ WF_uv ||x̃_u - x̃_v||²
// over orthonormal n×r matrices: the bottom-r eigenvectors of the mixed
// Laplacian, after dropping each connected component's constant eigenvector
// (eigenvalue below 1e-9).
inline PfrResult pfr_transform(const Eigen::MatrixXd& data, const SparseMatrix& WX,
                               const SparseMatrix& WF, double alpha, int out_dims,
                               EigSolver solver = EigSolver::automatic) {
  const int n = static_cast<int>(data.rows());
  if (WX.rows() != n || WX.cols() != n || WF.rows() != n || WF.cols() != n)
    throw DimensionMismatch("pfr_transform: affinity matrices must be n×n");
  if (alpha < 0.0 || alpha > 1.0) throw ConfigError("pfr_transform: alpha must lie in [0,1]");
  if (out_dims < 1 || out_dims >= n)
    throw ConfigError("pfr_transform: out_dims must satisfy 1 <= r < n");
  detail::check_affinity(WX, false, "WX");
  detail::check_affinity(WF, true, "WF");

  SparseMatrix Wmix = (1.0 - alpha) * WX + alpha * WF;
  Wmix.prune(0.0, 0.0);
  SparseMatrix L = sparse_laplacian(Wmix);
  const int c = count_components(Wmix);
  if (n - c < out_dims)
    throw Error("pfr_transform: graph too disconnected for the requested dimension");

  const auto basis = smallest_eigenpairs(L, out_dims + c, solver);

  PfrResult res;
  res.representation.resize(n, out_dims);
  res.eigenvalues.resize(out_dims);
  int taken = 0;
  for (int i = 0; i < basis.values.size() && taken < out_dims; ++i) {
    if (basis.values[i] < 1e-9) continue;  // constant per-component eigenvector
    res.representation.col(taken) = basis.vectors.col(i);
    res.eigenvalues[taken] = basis.values[i];
    ++taken;
  }
  if (taken < out_dims)
    throw ConvergenceFailure("pfr_transform: fewer nontrivial eigenvectors than requested");
  res.objective = res.eigenvalues.sum();
  return res;
}

}  // namespace fairgraph
