#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>
#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <ostream>
#include <sstream>
#include <vector>

#include "fairgraph/error.hpp"
#include "fairgraph/graph.hpp"

namespace fairgraph {

// Graph volume convention used by the random-walk factorization. `paper`
// follows the formula verbatim (2m/n); `standard_total_degree` is the usual
// 2m. The printed formula may contain a typo, so both are available.
enum class VolumeConvention { paper, standard_total_degree };

struct NetembedConfig {
  int C = 10;      // walk window length
  double b = 1.0;  // negative-sample parameter
  int k = 128;     // embedding dimension
  VolumeConvention volume = VolumeConvention::paper;

  void validate(int n) const {
    if (C < 1) throw ConfigError("netembed: C must be >= 1");
    if (b <= 0.0) throw ConfigError("netembed: b must be positive");
    if (k < 1 || k > n) throw ConfigError("netembed: k must satisfy 1 <= k <= n");
  }
};

// M = log(max(vol(G) * (1/C * sum_{c=1..C} P^c) * D^{-1} / b, 1)) with
// P = D^{-1}A. Degree-0 rows and columns of D^{-1} are zeroed (pseudo-inverse
// convention), so isolated nodes produce zero rows. Matrix powers are
// accumulated one at a time; only two dense n×n buffers are live.
inline Eigen::MatrixXd deepwalk_matrix(const SparseMatrix& A, int C, double b,
                                       VolumeConvention volume = VolumeConvention::paper) {
  const int n = static_cast<int>(A.rows());
  if (C < 1) throw ConfigError("deepwalk_matrix: C must be >= 1");
  if (b <= 0.0) throw ConfigError("deepwalk_matrix: b must be positive");
  const long m = A.nonZeros() / 2;
  if (m < 1) throw EmptyGraph("deepwalk_matrix: graph has no edges");

  Eigen::VectorXd deg = A * Eigen::VectorXd::Ones(n);
  Eigen::VectorXd inv_deg(n);
  for (int i = 0; i < n; ++i) inv_deg[i] = deg[i] > 0.0 ? 1.0 / deg[i] : 0.0;

  SparseMatrix P = A;
  for (int j = 0; j < P.outerSize(); ++j)
    for (SparseMatrix::InnerIterator it(P, j); it; ++it)
      it.valueRef() *= inv_deg[it.row()];

  Eigen::MatrixXd T = Eigen::MatrixXd(P);
  Eigen::MatrixXd acc = T;
  for (int c = 2; c <= C; ++c) {
    T = (T * P).eval();
    acc += T;
  }
  acc /= static_cast<double>(C);

  const double vol = volume == VolumeConvention::paper
                         ? 2.0 * static_cast<double>(m) / static_cast<double>(n)
                         : 2.0 * static_cast<double>(m);
  for (int jcol = 0; jcol < n; ++jcol) acc.col(jcol) *= vol * inv_deg[jcol] / b;
  return acc.array().max(1.0).log().matrix();
}

struct SvdTriplets {
  Eigen::MatrixXd U;      // n×k, orthonormal columns
  Eigen::VectorXd sigma;  // descending, nonnegative
  Eigen::MatrixXd V;      // n×k, orthonormal columns
};

// Top-k singular triplets. Symmetric inputs go through the symmetric
// eigensolver (sigma = |lambda|, U = sign(lambda)·V); anything else falls
// back to a full SVD.
inline SvdTriplets truncated_svd(const Eigen::MatrixXd& M, int k) {
  const int n = static_cast<int>(M.rows());
  if (k < 1 || k > std::min(M.rows(), M.cols()))
    throw ConfigError("truncated_svd: k out of range");

  SvdTriplets out;
  const bool symmetric =
      M.rows() == M.cols() && (M - M.transpose()).cwiseAbs().maxCoeff() == 0.0;
  if (symmetric) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(M);
    if (es.info() != Eigen::Success)
      throw ConvergenceFailure("truncated_svd: symmetric eigensolver did not converge");
    std::vector<int> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int bn) {
      return std::abs(es.eigenvalues()[a]) > std::abs(es.eigenvalues()[bn]);
    });
    out.U.resize(n, k);
    out.V.resize(n, k);
    out.sigma.resize(k);
    for (int i = 0; i < k; ++i) {
      const int idx = order[static_cast<std::size_t>(i)];
      const double lam = es.eigenvalues()[idx];
      out.sigma[i] = std::abs(lam);
      out.V.col(i) = es.eigenvectors().col(idx);
      out.U.col(i) = (lam < 0.0 ? -1.0 : 1.0) * es.eigenvectors().col(idx);
    }
    return out;
  }

  Eigen::BDCSVD<Eigen::MatrixXd> svd(M, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success)
    throw ConvergenceFailure("truncated_svd: SVD did not converge");
  out.U = svd.matrixU().leftCols(k);
  out.V = svd.matrixV().leftCols(k);
  out.sigma = svd.singularValues().head(k);
  return out;
}

// DeepWalk-style node positions: U_k · sqrt(Sigma_k).
inline Embedding embed(const Eigen::MatrixXd& M, int k) {
  const auto t = truncated_svd(M, k);
  return t.U * t.sigma.cwiseSqrt().asDiagonal();
}

// One line per node: id, then the k coordinates, tab-separated.
inline void export_embedding(const Embedding& E, std::ostream& os) {
  os.precision(17);
  for (Eigen::Index i = 0; i < E.rows(); ++i) {
    os << i;
    for (Eigen::Index j = 0; j < E.cols(); ++j) os << '\t' << E(i, j);
    os << '\n';
  }
}

}  // namespace fairgraph
