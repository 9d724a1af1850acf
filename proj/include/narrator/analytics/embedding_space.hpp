#pragma once

// Dense numeric kernels over embedding vectors: pooling, cosine dissimilarity
// and PCA. Inputs are Eigen expressions with one observation per row.

#include <Eigen/Dense>
#include <algorithm>
#include <limits>
#include <cmath>
#include <string>
#include <vector>

#include "narrator/error.hpp"

namespace narrator::analytics {

template <typename Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

/// Component-wise mean of token vectors stored as rows.
template <typename Derived>
Vec<typename Derived::Scalar> mean_pool(const Eigen::MatrixBase<Derived>& token_rows) {
  if (token_rows.rows() == 0 || token_rows.cols() == 0) {
    throw ValidationError("mean_pool: no token vectors");
  }
  return token_rows.colwise().mean().transpose();
}

/// Ragged overload for vectors as they come off the wire.
template <typename Scalar>
Vec<Scalar> mean_pool(const std::vector<std::vector<Scalar>>& tokens) {
  if (tokens.empty()) throw ValidationError("mean_pool: no token vectors");
  const auto dim = tokens.front().size();
  Mat<Scalar> rows(static_cast<Eigen::Index>(tokens.size()), static_cast<Eigen::Index>(dim));
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (tokens[i].size() != dim) {
      throw ValidationError("mean_pool: dimension mismatch at token " + std::to_string(i) + " (" +
                            std::to_string(tokens[i].size()) + " vs " + std::to_string(dim) + ")");
    }
    for (std::size_t j = 0; j < dim; ++j) {
      rows(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = tokens[i][j];
    }
  }
  return mean_pool(rows);
}

/// 1 - cos(a, b), clamped to [0, 2]. Throws DomainError on a zero-norm input.
template <typename A, typename B>
typename A::Scalar cosine_distance(const Eigen::MatrixBase<A>& a, const Eigen::MatrixBase<B>& b) {
  using Scalar = typename A::Scalar;
  if (a.size() != b.size()) throw ValidationError("cosine_distance: dimension mismatch");
  const Scalar na = a.norm();
  const Scalar nb = b.norm();
  if (!(na > 0) || !(nb > 0)) throw DomainError("cosine_distance: zero-norm vector");
  const Scalar cos = a.cwiseProduct(b).sum() / (na * nb);
  return std::clamp(Scalar(1) - cos, Scalar(0), Scalar(2));
}

/// Pairwise cosine distances between the rows of `embeddings`.
/// Symmetric by construction; the diagonal is exactly zero.
template <typename Derived>
Mat<typename Derived::Scalar> dissimilarity_matrix(const Eigen::MatrixBase<Derived>& embeddings) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = embeddings.rows();
  Mat<Scalar> unit(n, embeddings.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const Scalar norm = embeddings.row(i).norm();
    if (!(norm > 0)) throw DomainError("dissimilarity_matrix: zero-norm embedding at index " + std::to_string(i));
    unit.row(i) = embeddings.row(i) / norm;
  }
  Mat<Scalar> d = Mat<Scalar>::Zero(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const Scalar v = std::clamp(Scalar(1) - unit.row(i).dot(unit.row(j)), Scalar(0), Scalar(2));
      d(i, j) = v;
      d(j, i) = v;
    }
  }
  return d;
}

template <typename Scalar>
struct PcaResult {
  Mat<Scalar> components;          // k x dim, orthonormal rows
  Mat<Scalar> scores;              // n x k
  Vec<Scalar> explained_variance;  // k, non-increasing
  Vec<Scalar> mean;                // dim

  Scalar explained_variance_ratio(Eigen::Index i, Scalar total_variance) const {
    return total_variance > 0 ? explained_variance(i) / total_variance : Scalar(0);
  }
};

/// Sum of the per-column sample variances (the trace of the covariance matrix).
template <typename Derived>
typename Derived::Scalar total_variance(const Eigen::MatrixBase<Derived>& x) {
  using Scalar = typename Derived::Scalar;
  if (x.rows() < 2) return Scalar(0);
  const auto centered = (x.rowwise() - x.colwise().mean()).eval();
  return centered.squaredNorm() / Scalar(x.rows() - 1);
}

/// Principal components via SVD of the column-centered data.
///
/// Explained variance is s_i^2 / (n - 1). Each component is oriented so that its
/// largest-magnitude entry is positive, which makes results reproducible across
/// SVD backends. Requires 1 <= k <= min(rows - 1, cols).
template <typename Derived>
PcaResult<typename Derived::Scalar> pca(const Eigen::MatrixBase<Derived>& x, Eigen::Index k) {
  using Scalar = typename Derived::Scalar;
  const Eigen::Index n = x.rows();
  const Eigen::Index dim = x.cols();
  if (n < 2) throw ValidationError("pca: need at least 2 rows");
  if (k < 1 || k > std::min(n - 1, dim)) {
    throw ValidationError("pca: k=" + std::to_string(k) + " outside [1, " + std::to_string(std::min(n - 1, dim)) +
                          "]");
  }
  PcaResult<Scalar> out;
  out.mean = x.colwise().mean().transpose();
  const Mat<Scalar> centered = x.rowwise() - out.mean.transpose();

  Eigen::BDCSVD<Mat<Scalar>> svd(centered, Eigen::ComputeThinV);
  Mat<Scalar> v = svd.matrixV().leftCols(k);
  for (Eigen::Index c = 0; c < k; ++c) {
    Eigen::Index arg = 0;
    v.col(c).cwiseAbs().maxCoeff(&arg);
    if (v(arg, c) < 0) v.col(c) = -v.col(c);
  }
  out.components = v.transpose();
  out.scores = centered * v;
  out.explained_variance = svd.singularValues().head(k).array().square() / Scalar(n - 1);

  // Directions below numerical rank carry rounding noise only.
  const Scalar scale = x.cwiseAbs().maxCoeff();
  const Scalar tol = std::numeric_limits<Scalar>::epsilon() * Scalar(std::max(n, dim)) * scale;
  for (Eigen::Index c = 0; c < k; ++c) {
    if (!(svd.singularValues()(c) > tol)) {
      out.scores.col(c).setZero();
      out.explained_variance(c) = Scalar(0);
    }
  }
  return out;
}

}  // namespace narrator::analytics
