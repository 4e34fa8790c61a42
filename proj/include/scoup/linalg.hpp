#pragma once

#include <Eigen/SVD>

#include <algorithm>
#include <string>

#include "scoup/tensor.hpp"

namespace scoup {

struct PinvOptions {
  /// Singular values at or below rank_tolerance * sigma_max are treated as zero.
  double rank_tolerance = 1e-10;

  void validate() const {
    if (!(rank_tolerance > 0.0)) throw DimensionError("pinv: rank_tolerance must be > 0");
  }
};

/// Moore-Penrose pseudoinverse through a thin SVD with relative thresholding.
inline Matrix pinv(const Matrix& m, const PinvOptions& opts = {}) {
  opts.validate();
  if (!m.allFinite()) throw NumericError("pinv: non-finite input");
  if (m.size() == 0) return Matrix::Zero(m.cols(), m.rows());
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  if (svd.info() != Eigen::Success) throw NumericError("pinv: SVD did not converge");
  const Vector& sigma = svd.singularValues();
  const double cutoff = opts.rank_tolerance * (sigma.size() > 0 ? sigma(0) : 0.0);
  Vector inv = Vector::Zero(sigma.size());
  for (Index n = 0; n < sigma.size(); ++n)
    if (sigma(n) > cutoff) inv(n) = 1.0 / sigma(n);
  Matrix out = svd.matrixV() * inv.asDiagonal() * svd.matrixU().transpose();
  if (!out.allFinite()) throw NumericError("pinv: non-finite result");
  return out;
}

/// Minimum-norm least-squares solution pinv(a) * rhs.
inline Matrix ls_solve(const Matrix& a, const Matrix& rhs, const PinvOptions& opts = {}) {
  detail::require_dims(a.rows() == rhs.rows(), "ls_solve: row counts differ");
  return pinv(a, opts) * rhs;
}

/// F x F Gram matrix of [a kr b; m]: (a^T a) * (b^T b) + m^T m.
/// `m` may have zero rows (no coupled block).
inline Matrix stacked_kr_gram(const Matrix& a, const Matrix& b, const Matrix& m) {
  detail::require_dims(a.cols() == b.cols() && (m.rows() == 0 || m.cols() == a.cols()),
                       "stacked_kr_gram: column counts differ");
  Matrix gram = (a.transpose() * a).cwiseProduct(b.transpose() * b);
  if (m.rows() > 0) gram.noalias() += m.transpose() * m;
  return gram;
}

/// [a kr b; m]^dagger * rhs, computed as
///   (a^T a * b^T b + m^T m)^dagger [ (a kr b)^T, m^T ] rhs.
/// Only the F x F Gram matrix is factorized and neither the Khatri-Rao product
/// nor the stacked pseudoinverse is materialized.
///
/// For a column-rank-deficient stacked matrix the Gram form is used as is; it
/// is then a least-squares solution but not necessarily the minimum-norm one.
inline Matrix stacked_kr_pinv_apply(const Matrix& a, const Matrix& b, const Matrix& m,
                                    const Matrix& rhs, const PinvOptions& opts = {}) {
  const Index rank = a.cols();
  const Index kr_rows = a.rows() * b.rows();
  detail::require_dims(b.cols() == rank, "stacked_kr_pinv_apply: a, b column counts differ");
  detail::require_dims(m.rows() == 0 || m.cols() == rank,
                       "stacked_kr_pinv_apply: m column count differs");
  detail::require_dims(rhs.rows() == kr_rows + m.rows(),
                       "stacked_kr_pinv_apply: rhs rows must be a.rows*b.rows + m.rows");

  Matrix out = Matrix::Zero(rank, rhs.cols());
  for (Index c = 0; c < rhs.cols(); ++c) {
    for (Index i = 0; i < a.rows(); ++i)
      for (Index r = 0; r < b.rows(); ++r) {
        const double v = rhs(i * b.rows() + r, c);
        if (v == 0.0) continue;
        for (Index f = 0; f < rank; ++f) out(f, c) += a(i, f) * b(r, f) * v;
      }
    for (Index r = 0; r < m.rows(); ++r) {
      const double v = rhs(kr_rows + r, c);
      for (Index f = 0; f < rank; ++f) out(f, c) += m(r, f) * v;
    }
  }

  const Matrix gram_pinv = pinv(stacked_kr_gram(a, b, m), opts);
  Vector column(rank);
  for (Index c = 0; c < out.cols(); ++c) {
    column.noalias() = gram_pinv * out.col(c);
    out.col(c) = column;
  }
  return out;
}

/// rhs * pinv(gram) for a symmetric Gram matrix; the row-oriented form of a
/// normal-equation solve used by the ALS factor updates.
inline Matrix gram_solve_right(const Matrix& rhs, const Matrix& gram,
                               const PinvOptions& opts = {}) {
  detail::require_dims(gram.rows() == gram.cols() && rhs.cols() == gram.rows(),
                       "gram_solve_right: shape mismatch");
  return rhs * pinv(gram, opts);
}

}  // namespace scoup
