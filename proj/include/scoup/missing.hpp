#pragma once

// Missing-data CMTF: binary weight masks, element-wise coordinate descent for
// weighted least squares, and the weighted ALS driver built on it.

#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "scoup/als.hpp"

namespace scoup {

/// 1 marks an observed entry, 0 a missing one.
struct WeightMask {
  Tensor3 w;
  std::array<std::optional<Matrix>, 3> w_side;

  /// Mask observing every entry of `data`.
  static WeightMask full(const CoupledData& data) {
    WeightMask m;
    m.w = Tensor3::dense(data.x.dims(), std::vector<double>(data.x.size(), 1.0));
    for (std::size_t n = 0; n < 3; ++n)
      if (data.y[n]) m.w_side[n] = Matrix::Ones(data.y[n]->rows(), data.y[n]->cols());
    return m;
  }

  void validate(const CoupledData& data) const {
    if (w.dims() != data.x.dims()) throw DimensionError("mask: tensor dims differ from data");
    w.for_each_nonzero([](std::size_t, std::size_t, std::size_t, double v) {
      if (v != 1.0) throw DataError("mask: tensor entries must be 0 or 1");
    });
    for (std::size_t n = 0; n < 3; ++n) {
      if (!data.y[n]) continue;
      if (!w_side[n]) continue;  // absent side mask = fully observed
      if (w_side[n]->rows() != data.y[n]->rows() || w_side[n]->cols() != data.y[n]->cols())
        throw DimensionError("mask: W" + std::to_string(n + 1) + " dims differ from Y" +
                             std::to_string(n + 1));
      if (!((w_side[n]->array() == 0.0) || (w_side[n]->array() == 1.0)).all())
        throw DataError("mask: W" + std::to_string(n + 1) + " entries must be 0 or 1");
    }
  }

  /// Side mask of Y(n+1); all ones when none was given.
  Matrix side_or_ones(const CoupledData& data, std::size_t n) const {
    if (w_side[n]) return *w_side[n];
    return Matrix::Ones(data.y[n]->rows(), data.y[n]->cols());
  }

  /// Row-major observed flags of the tensor.
  std::vector<char> tensor_flags() const {
    std::vector<char> flags(w.size(), 0);
    w.for_each_nonzero([&](std::size_t i, std::size_t j, std::size_t k, double) {
      flags[w.flat(i, j, k)] = 1;
    });
    return flags;
  }
};

/// `data` with every unobserved entry replaced by zero. Only the zeroed copy
/// is ever read, so values under the mask cannot influence anything.
inline CoupledData mask_out(const CoupledData& data, const WeightMask& mask) {
  mask.validate(data);
  CoupledData out;
  std::vector<Entry> kept;
  data.x.for_each_nonzero([&](std::size_t i, std::size_t j, std::size_t k, double v) {
    if (mask.w(i, j, k) != 0.0) kept.push_back({i, j, k, v});
  });
  out.x = Tensor3::sparse(data.x.dims(), std::move(kept));
  if (!data.x.is_sparse()) out.x = out.x.to_dense();
  for (std::size_t n = 0; n < 3; ++n) {
    if (!data.y[n]) continue;
    const Matrix w = mask.side_or_ones(data, n);
    out.y[n] = (w.array() != 0.0).select(*data.y[n], 0.0);
  }
  return out;
}

/// Squared error over observed entries only.
inline double weighted_objective(const CoupledData& data, const WeightMask& mask,
                                 const FactorSet& f) {
  data.validate();
  mask.validate(data);
  detail::check_tensor_factors(data.x, f);
  const Vector weights = f.tensor_weights();
  const auto& dims = data.x.dims();
  double total = 0.0;
  for (std::size_t i = 0; i < dims[0]; ++i)
    for (std::size_t j = 0; j < dims[1]; ++j)
      for (std::size_t k = 0; k < dims[2]; ++k) {
        if (mask.w(i, j, k) == 0.0) continue;
        const double r = data.x(i, j, k) - model_entry(f, weights, i, j, k);
        total += r * r;
      }
  for (std::size_t n = 0; n < 3; ++n) {
    if (!data.y[n]) continue;
    if (!f.side[n])
      throw DimensionError(std::string("weighted_objective: factor ") + factor_name(true, n) +
                           " missing");
    const Matrix w = mask.side_or_ones(data, n);
    const Matrix diff = *data.y[n] - reconstruct_side(f, n);
    total += (w.array() != 0.0).select(diff, 0.0).squaredNorm();
  }
  return total;
}

/// Scalar masked least squares: argmin_b ||w*(x - a b)||^2 = (w*x)^T (w*a) / ||w*a||^2,
/// or 0 when no observed entry carries weight.
template <class X, class A, class W>
double scalar_wls(const Eigen::MatrixBase<X>& x, const Eigen::MatrixBase<A>& a,
                  const Eigen::MatrixBase<W>& w) {
  detail::require_dims(x.size() == a.size() && x.size() == w.size(),
                       "scalar_wls: vector lengths differ");
  double num = 0.0, den = 0.0;
  for (Index i = 0; i < x.size(); ++i) {
    if (w.derived().coeff(i) == 0.0) continue;
    num += x.derived().coeff(i) * a.derived().coeff(i);
    den += a.derived().coeff(i) * a.derived().coeff(i);
  }
  if (den < 1e-300) return 0.0;
  return num / den;
}

struct WlsResult {
  Matrix b;
  /// Masked residual before the first sweep and after each sweep.
  std::vector<double> trace;
};

/// min_B ||W * (X - A B^T)||_F^2 by element-wise coordinate descent. Entries
/// B(j,f) are visited column by column (f outer, j inner); each visit solves
/// the scalar problem for column j of X with every other coefficient fixed.
/// Stops when a sweep changes the objective by <= tol relative, or after
/// max_sweeps sweeps. Entries of X where W is zero are never read.
inline WlsResult wls_factor(const Matrix& x, const Matrix& w, const Matrix& a,
                            const Matrix& b_init, double tol, int max_sweeps) {
  detail::require_dims(w.rows() == x.rows() && w.cols() == x.cols(),
                       "wls_factor: weight shape differs from data");
  detail::require_dims(a.rows() == x.rows(), "wls_factor: A rows differ from X rows");
  detail::require_dims(b_init.rows() == x.cols() && b_init.cols() == a.cols(),
                       "wls_factor: B shape mismatch");
  if (max_sweeps < 1) throw DimensionError("wls_factor: max_sweeps must be >= 1");

  WlsResult out{b_init, {}};
  Matrix& b = out.b;
  const auto observed = (w.array() != 0.0);
  Matrix residual = observed.select(x - a * b.transpose(), 0.0);
  // Only the selected branch is read, so NaN under the mask is still inert.
  double current = residual.squaredNorm();
  out.trace.push_back(current);
  const double floor = kExactFitFloor * observed.select(x, 0.0).squaredNorm();

  for (int sweep = 0; sweep < max_sweeps; ++sweep) {
    for (Index f = 0; f < a.cols(); ++f) {
      const auto col = a.col(f);
      for (Index j = 0; j < x.cols(); ++j) {
        const double old = b(j, f);
        // residual with this coefficient's contribution added back
        auto target = residual.col(j) + w.col(j).cwiseProduct(col) * old;
        const double updated = scalar_wls(target, col, w.col(j));
        const double delta = updated - old;
        if (delta == 0.0) continue;
        residual.col(j) -= w.col(j).cwiseProduct(col) * delta;
        b(j, f) = updated;
      }
    }
    const double previous = current;
    current = residual.squaredNorm();
    out.trace.push_back(current);
    if (detail::has_converged(previous, current, tol, floor)) break;
  }
  return out;
}

namespace detail {

/// Stacked transposed unfoldings [X(n)^T; Y_n^T] with their masks, built once
/// per solve. Missing entries are stored as zero.
struct WeightedBlocks {
  std::array<Matrix, 3> data;
  std::array<Matrix, 3> weight;
  std::array<std::optional<Matrix>, 3> side;
  std::array<std::optional<Matrix>, 3> side_weight;
};

inline WeightedBlocks build_weighted_blocks(const CoupledData& clean, const WeightMask& mask) {
  WeightedBlocks blocks;
  const Tensor3 wdense = mask.w.to_dense();
  for (int mode = 1; mode <= 3; ++mode) {
    const auto n = static_cast<std::size_t>(mode - 1);
    const Matrix xt = unfold(clean.x, mode).transpose();
    const Matrix wt = unfold(wdense, mode).transpose();
    if (clean.y[n]) {
      const Matrix wy = mask.side_or_ones(clean, n);
      blocks.data[n].resize(xt.rows() + clean.y[n]->cols(), xt.cols());
      blocks.data[n] << xt, clean.y[n]->transpose();
      blocks.weight[n].resize(wt.rows() + wy.cols(), wt.cols());
      blocks.weight[n] << wt, wy.transpose();
      blocks.side[n] = *clean.y[n];
      blocks.side_weight[n] = wy;
    } else {
      blocks.data[n] = xt;
      blocks.weight[n] = wt;
    }
  }
  return blocks;
}

inline Matrix weighted_tensor_update(const WeightedBlocks& blocks, const FactorSet& f, int mode,
                                     bool coupled, double tol, int sweeps) {
  const auto [p, q] = kr_partners(mode);
  const auto n = static_cast<std::size_t>(mode - 1);
  Matrix design = khatri_rao(f.tensor[static_cast<std::size_t>(p - 1)],
                             f.tensor[static_cast<std::size_t>(q - 1)]);
  const Matrix* x = &blocks.data[n];
  const Matrix* w = &blocks.weight[n];
  Matrix x_top, w_top;
  if (blocks.side[n]) {
    if (coupled) {
      Matrix stacked(design.rows() + f.side[n]->rows(), design.cols());
      stacked << design, *f.side[n];
      design = std::move(stacked);
    } else {
      x_top = blocks.data[n].topRows(design.rows());
      w_top = blocks.weight[n].topRows(design.rows());
      x = &x_top;
      w = &w_top;
    }
  }
  return wls_factor(*x, *w, design, f.tensor[n], tol, sweeps).b;
}

inline Matrix weighted_side_update(const WeightedBlocks& blocks, const FactorSet& f,
                                   std::size_t n, double tol, int sweeps) {
  const Matrix start = f.side[n] ? *f.side[n]
                                 : Matrix::Zero(blocks.side[n]->cols(), f.rank());
  return wls_factor(*blocks.side[n], *blocks.side_weight[n], f.tensor[n], start, tol, sweeps).b;
}

}  // namespace detail

/// Weighted CMTF iterations from a given start (lambdas absorbed first).
inline SolverResult cmtf_wals_from(const CoupledData& data, const WeightMask& mask,
                                   FactorSet start, const SolverOptions& opts) {
  data.validate();
  opts.validate();
  const CoupledData clean = mask_out(data, mask);
  const detail::WeightedBlocks blocks = detail::build_weighted_blocks(clean, mask);
  start.validate();
  SolverResult result;
  result.factors = start.absorbed();
  FactorSet& f = result.factors;

  const double floor = kExactFitFloor * clean.energy();
  double previous = weighted_objective(clean, mask, f);
  detail::check_objective(previous);
  result.trace.push_back(previous);
  for (int it = 0; it < opts.max_iters; ++it) {
    for (int mode = 1; mode <= 3; ++mode)
      f.tensor[static_cast<std::size_t>(mode - 1)] = detail::weighted_tensor_update(
          blocks, f, mode, true, opts.rel_change_tol, opts.max_sweeps);
    for (std::size_t n = 0; n < 3; ++n)
      if (clean.y[n])
        f.side[n] = detail::weighted_side_update(blocks, f, n, opts.rel_change_tol,
                                                 opts.max_sweeps);
    const double current = weighted_objective(clean, mask, f);
    detail::check_objective(current);
    result.trace.push_back(current);
    if (detail::has_converged(previous, current, opts.rel_change_tol, floor)) {
      result.converged = true;
      break;
    }
    previous = current;
  }
  return result;
}

/// Weighted PARAFAC of the tensor term (same random start as parafac_als).
inline SolverResult parafac_wals(const CoupledData& data, const WeightMask& mask,
                                 const SolverOptions& opts) {
  opts.validate();
  const CoupledData clean = mask_out(data, mask);
  const detail::WeightedBlocks blocks = detail::build_weighted_blocks(clean, mask);
  Rng rng(opts.seed);
  SolverResult result;
  FactorSet& f = result.factors;
  f.tensor[0] = Matrix::Zero(static_cast<Index>(data.x.dim(1)), opts.rank);
  f.tensor[1] = detail::random_uniform(static_cast<Index>(data.x.dim(2)), opts.rank, rng);
  f.tensor[2] = detail::random_uniform(static_cast<Index>(data.x.dim(3)), opts.rank, rng);
  f.reset_lambdas();

  const CoupledData tensor_only{clean.x, {}};
  WeightMask tensor_mask;
  tensor_mask.w = mask.w;
  const double floor = kExactFitFloor * frobenius_norm_sq(clean.x);
  double previous = weighted_objective(tensor_only, tensor_mask, f);
  result.trace.push_back(previous);
  for (int it = 0; it < opts.max_iters; ++it) {
    for (int mode = 1; mode <= 3; ++mode)
      f.tensor[static_cast<std::size_t>(mode - 1)] = detail::weighted_tensor_update(
          blocks, f, mode, false, opts.rel_change_tol, opts.max_sweeps);
    const double current = weighted_objective(tensor_only, tensor_mask, f);
    detail::check_objective(current);
    result.trace.push_back(current);
    if (detail::has_converged(previous, current, opts.rel_change_tol, floor)) {
      result.converged = true;
      break;
    }
    previous = current;
  }
  return result;
}

/// Weighted CMTF: the coupled ALS structure with every block solve replaced by
/// wls_factor on the stacked, masked block problem.
inline SolverResult cmtf_wals(const CoupledData& data, const WeightMask& mask,
                              const SolverOptions& opts) {
  data.validate();
  mask.validate(data);
  SolverResult init = parafac_wals(data, mask, opts);
  if (!data.has_side()) return init;
  const CoupledData clean = mask_out(data, mask);
  const detail::WeightedBlocks blocks = detail::build_weighted_blocks(clean, mask);
  FactorSet start = std::move(init.factors);
  for (std::size_t n = 0; n < 3; ++n)
    if (clean.y[n])
      start.side[n] = detail::weighted_side_update(blocks, start, n, opts.rel_change_tol,
                                                   opts.max_sweeps);
  start.reset_lambdas();
  return cmtf_wals_from(data, mask, std::move(start), opts);
}

}  // namespace scoup
