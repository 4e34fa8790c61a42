#pragma once

// Alternating least squares: plain PARAFAC and coupled matrix-tensor (CMTF).

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "scoup/linalg.hpp"
#include "scoup/model.hpp"
#include "scoup/rng.hpp"

namespace scoup {

struct SolverOptions {
  Index rank = 1;
  int max_iters = 500;
  /// Stop once |obj(t-1) - obj(t)| <= rel_change_tol * obj(t-1).
  double rel_change_tol = 1e-6;
  std::uint64_t seed = 0;
  PinvOptions pinv;
  /// Coordinate-descent sweeps per block solve of the weighted solver.
  int max_sweeps = 10;

  void validate() const {
    if (rank < 1) throw DimensionError("solver: rank must be >= 1");
    if (max_iters < 1) throw DimensionError("solver: max_iters must be >= 1");
    if (!(rel_change_tol > 0.0)) throw DimensionError("solver: tolerance must be > 0");
    if (max_sweeps < 1) throw DimensionError("solver: max_sweeps must be >= 1");
    pinv.validate();
  }
};

struct SolverResult {
  FactorSet factors;
  /// trace[0] is the objective at initialization, trace[t] after iteration t.
  std::vector<double> trace;
  bool converged = false;

  int iterations() const { return static_cast<int>(trace.size()) - 1; }
  double final_objective() const { return trace.back(); }
};

/// Objectives at or below this fraction of the data energy count as an exact
/// fit; relative change is meaningless down there.
inline constexpr double kExactFitFloor = 1e-28;

namespace detail {

inline bool has_converged(double previous, double current, double tol, double floor) {
  if (current <= floor) return true;
  return std::abs(previous - current) <= tol * previous;
}

inline void check_objective(double value) {
  if (!std::isfinite(value))
    throw NumericError("objective became non-finite (" + std::to_string(value) + ")");
}

inline void check_tensor_factors(const Tensor3& x, const FactorSet& f) {
  f.validate();
  for (int n = 1; n <= 3; ++n)
    require_dims(f.tensor[static_cast<std::size_t>(n - 1)].rows() ==
                     static_cast<Index>(x.dim(n)),
                 "factor rows do not match tensor mode " + std::to_string(n));
}

inline Matrix random_uniform(Index rows, Index cols, Rng& rng) {
  Matrix m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = rng.uniform();
  return m;
}

}  // namespace detail

/// ||X - model||_F^2 for the tensor term. Dense data is summed entry by
/// entry; coordinate data uses ||X||^2 - 2<X, M> + ||M||^2 so the cost stays
/// proportional to the stored entries.
inline double tensor_residual_sq(const Tensor3& x, const FactorSet& f) {
  detail::check_tensor_factors(x, f);
  const Vector w = f.tensor_weights();
  if (!x.is_sparse()) {
    const auto& dims = x.dims();
    const auto& values = x.dense_values();
    double sum = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < dims[0]; ++i)
      for (std::size_t j = 0; j < dims[1]; ++j)
        for (std::size_t k = 0; k < dims[2]; ++k, ++n) {
          const double r = values[n] - model_entry(f, w, i, j, k);
          sum += r * r;
        }
    return sum;
  }
  double data_sq = 0.0, cross = 0.0;
  x.for_each_nonzero([&](std::size_t i, std::size_t j, std::size_t k, double v) {
    data_sq += v * v;
    cross += v * model_entry(f, w, i, j, k);
  });
  const Matrix gram = (f.tensor[0].transpose() * f.tensor[0])
                          .cwiseProduct(f.tensor[1].transpose() * f.tensor[1])
                          .cwiseProduct(f.tensor[2].transpose() * f.tensor[2]);
  const double model_sq = w.dot(gram * w);
  return std::max(0.0, data_sq - 2.0 * cross + model_sq);
}

/// Full CMTF objective with lambda scaling; absent side matrices add nothing.
inline double objective(const CoupledData& data, const FactorSet& f) {
  data.validate();
  double total = tensor_residual_sq(data.x, f);
  for (std::size_t n = 0; n < 3; ++n) {
    if (!data.y[n]) continue;
    if (!f.side[n])
      throw DimensionError(std::string("objective: factor ") + factor_name(true, n) +
                           " missing for present Y" + std::to_string(n + 1));
    detail::require_dims(f.side[n]->rows() == data.y[n]->cols(),
                         std::string("objective: factor ") + factor_name(true, n) +
                             " rows do not match Y" + std::to_string(n + 1));
    total += (*data.y[n] - reconstruct_side(f, n)).squaredNorm();
  }
  return total;
}

/// Least-squares side factor D of Y ~ A D^T given A: D = Y^T (A^dagger)^T,
/// shape (Y.cols x F).
inline Matrix init_coupled_factor(const Matrix& y, const Matrix& a, const PinvOptions& opts = {}) {
  detail::require_dims(y.rows() == a.rows(), "init_coupled_factor: row counts differ");
  return (pinv(a, opts) * y).transpose();
}

/// Exact least-squares update of the mode-`mode` factor with every other
/// factor fixed. The coupled side matrix, when present, is stacked with the
/// unfolded tensor:  A <- [X(1), Y1] ([B kr C; D]^dagger)^T, which the
/// stacked Khatri-Rao identity turns into (X(1)(B kr C) + Y1 D) G^dagger with
/// G = B^T B * C^T C + D^T D.
/// `side` may be null for an uncoupled mode.
inline Matrix update_tensor_factor(const Tensor3& x, const Matrix* side, const FactorSet& f,
                                   int mode, const PinvOptions& opts) {
  const auto [p, q] = kr_partners(mode);
  const auto n = static_cast<std::size_t>(mode - 1);
  const Matrix& first = f.tensor[static_cast<std::size_t>(p - 1)];
  const Matrix& second = f.tensor[static_cast<std::size_t>(q - 1)];
  Matrix rhs = mttkrp(x, mode, first, second);
  Matrix gram;
  if (side && f.side[n]) {
    rhs.noalias() += *side * *f.side[n];
    gram = stacked_kr_gram(first, second, *f.side[n]);
  } else {
    gram = stacked_kr_gram(first, second, Matrix(0, first.cols()));
  }
  return gram_solve_right(rhs, gram, opts);
}

inline Matrix update_tensor_factor(const CoupledData& data, const FactorSet& f, int mode,
                                   const PinvOptions& opts) {
  check_mode(mode);
  const auto& y = data.y[static_cast<std::size_t>(mode - 1)];
  return update_tensor_factor(data.x, y ? &*y : nullptr, f, mode, opts);
}

/// PARAFAC by ALS. B and C start uniform in [0,1) from `opts.seed`; A is solved
/// first. Lambdas of the result are all ones.
inline SolverResult parafac_als(const Tensor3& x, const SolverOptions& opts) {
  opts.validate();
  Rng rng(opts.seed);
  SolverResult result;
  FactorSet& f = result.factors;
  f.tensor[0] = Matrix::Zero(static_cast<Index>(x.dim(1)), opts.rank);
  f.tensor[1] = detail::random_uniform(static_cast<Index>(x.dim(2)), opts.rank, rng);
  f.tensor[2] = detail::random_uniform(static_cast<Index>(x.dim(3)), opts.rank, rng);
  f.reset_lambdas();

  const double floor = kExactFitFloor * frobenius_norm_sq(x);
  double previous = tensor_residual_sq(x, f);
  result.trace.push_back(previous);
  for (int it = 0; it < opts.max_iters; ++it) {
    for (int mode = 1; mode <= 3; ++mode)
      f.tensor[static_cast<std::size_t>(mode - 1)] =
          update_tensor_factor(x, nullptr, f, mode, opts.pinv);
    const double current = tensor_residual_sq(x, f);
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

/// Coupled ALS iterations from a given starting point; lambdas of `start` are
/// absorbed into its columns first. Each pass updates A, B, C, then the side
/// factors.
inline SolverResult cmtf_als_from(const CoupledData& data, FactorSet start,
                                  const SolverOptions& opts) {
  data.validate();
  opts.validate();
  SolverResult result;
  start.validate();
  result.factors = start.absorbed();
  FactorSet& f = result.factors;

  const double floor = kExactFitFloor * data.energy();
  double previous = objective(data, f);
  detail::check_objective(previous);
  result.trace.push_back(previous);
  for (int it = 0; it < opts.max_iters; ++it) {
    for (int mode = 1; mode <= 3; ++mode)
      f.tensor[static_cast<std::size_t>(mode - 1)] =
          update_tensor_factor(data, f, mode, opts.pinv);
    for (std::size_t n = 0; n < 3; ++n)
      if (data.y[n]) f.side[n] = init_coupled_factor(*data.y[n], f.tensor[n], opts.pinv);
    const double current = objective(data, f);
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

/// Coupled ALS: A, B, C from PARAFAC of the tensor, side factors from
/// init_coupled_factor, then alternating exact block updates. Without side
/// matrices the coupled problem is the PARAFAC problem and that fit is returned.
inline SolverResult cmtf_als(const CoupledData& data, const SolverOptions& opts) {
  data.validate();
  opts.validate();
  SolverResult init = parafac_als(data.x, opts);
  if (!data.has_side()) return init;
  FactorSet start = std::move(init.factors);
  for (std::size_t n = 0; n < 3; ++n)
    if (data.y[n]) start.side[n] = init_coupled_factor(*data.y[n], start.tensor[n], opts.pinv);
  start.reset_lambdas();
  return cmtf_als_from(data, std::move(start), opts);
}

}  // namespace scoup
