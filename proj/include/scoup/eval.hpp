#pragma once

// Quality metrics and prediction through the shared latent space.

#include <cmath>
#include <cstdint>
#include <limits>
#include <utility>
#include <vector>

#include "scoup/driver.hpp"

namespace scoup {

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();
inline constexpr double kNonzeroThreshold = 1e-12;

struct MetricsReport {
  double relative_cost = 1.0;
  double relative_sparsity = 1.0;
  double snr = kInfinity;
  double wall_clock_fraction = 1.0;
};

/// objective(fast) / objective(base); 0/0 is 1 and x/0 with x > 0 is +inf.
inline double relative_cost(const CoupledData& data, const FactorSet& fast,
                            const FactorSet& base) {
  const double num = objective(data, fast);
  const double den = objective(data, base);
  if (den == 0.0) return num == 0.0 ? 1.0 : kInfinity;
  return num / den;
}

/// Weighted variant for masked data.
inline double relative_cost(const CoupledData& data, const WeightMask& mask,
                            const FactorSet& fast, const FactorSet& base) {
  const double num = weighted_objective(data, mask, fast);
  const double den = weighted_objective(data, mask, base);
  if (den == 0.0) return num == 0.0 ? 1.0 : kInfinity;
  return num / den;
}

/// Entries with |v| >= 1e-12 over every factor matrix present.
inline std::size_t factor_nnz(const FactorSet& f) {
  std::size_t count = 0;
  auto add = [&](const Matrix& m) {
    count += static_cast<std::size_t>((m.array().abs() >= kNonzeroThreshold).count());
  };
  for (std::size_t n = 0; n < 3; ++n) {
    add(f.tensor[n]);
    if (f.side[n]) add(*f.side[n]);
  }
  return count;
}

/// nnz(base) / nnz(fast); +inf when the fast model has no nonzero.
inline double relative_sparsity(const FactorSet& base, const FactorSet& fast) {
  for (std::size_t n = 0; n < 3; ++n) {
    detail::require_dims(base.tensor[n].rows() == fast.tensor[n].rows() &&
                             base.tensor[n].cols() == fast.tensor[n].cols(),
                         "relative_sparsity: factor shapes differ");
    detail::require_dims(base.side[n].has_value() == fast.side[n].has_value(),
                         "relative_sparsity: factor sets differ in side factors");
  }
  const std::size_t fast_nnz = factor_nnz(fast);
  if (fast_nnz == 0) return kInfinity;
  return static_cast<double>(factor_nnz(base)) / static_cast<double>(fast_nnz);
}

/// ||x_m||^2 / ||x_m - x_0||^2, +inf when the reconstructions coincide.
inline double snr(const Tensor3& x_m, const Tensor3& x_0) {
  detail::require_dims(x_m.dims() == x_0.dims(), "snr: tensor dims differ");
  const Tensor3 a = x_m.to_dense();
  const Tensor3 b = x_0.to_dense();
  double signal = 0.0, diff = 0.0;
  const auto& va = a.dense_values();
  const auto& vb = b.dense_values();
  for (std::size_t n = 0; n < va.size(); ++n) {
    signal += va[n] * va[n];
    diff += (va[n] - vb[n]) * (va[n] - vb[n]);
  }
  if (diff < 1e-300) return kInfinity;
  return signal / diff;
}

enum class PredictScaling { scaled, unscaled };

/// Projects a side-matrix row of Y1 into the latent space and expands it to
/// the second tensor mode: B D^T q. With `scaled`, B and D carry their lambdas.
inline Vector predict_from_side(const FactorSet& f, const Vector& q,
                                PredictScaling scaling = PredictScaling::scaled) {
  f.validate();
  if (!f.side[0]) throw DimensionError("predict_from_side: factor D is missing");
  const Matrix& d = *f.side[0];
  detail::require_dims(q.size() == d.rows(), "predict_from_side: q length must equal D rows");
  if (scaling == PredictScaling::unscaled) return f.tensor[1] * (d.transpose() * q);
  const Vector latent = f.side_lambda[0].cwiseProduct(d.transpose() * q);
  return f.tensor[1] * f.tensor_lambda[1].cwiseProduct(latent);
}

/// Rescales a fit so that B D^T q is free of the CP scale indeterminacy: the
/// lambdas are folded in, D gets unit columns (A takes the norm) and the
/// third-mode factor gets unit column means (B takes the mean, sign included).
/// The reconstructions of X and Y1 are unchanged.
inline FactorSet prediction_form(FactorSet f) {
  f.validate();
  if (!f.side[0]) throw DimensionError("prediction_form: factor D is missing");
  for (std::size_t n = 0; n < 3; ++n) {
    f.tensor[n] = f.tensor[n] * f.tensor_lambda[n].asDiagonal();
    if (f.side[n]) *f.side[n] = *f.side[n] * f.side_lambda[n].asDiagonal();
  }
  f.reset_lambdas();
  Matrix& d = *f.side[0];
  for (Index r = 0; r < f.rank(); ++r) {
    const double norm = d.col(r).norm();
    if (norm > 0.0) {
      d.col(r) /= norm;
      f.tensor[0].col(r) *= norm;
      f.tensor[1].col(r) /= norm;
    }
    const double mean = f.tensor[2].col(r).mean();
    if (mean != 0.0) {
      f.tensor[2].col(r) /= mean;
      f.tensor[1].col(r) *= mean;
    }
  }
  return f;
}

inline Vector mean_centered(const Vector& v) {
  return (v.array() - v.mean()).matrix();
}

/// True when the predictions match the actual vectors in the given order:
/// |v1 - p1| + |v2 - p2| < |v1 - p2| + |v2 - p1|. Ties count as wrong. All
/// four vectors are mean-centered first.
inline bool pair_rule(const Vector& v1, const Vector& v2, const Vector& p1, const Vector& p2) {
  detail::require_dims(v1.size() == v2.size() && v1.size() == p1.size() &&
                           v1.size() == p2.size(),
                       "pair_rule: vector lengths differ");
  const Vector a1 = mean_centered(v1), a2 = mean_centered(v2);
  const Vector b1 = mean_centered(p1), b2 = mean_centered(p2);
  return (a1 - b1).norm() + (a2 - b2).norm() < (a1 - b2).norm() + (a2 - b1).norm();
}

struct LeaveTwoOutResult {
  double accuracy = 0.0;
  /// One 0/1 outcome per (trial, third-mode slice), trial-major.
  std::vector<int> outcomes;
};

/// Withholds two first-mode rows (of X and Y1), fits the rest with turbo_cmtf,
/// predicts each withheld row's mode-2 vector from its Y1 row (in
/// prediction_form unless `unscaled`), and scores the assignment rule against
/// every third-mode slice. Trial t reseeds the solver and the sampler from
/// (seed, t).
inline LeaveTwoOutResult leave_two_out(const CoupledData& data, std::pair<std::size_t, std::size_t> pair,
                                       const TurboOptions& opts, int trials,
                                       PredictScaling scaling = PredictScaling::scaled) {
  data.validate();
  opts.validate();
  if (!data.y[0]) throw DimensionError("leave_two_out: requires Y1");
  const auto& dims = data.x.dims();
  const auto [w1, w2] = pair;
  if (w1 == w2 || w1 >= dims[0] || w2 >= dims[0])
    throw DimensionError("leave_two_out: pair must be two distinct rows in range");
  if (trials < 1) throw DimensionError("leave_two_out: trials must be >= 1");
  if (static_cast<Index>(dims[0]) - 2 < opts.solver.rank)
    throw DimensionError("leave_two_out: rank exceeds the remaining rows");

  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < dims[0]; ++i)
    if (i != w1 && i != w2) keep.push_back(i);
  SampleSpec spec = full_spec(data);
  spec.tensor[0].fresh = keep;
  const CoupledData train = extract(data, spec).data;

  const Vector q1 = data.y[0]->row(static_cast<Index>(w1)).transpose();
  const Vector q2 = data.y[0]->row(static_cast<Index>(w2)).transpose();
  auto actual = [&](std::size_t word, std::size_t slice) {
    Vector v(static_cast<Index>(dims[1]));
    for (std::size_t j = 0; j < dims[1]; ++j) v(static_cast<Index>(j)) = data.x(word, j, slice);
    return v;
  };

  LeaveTwoOutResult out;
  for (int t = 0; t < trials; ++t) {
    TurboOptions trial = opts;
    trial.solver.seed = stream_seed(opts.solver.seed, 3, static_cast<std::uint64_t>(t), 0);
    trial.sampling.seed = stream_seed(opts.sampling.seed, 3, static_cast<std::uint64_t>(t), 1);
    const TurboResult fit = turbo_cmtf(train, nullptr, trial);
    const FactorSet f = scaling == PredictScaling::scaled ? prediction_form(fit.factors) : fit.factors;
    const Vector p1 = predict_from_side(f, q1, scaling);
    const Vector p2 = predict_from_side(f, q2, scaling);
    for (std::size_t k = 0; k < dims[2]; ++k)
      out.outcomes.push_back(pair_rule(actual(w1, k), actual(w2, k), p1, p2) ? 1 : 0);
  }
  double sum = 0.0;
  for (int o : out.outcomes) sum += o;
  out.accuracy = sum / static_cast<double>(out.outcomes.size());
  return out;
}

}  // namespace scoup
