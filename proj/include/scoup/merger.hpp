#pragma once

// Column correspondence and stitching of per-repetition factor matrices.

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "scoup/tensor.hpp"

namespace scoup {

/// Common-part norms below this are treated as zero.
inline constexpr double kCommonNormFloor = 1e-12;

struct NormalizedFactor {
  Matrix matrix;
  Vector lambda;
  /// Columns whose common part was (numerically) zero; left unscaled, lambda 1.
  std::vector<Index> flagged;
};

/// Scales each column so that its rows in `common` have unit l2 norm.
inline NormalizedFactor normalize_common(const Matrix& m, const std::vector<std::size_t>& common) {
  if (common.empty()) throw DimensionError("normalize_common: empty common set");
  NormalizedFactor out{m, Vector::Ones(m.cols()), {}};
  for (Index f = 0; f < m.cols(); ++f) {
    double sq = 0.0;
    for (std::size_t r : common) {
      detail::require_dims(r < static_cast<std::size_t>(m.rows()),
                           "normalize_common: common index out of range");
      sq += m(static_cast<Index>(r), f) * m(static_cast<Index>(r), f);
    }
    const double norm = std::sqrt(sq);
    if (norm < kCommonNormFloor) {
      out.flagged.push_back(f);
      continue;
    }
    out.lambda(f) = norm;
    out.matrix.col(f) /= norm;
  }
  return out;
}

/// One repetition's factor in the full index space.
struct PartialFactor {
  Matrix matrix;                    ///< zero outside the repetition's sample
  std::vector<std::size_t> common;  ///< sorted common indices
  Vector lambda;
};

struct AmbiguityNote {
  std::size_t partial = 0;  ///< 0-based repetition
  Index column = 0;         ///< column of the partial
  Index assigned = 0;       ///< merged column it went to
  double best = 0.0;
  double runner_up = -std::numeric_limits<double>::infinity();
  std::string reason;
};

struct MergeResult {
  Matrix matrix;
  /// assignment[i][f] is the merged column receiving column f of partial i.
  std::vector<std::vector<Index>> assignment;
  /// similarity[i][f] is the winning inner product for column f of partial i
  /// (1 for the first partial).
  std::vector<std::vector<double>> similarity;
  std::vector<AmbiguityNote> ambiguities;
};

inline constexpr double kLowSimilarity = 0.9;
inline constexpr double kTieGap = 1e-6;

/// Greedy merge. Starting from the first partial, every column of each later
/// partial is matched to the unassigned merged column whose common part has
/// the largest (signed) inner product with it, lowest index on ties; only
/// the zero entries of the matched column are then filled in.
inline MergeResult merge(const std::vector<PartialFactor>& partials) {
  if (partials.empty()) throw DimensionError("merge: no partial factors");
  const PartialFactor& head = partials.front();
  const Index rows = head.matrix.rows();
  const Index rank = head.matrix.cols();
  for (const PartialFactor& p : partials) {
    detail::require_dims(p.matrix.rows() == rows && p.matrix.cols() == rank,
                         "merge: partial factor shapes differ");
    detail::require_dims(p.common == head.common, "merge: common index sets differ");
  }

  MergeResult out;
  out.matrix = head.matrix;
  std::vector<Index> identity(static_cast<std::size_t>(rank));
  std::iota(identity.begin(), identity.end(), Index{0});
  out.assignment.push_back(identity);
  out.similarity.emplace_back(static_cast<std::size_t>(rank), 1.0);

  for (std::size_t i = 1; i < partials.size(); ++i) {
    const Matrix& part = partials[i].matrix;
    std::vector<char> open(static_cast<std::size_t>(rank), 1);
    std::vector<Index> assign(static_cast<std::size_t>(rank), -1);
    std::vector<double> won(static_cast<std::size_t>(rank), 0.0);
    for (Index f1 = 0; f1 < rank; ++f1) {
      Index winner = -1;
      double best = -std::numeric_limits<double>::infinity();
      double runner_up = -std::numeric_limits<double>::infinity();
      for (Index f2 = 0; f2 < rank; ++f2) {
        if (!open[static_cast<std::size_t>(f2)]) continue;
        double v = 0.0;
        for (std::size_t r : head.common)
          v += out.matrix(static_cast<Index>(r), f2) * part(static_cast<Index>(r), f1);
        if (v > best) {
          runner_up = best;
          best = v;
          winner = f2;
        } else if (v > runner_up) {
          runner_up = v;
        }
      }
      open[static_cast<std::size_t>(winner)] = 0;
      assign[static_cast<std::size_t>(f1)] = winner;
      won[static_cast<std::size_t>(f1)] = best;
      for (Index r = 0; r < rows; ++r)
        if (out.matrix(r, winner) == 0.0) out.matrix(r, winner) = part(r, f1);

      std::string reason;
      if (best < kLowSimilarity) reason = "low similarity";
      if (std::isfinite(runner_up) && best - runner_up <= kTieGap)
        reason += reason.empty() ? "near tie" : ", near tie";
      if (!reason.empty())
        out.ambiguities.push_back({i, f1, winner, best, runner_up, std::move(reason)});
    }
    out.assignment.push_back(std::move(assign));
    out.similarity.push_back(std::move(won));
  }
  return out;
}

/// Mean of per-repetition lambdas after permuting each into merged column
/// order. An empty `assignment` means every partial is already aligned.
inline Vector average_lambdas(const std::vector<Vector>& lambdas,
                              const std::vector<std::vector<Index>>& assignment = {}) {
  if (lambdas.empty()) throw DimensionError("average_lambdas: no vectors");
  const Index rank = lambdas.front().size();
  detail::require_dims(assignment.empty() || assignment.size() == lambdas.size(),
                       "average_lambdas: assignment count mismatch");
  Vector sum = Vector::Zero(rank);
  for (std::size_t i = 0; i < lambdas.size(); ++i) {
    detail::require_dims(lambdas[i].size() == rank, "average_lambdas: length mismatch");
    for (Index f = 0; f < rank; ++f) {
      const Index dest = assignment.empty() ? f : assignment[i][static_cast<std::size_t>(f)];
      sum(dest) += lambdas[i](f);
    }
  }
  return sum / static_cast<double>(lambdas.size());
}

}  // namespace scoup
