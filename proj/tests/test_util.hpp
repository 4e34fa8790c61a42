#pragma once

#include "scoup/scoup.hpp"

namespace testutil {

using namespace scoup;

inline Matrix random_matrix(Index r, Index c, std::uint64_t seed) {
  Rng rng(seed);
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = rng.normal();
  return m;
}

inline Tensor3 random_tensor(Dims3 d, std::uint64_t seed, double keep = 1.0) {
  Rng rng(seed);
  std::vector<Entry> e;
  for (std::size_t i = 0; i < d[0]; ++i)
    for (std::size_t j = 0; j < d[1]; ++j)
      for (std::size_t k = 0; k < d[2]; ++k) {
        const double v = rng.normal();
        if (rng.uniform() < keep) e.push_back({i, j, k, v});
      }
  return Tensor3::sparse(d, e);
}

/// Elementwise objective, independent of the library's residual code.
inline double brute_objective(const CoupledData& data, const FactorSet& f) {
  const auto& d = data.x.dims();
  const Vector w = f.tensor_weights();
  double total = 0.0;
  for (std::size_t i = 0; i < d[0]; ++i)
    for (std::size_t j = 0; j < d[1]; ++j)
      for (std::size_t k = 0; k < d[2]; ++k) {
        double m = 0.0;
        for (Index r = 0; r < f.rank(); ++r)
          m += w(r) * f.tensor[0](Index(i), r) * f.tensor[1](Index(j), r) *
               f.tensor[2](Index(k), r);
        const double e = data.x(i, j, k) - m;
        total += e * e;
      }
  for (std::size_t n = 0; n < 3; ++n) {
    if (!data.y[n]) continue;
    const Matrix& y = *data.y[n];
    for (Index i = 0; i < y.rows(); ++i)
      for (Index j = 0; j < y.cols(); ++j) {
        double m = 0.0;
        for (Index r = 0; r < f.rank(); ++r)
          m += f.tensor_lambda[n](r) * f.side_lambda[n](r) * f.tensor[n](i, r) *
               (*f.side[n])(j, r);
        total += (y(i, j) - m) * (y(i, j) - m);
      }
  }
  return total;
}

inline Matrix stacked(const Matrix& a, const Matrix& b, const Matrix& m) {
  const Matrix kr = khatri_rao(a, b);
  Matrix s(kr.rows() + m.rows(), a.cols());
  s << kr, m;
  return s;
}

struct PermutationTrial {
  std::vector<PartialFactor> partials;
  /// truth[i][f]: base column carried by column f of partial i
  std::vector<std::vector<Index>> truth;
  Matrix base_common;
};

/// Partials sharing an `f`-column common block with mutual coherence below
/// `coherence`. Partial i carries the base columns in a random order, its
/// common part perturbed by `noise` and renormalized, and fresh rows of its
/// own.
inline PermutationTrial permutation_trial(std::uint64_t seed, Index f, int parts,
                                          double coherence, double noise) {
  Rng rng(seed);
  const Index common_rows = 20, fresh_rows = 5;
  const Index rows = common_rows + fresh_rows * parts;
  Matrix base(common_rows, f);
  for (;;) {
    for (Index c = 0; c < f; ++c) {
      for (Index r = 0; r < common_rows; ++r) base(r, c) = rng.normal();
      base.col(c).normalize();
    }
    Matrix g = base.transpose() * base;
    g.diagonal().setZero();
    if (f == 1 || g.cwiseAbs().maxCoeff() < coherence) break;
  }
  PermutationTrial t;
  t.base_common = base;
  std::vector<std::size_t> common(static_cast<std::size_t>(common_rows));
  for (std::size_t r = 0; r < common.size(); ++r) common[r] = r;
  for (int i = 0; i < parts; ++i) {
    std::vector<Index> perm(static_cast<std::size_t>(f));
    for (Index c = 0; c < f; ++c) perm[std::size_t(c)] = c;
    if (i > 0)
      for (Index c = f - 1; c > 0; --c)
        std::swap(perm[std::size_t(c)], perm[std::size_t(rng.next() % std::uint64_t(c + 1))]);
    Matrix m = Matrix::Zero(rows, f);
    for (Index c = 0; c < f; ++c) {
      Vector col = base.col(perm[std::size_t(c)]);
      if (i > 0)
        for (Index r = 0; r < common_rows; ++r) col(r) += noise * rng.normal();
      m.col(c).head(common_rows) = col.normalized();
      for (Index r = 0; r < fresh_rows; ++r)
        m(common_rows + i * fresh_rows + r, c) = 1.0 + rng.uniform();
    }
    t.partials.push_back({m, common, Vector::Ones(f)});
    t.truth.push_back(perm);
  }
  return t;
}

}  // namespace testutil
