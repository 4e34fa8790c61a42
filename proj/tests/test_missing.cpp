#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace scoup;
using testutil::random_matrix;

namespace {

PlantedInstance planted(std::uint64_t seed, double missing, double snr_db = kInfinity) {
  PlantedOptions o;
  o.dims = {10, 9, 8};
  o.side_cols = {6, 0, 5};
  o.rank = 2;
  o.seed = seed;
  o.missing = missing;
  o.snr_db = snr_db;
  return make_planted(o);
}

SolverOptions solver(std::uint64_t seed) {
  SolverOptions s;
  s.rank = 2;
  s.seed = seed;
  return s;
}

}  // namespace

TEST(ScalarWls, Examples) {
  Vector x(2), a(2), w(2);
  x << 2, 4;
  a << 1, 2;
  w << 1, 1;
  EXPECT_DOUBLE_EQ(scalar_wls(x, a, w), 2.0);
  x << 2, 999;
  a << 1, 5;
  w << 1, 0;
  EXPECT_DOUBLE_EQ(scalar_wls(x, a, w), 2.0);
  w << 0, 0;
  EXPECT_EQ(scalar_wls(x, a, w), 0.0);
  EXPECT_THROW(scalar_wls(x, Vector::Ones(3), w), DimensionError);
}

TEST(ScalarWls, StationaryPoint) {
  Rng rng(3);
  for (int t = 0; t < 50; ++t) {
    Vector x(7), a(7), w(7);
    for (Index i = 0; i < 7; ++i) {
      x(i) = rng.normal();
      a(i) = rng.normal();
      w(i) = rng.uniform() < 0.6 ? 1.0 : 0.0;
    }
    w(0) = 1.0;
    const double b = scalar_wls(x, a, w);
    const double grad = -2.0 * (w.array() * (x - a * b).array() * a.array()).sum();
    EXPECT_NEAR(grad, 0.0, 1e-10);
  }
}

TEST(WlsFactor, FullMaskMatchesLeastSquares) {
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Matrix a = random_matrix(12, 3, s), x = random_matrix(12, 5, 100 + s);
    const WlsResult r = wls_factor(x, Matrix::Ones(12, 5), a, Matrix::Zero(5, 3), 1e-14, 5000);
    const Matrix want = (pinv(a) * x).transpose();
    EXPECT_LT((r.b - want).norm(), 1e-6 * std::max(1.0, want.norm()));
    for (std::size_t t = 1; t < r.trace.size(); ++t) EXPECT_LE(r.trace[t], r.trace[t - 1] + 1e-12);
  }
}

TEST(WlsFactor, RankOneHalfMasked) {
  const Vector a = random_matrix(10, 1, 1).col(0), b = random_matrix(6, 1, 2).col(0);
  const Matrix x = a * b.transpose();
  Matrix w = Matrix::Ones(10, 6);
  Rng rng(4);
  for (Index j = 0; j < 6; ++j)
    for (Index i = 0; i < 10; ++i)
      if (rng.uniform() < 0.5) w(i, j) = 0.0;
  for (Index j = 0; j < 6; ++j) w(Index(j % 10), j) = 1.0;
  const WlsResult r = wls_factor(x, w, a, Matrix::Zero(6, 1), 1e-14, 50);
  EXPECT_LT((r.b.col(0) - b).norm(), 1e-6);
}

TEST(WlsFactor, FixedPoint) {
  const Matrix a = random_matrix(8, 2, 5), x = random_matrix(8, 4, 6);
  Matrix w = Matrix::Ones(8, 4);
  Matrix b = (pinv(a) * x).transpose();
  EXPECT_LT((wls_factor(x, w, a, b, 1e-16, 1).b - b).norm(), 1e-12);
  // per-column weighted minimizer under a partial mask
  w(1, 0) = w(4, 2) = w(6, 3) = 0.0;
  for (Index j = 0; j < 4; ++j) {
    const Matrix rows = w.col(j).asDiagonal() * a;
    b.row(j) = (pinv(rows) * w.col(j).cwiseProduct(x.col(j))).transpose();
  }
  EXPECT_LT((wls_factor(x, w, a, b, 1e-16, 1).b - b).norm(), 1e-12);
}

TEST(WlsFactor, CoordinateUpdatesNeverIncrease) {
  const Matrix a = random_matrix(9, 3, 7), x = random_matrix(9, 4, 8);
  Matrix w = Matrix::Ones(9, 4);
  w(0, 0) = w(3, 2) = w(5, 1) = 0.0;
  Matrix b = random_matrix(4, 3, 9);
  auto masked = [&](const Matrix& bb) {
    return (w.array() != 0.0).select(x - a * bb.transpose(), 0.0).squaredNorm();
  };
  double last = masked(b);
  for (int sweep = 0; sweep < 3; ++sweep)
    for (Index f = 0; f < 3; ++f)
      for (Index j = 0; j < 4; ++j) {
        const Vector target = x.col(j) - a * b.row(j).transpose() + a.col(f) * b(j, f);
        b(j, f) = scalar_wls(target, a.col(f), w.col(j));
        const double now = masked(b);
        EXPECT_LE(now, last + 1e-12);
        last = now;
      }
  const WlsResult r = wls_factor(x, w, a, random_matrix(4, 3, 9), 1e-300, 20);
  for (std::size_t t = 1; t < r.trace.size(); ++t) EXPECT_LE(r.trace[t], r.trace[t - 1] + 1e-12);
}

TEST(WeightedObjective, Examples) {
  const auto inst = planted(1, 0.0, 10.0);
  FactorSet f = inst.truth;
  f.tensor[0] *= 1.1;
  const WeightMask full = WeightMask::full(inst.data);
  EXPECT_NEAR(weighted_objective(inst.data, full, f), objective(inst.data, f),
              1e-10 * objective(inst.data, f));
  WeightMask none = full;
  none.w = Tensor3(inst.data.x.dims());
  none.w_side[0] = Matrix::Zero(10, 6);
  none.w_side[2] = Matrix::Zero(8, 5);
  EXPECT_EQ(weighted_objective(inst.data, none, f), 0.0);

  const WeightMask m = nested_missing_mask(inst.data, 0.3, 2);
  double want = 0;
  const Tensor3 model = reconstruct_tensor(f);
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t j = 0; j < 9; ++j)
      for (std::size_t k = 0; k < 8; ++k)
        if (m.w(i, j, k) != 0.0) want += std::pow(inst.data.x(i, j, k) - model(i, j, k), 2);
  for (std::size_t n : {0u, 2u}) want += (*inst.data.y[n] - reconstruct_side(f, n)).squaredNorm();
  EXPECT_NEAR(weighted_objective(inst.data, m, f), want, 1e-10 * want);
}

TEST(WeightMask, Validation) {
  const auto inst = planted(1, 0.0);
  WeightMask m = WeightMask::full(inst.data);
  m.w = Tensor3::dense(inst.data.x.dims(), std::vector<double>(inst.data.x.size(), 0.5));
  EXPECT_THROW(m.validate(inst.data), DataError);
  m = WeightMask::full(inst.data);
  m.w_side[0] = Matrix::Ones(3, 3);
  EXPECT_THROW(m.validate(inst.data), DimensionError);
}

TEST(CmtfWals, FullMaskMatchesAls) {
  const auto inst = planted(3, 0.0, 20.0);
  SolverOptions o = solver(5);
  o.max_sweeps = 200;
  o.rel_change_tol = 1e-9;
  const double als = cmtf_als(inst.data, o).final_objective();
  const double wals = cmtf_wals(inst.data, WeightMask::full(inst.data), o).final_objective();
  EXPECT_NEAR(wals, als, 1e-6 * als);
}

TEST(CmtfWals, MonotoneWeightedObjective) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    const auto inst = planted(10 + s, 0.2, 15.0);
    const SolverResult r = cmtf_wals(inst.data, *inst.mask, solver(s));
    for (std::size_t t = 1; t < r.trace.size(); ++t)
      EXPECT_LE(r.trace[t], r.trace[t - 1] + 1e-9 * r.trace[0]);
  }
}

TEST(CmtfWals, MaskedEntriesAreInert) {
  const auto inst = planted(4, 0.25, 20.0);
  const WeightMask& mask = *inst.mask;
  CoupledData poisoned = inst.data;
  std::vector<double> v = poisoned.x.dense_values();
  Rng rng(9);
  for (std::size_t n = 0; n < v.size(); ++n)
    if (mask.w.dense_values()[n] == 0.0) v[n] = 1e6 * rng.normal();
  poisoned.x = Tensor3::dense(poisoned.x.dims(), v);
  const SolverResult a = cmtf_wals(inst.data, mask, solver(1));
  const SolverResult b = cmtf_wals(poisoned, mask, solver(1));
  EXPECT_EQ(a.trace, b.trace);
  for (std::size_t n = 0; n < 3; ++n) {
    EXPECT_EQ(a.factors.tensor[n], b.factors.tensor[n]);
    if (a.factors.side[n]) EXPECT_EQ(*a.factors.side[n], *b.factors.side[n]);
  }
}

TEST(CmtfWals, TenPercentMissingRecovers) {
  PlantedOptions o;
  o.dims = {20, 20, 20};
  o.side_cols = {10, 10, 10};
  o.rank = 2;
  o.seed = 6;
  o.missing = 0.1;
  const auto inst = make_planted(o);
  SolverOptions so = solver(2);
  so.rel_change_tol = 1e-10;
  const SolverResult r = cmtf_wals(inst.data, *inst.mask, so);
  const Tensor3 model = reconstruct_tensor(r.factors);
  double err = 0, norm = 0;
  for (std::size_t i = 0; i < 20; ++i)
    for (std::size_t j = 0; j < 20; ++j)
      for (std::size_t k = 0; k < 20; ++k) {
        if (inst.mask->w(i, j, k) == 0.0) continue;
        err += std::pow(inst.data.x(i, j, k) - model(i, j, k), 2);
        norm += std::pow(inst.data.x(i, j, k), 2);
      }
  EXPECT_LT(std::sqrt(err / norm), 1e-3);
}

TEST(CmtfWals, HalfMissingCompletes) {
  const auto base = planted(7, 0.0, 20.0);
  const WeightMask m = nested_missing_mask(base.data, 0.5, 3);
  const SolverResult full = cmtf_als(base.data, solver(2));
  const SolverResult half = cmtf_wals(base.data, m, solver(2));
  const double value = snr(reconstruct_tensor(half.factors), reconstruct_tensor(full.factors));
  EXPECT_TRUE(std::isfinite(value));
  EXPECT_GT(value, 0.0);
}

TEST(NestedMask, Nested) {
  const auto inst = planted(1, 0.0);
  const WeightMask small = nested_missing_mask(inst.data, 0.1, 5);
  const WeightMask large = nested_missing_mask(inst.data, 0.3, 5);
  const auto& a = small.w.dense_values();
  const auto& b = large.w.dense_values();
  for (std::size_t n = 0; n < a.size(); ++n)
    if (a[n] == 0.0) EXPECT_EQ(b[n], 0.0);
}
