#include <gtest/gtest.h>

#include "test_util.hpp"

using namespace scoup;
using testutil::random_matrix;

namespace {

double rel_err(const Matrix& got, const Matrix& want) {
  return (got - want).norm() / std::max(1.0, want.norm());
}

}  // namespace

TEST(Pinv, Examples) {
  EXPECT_LT((pinv(Matrix::Identity(3, 3)) - Matrix::Identity(3, 3)).norm(), 1e-15);
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 2.0;
  Matrix expect = Matrix::Zero(2, 2);
  expect(0, 0) = 0.5;
  EXPECT_LT((pinv(d) - expect).norm(), 1e-15);
  const Matrix m = random_matrix(6, 3, 1);
  EXPECT_LT((pinv(m) * m - Matrix::Identity(3, 3)).norm(), 1e-8);
}

TEST(Pinv, PenroseConditions) {
  for (std::uint64_t s = 0; s < 50; ++s) {
    const Index r = 1 + Index(s % 7), c = 1 + Index((s / 7) % 5);
    const Matrix m = random_matrix(r, c, 100 + s);
    const Matrix p = pinv(m);
    EXPECT_LT((m * p * m - m).norm(), 1e-8);
    EXPECT_LT((p * m * p - p).norm(), 1e-8);
    EXPECT_LT(((m * p).transpose() - m * p).norm(), 1e-8);
    EXPECT_LT(((p * m).transpose() - p * m).norm(), 1e-8);
  }
}

TEST(Pinv, RejectsNonFinite) {
  Matrix m = Matrix::Ones(2, 2);
  m(0, 1) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(pinv(m), NumericError);
  EXPECT_THROW(pinv(Matrix::Ones(2, 2), PinvOptions{0.0}), DimensionError);
}

TEST(StackedKr, ScalarCase) {
  const Matrix one = Matrix::Ones(1, 1);
  Matrix rhs(2, 1);
  rhs << 2, 3;
  const Matrix got = stacked_kr_pinv_apply(one, one, one, rhs);
  EXPECT_NEAR(got(0, 0), 2.5, 1e-15);
}

TEST(StackedKr, MatchesNaivePinv) {
  const Matrix a = random_matrix(4, 2, 1), b = random_matrix(3, 2, 2), m = random_matrix(5, 2, 3);
  const Matrix rhs = random_matrix(17, 6, 4);
  const Matrix naive = pinv(testutil::stacked(a, b, m)) * rhs;
  EXPECT_LT(rel_err(stacked_kr_pinv_apply(a, b, m, rhs), naive), 1e-8);
}

TEST(StackedKr, NoCoupling) {
  const Matrix a = random_matrix(4, 3, 5), b = random_matrix(3, 3, 6);
  const Matrix none(0, 3);
  const Matrix rhs = random_matrix(12, 4, 7);
  EXPECT_LT(rel_err(stacked_kr_pinv_apply(a, b, none, rhs), pinv(khatri_rao(a, b)) * rhs), 1e-8);
}

TEST(StackedKr, RandomInstances) {
  Rng rng(2024);
  for (int t = 0; t < 200; ++t) {
    const Index f = 1 + Index(rng.next() % 4);
    const Index ar = 1 + Index(rng.next() % 8), br = 1 + Index(rng.next() % 8);
    const Index mr = 1 + Index(rng.next() % 8);
    if (ar * br + mr < f) continue;
    const Matrix a = random_matrix(ar, f, rng.next()), b = random_matrix(br, f, rng.next());
    const Matrix m = random_matrix(mr, f, rng.next());
    const Matrix rhs = random_matrix(ar * br + mr, 3, rng.next());
    const Matrix naive = pinv(testutil::stacked(a, b, m)) * rhs;
    EXPECT_LT(rel_err(stacked_kr_pinv_apply(a, b, m, rhs), naive), 1e-8) << "trial " << t;
  }
}

TEST(StackedKr, DimensionErrors) {
  const Matrix a = Matrix::Ones(2, 2), b = Matrix::Ones(2, 2);
  EXPECT_THROW(stacked_kr_pinv_apply(a, Matrix::Ones(2, 3), Matrix(0, 2), Matrix::Ones(4, 1)),
               DimensionError);
  EXPECT_THROW(stacked_kr_pinv_apply(a, b, Matrix::Ones(1, 3), Matrix::Ones(5, 1)), DimensionError);
  EXPECT_THROW(stacked_kr_pinv_apply(a, b, Matrix::Ones(1, 2), Matrix::Ones(4, 1)), DimensionError);
}

TEST(LsSolve, Examples) {
  const Matrix r = random_matrix(3, 2, 9);
  EXPECT_LT((ls_solve(Matrix::Identity(3, 3), r) - r).norm(), 1e-14);
  Matrix a(2, 1), rhs(2, 1);
  a << 1, 1;
  rhs << 1, 3;
  EXPECT_NEAR(ls_solve(a, rhs)(0, 0), 2.0, 1e-14);
  const Matrix sq = random_matrix(4, 4, 10) + 4 * Matrix::Identity(4, 4);
  const Matrix b = random_matrix(4, 2, 11);
  EXPECT_LT((ls_solve(sq, b) - sq.lu().solve(b)).norm(), 1e-10);
  EXPECT_THROW(ls_solve(sq, Matrix::Ones(3, 1)), DimensionError);
}
