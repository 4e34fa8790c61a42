#include <gtest/gtest.h>

#include <cstdlib>

#include "test_util.hpp"

extern "C" void* __libc_malloc(std::size_t);

namespace {
bool g_tracking = false;
std::size_t g_largest = 0;
std::size_t g_count = 0;
}  // namespace

extern "C" void* malloc(std::size_t size) {
  if (g_tracking) {
    g_largest = std::max(g_largest, size);
    ++g_count;
  }
  return __libc_malloc(size);
}

using namespace scoup;
using testutil::random_matrix;

TEST(StackedKrAllocation, StaysWithinBound) {
  for (Index f : {1, 2, 3, 4}) {
    const Matrix a = random_matrix(9, f, 1), b = random_matrix(7, f, 2), m = random_matrix(6, f, 3);
    const Index rows = a.rows() * b.rows() + m.rows();
    // narrow rhs so the output is smaller than the bound
    const Matrix rhs = random_matrix(rows, 2, 4);
    const std::size_t bound =
        sizeof(double) * std::size_t(std::max<Index>(f * f, f * rows));
    g_largest = 0;
    g_count = 0;
    g_tracking = true;
    const Matrix out = stacked_kr_pinv_apply(a, b, m, rhs);
    g_tracking = false;
    EXPECT_GT(g_count, 0u);
    EXPECT_LE(g_largest, bound) << "F=" << f;
    EXPECT_EQ(out.rows(), f);
  }
}
