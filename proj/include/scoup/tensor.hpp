#pragma once

// Dense/coordinate 3-mode tensors and the multilinear kernels the solvers use.
//
// Index conventions (0-based internally):
//   unfold mode 1: I x (J*K), element (i,j,k) at column j*K + k
//   unfold mode 2: J x (K*I), element (i,j,k) at column k*I + i
//   unfold mode 3: K x (I*J), element (i,j,k) at column i*J + j
// which makes X(1) = A (B kr C)^T, X(2) = B (C kr A)^T, X(3) = C (A kr B)^T.

#include <Eigen/Dense>

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "scoup/error.hpp"

namespace scoup {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Dims3 = std::array<std::size_t, 3>;
using Index = Eigen::Index;

/// Below this fraction of nonzeros, loaders pick coordinate storage.
inline constexpr double kSparseDensityThreshold = 0.25;

struct Entry {
  std::size_t i = 0;
  std::size_t j = 0;
  std::size_t k = 0;
  double value = 0.0;

  friend bool operator==(const Entry&, const Entry&) = default;
};

inline bool key_less(const Entry& lhs, const Entry& rhs) {
  return std::tie(lhs.i, lhs.j, lhs.k) < std::tie(rhs.i, rhs.j, rhs.k);
}

inline void check_finite(const Matrix& m, const std::string& what) {
  if (!m.allFinite()) throw DataError(what + ": non-finite entry");
}

inline void check_mode(int mode) {
  if (mode < 1 || mode > 3)
    throw DimensionError("invalid mode " + std::to_string(mode) +
                         " (expected 1, 2 or 3)");
}

class Tensor3 {
 public:
  enum class Storage { dense, sparse };

  Tensor3() : Tensor3(Dims3{1, 1, 1}) {}

  /// Dense all-zero tensor.
  explicit Tensor3(Dims3 dims) : dims_(dims) {
    check_dims(dims_);
    values_.assign(size(), 0.0);
  }

  /// Dense tensor from row-major values, flat index (i*J + j)*K + k.
  static Tensor3 dense(Dims3 dims, std::vector<double> values) {
    Tensor3 t(dims);
    if (values.size() != t.size())
      throw DimensionError("dense tensor: expected " + std::to_string(t.size()) +
                           " values, got " + std::to_string(values.size()));
    for (double v : values)
      if (!std::isfinite(v)) throw DataError("tensor: non-finite entry");
    t.values_ = std::move(values);
    return t;
  }

  /// Coordinate tensor. Entries are sorted; duplicates and out-of-range
  /// coordinates are rejected.
  static Tensor3 sparse(Dims3 dims, std::vector<Entry> entries) {
    check_dims(dims);
    Tensor3 t;
    t.dims_ = dims;
    t.storage_ = Storage::sparse;
    t.values_.clear();
    std::sort(entries.begin(), entries.end(), key_less);
    for (std::size_t n = 0; n < entries.size(); ++n) {
      const Entry& e = entries[n];
      if (e.i >= dims[0] || e.j >= dims[1] || e.k >= dims[2])
        throw DataError("tensor: coordinate out of range");
      if (!std::isfinite(e.value)) throw DataError("tensor: non-finite entry");
      if (n > 0 && !key_less(entries[n - 1], e))
        throw DataError("tensor: duplicate coordinate (" + std::to_string(e.i + 1) +
                        "," + std::to_string(e.j + 1) + "," +
                        std::to_string(e.k + 1) + ")");
    }
    t.entries_ = std::move(entries);
    return t;
  }

  /// Picks coordinate storage when the nonzero fraction is below the threshold.
  static Tensor3 from_entries(Dims3 dims, std::vector<Entry> entries) {
    Tensor3 t = sparse(dims, std::move(entries));
    if (static_cast<double>(t.count_nonzero()) <
        kSparseDensityThreshold * static_cast<double>(t.size()))
      return t;
    return t.to_dense();
  }

  const Dims3& dims() const noexcept { return dims_; }
  std::size_t dim(int mode) const {
    check_mode(mode);
    return dims_[static_cast<std::size_t>(mode - 1)];
  }
  std::size_t size() const noexcept { return dims_[0] * dims_[1] * dims_[2]; }
  Storage storage() const noexcept { return storage_; }
  bool is_sparse() const noexcept { return storage_ == Storage::sparse; }

  std::size_t flat(std::size_t i, std::size_t j, std::size_t k) const noexcept {
    return (i * dims_[1] + j) * dims_[2] + k;
  }

  double operator()(std::size_t i, std::size_t j, std::size_t k) const {
    if (i >= dims_[0] || j >= dims_[1] || k >= dims_[2])
      throw DimensionError("tensor index out of range");
    if (!is_sparse()) return values_[flat(i, j, k)];
    const Entry key{i, j, k, 0.0};
    auto it = std::lower_bound(entries_.begin(), entries_.end(), key, key_less);
    if (it != entries_.end() && it->i == i && it->j == j && it->k == k) return it->value;
    return 0.0;
  }

  /// Visits nonzero entries in lexicographic (i, j, k) order. Both storages
  /// visit the same sequence, so reductions built on this agree bit for bit.
  template <class Fn>
  void for_each_nonzero(Fn&& fn) const {
    if (is_sparse()) {
      for (const Entry& e : entries_)
        if (e.value != 0.0) fn(e.i, e.j, e.k, e.value);
      return;
    }
    std::size_t n = 0;
    for (std::size_t i = 0; i < dims_[0]; ++i)
      for (std::size_t j = 0; j < dims_[1]; ++j)
        for (std::size_t k = 0; k < dims_[2]; ++k, ++n)
          if (values_[n] != 0.0) fn(i, j, k, values_[n]);
  }

  std::size_t count_nonzero() const {
    std::size_t n = 0;
    for_each_nonzero([&](std::size_t, std::size_t, std::size_t, double) { ++n; });
    return n;
  }

  std::vector<Entry> nonzeros() const {
    std::vector<Entry> out;
    for_each_nonzero([&](std::size_t i, std::size_t j, std::size_t k, double v) {
      out.push_back({i, j, k, v});
    });
    return out;
  }

  /// Row-major values; only valid for dense storage.
  const std::vector<double>& dense_values() const {
    if (is_sparse()) throw DimensionError("dense_values() on sparse tensor");
    return values_;
  }

  /// Stored coordinate list; only valid for sparse storage.
  const std::vector<Entry>& entries() const {
    if (!is_sparse()) throw DimensionError("entries() on dense tensor");
    return entries_;
  }

  Tensor3 to_dense() const {
    if (!is_sparse()) return *this;
    Tensor3 t(dims_);
    for (const Entry& e : entries_) t.values_[flat(e.i, e.j, e.k)] = e.value;
    return t;
  }

  Tensor3 to_sparse() const {
    if (is_sparse()) return *this;
    return sparse(dims_, nonzeros());
  }

  /// Same data, storage re-chosen by the density rule.
  Tensor3 with_auto_storage() const { return from_entries(dims_, nonzeros()); }

  /// Value equality, independent of storage.
  friend bool operator==(const Tensor3& lhs, const Tensor3& rhs) {
    return lhs.dims_ == rhs.dims_ && lhs.nonzeros() == rhs.nonzeros();
  }

 private:
  static void check_dims(const Dims3& dims) {
    for (std::size_t d : dims)
      if (d == 0) throw DimensionError("tensor dimensions must be positive");
  }

  Dims3 dims_{1, 1, 1};
  Storage storage_ = Storage::dense;
  std::vector<double> values_;
  std::vector<Entry> entries_;
};

namespace detail {

/// (row, column) of entry (i,j,k) in the mode-n unfolding.
inline std::pair<std::size_t, std::size_t> unfold_position(const Dims3& d, int mode,
                                                           std::size_t i, std::size_t j,
                                                           std::size_t k) {
  switch (mode) {
    case 1: return {i, j * d[2] + k};
    case 2: return {j, k * d[0] + i};
    default: return {k, i * d[1] + j};
  }
}

inline std::pair<std::size_t, std::size_t> unfold_shape(const Dims3& d, int mode) {
  switch (mode) {
    case 1: return {d[0], d[1] * d[2]};
    case 2: return {d[1], d[2] * d[0]};
    default: return {d[2], d[0] * d[1]};
  }
}

}  // namespace detail

inline Matrix unfold(const Tensor3& x, int mode) {
  check_mode(mode);
  const auto [rows, cols] = detail::unfold_shape(x.dims(), mode);
  Matrix m = Matrix::Zero(static_cast<Index>(rows), static_cast<Index>(cols));
  x.for_each_nonzero([&](std::size_t i, std::size_t j, std::size_t k, double v) {
    const auto [r, c] = detail::unfold_position(x.dims(), mode, i, j, k);
    m(static_cast<Index>(r), static_cast<Index>(c)) = v;
  });
  return m;
}

inline Tensor3 refold(const Matrix& m, int mode, Dims3 dims) {
  check_mode(mode);
  Tensor3 shape_check(dims);
  const auto [rows, cols] = detail::unfold_shape(dims, mode);
  detail::require_dims(m.rows() == static_cast<Index>(rows) &&
                           m.cols() == static_cast<Index>(cols),
                       "refold: matrix shape does not match mode/dims");
  check_finite(m, "refold");
  std::vector<double> values(shape_check.size());
  std::size_t n = 0;
  for (std::size_t i = 0; i < dims[0]; ++i)
    for (std::size_t j = 0; j < dims[1]; ++j)
      for (std::size_t k = 0; k < dims[2]; ++k, ++n) {
        const auto [r, c] = detail::unfold_position(dims, mode, i, j, k);
        values[n] = m(static_cast<Index>(r), static_cast<Index>(c));
      }
  return Tensor3::dense(dims, std::move(values));
}

/// Column-wise Kronecker product: row i*b.rows() + r, column f is a(i,f)*b(r,f).
inline Matrix khatri_rao(const Matrix& a, const Matrix& b) {
  detail::require_dims(a.cols() == b.cols(), "khatri_rao: column counts differ");
  Matrix out(a.rows() * b.rows(), a.cols());
  for (Index f = 0; f < a.cols(); ++f)
    for (Index i = 0; i < a.rows(); ++i)
      out.col(f).segment(i * b.rows(), b.rows()) = a(i, f) * b.col(f);
  return out;
}

inline Matrix hadamard(const Matrix& a, const Matrix& b) {
  detail::require_dims(a.rows() == b.rows() && a.cols() == b.cols(),
                       "hadamard: shapes differ");
  return a.cwiseProduct(b);
}

inline double frobenius_norm_sq(const Matrix& m) { return m.squaredNorm(); }

inline double frobenius_norm_sq(const Tensor3& x) {
  double sum = 0.0;
  x.for_each_nonzero([&](std::size_t, std::size_t, std::size_t, double v) { sum += v * v; });
  return sum;
}

/// The two factors that form the Khatri-Rao partner of `mode`:
/// mode 1 -> (B, C), mode 2 -> (C, A), mode 3 -> (A, B).
inline std::pair<int, int> kr_partners(int mode) {
  check_mode(mode);
  switch (mode) {
    case 1: return {2, 3};
    case 2: return {3, 1};
    default: return {1, 2};
  }
}

/// unfold(x, mode) * khatri_rao(first, second) without forming either operand,
/// where (first, second) are the factors named by kr_partners(mode).
inline Matrix mttkrp(const Tensor3& x, int mode, const Matrix& first, const Matrix& second) {
  check_mode(mode);
  const auto [p, q] = kr_partners(mode);
  detail::require_dims(first.cols() == second.cols(), "mttkrp: column counts differ");
  detail::require_dims(first.rows() == static_cast<Index>(x.dim(p)) &&
                           second.rows() == static_cast<Index>(x.dim(q)),
                       "mttkrp: factor rows do not match tensor dims");
  const Index rank = first.cols();
  Matrix out = Matrix::Zero(static_cast<Index>(x.dim(mode)), rank);
  x.for_each_nonzero([&](std::size_t i, std::size_t j, std::size_t k, double v) {
    const std::array<std::size_t, 3> idx{i, j, k};
    const auto row = static_cast<Index>(idx[static_cast<std::size_t>(mode - 1)]);
    const auto r1 = static_cast<Index>(idx[static_cast<std::size_t>(p - 1)]);
    const auto r2 = static_cast<Index>(idx[static_cast<std::size_t>(q - 1)]);
    for (Index f = 0; f < rank; ++f) out(row, f) += v * first(r1, f) * second(r2, f);
  });
  return out;
}

/// Tensor data plus up to three side matrices; y[n] is coupled on mode n+1.
struct CoupledData {
  Tensor3 x;
  std::array<std::optional<Matrix>, 3> y;

  void validate() const {
    for (std::size_t n = 0; n < 3; ++n) {
      if (!y[n]) continue;
      if (static_cast<std::size_t>(y[n]->rows()) != x.dims()[n])
        throw DimensionError("side matrix Y" + std::to_string(n + 1) +
                             " rows do not match tensor mode " + std::to_string(n + 1));
      if (y[n]->cols() < 1)
        throw DimensionError("side matrix Y" + std::to_string(n + 1) + " has no columns");
      check_finite(*y[n], "side matrix Y" + std::to_string(n + 1));
    }
  }

  bool has_side() const { return y[0] || y[1] || y[2]; }

  double energy() const {
    double e = frobenius_norm_sq(x);
    for (const auto& m : y)
      if (m) e += m->squaredNorm();
    return e;
  }
};

}  // namespace scoup
