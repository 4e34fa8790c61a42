#pragma once

#include <array>
#include <optional>
#include <string>

#include "scoup/tensor.hpp"

namespace scoup {

/// CMTF model. tensor[n] is the mode-(n+1) factor (A, B, C); side[n] is the
/// factor of the uncoupled mode of Y(n+1): D for Y1, E for Y2, G for Y3.
/// Each column carries a scale: the model tensor is
///   sum_f la(f) lb(f) lc(f) a_f o b_f o c_f
/// and Y1 is modelled as A diag(la * ld) D^T (likewise Y2, Y3).
struct FactorSet {
  std::array<Matrix, 3> tensor;
  std::array<std::optional<Matrix>, 3> side;
  std::array<Vector, 3> tensor_lambda;
  std::array<Vector, 3> side_lambda;

  Index rank() const { return tensor[0].cols(); }

  /// Sets every lambda to ones (length = rank), sized for present sides.
  void reset_lambdas() {
    const Index f = rank();
    for (std::size_t n = 0; n < 3; ++n) {
      tensor_lambda[n] = Vector::Ones(f);
      side_lambda[n] = side[n] ? Vector::Ones(f) : Vector();
    }
  }

  void validate() const {
    const Index f = rank();
    detail::require_dims(f >= 1, "factor set: rank must be >= 1");
    for (std::size_t n = 0; n < 3; ++n) {
      detail::require_dims(tensor[n].cols() == f, "factor set: column counts differ");
      detail::require_dims(tensor_lambda[n].size() == f, "factor set: lambda length mismatch");
      if (side[n]) {
        detail::require_dims(side[n]->cols() == f, "factor set: column counts differ");
        detail::require_dims(side_lambda[n].size() == f, "factor set: lambda length mismatch");
      }
    }
  }

  /// Per-component weight of the tensor term: la * lb * lc.
  Vector tensor_weights() const {
    return tensor_lambda[0].cwiseProduct(tensor_lambda[1]).cwiseProduct(tensor_lambda[2]);
  }

  /// Factors with lambdas multiplied into the columns. The coupled mode of
  /// each side term uses the same scaled tensor factor, so the side factor
  /// takes only its own lambda.
  FactorSet absorbed() const {
    FactorSet out = *this;
    for (std::size_t n = 0; n < 3; ++n) {
      out.tensor[n] = tensor[n] * tensor_lambda[n].asDiagonal();
      if (side[n]) out.side[n] = *side[n] * side_lambda[n].asDiagonal();
    }
    out.reset_lambdas();
    return out;
  }
};

inline const char* factor_name(bool is_side, std::size_t n) {
  static constexpr const char* kTensor[] = {"A", "B", "C"};
  static constexpr const char* kSide[] = {"D", "E", "G"};
  return is_side ? kSide[n] : kTensor[n];
}

/// Model value at (i, j, k).
inline double model_entry(const FactorSet& f, const Vector& weights, std::size_t i,
                          std::size_t j, std::size_t k) {
  const auto ri = static_cast<Index>(i), rj = static_cast<Index>(j),
             rk = static_cast<Index>(k);
  double v = 0.0;
  for (Index c = 0; c < f.rank(); ++c)
    v += weights(c) * f.tensor[0](ri, c) * f.tensor[1](rj, c) * f.tensor[2](rk, c);
  return v;
}

/// Dense reconstruction of the tensor term.
inline Tensor3 reconstruct_tensor(const FactorSet& f) {
  f.validate();
  const Dims3 dims{static_cast<std::size_t>(f.tensor[0].rows()),
                   static_cast<std::size_t>(f.tensor[1].rows()),
                   static_cast<std::size_t>(f.tensor[2].rows())};
  const Vector w = f.tensor_weights();
  std::vector<double> values(dims[0] * dims[1] * dims[2]);
  std::size_t n = 0;
  for (std::size_t i = 0; i < dims[0]; ++i)
    for (std::size_t j = 0; j < dims[1]; ++j)
      for (std::size_t k = 0; k < dims[2]; ++k) values[n++] = model_entry(f, w, i, j, k);
  return Tensor3::dense(dims, std::move(values));
}

/// Reconstruction of side matrix Y(n+1), n in {0,1,2}.
inline Matrix reconstruct_side(const FactorSet& f, std::size_t n) {
  f.validate();
  detail::require_dims(n < 3, "reconstruct_side: index out of range");
  if (!f.side[n])
    throw DimensionError(std::string("reconstruct: factor ") + factor_name(true, n) +
                         " is missing");
  const Vector w = f.tensor_lambda[n].cwiseProduct(f.side_lambda[n]);
  return f.tensor[n] * w.asDiagonal() * f.side[n]->transpose();
}

}  // namespace scoup
