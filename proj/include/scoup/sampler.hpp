#pragma once

// Density-biased index sampling and coupled sub-dataset extraction.

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <iterator>
#include <numeric>
#include <optional>
#include <string>
#include <vector>

#include "scoup/rng.hpp"
#include "scoup/tensor.hpp"

namespace scoup {

/// Marginal absolute sums. tensor[n] is indexed by mode n+1 of the tensor and
/// includes the coupled side matrix rows; side[n] is indexed by the columns of
/// Y(n+1) (empty when that matrix is absent).
struct DensityProfile {
  std::array<Vector, 3> tensor;
  std::array<Vector, 3> side;
};

struct IndexSet {
  std::vector<std::size_t> common;  ///< sorted
  std::vector<std::size_t> fresh;   ///< sorted, disjoint from common

  /// Sorted union of the common and fresh blocks.
  std::vector<std::size_t> effective() const {
    std::vector<std::size_t> out;
    out.reserve(common.size() + fresh.size());
    std::merge(common.begin(), common.end(), fresh.begin(), fresh.end(),
               std::back_inserter(out));
    return out;
  }

  std::size_t size() const { return common.size() + fresh.size(); }
};

/// Index sets of one repetition: tensor[n] for tensor mode n+1 (and the rows
/// of Y(n+1)), side[n] for the columns of Y(n+1).
struct SampleSpec {
  std::array<IndexSet, 3> tensor;
  std::array<std::optional<IndexSet>, 3> side;
};

/// How large the fresh block of a repetition is.
///  literal: round(dim / (s (1 - p))) fresh indices on top of the common block.
///  total:   the common and fresh blocks together hold about dim / s indices.
enum class SampleSizing { literal, total };

struct SamplingOptions {
  /// Sampling factors for the tensor modes and for the uncoupled side modes.
  std::array<double, 3> s_tensor{1.0, 1.0, 1.0};
  std::array<double, 3> s_side{1.0, 1.0, 1.0};
  /// Fraction of each sample shared by all repetitions, in [0, 1).
  double p = 0.35;
  int r = 1;
  std::uint64_t seed = 0;
  /// Lower bound on a mode's sample size; the driver sets it to the rank.
  std::size_t min_size = 1;
  SampleSizing sizing = SampleSizing::literal;

  void validate() const {
    for (double s : s_tensor)
      if (!(s >= 1.0)) throw DimensionError("sampling: every s must be >= 1");
    for (double s : s_side)
      if (!(s >= 1.0)) throw DimensionError("sampling: every s must be >= 1");
    if (!(p >= 0.0 && p < 1.0)) throw DimensionError("sampling: p must be in [0, 1)");
    if (r < 1) throw DimensionError("sampling: r must be >= 1");
  }
};

/// Sample size of a mode: max(min_size, round(dim / s)), capped at dim.
inline std::size_t target_sample_size(std::size_t dim, double s, std::size_t min_size) {
  const auto base = static_cast<std::size_t>(std::llround(static_cast<double>(dim) / s));
  return std::min(dim, std::max(min_size, std::max<std::size_t>(base, 1)));
}

/// Common-block size: ceil(p * target), zero when p == 0.
inline std::size_t common_block_size(std::size_t target, double p) {
  if (p <= 0.0) return 0;
  const double raw = p * static_cast<double>(target);
  return std::min(target, static_cast<std::size_t>(std::ceil(raw - 1e-9)));
}

/// Fresh-block size before clamping to the indices left outside the common block.
inline std::size_t fresh_block_size(std::size_t dim, double s, double p, std::size_t min_size,
                                    SampleSizing sizing) {
  const std::size_t target = target_sample_size(dim, s, min_size);
  const std::size_t common = common_block_size(target, p);
  if (sizing == SampleSizing::total) return target - common;
  const auto literal =
      static_cast<std::size_t>(std::llround(static_cast<double>(dim) / (s * (1.0 - p))));
  return std::max(literal, target - common);
}

namespace detail {

enum : std::uint64_t { kPhaseCommon = 1, kPhaseFresh = 2 };

/// Slot ids for rng streams: tensor modes 0..2, side modes 3..5.
constexpr std::uint64_t slot_id(bool is_side, std::size_t n) { return (is_side ? 3 : 0) + n; }

/// Successive weighted draws with renormalization, skipping `excluded`.
/// Falls back to uniform over what remains once no positive weight is left.
inline std::vector<std::size_t> weighted_sample(const Vector& weights,
                                                const std::vector<char>& excluded,
                                                std::size_t count, Rng& rng,
                                                std::vector<std::string>& warnings,
                                                const std::string& label) {
  const auto n = static_cast<std::size_t>(weights.size());
  std::vector<char> taken(excluded);
  std::vector<std::size_t> out;
  out.reserve(count);
  bool warned = false;
  for (std::size_t draw = 0; draw < count; ++draw) {
    double total = 0.0;
    std::size_t remaining = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (!taken[i]) {
        total += weights(static_cast<Index>(i));
        ++remaining;
      }
    if (remaining == 0) break;
    std::size_t pick = n;
    if (total > 0.0) {
      const double u = rng.uniform() * total;
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i] || weights(static_cast<Index>(i)) <= 0.0) continue;
        acc += weights(static_cast<Index>(i));
        pick = i;
        if (u < acc) break;
      }
    } else {
      if (!warned) {
        warnings.push_back(label + ": no density left, sampling uniformly");
        warned = true;
      }
      auto target = static_cast<std::size_t>(rng.uniform() * static_cast<double>(remaining));
      for (std::size_t i = 0; i < n; ++i) {
        if (taken[i]) continue;
        if (target == 0) {
          pick = i;
          break;
        }
        --target;
      }
    }
    taken[pick] = 1;
    out.push_back(pick);
  }
  std::sort(out.begin(), out.end());
  return out;
}

inline std::string slot_label(bool is_side, std::size_t n) {
  return is_side ? "side mode of Y" + std::to_string(n + 1)
                 : "tensor mode " + std::to_string(n + 1);
}

}  // namespace detail

inline DensityProfile density_profile(const CoupledData& data) {
  data.validate();
  DensityProfile dp;
  const auto& dims = data.x.dims();
  for (std::size_t n = 0; n < 3; ++n) dp.tensor[n] = Vector::Zero(static_cast<Index>(dims[n]));
  data.x.for_each_nonzero([&](std::size_t i, std::size_t j, std::size_t k, double v) {
    const double a = std::abs(v);
    dp.tensor[0](static_cast<Index>(i)) += a;
    dp.tensor[1](static_cast<Index>(j)) += a;
    dp.tensor[2](static_cast<Index>(k)) += a;
  });
  for (std::size_t n = 0; n < 3; ++n) {
    if (!data.y[n]) continue;
    const Matrix abs = data.y[n]->cwiseAbs();
    dp.tensor[n] += abs.rowwise().sum();
    dp.side[n] = abs.colwise().sum().transpose();
  }
  return dp;
}

/// Common blocks for every mode, drawn once before any repetition.
inline SampleSpec draw_common(const DensityProfile& dp, const SamplingOptions& opts,
                              std::vector<std::string>& warnings) {
  opts.validate();
  SampleSpec spec;
  auto draw = [&](const Vector& density, double s, bool is_side, std::size_t n) {
    IndexSet set;
    const auto dim = static_cast<std::size_t>(density.size());
    const std::size_t count =
        common_block_size(target_sample_size(dim, s, opts.min_size), opts.p);
    if (count == 0) return set;
    const std::string label = detail::slot_label(is_side, n);
    if (density.sum() <= 0.0) warnings.push_back(label + ": all-zero density, sampling uniformly");
    Rng rng(stream_seed(opts.seed, detail::kPhaseCommon, 0, detail::slot_id(is_side, n)));
    set.common = detail::weighted_sample(density, std::vector<char>(dim, 0), count, rng,
                                         warnings, label);
    return set;
  };
  for (std::size_t n = 0; n < 3; ++n) {
    spec.tensor[n] = draw(dp.tensor[n], opts.s_tensor[n], false, n);
    if (dp.side[n].size() > 0) spec.side[n] = draw(dp.side[n], opts.s_side[n], true, n);
  }
  return spec;
}

/// Adds a fresh block to each common block. The stream of repetition `rep`
/// depends only on (seed, rep, mode).
inline SampleSpec draw_repetition(const DensityProfile& dp, const SampleSpec& common,
                                  const SamplingOptions& opts, int rep,
                                  std::vector<std::string>& warnings) {
  opts.validate();
  SampleSpec spec = common;
  auto draw = [&](const Vector& density, double s, bool is_side, std::size_t n,
                  IndexSet& set) {
    const auto dim = static_cast<std::size_t>(density.size());
    std::size_t count = fresh_block_size(dim, s, opts.p, opts.min_size, opts.sizing);
    const std::size_t available = dim - set.common.size();
    const std::string label = detail::slot_label(is_side, n);
    if (count > available) {
      warnings.push_back(label + ": fresh block clamped to " + std::to_string(available));
      count = available;
    }
    std::vector<char> excluded(dim, 0);
    for (std::size_t i : set.common) excluded[i] = 1;
    Rng rng(stream_seed(opts.seed, detail::kPhaseFresh, static_cast<std::uint64_t>(rep),
                        detail::slot_id(is_side, n)));
    set.fresh = detail::weighted_sample(density, excluded, count, rng, warnings, label);
  };
  for (std::size_t n = 0; n < 3; ++n) {
    draw(dp.tensor[n], opts.s_tensor[n], false, n, spec.tensor[n]);
    if (spec.side[n]) draw(dp.side[n], opts.s_side[n], true, n, *spec.side[n]);
  }
  return spec;
}

/// A sub-dataset together with the original indices of its rows.
struct SampledData {
  CoupledData data;
  /// tensor_index[n][r] is the original index of row r of mode n+1; it is
  /// also the row map of the sampled Y(n+1).
  std::array<std::vector<std::size_t>, 3> tensor_index;
  /// Original column indices of each sampled Y(n+1).
  std::array<std::vector<std::size_t>, 3> side_index;
};

inline SampledData extract(const CoupledData& data, const SampleSpec& spec) {
  data.validate();
  SampledData out;
  const auto& dims = data.x.dims();
  for (std::size_t n = 0; n < 3; ++n) {
    out.tensor_index[n] = spec.tensor[n].effective();
    if (out.tensor_index[n].empty()) throw DimensionError("extract: empty index set");
    for (std::size_t idx : out.tensor_index[n])
      if (idx >= dims[n]) throw DimensionError("extract: index out of bounds");
  }
  const Dims3 sub{out.tensor_index[0].size(), out.tensor_index[1].size(),
                  out.tensor_index[2].size()};

  if (data.x.is_sparse()) {
    std::array<std::vector<std::ptrdiff_t>, 3> position;
    for (std::size_t n = 0; n < 3; ++n) {
      position[n].assign(dims[n], -1);
      for (std::size_t r = 0; r < out.tensor_index[n].size(); ++r)
        position[n][out.tensor_index[n][r]] = static_cast<std::ptrdiff_t>(r);
    }
    std::vector<Entry> kept;
    for (const Entry& e : data.x.entries()) {
      const auto pi = position[0][e.i], pj = position[1][e.j], pk = position[2][e.k];
      if (pi < 0 || pj < 0 || pk < 0) continue;
      kept.push_back({static_cast<std::size_t>(pi), static_cast<std::size_t>(pj),
                      static_cast<std::size_t>(pk), e.value});
    }
    out.data.x = Tensor3::sparse(sub, std::move(kept));
  } else {
    std::vector<double> values;
    values.reserve(sub[0] * sub[1] * sub[2]);
    const auto& src = data.x.dense_values();
    for (std::size_t i : out.tensor_index[0])
      for (std::size_t j : out.tensor_index[1])
        for (std::size_t k : out.tensor_index[2]) values.push_back(src[data.x.flat(i, j, k)]);
    out.data.x = Tensor3::dense(sub, std::move(values));
  }

  for (std::size_t n = 0; n < 3; ++n) {
    if (!data.y[n]) continue;
    if (!spec.side[n]) throw DimensionError("extract: missing side index set");
    out.side_index[n] = spec.side[n]->effective();
    const Matrix& y = *data.y[n];
    for (std::size_t c : out.side_index[n])
      if (c >= static_cast<std::size_t>(y.cols()))
        throw DimensionError("extract: side index out of bounds");
    const auto& rows = out.tensor_index[n];
    const auto& cols = out.side_index[n];
    Matrix m(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
    for (std::size_t c = 0; c < cols.size(); ++c)
      for (std::size_t r = 0; r < rows.size(); ++r)
        m(static_cast<Index>(r), static_cast<Index>(c)) =
            y(static_cast<Index>(rows[r]), static_cast<Index>(cols[c]));
    out.data.y[n] = std::move(m);
  }
  return out;
}

/// Full-range spec: every index of every mode in the fresh block.
inline SampleSpec full_spec(const CoupledData& data) {
  SampleSpec spec;
  for (std::size_t n = 0; n < 3; ++n) {
    spec.tensor[n].fresh.resize(data.x.dims()[n]);
    std::iota(spec.tensor[n].fresh.begin(), spec.tensor[n].fresh.end(), std::size_t{0});
    if (data.y[n]) {
      IndexSet s;
      s.fresh.resize(static_cast<std::size_t>(data.y[n]->cols()));
      std::iota(s.fresh.begin(), s.fresh.end(), std::size_t{0});
      spec.side[n] = std::move(s);
    }
  }
  return spec;
}

}  // namespace scoup
