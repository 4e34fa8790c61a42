#pragma once

// Planted low-rank coupled instances for tests and benchmarks.

#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <vector>

#include "scoup/missing.hpp"
#include "scoup/rng.hpp"

namespace scoup {

struct PlantedOptions {
  Dims3 dims{20, 20, 20};
  /// Columns of Y1..Y3; 0 means the side matrix is absent.
  std::array<std::size_t, 3> side_cols{0, 0, 0};
  Index rank = 2;
  /// Signal-to-noise power ratio in dB; +inf means noiseless.
  double snr_db = std::numeric_limits<double>::infinity();
  /// Probability that a tensor entry is kept (1 = dense).
  double density = 1.0;
  /// Fraction of tensor entries marked missing in the mask.
  double missing = 0.0;
  std::uint64_t seed = 0;
  /// Orthonormal columns for the Y1 factor and a third-mode factor near 1, so
  /// that every slice X(i,:,k) is close to B D^T Y1(i,:)^T.
  bool predictable = false;
};

struct PlantedInstance {
  CoupledData data;
  FactorSet truth;
  std::optional<WeightMask> mask;
};

namespace detail {

enum : std::uint64_t { kGenFactors = 11, kGenNoise = 12, kGenDensity = 13, kGenMissing = 14 };

/// Scales `noise` so that ||signal||^2 / ||noise||^2 = 10^(snr_db / 10).
inline double noise_scale(double signal_sq, double noise_sq, double snr_db) {
  if (noise_sq <= 0.0) return 0.0;
  return std::sqrt(signal_sq / std::pow(10.0, snr_db / 10.0) / noise_sq);
}

}  // namespace detail

/// Factors are uniform in [0,1). Noise is Gaussian, rescaled per block to hit
/// the requested SNR exactly. Sparsification keeps each tensor entry with
/// probability `density`; the mask hides a `missing` fraction of entries.
inline PlantedInstance make_planted(const PlantedOptions& opts) {
  if (opts.rank < 1) throw DimensionError("planted: rank must be >= 1");
  if (!(opts.density > 0.0 && opts.density <= 1.0))
    throw DimensionError("planted: density must be in (0, 1]");
  if (!(opts.missing >= 0.0 && opts.missing < 1.0))
    throw DimensionError("planted: missing must be in [0, 1)");

  PlantedInstance inst;
  FactorSet& t = inst.truth;
  Rng rng(stream_seed(opts.seed, detail::kGenFactors, 0, 0));
  for (std::size_t n = 0; n < 3; ++n)
    t.tensor[n] = detail::random_uniform(static_cast<Index>(opts.dims[n]), opts.rank, rng);
  for (std::size_t n = 0; n < 3; ++n)
    if (opts.side_cols[n] > 0)
      t.side[n] = detail::random_uniform(static_cast<Index>(opts.side_cols[n]), opts.rank, rng);
  if (opts.predictable) {
    if (opts.side_cols[0] < static_cast<std::size_t>(opts.rank))
      throw DimensionError("planted: predictable needs Y1 with at least rank columns");
    const Eigen::HouseholderQR<Matrix> qr(*t.side[0]);
    t.side[0] = Matrix(qr.householderQ() * Matrix::Identity(t.side[0]->rows(), opts.rank));
    // entries in [0.75, 1.25]: close to 1, but columns far enough apart to be identifiable
    t.tensor[2] = (0.75 * Matrix::Ones(t.tensor[2].rows(), opts.rank) + 0.5 * t.tensor[2]).eval();
  }
  t.reset_lambdas();

  const bool noisy = std::isfinite(opts.snr_db);
  Tensor3 clean = reconstruct_tensor(t);
  std::vector<double> values = clean.dense_values();
  if (noisy) {
    Rng noise_rng(stream_seed(opts.seed, detail::kGenNoise, 0, 0));
    std::vector<double> noise(values.size());
    double signal_sq = 0.0, noise_sq = 0.0;
    for (std::size_t n = 0; n < values.size(); ++n) {
      noise[n] = noise_rng.normal();
      signal_sq += values[n] * values[n];
      noise_sq += noise[n] * noise[n];
    }
    const double scale = detail::noise_scale(signal_sq, noise_sq, opts.snr_db);
    for (std::size_t n = 0; n < values.size(); ++n) values[n] += scale * noise[n];
  }
  std::vector<Entry> entries;
  Rng keep_rng(stream_seed(opts.seed, detail::kGenDensity, 0, 0));
  std::size_t flat = 0;
  for (std::size_t i = 0; i < opts.dims[0]; ++i)
    for (std::size_t j = 0; j < opts.dims[1]; ++j)
      for (std::size_t k = 0; k < opts.dims[2]; ++k, ++flat) {
        if (opts.density < 1.0 && keep_rng.uniform() >= opts.density) continue;
        if (values[flat] != 0.0) entries.push_back({i, j, k, values[flat]});
      }
  inst.data.x = Tensor3::from_entries(opts.dims, std::move(entries));

  for (std::size_t n = 0; n < 3; ++n) {
    if (!t.side[n]) continue;
    Matrix y = reconstruct_side(t, n);
    if (noisy) {
      Rng noise_rng(stream_seed(opts.seed, detail::kGenNoise, 1, n));
      Matrix noise(y.rows(), y.cols());
      for (Index c = 0; c < y.cols(); ++c)
        for (Index r = 0; r < y.rows(); ++r) noise(r, c) = noise_rng.normal();
      y += detail::noise_scale(y.squaredNorm(), noise.squaredNorm(), opts.snr_db) * noise;
    }
    inst.data.y[n] = std::move(y);
  }

  if (opts.missing > 0.0) {
    WeightMask mask = WeightMask::full(inst.data);
    std::vector<double> w(inst.data.x.size(), 1.0);
    Rng miss_rng(stream_seed(opts.seed, detail::kGenMissing, 0, 0));
    for (double& v : w)
      if (miss_rng.uniform() < opts.missing) v = 0.0;
    mask.w = Tensor3::dense(opts.dims, std::move(w));
    inst.mask = std::move(mask);
  }
  return inst;
}

/// Marks a `fraction` of tensor entries missing. Masks drawn from the same
/// seed are nested: every entry missing at fraction m is missing at any
/// larger fraction.
inline WeightMask nested_missing_mask(const CoupledData& data, double fraction,
                                      std::uint64_t seed) {
  WeightMask mask = WeightMask::full(data);
  std::vector<double> w(data.x.size(), 1.0);
  Rng rng(stream_seed(seed, detail::kGenMissing, 1, 0));
  for (double& v : w)
    if (rng.uniform() < fraction) v = 0.0;
  mask.w = Tensor3::dense(data.x.dims(), std::move(w));
  return mask;
}

}  // namespace scoup
