#pragma once

// Sample / fit / merge pipeline.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <exception>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "scoup/als.hpp"
#include "scoup/merger.hpp"
#include "scoup/missing.hpp"
#include "scoup/sampler.hpp"

namespace scoup {

enum class CoreSolver { als, wals };

struct TurboOptions {
  SolverOptions solver;
  SamplingOptions sampling;
  /// Repetitions fitted at the same time.
  int parallel = 1;
  CoreSolver core = CoreSolver::als;

  void validate() const {
    solver.validate();
    sampling.validate();
    if (parallel < 1) throw DimensionError("turbo: parallel must be >= 1");
  }
};

struct PhaseTimes {
  double sampling = 0.0;
  double fitting = 0.0;
  double merging = 0.0;
  double total() const { return sampling + fitting + merging; }
};

struct FactorAmbiguity {
  std::string factor;  ///< "A" .. "G"
  AmbiguityNote note;
};

struct RunReport {
  SampleSpec common;
  std::vector<SampleSpec> samples;
  /// Final objective of each repetition's fit on its own sample.
  std::vector<double> repetition_objectives;
  std::vector<int> repetition_iterations;
  PhaseTimes seconds;
  std::vector<FactorAmbiguity> ambiguities;
  std::vector<std::string> warnings;
  /// Objective of the merged model on the full data (weighted when masked).
  double final_objective = 0.0;
};

struct TurboResult {
  FactorSet factors;
  RunReport report;
};

namespace detail {

struct RepetitionOutput {
  SolverResult fit;
  SampledData sample;
};

inline double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

/// Restriction of the mask to a sample, using the same index maps as extract.
inline WeightMask extract_mask(const CoupledData& data, const WeightMask& mask,
                               const SampleSpec& spec) {
  CoupledData as_data;
  as_data.x = mask.w;
  for (std::size_t n = 0; n < 3; ++n)
    if (data.y[n]) as_data.y[n] = mask.side_or_ones(data, n);
  SampledData sub = extract(as_data, spec);
  WeightMask out;
  out.w = std::move(sub.data.x);
  out.w_side = std::move(sub.data.y);
  return out;
}

/// Copies sampled rows into an otherwise zero matrix of the full height.
inline Matrix redistribute(const Matrix& sampled, const std::vector<std::size_t>& rows,
                           std::size_t full_rows) {
  Matrix out = Matrix::Zero(static_cast<Index>(full_rows), sampled.cols());
  for (std::size_t r = 0; r < rows.size(); ++r)
    out.row(static_cast<Index>(rows[r])) = sampled.row(static_cast<Index>(r));
  return out;
}

template <class Fn>
void run_indexed(int count, int workers, Fn&& body) {
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(count));
  std::atomic<int> next{0};
  auto worker = [&] {
    for (int i = next++; i < count; i = next++) {
      try {
        body(i);
      } catch (...) {
        errors[static_cast<std::size_t>(i)] = std::current_exception();
      }
    }
  };
  const int n = std::max(1, std::min(workers, count));
  if (n == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(n));
    for (int t = 0; t < n; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  for (int i = 0; i < count; ++i) {
    if (!errors[static_cast<std::size_t>(i)]) continue;
    const std::string where = "repetition " + std::to_string(i + 1) + ": ";
    try {
      std::rethrow_exception(errors[static_cast<std::size_t>(i)]);
    } catch (const NumericError& e) {
      throw NumericError(where + e.what());
    } catch (const DataError& e) {
      throw DataError(where + e.what());
    } catch (const DimensionError& e) {
      throw DimensionError(where + e.what());
    }
  }
}

}  // namespace detail

/// Samples the coupled data r times, fits each sample, lifts every factor back
/// to the full index space (zero outside the sample), normalizes by the
/// common-block column norms, and merges. Repetition i uses rng streams keyed
/// by i alone, so the result does not depend on `parallel`.
///
/// When `mask` is given the weighted core is used regardless of opts.core.
inline TurboResult turbo_cmtf(const CoupledData& data, const WeightMask* mask,
                              TurboOptions opts) {
  data.validate();
  opts.validate();
  if (mask) {
    mask->validate(data);
    opts.core = CoreSolver::wals;
  }
  opts.sampling.min_size =
      std::max(opts.sampling.min_size, static_cast<std::size_t>(opts.solver.rank));
  const int reps = opts.sampling.r;
  const Index rank = opts.solver.rank;

  TurboResult result;
  RunReport& report = result.report;

  // Phase 1
  auto clock = std::chrono::steady_clock::now();
  const std::optional<CoupledData> cleaned =
      mask ? std::optional<CoupledData>(mask_out(data, *mask)) : std::nullopt;
  const CoupledData& work = cleaned ? *cleaned : data;
  const DensityProfile dp = density_profile(work);
  report.common = draw_common(dp, opts.sampling, report.warnings);
  std::vector<std::vector<std::string>> rep_warnings(static_cast<std::size_t>(reps));
  for (int i = 0; i < reps; ++i)
    report.samples.push_back(draw_repetition(dp, report.common, opts.sampling, i,
                                             rep_warnings[static_cast<std::size_t>(i)]));
  for (const auto& w : rep_warnings) report.warnings.insert(report.warnings.end(), w.begin(), w.end());
  report.seconds.sampling = detail::seconds_since(clock);

  // Phase 2
  clock = std::chrono::steady_clock::now();
  std::vector<detail::RepetitionOutput> outputs(static_cast<std::size_t>(reps));
  detail::run_indexed(reps, opts.parallel, [&](int i) {
    auto& out = outputs[static_cast<std::size_t>(i)];
    const SampleSpec& spec = report.samples[static_cast<std::size_t>(i)];
    out.sample = extract(work, spec);
    if (opts.core == CoreSolver::wals) {
      const WeightMask sub_mask = mask ? detail::extract_mask(work, *mask, spec)
                                       : WeightMask::full(out.sample.data);
      out.fit = cmtf_wals(out.sample.data, sub_mask, opts.solver);
    } else {
      out.fit = cmtf_als(out.sample.data, opts.solver);
    }
  });
  for (const auto& out : outputs) {
    report.repetition_objectives.push_back(out.fit.final_objective());
    report.repetition_iterations.push_back(out.fit.iterations());
  }
  report.seconds.fitting = detail::seconds_since(clock);

  // Phase 3
  clock = std::chrono::steady_clock::now();
  FactorSet& f = result.factors;
  auto assemble = [&](bool is_side, std::size_t n, std::size_t full_rows,
                      const std::vector<std::size_t>& common) -> std::pair<Matrix, Vector> {
    std::vector<PartialFactor> partials;
    for (const auto& out : outputs) {
      const Matrix& sampled = is_side ? *out.fit.factors.side[n] : out.fit.factors.tensor[n];
      const auto& rows = is_side ? out.sample.side_index[n] : out.sample.tensor_index[n];
      PartialFactor part{detail::redistribute(sampled, rows, full_rows), common,
                         Vector::Ones(rank)};
      if (!common.empty()) {
        NormalizedFactor norm = normalize_common(part.matrix, common);
        part.matrix = std::move(norm.matrix);
        part.lambda = std::move(norm.lambda);
        for (Index c : norm.flagged)
          report.warnings.push_back(std::string("factor ") + factor_name(is_side, n) +
                                    ": zero common part in column " + std::to_string(c + 1));
      }
      partials.push_back(std::move(part));
    }
    MergeResult merged = merge(partials);
    for (auto& note : merged.ambiguities)
      report.ambiguities.push_back({factor_name(is_side, n), note});
    std::vector<Vector> lambdas;
    for (const auto& p : partials) lambdas.push_back(p.lambda);
    return {std::move(merged.matrix), average_lambdas(lambdas, merged.assignment)};
  };
  for (std::size_t n = 0; n < 3; ++n) {
    auto [m, l] = assemble(false, n, data.x.dims()[n], report.common.tensor[n].common);
    f.tensor[n] = std::move(m);
    f.tensor_lambda[n] = std::move(l);
    if (data.y[n]) {
      auto [sm, sl] = assemble(true, n, static_cast<std::size_t>(data.y[n]->cols()),
                               report.common.side[n]->common);
      f.side[n] = std::move(sm);
      f.side_lambda[n] = std::move(sl);
    } else {
      f.side_lambda[n] = Vector();
    }
  }
  report.seconds.merging = detail::seconds_since(clock);

  report.final_objective = mask ? weighted_objective(data, *mask, f) : objective(data, f);
  return result;
}

}  // namespace scoup
