// scoup: command-line front end for the coupled tensor/matrix solvers.

#include <CLI11.hpp>

#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <thread>

#include "scoup/scoup.hpp"

namespace {

using namespace scoup;

constexpr int kExitOk = 0, kExitUsage = 1, kExitData = 2, kExitNumeric = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

int default_parallelism() {
  if (const char* env = std::getenv("SCOUP_PARALLEL")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1) return static_cast<int>(v);
  }
  return static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));
}

struct DataFlags {
  std::string tensor;
  std::array<std::string, 3> side;
  std::string mask;
  std::array<std::string, 3> side_mask;

  void add(CLI::App* app, bool mask_required = false) {
    app->add_option("--tensor", tensor, "Tensor file (tensor I J K nnz format)")
        ->required()
        ->check(CLI::ExistingFile);
    for (std::size_t n = 0; n < 3; ++n)
      app->add_option("--y" + std::to_string(n + 1), side[n],
                      "Side matrix coupled to tensor mode " + std::to_string(n + 1))
          ->check(CLI::ExistingFile);
    auto* m = app->add_option("--mask", mask, "Tensor mask file, 1 = observed, 0 = missing")
                  ->check(CLI::ExistingFile);
    if (mask_required) m->required();
    for (std::size_t n = 0; n < 3; ++n)
      app->add_option("--w" + std::to_string(n + 1), side_mask[n],
                      "Mask for side matrix Y" + std::to_string(n + 1))
          ->check(CLI::ExistingFile);
  }

  CoupledData load() const {
    CoupledData d;
    d.x = read_tensor(tensor);
    for (std::size_t n = 0; n < 3; ++n)
      if (!side[n].empty()) d.y[n] = read_matrix(side[n]);
    try {
      d.validate();
    } catch (const DimensionError& e) {
      throw DataError(e.what());
    }
    return d;
  }

  std::optional<WeightMask> load_mask(const CoupledData& d) const {
    bool any = !mask.empty();
    for (const auto& s : side_mask) any = any || !s.empty();
    if (!any) return std::nullopt;
    WeightMask m = WeightMask::full(d);
    if (!mask.empty()) m.w = read_tensor_mask(mask);
    for (std::size_t n = 0; n < 3; ++n) {
      if (side_mask[n].empty()) continue;
      if (!d.y[n]) throw UsageError("--w" + std::to_string(n + 1) + " given without --y" +
                                    std::to_string(n + 1));
      m.w_side[n] = read_matrix_mask(side_mask[n]);
    }
    try {
      m.validate(d);
    } catch (const DimensionError& e) {
      throw DataError(e.what());
    }
    return m;
  }
};

struct SolverFlags {
  SolverOptions opts;
  void add(CLI::App* app) {
    app->add_option("--rank,-F", opts.rank, "Number of components F")
        ->capture_default_str()
        ->check(CLI::PositiveNumber);
    app->add_option("--max-iters", opts.max_iters, "Iteration cap")->capture_default_str();
    app->add_option("--tol", opts.rel_change_tol,
                    "Stop when the relative objective change falls below this")
        ->capture_default_str();
    app->add_option("--seed", opts.seed, "Master seed for initialization and sampling")
        ->capture_default_str();
    app->add_option("--max-sweeps", opts.max_sweeps,
                    "Coordinate-descent sweeps per weighted factor update")
        ->capture_default_str();
  }
};

struct TurboFlags {
  std::vector<double> s{2.0};
  std::vector<double> s_side{1.0};
  double p = 0.35;
  int r = default_parallelism();
  int parallel = default_parallelism();
  std::string sizing = "literal";

  void add(CLI::App* app) {
    app->add_option("--s", s, "Sampling factor, one value for all modes or one per mode")
        ->capture_default_str()
        ->expected(1, 3);
    app->add_option("--s-side", s_side,
                    "Sampling factor for the uncoupled mode of each side matrix")
        ->capture_default_str()
        ->expected(1, 3);
    app->add_option("--p", p, "Fraction of each sample shared by all repetitions")
        ->capture_default_str();
    app->add_option("--r", r, "Number of repetitions (default: available parallelism)")
        ->capture_default_str();
    app->add_option("--parallel", parallel,
                    "Repetitions fitted at once (default: available parallelism, "
                    "or SCOUP_PARALLEL)")
        ->capture_default_str();
    app->add_option("--sizing", sizing, "Fresh-block size rule")
        ->capture_default_str()
        ->check(CLI::IsMember({"literal", "total"}));
  }

  TurboOptions build(const SolverOptions& solver) const {
    TurboOptions t;
    t.solver = solver;
    auto spread = [](const std::vector<double>& v, const char* name) {
      if (v.size() == 1) return std::array<double, 3>{v[0], v[0], v[0]};
      if (v.size() == 3) return std::array<double, 3>{v[0], v[1], v[2]};
      throw UsageError(std::string(name) + " takes one or three values");
    };
    t.sampling.s_tensor = spread(s, "--s");
    t.sampling.s_side = spread(s_side, "--s-side");
    t.sampling.p = p;
    t.sampling.r = r;
    t.sampling.seed = solver.seed;
    t.sampling.sizing = sizing == "total" ? SampleSizing::total : SampleSizing::literal;
    t.parallel = parallel;
    return t;
  }
};

double seconds_since(std::chrono::steady_clock::time_point start) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
}

void print_warnings(const RunReport& report) {
  for (const auto& w : report.warnings) std::cerr << "warning: " << w << '\n';
}

int cmd_gen(const PlantedOptions& opts, const std::string& out_dir) {
  const PlantedInstance inst = make_planted(opts);
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw DataError(out_dir + ": cannot create directory: " + ec.message());
  const std::filesystem::path base(out_dir);
  write_tensor(inst.data.x, (base / "X.tns").string());
  for (std::size_t n = 0; n < 3; ++n)
    if (inst.data.y[n])
      write_matrix(*inst.data.y[n], (base / ("Y" + std::to_string(n + 1) + ".mtx")).string());
  if (inst.mask) write_tensor(inst.mask->w.to_sparse(), (base / "W.tns").string());
  FitRecord rec;
  rec.method = "planted";
  rec.seed = opts.seed;
  rec.final_objective = objective(inst.data, inst.truth);
  write_factors(inst.truth, rec, (base / "truth").string());
  std::cout << "wrote " << out_dir << '\n';
  return kExitOk;
}

int cmd_fit_als(const DataFlags& data_flags, const SolverOptions& opts, const std::string& out) {
  const CoupledData data = data_flags.load();
  if (data_flags.load_mask(data)) throw UsageError("fit-als does not take masks; use fit-missing");
  const auto start = std::chrono::steady_clock::now();
  const SolverResult fit = cmtf_als(data, opts);
  FitRecord rec;
  rec.method = "als";
  rec.seed = opts.seed;
  rec.trace = fit.trace;
  rec.seconds = seconds_since(start);
  rec.final_objective = objective(data, fit.factors);
  write_factors(fit.factors, rec, out);
  std::cout << "final_objective " << detail::format_double(rec.final_objective) << '\n';
  return kExitOk;
}

int cmd_fit_turbo(const DataFlags& data_flags, const TurboOptions& opts, const std::string& out,
                  const char* method) {
  const CoupledData data = data_flags.load();
  const std::optional<WeightMask> mask = data_flags.load_mask(data);
  const TurboResult res = turbo_cmtf(data, mask ? &*mask : nullptr, opts);
  print_warnings(res.report);
  FitRecord rec;
  rec.method = method;
  rec.seed = opts.solver.seed;
  rec.turbo = res.report;
  rec.final_objective = res.report.final_objective;
  write_factors(res.factors, rec, out);
  std::cout << "final_objective " << detail::format_double(rec.final_objective) << '\n';
  return kExitOk;
}

int cmd_fit_missing(const DataFlags& data_flags, const SolverOptions& opts, bool turbo,
                    const TurboOptions& topts, const std::string& out) {
  if (turbo) return cmd_fit_turbo(data_flags, topts, out, "turbo-wals");
  const CoupledData data = data_flags.load();
  const WeightMask mask = *data_flags.load_mask(data);
  const auto start = std::chrono::steady_clock::now();
  const SolverResult fit = cmtf_wals(data, mask, opts);
  FitRecord rec;
  rec.method = "wals";
  rec.seed = opts.seed;
  rec.trace = fit.trace;
  rec.seconds = seconds_since(start);
  rec.final_objective = weighted_objective(data, mask, fit.factors);
  write_factors(fit.factors, rec, out);
  std::cout << "final_objective " << detail::format_double(rec.final_objective) << '\n';
  return kExitOk;
}

std::optional<double> report_seconds(const std::string& dir) {
  const auto path = std::filesystem::path(dir) / "report.txt";
  if (!std::filesystem::exists(path)) return std::nullopt;
  std::istringstream in(detail::read_all(path.string()));
  for (std::string line; std::getline(in, line);)
    if (line.rfind("time total ", 0) == 0) return std::stod(line.substr(11));
  return std::nullopt;
}

int cmd_eval(const DataFlags& data_flags, const std::string& fast_dir, const std::string& base_dir) {
  const CoupledData data = data_flags.load();
  const std::optional<WeightMask> mask = data_flags.load_mask(data);
  const FactorSet fast = read_factors(fast_dir);
  const FactorSet base = read_factors(base_dir);
  auto fits = [&](const FactorSet& f, const std::string& dir) {
    try {
      detail::check_tensor_factors(data.x, f);
      for (std::size_t n = 0; n < 3; ++n)
        if (data.y[n] && (!f.side[n] || f.side[n]->rows() != data.y[n]->cols()))
          throw DimensionError("side factor does not match Y" + std::to_string(n + 1));
    } catch (const DimensionError& e) {
      throw DataError(dir + ": " + e.what());
    }
  };
  fits(fast, fast_dir);
  fits(base, base_dir);
  const auto out = [](const char* key, double v) {
    std::cout << key << ' ' << detail::format_double(v) << '\n';
  };
  out("objective_fast", mask ? weighted_objective(data, *mask, fast) : objective(data, fast));
  out("objective_base", mask ? weighted_objective(data, *mask, base) : objective(data, base));
  out("relative_cost", mask ? relative_cost(data, *mask, fast, base) : relative_cost(data, fast, base));
  out("relative_sparsity", relative_sparsity(base, fast));
  out("snr", snr(reconstruct_tensor(fast), reconstruct_tensor(base)));
  const auto tf = report_seconds(fast_dir), tb = report_seconds(base_dir);
  if (tf && tb && *tb > 0.0) out("wall_clock_fraction", *tf / *tb);
  return kExitOk;
}

int cmd_predict(const std::string& dir, const std::string& q_path, bool unscaled,
                const std::string& out) {
  const FactorSet f = read_factors(dir);
  const Matrix q = read_matrix(q_path);
  if (!f.side[0]) throw DataError(dir + ": factor D is missing");
  if (q.rows() != f.side[0]->rows())
    throw DataError(q_path + ": expected " + std::to_string(f.side[0]->rows()) +
                    " rows to match D");
  Matrix pred(f.tensor[1].rows(), q.cols());
  const auto scaling = unscaled ? PredictScaling::unscaled : PredictScaling::scaled;
  const FactorSet g = unscaled ? f : prediction_form(f);
  for (Index c = 0; c < q.cols(); ++c) pred.col(c) = predict_from_side(g, q.col(c), scaling);
  if (out.empty())
    std::cout << format_matrix(pred);
  else
    write_matrix(pred, out);
  return kExitOk;
}

int cmd_loo(const DataFlags& data_flags, const TurboOptions& opts, std::pair<std::size_t, std::size_t> pair,
            int trials, bool unscaled) {
  const CoupledData data = data_flags.load();
  if (data_flags.load_mask(data)) throw UsageError("loo does not take masks");
  if (pair.first == 0 || pair.second == 0) throw UsageError("--pair indices are 1-based");
  const LeaveTwoOutResult res =
      leave_two_out(data, {pair.first - 1, pair.second - 1}, opts, trials,
                    unscaled ? PredictScaling::unscaled : PredictScaling::scaled);
  std::cout << "accuracy " << detail::format_double(res.accuracy) << '\n';
  std::cout << "outcomes " << res.outcomes.size() << '\n';
  return kExitOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Coupled matrix-tensor factorization with sampling and merging"};
  app.require_subcommand(1);

  PlantedOptions gen;
  std::vector<std::size_t> gen_dims{20, 20, 20};
  std::vector<std::size_t> gen_side{20, 0, 0};
  std::string gen_out;
  auto* g = app.add_subcommand("gen", "Write a planted low-rank coupled instance");
  g->add_option("--out,-o", gen_out, "Output directory")->required();
  g->add_option("--dims", gen_dims, "Tensor dimensions I J K")->expected(3)->capture_default_str();
  g->add_option("--side-cols", gen_side, "Columns of Y1 Y2 Y3, 0 for absent")
      ->expected(3)
      ->capture_default_str();
  g->add_option("--rank,-F", gen.rank, "Planted rank")->capture_default_str()->check(CLI::PositiveNumber);
  g->add_option("--snr-db", gen.snr_db, "Noise level in dB (omit for noiseless)");
  g->add_option("--density", gen.density, "Fraction of tensor entries kept")->capture_default_str();
  g->add_option("--missing", gen.missing, "Fraction of tensor entries marked missing in W.tns")
      ->capture_default_str();
  g->add_option("--seed", gen.seed, "Generator seed")->capture_default_str();
  g->add_flag("--predictable", gen.predictable,
              "Orthonormal Y1 factor and near-constant third mode, for loo experiments");

  DataFlags data;
  SolverFlags solver;
  TurboFlags turbo;
  std::string out_dir;

  auto* als = app.add_subcommand("fit-als", "Full coupled ALS fit");
  data.add(als);
  solver.add(als);
  als->add_option("--out,-o", out_dir, "Output directory for factors")->required();

  auto* tb = app.add_subcommand("fit-turbo", "Sampled, merged coupled fit");
  data.add(tb);
  solver.add(tb);
  turbo.add(tb);
  tb->add_option("--out,-o", out_dir, "Output directory for factors")->required();
  bool tb_wals = false;
  tb->add_flag("--wals", tb_wals, "Use the weighted core on each sample");

  auto* fm = app.add_subcommand("fit-missing", "Weighted fit that ignores masked entries");
  DataFlags mdata;
  mdata.add(fm, true);
  solver.add(fm);
  turbo.add(fm);
  bool fm_turbo = false;
  fm->add_flag("--turbo", fm_turbo, "Sample and merge instead of fitting the full data");
  fm->add_option("--out,-o", out_dir, "Output directory for factors")->required();

  auto* ev = app.add_subcommand("eval", "Compare two factor directories on the data");
  std::string fast_dir, base_dir;
  data.add(ev);
  ev->add_option("--fast", fast_dir, "Factor directory of the method under test")
      ->required()
      ->check(CLI::ExistingDirectory);
  ev->add_option("--base", base_dir, "Factor directory of the baseline")
      ->required()
      ->check(CLI::ExistingDirectory);

  auto* pr = app.add_subcommand("predict", "Predict second-mode vectors from Y1 rows: B D^T q");
  std::string pr_dir, pr_q, pr_out;
  bool unscaled = false;
  pr->add_option("--factors", pr_dir, "Factor directory")->required()->check(CLI::ExistingDirectory);
  pr->add_option("--q", pr_q, "Matrix file, one query vector per column")
      ->required()
      ->check(CLI::ExistingFile);
  pr->add_option("--out,-o", pr_out, "Write predictions here instead of stdout");
  pr->add_flag("--unscaled", unscaled,
               "Use B and D as stored, without lambdas or the unit-column normalization");

  auto* loo = app.add_subcommand("loo", "Leave-two-out prediction accuracy");
  std::vector<std::size_t> pair{1, 2};
  int trials = 20;
  data.add(loo);
  solver.add(loo);
  turbo.add(loo);
  loo->add_option("--pair", pair, "Two first-mode indices to withhold (1-based)")
      ->expected(2)
      ->capture_default_str();
  loo->add_option("--trials", trials, "Number of randomized trials")->capture_default_str();
  loo->add_flag("--unscaled", unscaled,
                "Predict with B and D as stored, without lambdas or the unit-column normalization");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    std::cerr << app.help();
    return kExitUsage;
  }

  if (g->parsed()) {
    gen.dims = {gen_dims[0], gen_dims[1], gen_dims[2]};
    gen.side_cols = {gen_side[0], gen_side[1], gen_side[2]};
    return cmd_gen(gen, gen_out);
  }
  if (als->parsed()) return cmd_fit_als(data, solver.opts, out_dir);
  if (tb->parsed()) {
    TurboOptions t = turbo.build(solver.opts);
    if (tb_wals) t.core = CoreSolver::wals;
    return cmd_fit_turbo(data, t, out_dir, tb_wals ? "turbo-wals" : "turbo");
  }
  if (fm->parsed()) {
    TurboOptions t = turbo.build(solver.opts);
    t.core = CoreSolver::wals;
    return cmd_fit_missing(mdata, solver.opts, fm_turbo, t, out_dir);
  }
  if (ev->parsed()) return cmd_eval(data, fast_dir, base_dir);
  if (pr->parsed()) return cmd_predict(pr_dir, pr_q, unscaled, pr_out);
  if (loo->parsed()) return cmd_loo(data, turbo.build(solver.opts), {pair[0], pair[1]}, trials, unscaled);
  return kExitUsage;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << '\n';
    return kExitNumeric;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
}
