// Command-line front end: run experiment sweeps, solve a single problem file,
// or generate a synthetic problem.

#include <complex>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <variant>

#include <CLI11.hpp>

#include "sbl/sbl.hpp"

namespace fs = std::filesystem;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitTrialFailures = 3;

struct SolveOptions {
  std::string problem;
  std::string estimator;
  std::optional<double> epsilon, eta, a, b, lambda;
  bool estimate_lambda = false;
  std::uint64_t seed = 0;
  std::string out;
};

struct GenOptions {
  sbl::GenConfig cfg;
  std::string field = "complex";
  std::optional<double> noise_precision;
  std::string out;
};

struct ExperimentOptions {
  std::string config;
  std::string preset;
  std::string out = ".";
  unsigned threads = 0;
};

std::string format_scalar(double v) { return sbl::harness_detail::num(v); }
std::string format_scalar(std::complex<double> v)
{
  return sbl::harness_detail::num(v.real()) + "," + sbl::harness_detail::num(v.imag());
}

template <sbl::FieldScalar Scalar>
int solve_one(const sbl::ProblemInstance<Scalar>& p, const SolveOptions& o)
{
  const sbl::EstimatorSpec spec = sbl::make_estimator(o.estimator, {o.epsilon, o.eta, o.a, o.b});
  sbl::LambdaMode mode = sbl::LambdaMode::estimate();
  if (o.lambda)
    mode = sbl::LambdaMode::known(*o.lambda);
  else if (p.has_truth && !o.estimate_lambda)
    mode = sbl::LambdaMode::known(p.lambda_true);

  const auto res = sbl::run_estimator(spec, p, mode);
  std::cout << "estimator " << spec.name << " (" << sbl::describe(spec) << ")\n";
  std::cout << "k_hat " << res.metrics.k_hat << "\n";
  std::cout << "iterations " << res.metrics.iterations << "\n";
  std::cout << "lambda " << format_scalar(res.lambda) << (mode.is_known() ? " (known)" : " (estimated)") << "\n";
  if (p.has_truth) {
    std::cout << "mse " << format_scalar(res.metrics.mse) << "\n";
    std::cout << "support_exact " << (res.metrics.support_exact ? "yes" : "no") << "\n";
    if (!p.support_true.empty()) std::cout << "oracle_mse " << format_scalar(sbl::oracle_mse(p)) << "\n";
  }
  if (res.all_pruned) std::cout << "note: every component was pruned\n";

  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!o.out.empty()) {
    file.open(o.out);
    if (!file) throw std::runtime_error("cannot write '" + o.out + "'");
    os = &file;
  } else {
    std::cout << "estimate (index,value):\n";
  }
  for (Eigen::Index l = 0; l < res.estimate.size(); ++l)
    *os << l << ',' << format_scalar(res.estimate(l)) << '\n';
  return 0;
}

int run_solve(const SolveOptions& o)
{
  sbl::AnyProblem any;
  if (!o.problem.empty()) {
    any = sbl::load_problem(o.problem);
  } else {
    sbl::GenConfig g;
    g.seed = o.seed;
    any = sbl::generate_problem<std::complex<double>>(g);
  }
  return std::visit([&](const auto& p) { return solve_one(p, o); }, any);
}

int run_gen(GenOptions o)
{
  o.cfg.field = sbl::parse_field(o.field);
  o.cfg.noise_precision = o.noise_precision;
  std::ofstream file;
  std::ostream* os = &std::cout;
  if (!o.out.empty()) {
    file.open(o.out);
    if (!file) throw std::runtime_error("cannot write '" + o.out + "'");
    os = &file;
  }
  if (o.cfg.field == sbl::FieldKind::Real)
    sbl::write_problem(*os, sbl::generate_problem<double>(o.cfg));
  else
    sbl::write_problem(*os, sbl::generate_problem<std::complex<double>>(o.cfg));
  return 0;
}

int run_experiment_cmd(const ExperimentOptions& o)
{
  if (o.config.empty() == o.preset.empty()) throw CLI::ValidationError("experiment", "give exactly one of --config, --preset");
  const sbl::ExperimentConfig cfg = o.config.empty() ? sbl::preset(o.preset) : sbl::load_experiment(o.config);
  const unsigned threads = o.threads ? o.threads : std::max(1u, std::thread::hardware_concurrency());
  const auto out = sbl::run_experiment(cfg, threads);

  fs::create_directories(o.out);
  {
    std::ofstream agg(fs::path(o.out) / "aggregate.csv", std::ios::binary);
    if (!agg) throw std::runtime_error("cannot write aggregate.csv in '" + o.out + "'");
    sbl::write_aggregate_csv(agg, cfg, out);
  }
  {
    std::ofstream tr(fs::path(o.out) / "trials.csv", std::ios::binary);
    if (!tr) throw std::runtime_error("cannot write trials.csv in '" + o.out + "'");
    sbl::write_trials_csv(tr, cfg, out);
  }
  std::cout << "wrote " << out.aggregates.size() << " aggregate rows and " << out.trials.size()
            << " trial rows to " << o.out << "\n";
  if (out.failures > 0) {
    std::cerr << "warning: " << out.failures << " estimator runs failed; see the status column of trials.csv\n";
    return kExitTrialFailures;
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv)
{
  CLI::App app{"Sparse Bayesian learning estimators and experiment runner"};
  app.require_subcommand(1);

  ExperimentOptions eo;
  auto* exp = app.add_subcommand("experiment", "Run a Monte Carlo sweep and write aggregate.csv and trials.csv");
  exp->add_option("--config", eo.config, "Experiment JSON file");
  exp->add_option("--preset", eo.preset, "Built-in configuration")->check(CLI::IsMember(sbl::preset_names()));
  exp->add_option("--out", eo.out, "Output directory");
  exp->add_option("--threads", eo.threads, "Worker threads (0 = hardware concurrency)");

  SolveOptions so;
  auto* solve = app.add_subcommand("solve", "Estimate the weights of one problem");
  solve->add_option("--problem", so.problem, "Problem file (default: a generated complex instance)");
  solve->add_option("--estimator", so.estimator, "Estimator")->required()->check(CLI::IsMember(sbl::estimator_kinds()));
  solve->add_option("--epsilon", so.epsilon, "Gamma shape of the variance prior");
  solve->add_option("--eta", so.eta, "Gamma rate of the variance prior (2-L)");
  solve->add_option("--a", so.a, "Shape of the rate prior (3-L)");
  solve->add_option("--b", so.b, "Rate of the rate prior (3-L)");
  solve->add_option("--lambda", so.lambda, "Known noise precision")->check(CLI::PositiveNumber);
  solve->add_flag("--estimate-lambda", so.estimate_lambda, "Estimate the noise precision even if the file has one");
  solve->add_option("--seed", so.seed, "Seed of the generated instance when --problem is absent");
  solve->add_option("--out", so.out, "Write the estimate here instead of stdout");

  GenOptions go;
  auto* gen = app.add_subcommand("gen", "Write a synthetic problem file");
  gen->add_option("--M", go.cfg.M, "Observations")->capture_default_str();
  gen->add_option("--L", go.cfg.L, "Dictionary columns")->capture_default_str();
  gen->add_option("--K", go.cfg.K, "Nonzero weights")->capture_default_str();
  gen->add_option("--snr", go.cfg.snr_db, "SNR in dB")->capture_default_str();
  gen->add_option("--field", go.field, "real or complex")->check(CLI::IsMember({"real", "complex"}))->capture_default_str();
  gen->add_option("--noise-precision", go.noise_precision, "Noise precision (overrides --snr)")
      ->check(CLI::PositiveNumber);
  gen->add_option("--seed", go.cfg.seed, "Generator seed")->capture_default_str();
  gen->add_option("--out", go.out, "Output file (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (*exp) return run_experiment_cmd(eo);
    if (*solve) return run_solve(so);
    if (*gen) return run_gen(go);
  } catch (const CLI::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return kExitUsage;
}
