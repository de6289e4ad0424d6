#pragma once

// Monte Carlo driver: sweeps over SNR, M or K; every (sweep point, trial) pair
// draws one problem (seed = base_seed + trial) which all estimators solve with
// the noise precision known.

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <complex>
#include <cstdint>
#include <fstream>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "sbl/em.hpp"
#include "sbl/fast.hpp"
#include "sbl/model.hpp"
#include "sbl/vmp.hpp"

namespace sbl {

enum class Engine { Em, Fast, Vmp };

struct EstimatorSpec {
  std::string name;  // label used in the CSV output
  std::string kind;  // emrvm, emlaplace, em2l, em3l, fastrvm, fastlaplace, fast2l, fast3l, vmp2l, vmp3l
  Engine engine = Engine::Fast;
  PriorConfig prior;
  bool shared_eta = false;
  int max_iters = 1000;
  double tol = 0.0;  // 0 selects the engine default
};

inline const std::vector<std::string>& estimator_kinds()
{
  static const std::vector<std::string> kinds{"emrvm",   "emlaplace",   "em2l",   "em3l",  "fastrvm",
                                              "fastlaplace", "fast2l", "fast3l", "vmp2l", "vmp3l"};
  return kinds;
}

/// Optional overrides of the prior constants of a named estimator.
struct PriorOverrides {
  std::optional<double> epsilon, eta, a, b;
};

inline EstimatorSpec make_estimator(const std::string& kind, const PriorOverrides& o = {})
{
  EstimatorSpec e;
  e.kind = kind;
  auto two = [&](Engine eng, double eps, double eta, const char* label) {
    e.engine = eng;
    e.prior = PriorConfig::two_layer(eps, eta);
    e.name = label;
  };
  auto three = [&](Engine eng, double eps, double a, double b, const char* label) {
    e.engine = eng;
    e.prior = PriorConfig::three_layer(eps, a, b);
    e.name = label;
  };
  if (kind == "emrvm") two(Engine::Em, 1.0, 0.0, "EM-RVM");
  else if (kind == "emlaplace") two(Engine::Em, 1.0, 1.0, "EM-Laplace");
  else if (kind == "em2l") two(Engine::Em, 0.5, 1.0, "EM-2L");
  else if (kind == "em3l") three(Engine::Em, 1.0, 1.0, 0.1, "EM-3L");
  else if (kind == "fastrvm") two(Engine::Fast, 1.0, 0.0, "Fast-RVM");
  else if (kind == "fastlaplace") {
    two(Engine::Fast, 1.0, 1.0, "Fast-Laplace");
    e.shared_eta = true;
  } else if (kind == "fast2l") two(Engine::Fast, 0.0, 1.0, "Fast-2L");
  else if (kind == "fast3l") three(Engine::Fast, 1.0, 1.0, 0.1, "Fast-3L");
  else if (kind == "vmp2l") two(Engine::Vmp, 0.5, 1.0, "VMP-2L");
  else if (kind == "vmp3l") three(Engine::Vmp, 0.0, 1.0, 0.1, "VMP-3L");
  else throw std::invalid_argument("unknown estimator '" + kind + "'");

  if (o.epsilon) e.prior.epsilon = *o.epsilon;
  if (e.prior.layers == Layers::Two) {
    if (o.eta) e.prior.eta = {*o.eta};
    if (o.a || o.b) throw std::invalid_argument("estimator '" + kind + "' has no a/b parameters");
  } else {
    if (o.a) e.prior.a = {*o.a};
    if (o.b) e.prior.b = {*o.b};
    if (o.eta) throw std::invalid_argument("estimator '" + kind + "' estimates eta; set a/b instead");
  }
  return e;
}

namespace harness_detail {

inline std::string num(double v)
{
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return {buf, end};
}

inline std::string csv_field(const std::string& s)
{
  if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + '"';
}

}  // namespace harness_detail

/// Full configuration of an estimator as a single token, e.g.
/// "kind=fast2l;layers=2;epsilon=0;eta=1;max_iters=1000;tol=default".
inline std::string describe(const EstimatorSpec& e)
{
  using harness_detail::num;
  std::ostringstream os;
  os << "kind=" << e.kind << ";layers=" << (e.prior.layers == Layers::Two ? 2 : 3)
     << ";epsilon=" << num(e.prior.epsilon);
  auto list = [&](const char* key, const std::vector<double>& v) {
    os << ';' << key << '=';
    for (std::size_t i = 0; i < v.size(); ++i) os << (i ? " " : "") << num(v[i]);
  };
  if (e.prior.layers == Layers::Two) {
    list("eta", e.prior.eta);
  } else {
    list("a", e.prior.a);
    list("b", e.prior.b);
  }
  if (e.shared_eta) os << ";shared_eta=1";
  os << ";max_iters=" << e.max_iters << ";tol=" << (e.tol > 0.0 ? num(e.tol) : std::string("default"));
  return os.str();
}

template <FieldScalar Scalar>
RunResult<Scalar> run_estimator(const EstimatorSpec& e, const ProblemInstance<Scalar>& p, const LambdaMode& lambda)
{
  switch (e.engine) {
    case Engine::Em: {
      EmConfig c;
      c.prior = e.prior;
      c.max_iters = e.max_iters;
      if (e.tol > 0.0) c.tol = e.tol;
      c.lambda_mode = lambda;
      return run_em(p, c);
    }
    case Engine::Fast: {
      FastConfig c;
      c.prior = e.prior;
      c.max_iters = e.max_iters;
      if (e.tol > 0.0) c.tol = e.tol;
      c.lambda_mode = lambda;
      c.shared_eta = e.shared_eta;
      return run_fast(p, c);
    }
    case Engine::Vmp: {
      VmpConfig c;
      c.prior = e.prior;
      c.max_iters = e.max_iters;
      if (e.tol > 0.0) c.tol = e.tol;
      c.lambda_mode = lambda;
      return run_vmp(p, c);
    }
  }
  throw std::logic_error("run_estimator: bad engine");
}

enum class SweepKind { Snr, M, K };

inline std::string to_string(SweepKind k)
{
  switch (k) {
    case SweepKind::Snr: return "snr";
    case SweepKind::M: return "m";
    case SweepKind::K: return "k";
  }
  return "?";
}

struct ExperimentConfig {
  SweepKind sweep = SweepKind::Snr;
  std::vector<double> sweep_values;
  GenConfig base;
  int trials = 100;
  std::vector<EstimatorSpec> estimators;
  std::uint64_t base_seed = 0;
};

inline void validate(const ExperimentConfig& c)
{
  if (c.sweep_values.empty()) throw std::invalid_argument("experiment: empty sweep");
  if (c.estimators.empty()) throw std::invalid_argument("experiment: no estimators");
  if (c.trials < 1) throw std::invalid_argument("experiment: trials must be >= 1");
  for (double v : c.sweep_values) {
    if (!std::isfinite(v)) throw std::invalid_argument("experiment: non-finite sweep value");
    if (c.sweep != SweepKind::Snr && (v != std::floor(v) || v < 0))
      throw std::invalid_argument("experiment: M/K sweep values must be non-negative integers");
  }
  for (std::size_t i = 0; i < c.estimators.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (c.estimators[i].name == c.estimators[j].name)
        throw std::invalid_argument("experiment: duplicate estimator name '" + c.estimators[i].name + "'");
}

inline GenConfig sweep_point(const ExperimentConfig& c, double value)
{
  GenConfig g = c.base;
  switch (c.sweep) {
    case SweepKind::Snr: g.snr_db = value; break;
    case SweepKind::M: g.M = static_cast<int>(value); break;
    case SweepKind::K: g.K = static_cast<int>(value); break;
  }
  return g;
}

struct TrialRecord {
  double sweep_value = 0.0;
  std::string estimator;
  int trial = 0;
  std::uint64_t seed = 0;
  Metrics metrics;
  double oracle_mse = 0.0;
  std::string status = "ok";
  bool ok() const { return status == "ok"; }
};

struct AggregateRecord {
  double sweep_value = 0.0;
  std::string estimator;
  std::string estimator_config;
  double mean_mse = 0.0;
  double mean_k_hat = 0.0;
  double mean_iterations = 0.0;
  double mean_oracle_mse = 0.0;
  int trials_completed = 0;
};

struct ExperimentOutput {
  std::vector<TrialRecord> trials;  // sweep point, then trial, then estimator order
  std::vector<AggregateRecord> aggregates;
  int failures = 0;
};

namespace harness_detail {

template <FieldScalar Scalar>
void run_job(const ExperimentConfig& c, std::size_t point, int trial, TrialRecord* out)
{
  GenConfig g = sweep_point(c, c.sweep_values[point]);
  g.seed = c.base_seed + static_cast<std::uint64_t>(trial);
  auto fill_failure = [&](const std::string& msg) {
    for (std::size_t e = 0; e < c.estimators.size(); ++e) {
      out[e].sweep_value = c.sweep_values[point];
      out[e].estimator = c.estimators[e].name;
      out[e].trial = trial;
      out[e].seed = g.seed;
      out[e].status = "failed: " + msg;
    }
  };
  ProblemInstance<Scalar> p;
  double omse = 0.0;
  try {
    p = generate_problem<Scalar>(g);
    omse = oracle_mse(p);
  } catch (const std::exception& ex) {
    fill_failure(ex.what());
    return;
  }
  const LambdaMode lam = LambdaMode::known(p.lambda_true);
  for (std::size_t e = 0; e < c.estimators.size(); ++e) {
    TrialRecord& r = out[e];
    r.sweep_value = c.sweep_values[point];
    r.estimator = c.estimators[e].name;
    r.trial = trial;
    r.seed = g.seed;
    r.oracle_mse = omse;
    try {
      r.metrics = run_estimator(c.estimators[e], p, lam).metrics;
      if (!std::isfinite(r.metrics.mse)) r.status = "failed: non-finite estimate";
    } catch (const std::exception& ex) {
      r.status = std::string("failed: ") + ex.what();
    }
  }
}

}  // namespace harness_detail

/// Results do not depend on `threads`: every job writes into its own slots.
inline ExperimentOutput run_experiment(const ExperimentConfig& c, unsigned threads = 1)
{
  validate(c);
  const std::size_t points = c.sweep_values.size();
  const std::size_t n_est = c.estimators.size();
  const std::size_t jobs = points * static_cast<std::size_t>(c.trials);
  ExperimentOutput out;
  out.trials.resize(jobs * n_est);

  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t j = next++; j < jobs; j = next++) {
      const std::size_t point = j / c.trials;
      const int trial = static_cast<int>(j % c.trials);
      TrialRecord* slot = &out.trials[j * n_est];
      if (c.base.field == FieldKind::Real)
        harness_detail::run_job<double>(c, point, trial, slot);
      else
        harness_detail::run_job<std::complex<double>>(c, point, trial, slot);
    }
  };
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(jobs)));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }

  for (std::size_t point = 0; point < points; ++point)
    for (std::size_t e = 0; e < n_est; ++e) {
      AggregateRecord a;
      a.sweep_value = c.sweep_values[point];
      a.estimator = c.estimators[e].name;
      a.estimator_config = describe(c.estimators[e]);
      for (int t = 0; t < c.trials; ++t) {
        const TrialRecord& r = out.trials[(point * c.trials + t) * n_est + e];
        if (!r.ok()) {
          ++out.failures;
          continue;
        }
        ++a.trials_completed;
        a.mean_mse += r.metrics.mse;
        a.mean_k_hat += r.metrics.k_hat;
        a.mean_iterations += r.metrics.iterations;
        a.mean_oracle_mse += r.oracle_mse;
      }
      const double n = a.trials_completed;
      if (n > 0) {
        a.mean_mse /= n;
        a.mean_k_hat /= n;
        a.mean_iterations /= n;
        a.mean_oracle_mse /= n;
      } else {
        a.mean_mse = a.mean_k_hat = a.mean_iterations = a.mean_oracle_mse = std::nan("");
      }
      out.aggregates.push_back(a);
    }
  return out;
}

inline void write_aggregate_csv(std::ostream& os, const ExperimentConfig& c, const ExperimentOutput& out)
{
  using harness_detail::csv_field;
  using harness_detail::num;
  os << "sweep_name,sweep_value,estimator,mean_mse,mean_k_hat,mean_iters,mean_oracle_mse,trials,"
        "snr_definition,estimator_config\r\n";
  for (const auto& a : out.aggregates)
    os << to_string(c.sweep) << ',' << num(a.sweep_value) << ',' << csv_field(a.estimator) << ',' << num(a.mean_mse)
       << ',' << num(a.mean_k_hat) << ',' << num(a.mean_iterations) << ',' << num(a.mean_oracle_mse) << ','
       << a.trials_completed << ',' << csv_field(kSnrDefinition) << ',' << csv_field(a.estimator_config) << "\r\n";
}

inline void write_trials_csv(std::ostream& os, const ExperimentConfig& c, const ExperimentOutput& out)
{
  using harness_detail::csv_field;
  using harness_detail::num;
  os << "sweep_name,sweep_value,estimator,trial,seed,mse,k_hat,iterations,support_exact,oracle_mse,status\r\n";
  for (const auto& r : out.trials)
    os << to_string(c.sweep) << ',' << num(r.sweep_value) << ',' << csv_field(r.estimator) << ',' << r.trial << ','
       << r.seed << ',' << num(r.metrics.mse) << ',' << r.metrics.k_hat << ',' << r.metrics.iterations << ','
       << (r.metrics.support_exact ? 1 : 0) << ',' << num(r.oracle_mse) << ',' << csv_field(r.status) << "\r\n";
}

// ---------------------------------------------------------------------------
// JSON configuration

namespace harness_detail {

inline void check_keys(const nlohmann::json& j, std::initializer_list<const char*> allowed, const char* where)
{
  if (!j.is_object()) throw std::invalid_argument(std::string(where) + ": expected an object");
  for (const auto& [key, _] : j.items()) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || key == a;
    if (!ok) throw std::invalid_argument(std::string(where) + ": unknown key '" + key + "'");
  }
}

inline std::vector<double> param_list(const nlohmann::json& v)
{
  if (v.is_number()) return {v.get<double>()};
  return v.get<std::vector<double>>();
}

}  // namespace harness_detail

inline EstimatorSpec estimator_from_json(const nlohmann::json& j)
{
  using harness_detail::param_list;
  harness_detail::check_keys(j, {"kind", "name", "epsilon", "eta", "a", "b", "max_iters", "tol"}, "estimator");
  if (!j.contains("kind")) throw std::invalid_argument("estimator: missing 'kind'");
  EstimatorSpec e = make_estimator(j.at("kind").get<std::string>());
  if (j.contains("epsilon")) e.prior.epsilon = j.at("epsilon").get<double>();
  const bool two = e.prior.layers == Layers::Two;
  if (j.contains("eta")) {
    if (!two) throw std::invalid_argument("estimator '" + e.kind + "': eta is estimated; set a/b");
    e.prior.eta = param_list(j.at("eta"));
  }
  if (j.contains("a") || j.contains("b")) {
    if (two) throw std::invalid_argument("estimator '" + e.kind + "' has no a/b parameters");
    if (j.contains("a")) e.prior.a = param_list(j.at("a"));
    if (j.contains("b")) e.prior.b = param_list(j.at("b"));
  }
  if (j.contains("max_iters")) e.max_iters = j.at("max_iters").get<int>();
  if (j.contains("tol")) e.tol = j.at("tol").get<double>();
  if (j.contains("name")) e.name = j.at("name").get<std::string>();
  else if (j.contains("epsilon")) e.name += "(eps=" + harness_detail::num(e.prior.epsilon) + ")";
  if (e.max_iters < 1) throw std::invalid_argument("estimator '" + e.name + "': max_iters must be >= 1");
  if (e.tol < 0.0) throw std::invalid_argument("estimator '" + e.name + "': tol must be >= 0");
  return e;
}

inline ExperimentConfig experiment_from_json(const nlohmann::json& j)
{
  harness_detail::check_keys(j, {"sweep", "base", "trials", "estimators", "base_seed"}, "experiment");
  ExperimentConfig c;
  if (!j.contains("sweep")) throw std::invalid_argument("experiment: missing 'sweep'");
  const auto& sw = j.at("sweep");
  harness_detail::check_keys(sw, {"snr", "m", "k"}, "sweep");
  if (sw.size() != 1) throw std::invalid_argument("sweep: exactly one of snr, m, k");
  const auto it = sw.begin();
  c.sweep = it.key() == "snr" ? SweepKind::Snr : it.key() == "m" ? SweepKind::M : SweepKind::K;
  c.sweep_values = it.value().get<std::vector<double>>();
  if (j.contains("base")) {
    const auto& b = j.at("base");
    harness_detail::check_keys(b, {"M", "L", "K", "snr_db", "field", "noise_precision"}, "base");
    if (b.contains("M")) c.base.M = b.at("M").get<int>();
    if (b.contains("L")) c.base.L = b.at("L").get<int>();
    if (b.contains("K")) c.base.K = b.at("K").get<int>();
    if (b.contains("snr_db")) c.base.snr_db = b.at("snr_db").get<double>();
    if (b.contains("field")) c.base.field = parse_field(b.at("field").get<std::string>());
    if (b.contains("noise_precision")) c.base.noise_precision = b.at("noise_precision").get<double>();
  }
  if (j.contains("trials")) c.trials = j.at("trials").get<int>();
  if (j.contains("base_seed")) c.base_seed = j.at("base_seed").get<std::uint64_t>();
  if (!j.contains("estimators")) throw std::invalid_argument("experiment: missing 'estimators'");
  for (const auto& e : j.at("estimators")) c.estimators.push_back(estimator_from_json(e));
  validate(c);
  for (double v : c.sweep_values) validate(sweep_point(c, v));
  return c;
}

inline ExperimentConfig load_experiment(const std::string& path)
{
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open config '" + path + "'");
  nlohmann::json j;
  try {
    is >> j;
  } catch (const nlohmann::json::parse_error& ex) {
    throw std::invalid_argument("config '" + path + "': " + ex.what());
  }
  return experiment_from_json(j);
}

inline const std::vector<std::string>& preset_names()
{
  static const std::vector<std::string> names{"fig4-complex-desk", "fig5-real-desk", "smoke"};
  return names;
}

inline ExperimentConfig preset(const std::string& name)
{
  ExperimentConfig c;
  c.base = GenConfig{};
  if (name == "fig4-complex-desk" || name == "fig5-real-desk") {
    c.base.field = name == "fig4-complex-desk" ? FieldKind::Complex : FieldKind::Real;
    c.sweep = SweepKind::Snr;
    c.sweep_values = {10, 20, 30, 40};
    c.trials = 50;
    c.base_seed = 1;
    c.estimators.push_back(make_estimator("fastrvm"));
    c.estimators.push_back(make_estimator("fastlaplace"));
    auto f0 = make_estimator("fast2l");
    f0.prior = PriorConfig::two_layer(0.0, 1.0);
    f0.name = "Fast-2L(eps=0)";
    auto fh = make_estimator("fast2l");
    fh.prior = PriorConfig::two_layer(0.5, 1.0);
    fh.name = "Fast-2L(eps=0.5)";
    c.estimators.push_back(f0);
    c.estimators.push_back(fh);
    c.estimators.push_back(make_estimator("fast3l"));
    return c;
  }
  if (name == "smoke") {
    c.base.M = 30;
    c.base.L = 60;
    c.base.K = 4;
    c.sweep_values = {20, 30};
    c.trials = 3;
    c.estimators = {make_estimator("fast2l"), make_estimator("emrvm"), make_estimator("vmp2l")};
    return c;
  }
  throw std::invalid_argument("unknown preset '" + name + "'");
}

}  // namespace sbl
