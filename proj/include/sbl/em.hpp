#pragma once

// Generalized EM for the 2-L / 3-L hierarchy. The E-step computes the Gaussian
// posterior of the active weights; the M-step updates gamma, eta (3-L only) and
// lambda in that order, each given the latest values of the others.

#include <algorithm>
#include <cmath>
#include <sstream>
#include <utility>
#include <vector>

#include "sbl/priors.hpp"
#include "sbl/solver_common.hpp"

namespace sbl {

template <FieldScalar Scalar>
struct EmState {
  Vec<Scalar> mu;
  Mat<Scalar> sigma;
  RealVec gamma;  // per active index
  RealVec eta;    // per active index
  double lambda = 1.0;
  std::vector<int> active;
};

struct EmConfig {
  PriorConfig prior;
  double prune_gamma = 1e-5;
  int max_iters = 1000;
  double tol = 1e-8;
  LambdaMode lambda_mode = LambdaMode::estimate();
};

inline void validate(const EmConfig& cfg, int L)
{
  validate(cfg.prior, L);
  if (!(cfg.prune_gamma > 0.0)) throw std::invalid_argument("EmConfig: prune_gamma must be positive");
  if (cfg.max_iters < 1) throw std::invalid_argument("EmConfig: max_iters must be >= 1");
  if (!(cfg.tol > 0.0)) throw std::invalid_argument("EmConfig: tol must be positive");
  if (cfg.prior.layers == Layers::Three)
    for (int l = 0; l < L; ++l)
      if (!(cfg.prior.epsilon + cfg.prior.a_at(l) > 1.0))
        throw std::invalid_argument("EmConfig: three-layer EM needs epsilon + a > 1");
}

/// Posterior covariance and mean of the active weights.
template <FieldScalar Scalar>
std::pair<Mat<Scalar>, Vec<Scalar>> e_step(const EmState<Scalar>& state, const ProblemInstance<Scalar>& p)
{
  const auto k = static_cast<Eigen::Index>(state.active.size());
  if (k == 0) throw std::invalid_argument("e_step: empty active set");
  if (state.gamma.size() != k) throw std::invalid_argument("e_step: gamma does not match the active set");
  const Mat<Scalar> Ha = detail::gather_columns(p.H, state.active);
  Mat<Scalar> A = state.lambda * (Ha.adjoint() * Ha);
  for (Eigen::Index i = 0; i < k; ++i) A(i, i) += 1.0 / state.gamma(i);
  Eigen::LLT<Mat<Scalar>> llt(A);
  if (llt.info() != Eigen::Success) {
    std::ostringstream msg;
    msg << "e_step: posterior precision is not positive definite; gamma =";
    for (Eigen::Index i = 0; i < k; ++i) msg << ' ' << state.gamma(i);
    throw NumericalError(msg.str());
  }
  Mat<Scalar> sigma = llt.solve(Mat<Scalar>::Identity(k, k));
  sigma = (0.5 * (sigma + sigma.adjoint())).eval();
  Vec<Scalar> mu = state.lambda * (sigma * (Ha.adjoint() * p.y));
  return {std::move(sigma), std::move(mu)};
}

/// Mode of gamma_l given <|alpha_l|^2>. Evaluated in a cancellation-free form;
/// eta = 0 gives rho m / (rho + 1 - eps), which reduces to m at eps = 1.
inline double m_step_gamma(double second_moment, double eta, double epsilon, FieldKind field)
{
  if (!(second_moment >= 0.0)) throw std::domain_error("m_step_gamma: negative second moment");
  const double r = rho(field);
  const double c = epsilon - r - 1.0;
  const double m = second_moment;
  if (c < 0.0) {
    const double g = 2.0 * r * m / (-c + std::sqrt(c * c + 4.0 * r * eta * m));
    return std::max(0.0, g);
  }
  if (eta == 0.0) throw std::invalid_argument("m_step_gamma: no finite mode for eta = 0 and epsilon >= rho + 1");
  return std::max(0.0, (c + std::sqrt(c * c + 4.0 * r * eta * m)) / (2.0 * eta));
}

inline double m_step_eta(double gamma, double epsilon, double a, double b)
{
  if (!(epsilon + a > 1.0)) throw std::invalid_argument("m_step_eta: mode undefined for epsilon + a <= 1");
  return (epsilon + a - 1.0) / (gamma + b);
}

inline double m_step_lambda(double residual_expect, int M)
{
  if (!(residual_expect > 0.0) || !std::isfinite(residual_expect)) return kLambdaMax;
  return std::min(kLambdaMax, M / residual_expect);
}

/// log p(y, gamma, eta, lambda) over the active set, dropping the constants
/// log Gamma(eps) and log Gamma(a) (and the flat lambda prior).
template <FieldScalar Scalar>
double em_objective(const EmState<Scalar>& state, const ProblemInstance<Scalar>& p, const PriorConfig& prior)
{
  constexpr double r = FieldTraits<Scalar>::rho;
  const int M = p.M();
  const Mat<Scalar> Ha = detail::gather_columns(p.H, state.active);
  Mat<Scalar> C = Mat<Scalar>::Identity(M, M) / state.lambda;
  if (Ha.cols() > 0) C.noalias() += Ha * state.gamma.asDiagonal() * Ha.adjoint();
  Eigen::LLT<Mat<Scalar>> llt(C);
  if (llt.info() != Eigen::Success) throw NumericalError("em_objective: marginal covariance not positive definite");
  const Mat<Scalar> Lc = llt.matrixL();
  double logdet = 0.0;
  for (int i = 0; i < M; ++i) logdet += 2.0 * std::log(std::real(Lc(i, i)));
  const Vec<Scalar> w = Lc.template triangularView<Eigen::Lower>().solve(p.y);
  double obj = -r * logdet - r * w.squaredNorm() - r * M * std::log(std::numbers::pi / r);

  const double eps = prior.epsilon;
  for (std::size_t k = 0; k < state.active.size(); ++k) {
    const double g = state.gamma(static_cast<Eigen::Index>(k));
    const double e = state.eta(static_cast<Eigen::Index>(k));
    obj += (eps - 1.0) * std::log(g) - e * g;
    if (e > 0.0 && eps != 0.0) obj += eps * std::log(e);
    if (prior.layers == Layers::Three) {
      const int l = state.active[k];
      obj += (prior.a_at(l) - 1.0) * std::log(e) - prior.b_at(l) * e;
    }
  }
  return obj;
}

/// Drops active indices with gamma < threshold (gamma <= 0 when threshold is 0).
template <FieldScalar Scalar>
void prune(EmState<Scalar>& st, double threshold)
{
  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < st.gamma.size(); ++k)
    if (threshold > 0.0 ? st.gamma(k) >= threshold : st.gamma(k) > 0.0) keep.push_back(k);
  if (keep.size() == st.active.size()) return;
  std::vector<int> active;
  RealVec gamma(static_cast<Eigen::Index>(keep.size())), eta(static_cast<Eigen::Index>(keep.size()));
  const bool have_post = st.mu.size() == st.gamma.size();
  Vec<Scalar> mu(have_post ? keep.size() : 0);
  Mat<Scalar> sigma(have_post ? keep.size() : 0, have_post ? keep.size() : 0);
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const auto k = keep[i];
    active.push_back(st.active[k]);
    gamma(i) = st.gamma(k);
    eta(i) = st.eta(k);
    if (have_post) {
      mu(i) = st.mu(k);
      for (std::size_t j = 0; j < keep.size(); ++j) sigma(i, j) = st.sigma(k, keep[j]);
    }
  }
  st.active = std::move(active);
  st.gamma = std::move(gamma);
  st.eta = std::move(eta);
  st.mu = std::move(mu);
  st.sigma = std::move(sigma);
}

template <FieldScalar Scalar>
struct EmResult : RunResult<Scalar> {
  /// Objective at the start of each iteration and after its M-step, on the
  /// same active set. Pruning happens between an `after` and the next `before`.
  std::vector<double> objective_before;
  std::vector<double> objective_after;
  std::vector<std::size_t> active_size;
  EmState<Scalar> state;
};

template <FieldScalar Scalar>
EmResult<Scalar> run_em(const ProblemInstance<Scalar>& p, const EmConfig& cfg)
{
  constexpr FieldKind field = FieldTraits<Scalar>::kind;
  validate(cfg, p.L());
  const PriorConfig& prior = cfg.prior;
  const bool three = prior.layers == Layers::Three;

  EmState<Scalar> st;
  st.active = detail::usable_columns(p.H);
  const auto n0 = static_cast<Eigen::Index>(st.active.size());
  st.gamma = RealVec::Ones(n0);
  st.eta.resize(n0);
  for (Eigen::Index k = 0; k < n0; ++k) {
    const int l = st.active[k];
    st.eta(k) = three ? prior.a_at(l) / prior.b_at(l) : prior.eta_at(l);
  }
  st.lambda = cfg.lambda_mode.is_known() ? cfg.lambda_mode.value : detail::default_lambda(p);

  EmResult<Scalar> res;
  int it = 0;
  double prev = std::numeric_limits<double>::quiet_NaN();
  for (; it < cfg.max_iters; ++it) {
    if (st.active.empty()) break;
    res.objective_before.push_back(em_objective(st, p, prior));
    auto [sigma, mu] = e_step(st, p);

    for (Eigen::Index k = 0; k < mu.size(); ++k) {
      const double m = std::norm(mu(k)) + std::real(sigma(k, k));
      st.gamma(k) = m_step_gamma(m, st.eta(k), prior.epsilon, field);
    }
    if (three)
      for (Eigen::Index k = 0; k < mu.size(); ++k) {
        const int l = st.active[k];
        st.eta(k) = m_step_eta(st.gamma(k), prior.epsilon, prior.a_at(l), prior.b_at(l));
      }
    if (!cfg.lambda_mode.is_known()) {
      const Mat<Scalar> Ha = detail::gather_columns(p.H, st.active);
      st.lambda = m_step_lambda(detail::expected_residual(Ha, p.y, mu, sigma), p.M());
    }
    st.mu = std::move(mu);
    st.sigma = std::move(sigma);

    // Components whose variance collapsed to exactly zero are removed before
    // the objective is evaluated (log 0); the usual threshold applies after.
    prune(st, 0.0);
    const double obj = st.active.empty() ? res.objective_before.back() : em_objective(st, p, prior);
    res.objective_after.push_back(obj);
    res.objective.push_back(obj);
    prune(st, cfg.prune_gamma);
    res.active_size.push_back(st.active.size());

    if (std::isfinite(prev) && std::abs(obj - prev) <= cfg.tol * std::abs(obj)) {
      res.converged = true;
      ++it;
      break;
    }
    prev = obj;
  }

  res.lambda = st.lambda;
  if (st.active.empty()) {
    res.all_pruned = true;
    res.estimate = Vec<Scalar>::Zero(p.L());
  } else {
    auto [sigma, mu] = e_step(st, p);
    st.mu = std::move(mu);
    st.sigma = std::move(sigma);
    res.estimate = detail::scatter(p.L(), st.active, st.mu);
  }
  res.active = st.active;
  res.state = st;
  detail::finish(res, p, it);
  return res;
}

}  // namespace sbl
