#pragma once

// Mean-field variational message passing for the 2-L / 3-L hierarchy:
// q(alpha) Gaussian, q(gamma_l) generalized inverse Gaussian, q(eta_l) gamma
// (3-L), q(lambda) gamma. Factors are refreshed round-robin in that order.

#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "sbl/priors.hpp"
#include "sbl/solver_common.hpp"
#include "sbl/specfun.hpp"

namespace sbl {

/// GIG(p, u, v) with density proportional to g^{p-1} exp(-(u g + v / g) / 2).
struct GigPosterior {
  double p = 0.0;
  double u = 0.0;
  double v = 0.0;
};

/// E[g^n] for n in {-1, 1, ...}: (v/u)^{n/2} K_{p+n}(sqrt(uv)) / K_p(sqrt(uv)).
/// The u = 0 limit is the inverse-gamma case (needs p < 0).
inline double gig_moment(const GigPosterior& g, int n)
{
  if (!(g.u >= 0.0) || !(g.v >= 0.0) || (g.u == 0.0 && g.v == 0.0))
    throw std::domain_error("gig_moment: need u, v >= 0, not both zero");
  if (n == 0) return 1.0;
  if (g.u == 0.0) {
    // inverse gamma, shape -p, scale v/2
    const double shape = -g.p;
    if (!(shape > 0.0)) throw std::domain_error("gig_moment: improper for u = 0 and p >= 0");
    if (n < 0) {
      double m = 1.0;
      for (int k = 0; k < -n; ++k) m *= (shape + k) / (0.5 * g.v);
      return m;
    }
    if (!(shape > n)) return std::numeric_limits<double>::infinity();
    double m = 1.0;
    for (int k = 1; k <= n; ++k) m *= (0.5 * g.v) / (shape - k);
    return m;
  }
  if (g.v == 0.0) {
    // gamma, shape p, rate u/2
    if (!(g.p > 0.0)) throw std::domain_error("gig_moment: improper for v = 0 and p <= 0");
    if (n < 0 && !(g.p > -n)) return std::numeric_limits<double>::infinity();
    return std::exp(std::lgamma(g.p + n) - std::lgamma(g.p) - n * std::log(0.5 * g.u));
  }
  const double z = std::sqrt(g.u * g.v);
  return std::pow(g.v / g.u, 0.5 * n) * specfun::bessel_k_ratio(g.p, n, z);
}

/// E[1/g] at p = 1/2, where K_{-1/2} = K_{1/2} collapses the ratio: sqrt(u/v).
inline double gig_inv_mean_half(double u, double v)
{
  if (!(u >= 0.0) || !(v > 0.0)) throw std::domain_error("gig_inv_mean_half: need u >= 0, v > 0");
  return std::sqrt(u / v);
}

struct GammaFactor {
  GigPosterior gig;
  double gamma_mean = 0.0;
  double inv_gamma_mean = 0.0;
};

inline GammaFactor update_q_gamma(double second_moment, double eta_mean, double epsilon, FieldKind field)
{
  if (!(second_moment > 0.0)) throw std::domain_error("update_q_gamma: second moment must be positive");
  const double r = rho(field);
  GammaFactor f;
  f.gig = {epsilon - r, 2.0 * eta_mean, 2.0 * r * second_moment};
  f.inv_gamma_mean = gig_moment(f.gig, -1);
  f.gamma_mean = gig_moment(f.gig, 1);
  return f;
}

inline double update_q_eta(double gamma_mean, double epsilon, double a, double b)
{
  return (epsilon + a) / (gamma_mean + b);
}

inline double update_q_lambda(double residual_expect, int M, double c, double d, FieldKind field)
{
  const double r = rho(field);
  const double den = r * residual_expect + d;
  if (!(den > 0.0) || !std::isfinite(den)) return kLambdaMax;
  return std::min(kLambdaMax, (r * M + c) / den);
}

template <FieldScalar Scalar>
struct VmpState {
  Vec<Scalar> alpha_mean;
  Mat<Scalar> alpha_cov;
  RealVec inv_gamma_mean;
  RealVec gamma_mean;
  RealVec eta_mean;
  double lambda_mean = 1.0;
  std::vector<int> active;
};

struct VmpConfig {
  PriorConfig prior;
  double prune_invgamma = 1e8;
  int max_iters = 1000;
  double tol = 1e-6;
  LambdaMode lambda_mode = LambdaMode::estimate();
};

inline void validate(const VmpConfig& cfg, int L)
{
  validate(cfg.prior, L);
  if (!(cfg.prune_invgamma > 1.0)) throw std::invalid_argument("VmpConfig: prune_invgamma must exceed 1");
  if (cfg.max_iters < 1) throw std::invalid_argument("VmpConfig: max_iters must be >= 1");
  if (!(cfg.tol > 0.0)) throw std::invalid_argument("VmpConfig: tol must be positive");
}

/// Gaussian factor over the active weights.
template <FieldScalar Scalar>
std::pair<Mat<Scalar>, Vec<Scalar>> update_q_alpha(const VmpState<Scalar>& st, const ProblemInstance<Scalar>& p)
{
  const auto k = static_cast<Eigen::Index>(st.active.size());
  if (k == 0) throw std::invalid_argument("update_q_alpha: empty active set");
  const Mat<Scalar> Ha = detail::gather_columns(p.H, st.active);
  Mat<Scalar> A = st.lambda_mean * (Ha.adjoint() * Ha);
  for (Eigen::Index i = 0; i < k; ++i) A(i, i) += st.inv_gamma_mean(i);
  Eigen::LLT<Mat<Scalar>> llt(A);
  if (llt.info() != Eigen::Success) throw NumericalError("update_q_alpha: precision is not positive definite");
  Mat<Scalar> cov = llt.solve(Mat<Scalar>::Identity(k, k));
  cov = (0.5 * (cov + cov.adjoint())).eval();
  Vec<Scalar> mean = st.lambda_mean * (cov * (Ha.adjoint() * p.y));
  return {std::move(cov), std::move(mean)};
}

template <FieldScalar Scalar>
VmpState<Scalar> init_vmp_state(const ProblemInstance<Scalar>& p, const VmpConfig& cfg)
{
  const PriorConfig& prior = cfg.prior;
  VmpState<Scalar> st;
  st.active = detail::usable_columns(p.H);
  const auto n = static_cast<Eigen::Index>(st.active.size());
  st.inv_gamma_mean = RealVec::Ones(n);
  st.gamma_mean = RealVec::Ones(n);
  st.eta_mean.resize(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    const int l = st.active[k];
    st.eta_mean(k) = prior.layers == Layers::Three ? prior.a_at(l) / prior.b_at(l) : prior.eta_at(l);
  }
  st.lambda_mean = cfg.lambda_mode.is_known() ? cfg.lambda_mode.value : detail::default_lambda(p);
  return st;
}

namespace vmp_detail {

template <FieldScalar Scalar>
void keep_only(VmpState<Scalar>& st, const std::vector<Eigen::Index>& keep)
{
  const auto n = static_cast<Eigen::Index>(keep.size());
  VmpState<Scalar> out;
  out.lambda_mean = st.lambda_mean;
  out.alpha_mean.resize(n);
  out.alpha_cov.resize(n, n);
  out.inv_gamma_mean.resize(n);
  out.gamma_mean.resize(n);
  out.eta_mean.resize(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const auto k = keep[i];
    out.active.push_back(st.active[k]);
    out.alpha_mean(i) = st.alpha_mean(k);
    for (Eigen::Index j = 0; j < n; ++j) out.alpha_cov(i, j) = st.alpha_cov(k, keep[j]);
    out.inv_gamma_mean(i) = st.inv_gamma_mean(k);
    out.gamma_mean(i) = st.gamma_mean(k);
    out.eta_mean(i) = st.eta_mean(k);
  }
  st = std::move(out);
}

}  // namespace vmp_detail

struct SweepReport {
  double max_rel_change = 0.0;  // of <1/gamma> over components that survive
  int pruned = 0;
};

/// One round-robin pass q(alpha) -> q(gamma) -> q(eta) -> q(lambda), then pruning.
template <FieldScalar Scalar>
SweepReport vmp_sweep(VmpState<Scalar>& st, const ProblemInstance<Scalar>& p, const VmpConfig& cfg)
{
  constexpr FieldKind field = FieldTraits<Scalar>::kind;
  const PriorConfig& prior = cfg.prior;
  SweepReport rep;
  if (st.active.empty()) return rep;

  auto [cov, mean] = update_q_alpha(st, p);
  st.alpha_cov = std::move(cov);
  st.alpha_mean = std::move(mean);

  const auto n = static_cast<Eigen::Index>(st.active.size());
  std::vector<char> drop(n, 0);
  for (Eigen::Index k = 0; k < n; ++k) {
    const double m = std::norm(st.alpha_mean(k)) + std::real(st.alpha_cov(k, k));
    if (!(m >= 1e-300)) {
      drop[k] = 1;
      continue;
    }
    const GammaFactor f = update_q_gamma(m, st.eta_mean(k), prior.epsilon, field);
    const double old = st.inv_gamma_mean(k);
    st.inv_gamma_mean(k) = f.inv_gamma_mean;
    st.gamma_mean(k) = f.gamma_mean;
    if (f.inv_gamma_mean > cfg.prune_invgamma) {
      drop[k] = 1;
      continue;
    }
    rep.max_rel_change = std::max(rep.max_rel_change, std::abs(f.inv_gamma_mean - old) / std::abs(f.inv_gamma_mean));
  }
  if (prior.layers == Layers::Three)
    for (Eigen::Index k = 0; k < n; ++k) {
      const int l = st.active[k];
      if (!drop[k]) st.eta_mean(k) = update_q_eta(st.gamma_mean(k), prior.epsilon, prior.a_at(l), prior.b_at(l));
    }
  if (!cfg.lambda_mode.is_known()) {
    const Mat<Scalar> Ha = detail::gather_columns(p.H, st.active);
    const double resid = detail::expected_residual(Ha, p.y, st.alpha_mean, st.alpha_cov);
    st.lambda_mean = update_q_lambda(resid, p.M(), prior.lambda_prior_c, prior.lambda_prior_d, field);
  }

  std::vector<Eigen::Index> keep;
  for (Eigen::Index k = 0; k < n; ++k)
    if (!drop[k]) keep.push_back(k);
  rep.pruned = static_cast<int>(n - static_cast<Eigen::Index>(keep.size()));
  if (rep.pruned > 0) vmp_detail::keep_only(st, keep);
  return rep;
}

template <FieldScalar Scalar>
struct VmpResult : RunResult<Scalar> {
  VmpState<Scalar> state;
  std::vector<std::size_t> active_size;
};

template <FieldScalar Scalar>
VmpResult<Scalar> run_vmp(const ProblemInstance<Scalar>& p, const VmpConfig& cfg)
{
  validate(cfg, p.L());
  VmpState<Scalar> st = init_vmp_state(p, cfg);
  VmpResult<Scalar> res;
  int it = 0;
  for (; it < cfg.max_iters && !st.active.empty(); ++it) {
    const SweepReport rep = vmp_sweep(st, p, cfg);
    res.active_size.push_back(st.active.size());
    if (rep.pruned == 0 && rep.max_rel_change < cfg.tol) {
      res.converged = true;
      ++it;
      break;
    }
  }
  res.lambda = st.lambda_mean;
  res.all_pruned = st.active.empty();
  res.estimate = res.all_pruned ? Vec<Scalar>::Zero(p.L()) : detail::scatter(p.L(), st.active, st.alpha_mean);
  res.active = st.active;
  res.state = std::move(st);
  detail::finish(res, p, it);
  return res;
}

}  // namespace sbl
