#pragma once

// Hierarchical Gaussian scale-mixture priors on the weights:
//   two-layer:   alpha_l | gamma_l ~ N_rho(0, gamma_l),  gamma_l ~ Gamma(eps, eta_l)
//   three-layer: additionally eta_l ~ Gamma(a_l, b_l)
// Marginal densities, log-penalties, and the scalar estimation rules for an
// orthonormal dictionary.

#include <cmath>
#include <complex>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbl/field.hpp"
#include "sbl/specfun.hpp"

namespace sbl {

enum class Layers { Two, Three };

/// Per-component parameters accept a single entry, broadcast to every index.
struct PriorConfig {
  Layers layers = Layers::Two;
  double epsilon = 0.0;
  std::vector<double> eta{1.0};  // two-layer rates
  std::vector<double> a{1.0};    // three-layer shapes
  std::vector<double> b{0.1};    // three-layer rates
  double lambda_prior_c = 0.0;
  double lambda_prior_d = 0.0;

  static PriorConfig two_layer(double epsilon, double eta)
  {
    PriorConfig c;
    c.layers = Layers::Two;
    c.epsilon = epsilon;
    c.eta = {eta};
    return c;
  }

  static PriorConfig three_layer(double epsilon, double a, double b)
  {
    PriorConfig c;
    c.layers = Layers::Three;
    c.epsilon = epsilon;
    c.a = {a};
    c.b = {b};
    return c;
  }

  double eta_at(int l) const { return pick(eta, l); }
  double a_at(int l) const { return pick(a, l); }
  double b_at(int l) const { return pick(b, l); }

 private:
  static double pick(const std::vector<double>& v, int l)
  {
    if (v.empty()) throw std::invalid_argument("PriorConfig: empty parameter vector");
    return v.size() == 1 ? v.front() : v.at(static_cast<std::size_t>(l));
  }
};

inline void validate(const PriorConfig& cfg, int L)
{
  auto check_len = [L](const std::vector<double>& v, const char* name) {
    if (v.empty() || (v.size() != 1 && static_cast<int>(v.size()) != L))
      throw std::invalid_argument(std::string("PriorConfig: ") + name + " must have 1 or L entries");
  };
  if (!(cfg.epsilon >= 0.0) || !std::isfinite(cfg.epsilon))
    throw std::invalid_argument("PriorConfig: epsilon must be >= 0");
  if (cfg.lambda_prior_c < 0.0 || cfg.lambda_prior_d < 0.0)
    throw std::invalid_argument("PriorConfig: lambda prior constants must be >= 0");
  if (cfg.layers == Layers::Two) {
    check_len(cfg.eta, "eta");
    for (double e : cfg.eta)
      if (!(e >= 0.0)) throw std::invalid_argument("PriorConfig: eta entries must be >= 0");
  } else {
    check_len(cfg.a, "a");
    check_len(cfg.b, "b");
    for (double v : cfg.a)
      if (!(v > 0.0)) throw std::invalid_argument("PriorConfig: a entries must be > 0");
    for (double v : cfg.b)
      if (!(v > 0.0)) throw std::invalid_argument("PriorConfig: b entries must be > 0");
  }
}

/// Raised for density evaluations in the improper-parameter regime.
class ImproperDensity : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Raised when a weight sits on the pole of the prior at the origin.
class PoleError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Two-layer (Bessel K) marginal density of a weight with magnitude |alpha|.
/// Complex weights are densities with respect to area in the plane.
inline double pdf_2l(double abs_alpha, double epsilon, double eta, FieldKind field)
{
  if (!std::isfinite(abs_alpha)) throw std::domain_error("pdf_2l: non-finite weight");
  if (!(epsilon > 0.0) || !(eta > 0.0))
    throw ImproperDensity("pdf_2l: density is improper for epsilon <= 0 or eta <= 0; use log_penalty");
  const double r = rho(field);
  const double nu = epsilon - r;
  const double log_c = std::log(2.0) + 0.5 * (epsilon + r) * std::log(r * eta) - r * std::log(std::numbers::pi) -
                       std::lgamma(epsilon);
  if (abs_alpha == 0.0) {
    if (nu <= 0.0) throw PoleError("pdf_2l: density has a pole at the origin for epsilon <= rho");
    // |a|^nu K_nu(2 sqrt(rho eta)|a|) -> Gamma(nu)/2 (rho eta)^{-nu/2}
    return std::exp(log_c + std::lgamma(nu) - std::log(2.0) - 0.5 * nu * std::log(r * eta));
  }
  const double z = 2.0 * std::sqrt(r * eta) * abs_alpha;
  return std::exp(log_c + nu * std::log(abs_alpha) + specfun::log_bessel_k(nu, z));
}

template <FieldScalar Scalar>
double pdf_2l(Scalar alpha, double epsilon, double eta)
{
  return pdf_2l(std::abs(alpha), epsilon, eta, FieldTraits<Scalar>::kind);
}

namespace prior_detail {

// log(x^nu U(A; nu+1; x)) with x = rho |alpha|^2 / b. For |alpha| small enough
// that x underflows, U is replaced by its small-argument limit.
inline double log_xnu_u(double nu, double A, double abs_alpha, double r, double b)
{
  const double x = r * abs_alpha * abs_alpha / b;
  if (x > 0.0) return nu * std::log(x) + std::log(specfun::hyper_u(A, nu + 1.0, x));
  const double log_x = std::log(r / b) + 2.0 * std::log(abs_alpha);
  if (nu > 0.0) return std::lgamma(nu) - std::lgamma(A);
  if (nu < 0.0) return nu * log_x + std::lgamma(-nu) - std::lgamma(A - nu);
  throw std::domain_error("three-layer density: weight magnitude underflows");
}

}  // namespace prior_detail

/// Three-layer marginal density (gamma rate integrated out), expressed through
/// Tricomi's U function.
inline double pdf_3l(double abs_alpha, double epsilon, double a, double b, FieldKind field)
{
  if (!std::isfinite(abs_alpha)) throw std::domain_error("pdf_3l: non-finite weight");
  if (!(epsilon > 0.0)) throw ImproperDensity("pdf_3l: density is improper for epsilon <= 0");
  if (!(a > 0.0) || !(b > 0.0)) throw std::domain_error("pdf_3l: a and b must be positive");
  const double r = rho(field);
  const double nu = epsilon - r;
  const double log_base = r * std::log(r / (std::numbers::pi * b)) - std::lgamma(epsilon) - std::lgamma(a) +
                          std::lgamma(a + r);
  if (abs_alpha == 0.0) {
    if (nu <= 0.0) throw PoleError("pdf_3l: density has a pole at the origin for epsilon <= rho");
    return std::exp(log_base + std::lgamma(nu));
  }
  return std::exp(log_base + std::lgamma(epsilon + a) +
                  prior_detail::log_xnu_u(nu, epsilon + a, abs_alpha, r, b));
}

template <FieldScalar Scalar>
double pdf_3l(Scalar alpha, double epsilon, double a, double b)
{
  return pdf_3l(std::abs(alpha), epsilon, a, b, FieldTraits<Scalar>::kind);
}

/// -log of the alpha-dependent factor of the marginal prior of one weight.
/// eta = 0 (flat gamma layer) gives 2(rho - eps) log|alpha|, which is the
/// log-sum penalty 2 rho log|alpha| at eps = 0.
inline double penalty_term(double abs_alpha, const PriorConfig& cfg, int l, FieldKind field)
{
  const double r = rho(field);
  const double eps = cfg.epsilon;
  const double nu = eps - r;
  if (cfg.layers == Layers::Three) {
    const double a = cfg.a_at(l), b = cfg.b_at(l);
    if (abs_alpha == 0.0) {
      if (nu <= 0.0) throw PoleError("log_penalty: zero weight at the pole of the prior");
      return -std::lgamma(nu) + std::lgamma(eps + a);  // limit of -log(x^nu U(eps+a; nu+1; x))
    }
    return -prior_detail::log_xnu_u(nu, eps + a, abs_alpha, r, b);
  }
  const double eta = cfg.eta_at(l);
  if (eta == 0.0) {
    if (!(eps < r)) throw ImproperDensity("log_penalty: eta = 0 requires epsilon < rho");
    if (abs_alpha == 0.0) throw PoleError("log_penalty: zero weight at the pole of the prior");
    return 2.0 * (r - eps) * std::log(abs_alpha);
  }
  if (abs_alpha == 0.0) {
    if (nu <= 0.0) throw PoleError("log_penalty: zero weight at the pole of the prior");
    return -(std::lgamma(nu) - std::log(2.0) - 0.5 * nu * std::log(r * eta));
  }
  const double z = 2.0 * std::sqrt(r * eta) * abs_alpha;
  return -(nu * std::log(abs_alpha) + specfun::log_bessel_k(nu, z));
}

/// Penalty Q(alpha) up to an additive constant; larger means more penalized.
template <FieldScalar Scalar>
double log_penalty(const Vec<Scalar>& alpha, const PriorConfig& cfg)
{
  validate(cfg, static_cast<int>(alpha.size()));
  double q = 0.0;
  for (Eigen::Index l = 0; l < alpha.size(); ++l)
    q += penalty_term(std::abs(alpha(l)), cfg, static_cast<int>(l), FieldTraits<Scalar>::kind);
  return q;
}

/// sign(z) max(0, |z| - lambda^{-1} sqrt(eta/rho)), sign(z) = z/|z|.
template <FieldScalar Scalar>
Scalar soft_threshold(Scalar z, double eta, double lambda)
{
  if (!std::isfinite(std::abs(z)) || !std::isfinite(eta) || !std::isfinite(lambda))
    throw std::domain_error("soft_threshold: non-finite input");
  if (!(lambda > 0.0)) throw std::domain_error("soft_threshold: lambda must be positive");
  const double t = std::sqrt(eta / FieldTraits<Scalar>::rho) / lambda;
  const double mag = std::abs(z);
  if (mag <= t) return Scalar(0);
  return z * ((mag - t) / mag);
}

/// rho * E[1/gamma | alpha]: the curvature weight Q'(|alpha|) / (2|alpha|) of the
/// marginal penalty, for |alpha| > 0.
inline double curvature_weight(double abs_alpha, const PriorConfig& cfg, int l, FieldKind field)
{
  const double r = rho(field);
  const double nu = cfg.epsilon - r;
  if (cfg.layers == Layers::Three) {
    const double A = cfg.epsilon + cfg.a_at(l);
    const double B = nu + 1.0;
    const double b = cfg.b_at(l);
    const double x = r * abs_alpha * abs_alpha / b;
    const double u_ratio = specfun::hyper_u(A + 1.0, B + 1.0, x) / specfun::hyper_u(A, B, x);
    return -(r / b) * (nu / x - A * u_ratio);
  }
  const double eta = cfg.eta_at(l);
  if (eta == 0.0) return (r - cfg.epsilon) / (abs_alpha * abs_alpha);
  const double z = 2.0 * std::sqrt(r * eta) * abs_alpha;
  return std::sqrt(r * eta) / abs_alpha * specfun::bessel_k_ratio(nu, -1, z);
}

template <FieldScalar Scalar>
struct ScalarMapResult {
  Scalar value{};
  bool converged = false;
  int iterations = 0;
};

/// MAP-style estimation rule for one coefficient z = h_l^H y of an orthonormal
/// dictionary: the fixed point of alpha <- z / (1 + w(alpha)/(lambda rho))
/// reached from alpha = z. The iteration is followed by a bracketed polish so
/// slowly converging cases near the threshold resolve exactly; when no positive
/// fixed point exists below |z| the result is 0.
template <FieldScalar Scalar>
ScalarMapResult<Scalar> scalar_map_orthonormal(Scalar z, const PriorConfig& cfg, double lambda, int l = 0)
{
  if (!(lambda > 0.0)) throw std::domain_error("scalar_map_orthonormal: lambda must be positive");
  constexpr FieldKind field = FieldTraits<Scalar>::kind;
  constexpr double r = FieldTraits<Scalar>::rho;
  ScalarMapResult<Scalar> out;
  const double mag = std::abs(z);
  if (mag == 0.0) {
    out.converged = true;
    return out;
  }
  auto T = [&](double x) { return mag / (1.0 + curvature_weight(x, cfg, l, field) / (lambda * r)); };
  auto h = [&](double x) { return T(x) - x; };

  double x = mag;
  int it = 0;
  for (; it < 500; ++it) {
    const double next = T(x);
    const double step = std::abs(next - x);
    x = next;
    if (step <= 1e-10 || x < 1e-300 * mag) break;
  }
  out.iterations = it + 1;

  // Largest root of h on (0, x]: scan down geometrically for a sign change.
  const double floor = 1e-14 * mag;
  double hi = std::max(x, floor);
  double lo = -1.0;
  if (h(hi) >= 0.0) {
    lo = hi;
    hi = mag;  // h(mag) < 0 always, since w > 0
  } else {
    for (double cand = hi * 0.8408964152537145; cand >= floor; cand *= 0.8408964152537145) {
      if (h(cand) > 0.0) {
        lo = cand;
        break;
      }
      hi = cand;
    }
  }
  if (lo < 0.0) {
    out.converged = true;  // no positive fixed point: collapses to zero
    return out;
  }
  for (int k = 0; k < 200 && (hi - lo) > 1e-15 * hi; ++k) {
    const double mid = 0.5 * (lo + hi);
    (h(mid) > 0.0 ? lo : hi) = mid;
  }
  out.converged = (hi - lo) <= 1e-15 * hi * 2.0;
  out.value = z * (0.5 * (lo + hi) / mag);
  return out;
}

}  // namespace sbl
