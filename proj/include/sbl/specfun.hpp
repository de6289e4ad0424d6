#pragma once

// Modified Bessel function of the second kind K_nu(x) for real order, its
// logarithm and order-shift ratios, and Tricomi's confluent hypergeometric
// function U(a; b; x).

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace sbl::specfun {

namespace detail {

inline void check_order_arg(double nu, double x)
{
  if (!std::isfinite(nu) || !std::isfinite(x))
    throw std::domain_error("bessel_k: non-finite argument");
  if (x <= 0.0) throw std::domain_error("bessel_k: argument must be positive, got " + std::to_string(x));
}

// Taylor coefficients of 1/Gamma(1+z) about z = 0.
inline constexpr double kRecipGamma[] = {
    1.0,
    0.57721566490153286061,
    -0.65587807152025388108,
    -0.042002635034095235529,
    0.1665386113822914895,
    -0.042197734555544336748,
    -0.0096219715278769735621,
    0.0072189432466630995424,
    -0.0011651675918590651121,
    -0.00021524167411495097282,
    0.00012805028238811618615,
    -0.000020134854780788238656,
    -1.2504934821426706573e-6,
    1.1330272319816958824e-6,
    -2.0563384169776071035e-7,
    6.1160951044814158179e-9,
    5.0020076444692229301e-9,
    -1.1812745704870201446e-9,
    1.0434267116911005105e-10,
    7.782263439905071254e-12,
    -3.6968056186422057082e-12,
    5.100370287454475979e-13,
    -2.0583260535665067832e-14,
    -5.3481225394230179824e-15,
    1.2267786282382607902e-15,
    -1.1812593016974587695e-16,
    1.1866922547516003326e-18,
    1.4123806553180317816e-18,
    -2.2987456844353702066e-19,
};

// Temme's auxiliary gamma quantities for |mu| <= 1/2:
//   gam1 = (1/G(1-mu) - 1/G(1+mu)) / (2 mu),  gam2 = (1/G(1-mu) + 1/G(1+mu)) / 2
struct TemmeGammas {
  double gam1, gam2, gampl, gammi;
};

inline TemmeGammas temme_gammas(double mu)
{
  constexpr int n = static_cast<int>(std::size(kRecipGamma));
  const double m2 = mu * mu;
  double even = 0.0, odd = 0.0;
  // even = sum c_{2k} mu^{2k}, odd = sum c_{2k+1} mu^{2k}
  for (int k = (n - 1) / 2; k >= 0; --k) {
    if (2 * k < n) even = even * m2 + kRecipGamma[2 * k];
    if (2 * k + 1 < n) odd = odd * m2 + kRecipGamma[2 * k + 1];
  }
  TemmeGammas g;
  g.gam2 = even;
  g.gam1 = -odd;
  g.gampl = even + mu * odd;
  g.gammi = even - mu * odd;
  return g;
}

constexpr double kRescale = 1e250;
inline const double kLogRescale = std::log(kRescale);

// K_nu(x) = k * exp(log_scale) and K_{nu+1}(x) = k1 * exp(log_scale), nu >= 0.
struct ScaledPair {
  double log_scale;
  double k;
  double k1;
};

inline ScaledPair scaled_pair(double nu, double x)
{
  constexpr double eps = std::numeric_limits<double>::epsilon();
  const int nl = static_cast<int>(std::floor(nu + 0.5));
  const double mu = nu - nl;  // in [-1/2, 1/2)
  const double xi2 = 2.0 / x;

  ScaledPair r{0.0, 0.0, 0.0};
  if (mu == -0.5) {
    // half-integer order: K_{1/2}(x) = K_{-1/2}(x) = sqrt(pi/(2x)) e^{-x}
    r.log_scale = -x;
    r.k = std::sqrt(std::numbers::pi / (2.0 * x));
    r.k1 = r.k;
  } else if (x <= 2.0) {
    // Temme series
    const double x2 = 0.5 * x;
    const double pimu = std::numbers::pi * mu;
    const double fact = std::abs(pimu) < eps ? 1.0 : pimu / std::sin(pimu);
    double d = -std::log(x2);
    double e = mu * d;
    const double fact2 = std::abs(e) < eps ? 1.0 : std::sinh(e) / e;
    const TemmeGammas g = temme_gammas(mu);
    double ff = fact * (g.gam1 * std::cosh(e) + g.gam2 * fact2 * d);
    double sum = ff;
    e = std::exp(e);
    double p = 0.5 * e / g.gampl;
    double q = 0.5 / (e * g.gammi);
    double c = 1.0;
    d = x2 * x2;
    double sum1 = p;
    for (int i = 1; i < 500; ++i) {
      ff = (i * ff + p + q) / (i * static_cast<double>(i) - mu * mu);
      c *= d / i;
      p /= (i - mu);
      q /= (i + mu);
      const double del = c * ff;
      sum += del;
      sum1 += c * (p - i * ff);
      if (std::abs(del) < std::abs(sum) * eps) break;
    }
    r.k = sum;
    r.k1 = sum1 * xi2;
  } else {
    // Steed's continued fraction CF2 with Temme's normalization
    double b = 2.0 * (1.0 + x);
    double d = 1.0 / b;
    double h = d;
    double delh = d;
    double q1 = 0.0, q2 = 1.0;
    const double a1 = 0.25 - mu * mu;
    double q = a1, c = a1;
    double a = -a1;
    double s = 1.0 + q * delh;
    for (int i = 2; i < 10000; ++i) {
      a -= 2.0 * (i - 1);
      c = -a * c / i;
      const double qnew = (q1 - b * q2) / a;
      q1 = q2;
      q2 = qnew;
      q += c * qnew;
      b += 2.0;
      d = 1.0 / (b + a * d);
      delh = (b * d - 1.0) * delh;
      h += delh;
      const double dels = q * delh;
      s += dels;
      if (std::abs(dels / s) < eps) break;
    }
    h = a1 * h;
    r.log_scale = -x;
    r.k = std::sqrt(std::numbers::pi / (2.0 * x)) / s;
    r.k1 = r.k * (mu + x + 0.5 - h) / x;
  }

  for (int i = 1; i <= nl; ++i) {
    const double t = (mu + i) * xi2 * r.k1 + r.k;
    r.k = r.k1;
    r.k1 = t;
    if (r.k1 > kRescale) {
      r.k /= kRescale;
      r.k1 /= kRescale;
      r.log_scale += kLogRescale;
    }
  }
  return r;
}

// K_{a+m}(x) / K_a(x) for a >= 0, m >= 0, by forward recurrence on ratios.
inline double upward_ratio(const ScaledPair& p, double a, int m, double x)
{
  if (m == 0) return 1.0;
  double r = p.k1 / p.k;
  double prod = r;
  for (int j = 1; j < m; ++j) {
    r = 1.0 / r + 2.0 * (a + j) / x;
    prod *= r;
  }
  return prod;
}

}  // namespace detail

/// ln K_nu(x). Does not overflow for large x.
inline double log_bessel_k(double nu, double x)
{
  detail::check_order_arg(nu, x);
  const auto p = detail::scaled_pair(std::abs(nu), x);
  const double v = p.log_scale + std::log(p.k);
  if (std::isfinite(v) || nu == 0.0) return v;
  // K overflowed, so x is tiny and the leading term is exact in double precision.
  const double a = std::abs(nu);
  return std::lgamma(a) - std::log(2.0) + a * (std::log(2.0) - std::log(x));
}

/// K_nu(x) for real order nu and x > 0. Underflows to 0 for very large x.
inline double bessel_k(double nu, double x)
{
  detail::check_order_arg(nu, x);
  const auto p = detail::scaled_pair(std::abs(nu), x);
  if (p.log_scale == 0.0) return p.k;
  return std::exp(p.log_scale + std::log(p.k));
}

/// K_{nu+shift}(x) / K_nu(x) without forming K_nu itself.
inline double bessel_k_ratio(double nu, int shift, double x)
{
  detail::check_order_arg(nu, x);
  if (shift == 0) return 1.0;
  const double target = nu + shift;
  const bool same_side = (nu >= 0.0) == (target >= 0.0);
  const double a = std::abs(nu);
  const double t = std::abs(target);
  if (same_side) {
    // |target| - |nu| = +-shift, an integer: recurrence on ratios.
    if (t >= a) {
      const auto p = detail::scaled_pair(a, x);
      return detail::upward_ratio(p, a, static_cast<int>(std::lround(t - a)), x);
    }
    const auto p = detail::scaled_pair(t, x);
    return 1.0 / detail::upward_ratio(p, t, static_cast<int>(std::lround(a - t)), x);
  }
  const auto pa = detail::scaled_pair(a, x);
  const auto pt = detail::scaled_pair(t, x);
  return std::exp((pt.log_scale - pa.log_scale) + std::log(pt.k / pa.k));
}

namespace detail {

// Double-exponential quadrature on [0, 1] (tanh-sinh). f must be bounded.
template <typename F>
double tanh_sinh_unit(F&& f, double rel_tol)
{
  constexpr double half_pi = std::numbers::pi / 2.0;
  constexpr double tmax = 4.0;
  auto term = [&](double t) {
    const double u = half_pi * std::sinh(t);
    const double x = 1.0 / (1.0 + std::exp(-2.0 * u));
    const double ch = std::cosh(u);
    const double w = 0.5 * half_pi * std::cosh(t) / (ch * ch);
    if (!(w > 0.0) || x <= 0.0 || x >= 1.0) return 0.0;
    return w * f(x);
  };
  double h = 0.5;
  double sum = term(0.0);
  for (double t = h; t <= tmax; t += h) sum += term(t) + term(-t);
  double estimate = h * sum;
  for (int level = 1; level <= 12; ++level) {
    h *= 0.5;
    for (double t = h; t <= tmax; t += 2.0 * h) sum += term(t) + term(-t);
    const double next = h * sum;
    const bool done = level >= 3 && std::abs(next - estimate) <= rel_tol * std::abs(next);
    estimate = next;
    if (done) break;
  }
  return estimate;
}

// Double-exponential quadrature on (0, inf) via x = exp(pi/2 sinh t).
template <typename F>
double exp_sinh_half_line(F&& f, double rel_tol)
{
  constexpr double half_pi = std::numbers::pi / 2.0;
  constexpr double tmax = 4.5;
  auto term = [&](double t) {
    const double x = std::exp(half_pi * std::sinh(t));
    if (x == 0.0 || !std::isfinite(x)) return 0.0;
    const double v = f(x);
    if (v == 0.0) return 0.0;
    return half_pi * std::cosh(t) * x * v;
  };
  double h = 0.5;
  double sum = term(0.0);
  for (double t = h; t <= tmax; t += h) sum += term(t) + term(-t);
  double estimate = h * sum;
  for (int level = 1; level <= 12; ++level) {
    h *= 0.5;
    for (double t = h; t <= tmax; t += 2.0 * h) sum += term(t) + term(-t);
    const double next = h * sum;
    const bool done = level >= 3 && std::abs(next - estimate) <= rel_tol * std::abs(next);
    estimate = next;
    if (done) break;
  }
  return estimate;
}

}  // namespace detail

/// Tricomi's confluent hypergeometric function U(a; b; x) for a >= 0, x > 0,
/// from the Laplace integral
///   U(a;b;x) = 1/G(a) int_0^inf e^{-xt} t^{a-1} (1+t)^{b-a-1} dt.
/// The t^{a-1} endpoint singularity is removed with t = w^{1/a} on [0, 1].
inline double hyper_u(double a, double b, double x)
{
  if (!std::isfinite(a) || !std::isfinite(b) || !std::isfinite(x))
    throw std::domain_error("hyper_u: non-finite argument");
  if (x <= 0.0) throw std::domain_error("hyper_u: argument must be positive");
  if (a < 0.0) throw std::domain_error("hyper_u: requires a >= 0");
  if (a == 0.0) return 1.0;

  constexpr double tol = 1e-13;
  const double c = b - a - 1.0;
  const double inv_a = 1.0 / a;
  const double lg_a1 = std::lgamma(a + 1.0);
  const double lg_a = std::lgamma(a);

  if (x >= 1.0) {
    // t = s/x:  U = x^{-a}/G(a) int e^{-s} s^{a-1} (1 + s/x)^c ds, split at s = 1.
    const double head = detail::tanh_sinh_unit(
        [&](double w) {
          const double s = std::pow(w, inv_a);
          return std::exp(-s + c * std::log1p(s / x));
        },
        tol);
    const double tail = detail::exp_sinh_half_line(
        [&](double v) {
          const double s = 1.0 + v;
          return std::exp(-s + (a - 1.0) * std::log(s) + c * std::log1p(s / x));
        },
        tol);
    const double log_pre = -a * std::log(x);
    return std::exp(log_pre - lg_a1) * head + std::exp(log_pre - lg_a) * tail;
  }

  // small x: integrate in t directly, split at t = 1
  const double head = detail::tanh_sinh_unit(
      [&](double w) {
        const double t = std::pow(w, inv_a);
        return std::exp(-x * t + c * std::log1p(t));
      },
      tol);
  const double tail = detail::exp_sinh_half_line(
      [&](double v) {
        const double t = 1.0 + v;
        return std::exp(-x * t + (a - 1.0) * std::log(t) + c * std::log1p(t));
      },
      tol);
  return std::exp(-lg_a1) * head + std::exp(-lg_a) * tail;
}

}  // namespace sbl::specfun
