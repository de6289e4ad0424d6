#include <cmath>
#include <numbers>

#include <boost/math/quadrature/exp_sinh.hpp>
#include <boost/math/special_functions/bessel.hpp>
#include <gtest/gtest.h>

#include "sbl/specfun.hpp"
#include "test_util.hpp"

using namespace sbl;
using sbl::test::rel_err;

TEST(BesselK, MatchesBoostAcrossOrdersAndArguments)
{
  double worst = 0.0;
  for (double nu = 0.0; nu <= 6.0; nu += 0.137)
    for (double x : {1e-6, 1e-3, 0.05, 0.3, 0.99, 1.0, 1.7, 2.0, 2.01, 4.5, 11.0, 37.0, 120.0, 500.0}) {
      const double want = boost::math::cyl_bessel_k(nu, x);
      if (want == 0.0 || !std::isfinite(want)) continue;
      worst = std::max(worst, rel_err(specfun::bessel_k(nu, x), want));
    }
  EXPECT_LT(worst, 1e-12);
}

TEST(BesselK, SymmetricInOrder)
{
  for (double nu : {0.25, 0.5, 1.0, 1.5, 2.75, 4.0})
    for (double x : {0.01, 0.7, 3.0, 25.0}) EXPECT_LT(rel_err(specfun::bessel_k(-nu, x), specfun::bessel_k(nu, x)), 1e-14);
}

TEST(BesselK, ThreeTermRecurrence)
{
  for (double nu : {-2.3, -0.5, 0.0, 0.3, 1.0, 2.5, 3.9})
    for (double x : {0.02, 0.5, 1.9, 2.1, 8.0, 60.0}) {
      const double lhs = specfun::bessel_k(nu + 1.0, x);
      const double rhs = specfun::bessel_k(nu - 1.0, x) + 2.0 * nu / x * specfun::bessel_k(nu, x);
      EXPECT_LT(rel_err(lhs, rhs), 1e-10) << nu << ' ' << x;
    }
}

TEST(BesselK, HalfIntegerClosedForms)
{
  for (double x : {1e-4, 0.1, 1.0, 2.5, 10.0, 200.0}) {
    const double k_half = std::sqrt(std::numbers::pi / (2.0 * x)) * std::exp(-x);
    EXPECT_LT(rel_err(specfun::bessel_k(0.5, x), k_half), 1e-13);
    EXPECT_LT(rel_err(specfun::bessel_k(1.5, x), k_half * (1.0 + 1.0 / x)), 1e-13);
    EXPECT_LT(rel_err(specfun::bessel_k(2.5, x), k_half * (1.0 + 3.0 / x + 3.0 / (x * x))), 1e-13);
  }
}

TEST(BesselK, LogFormSurvivesHugeArguments)
{
  // Leading terms of the large-argument expansion.
  for (double nu : {0.0, 0.5, 2.0})
    for (double x : {1e4, 1e6}) {
      const double mu = 4.0 * nu * nu;
      const double want = 0.5 * std::log(std::numbers::pi / (2.0 * x)) - x +
                          std::log1p((mu - 1.0) / (8.0 * x) + (mu - 1.0) * (mu - 9.0) / (2.0 * 64.0 * x * x));
      EXPECT_NEAR(specfun::log_bessel_k(nu, x), want, 1e-12 * std::abs(want));
    }
  EXPECT_EQ(specfun::bessel_k(1.0, 1e6), 0.0);
}

TEST(BesselK, RatioMatchesDirectQuotient)
{
  for (double nu : {-3.5, -1.2, -0.5, 0.0, 0.4, 1.0, 2.7})
    for (int shift : {-2, -1, 1, 2})
      for (double x : {0.003, 0.6, 2.2, 15.0, 90.0}) {
        const double want = boost::math::cyl_bessel_k(nu + shift, x) / boost::math::cyl_bessel_k(nu, x);
        EXPECT_LT(rel_err(specfun::bessel_k_ratio(nu, shift, x), want), 1e-12) << nu << ' ' << shift << ' ' << x;
      }
}

TEST(BesselK, RejectsBadArguments)
{
  EXPECT_THROW(specfun::bessel_k(1.0, 0.0), std::domain_error);
  EXPECT_THROW(specfun::bessel_k(1.0, -2.0), std::domain_error);
  EXPECT_THROW(specfun::log_bessel_k(NAN, 1.0), std::domain_error);
  EXPECT_THROW(specfun::bessel_k_ratio(1.0, 1, INFINITY), std::domain_error);
}

namespace {

// U(a;b;x) from its Laplace integral, evaluated with Boost's exp-sinh rule.
double u_reference(double a, double b, double x)
{
  boost::math::quadrature::exp_sinh<double> q;
  auto f = [&](double t) {
    if (t <= 0.0) return 0.0;
    return std::exp(-x * t + (a - 1.0) * std::log(t) + (b - a - 1.0) * std::log1p(t));
  };
  return q.integrate(f, 1e-14) / std::tgamma(a);
}

}  // namespace

TEST(HyperU, AgreesWithIndependentQuadrature)
{
  for (double a : {1.0, 1.5, 2.25, 3.0})
    for (double b : {-0.5, 0.5, 1.0, 2.5})
      for (double x : {0.05, 0.8, 1.0, 3.0, 20.0}) {
        const double want = u_reference(a, b, x);
        EXPECT_LT(rel_err(specfun::hyper_u(a, b, x), want), 1e-9) << a << ' ' << b << ' ' << x;
      }
}

TEST(HyperU, ElementaryIdentities)
{
  for (double x : {0.01, 0.3, 1.0, 4.0, 50.0, 400.0}) {
    EXPECT_EQ(specfun::hyper_u(0.0, 1.7, x), 1.0);
    EXPECT_LT(rel_err(specfun::hyper_u(1.0, 2.0, x), 1.0 / x), 1e-10);
    for (double a : {0.3, 1.0, 2.5}) EXPECT_LT(rel_err(specfun::hyper_u(a, a + 1.0, x), std::pow(x, -a)), 1e-10);
  }
}

TEST(HyperU, KummerTransformation)
{
  // U(a;b;x) = x^{1-b} U(a-b+1; 2-b; x)
  for (double a : {0.5, 1.25, 2.0, 3.5})
    for (double b : {-0.75, 0.25, 0.5, 1.0, 1.5})
      for (double x : {0.02, 0.5, 2.0, 9.0, 70.0}) {
        const double lhs = specfun::hyper_u(a, b, x);
        const double rhs = std::pow(x, 1.0 - b) * specfun::hyper_u(a - b + 1.0, 2.0 - b, x);
        EXPECT_LT(rel_err(lhs, rhs), 1e-9) << a << ' ' << b << ' ' << x;
      }
}

TEST(HyperU, RejectsBadArguments)
{
  EXPECT_THROW(specfun::hyper_u(1.0, 1.0, 0.0), std::domain_error);
  EXPECT_THROW(specfun::hyper_u(-0.5, 1.0, 1.0), std::domain_error);
  EXPECT_THROW(specfun::hyper_u(1.0, NAN, 1.0), std::domain_error);
}

TEST(BesselK, LogFormSurvivesTinyArguments)
{
  for (double nu : {0.7, 1.5, 4.0})
    for (double x : {1e-200, 1e-300, 1e-310}) {
      const double want = std::lgamma(nu) + (nu - 1.0) * std::log(2.0) - nu * std::log(x);
      EXPECT_NEAR(specfun::log_bessel_k(nu, x), want, 1e-13 * want) << nu << ' ' << x;
    }
}
