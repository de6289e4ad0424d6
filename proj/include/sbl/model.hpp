#pragma once

// Problem synthesis for y = H alpha + w, the support-aware least-squares
// (oracle) estimator, and evaluation metrics.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbl/field.hpp"
#include "sbl/random.hpp"

namespace sbl {

template <FieldScalar Scalar>
struct ProblemInstance {
  Mat<Scalar> H;
  Vec<Scalar> y;
  Vec<Scalar> alpha_true;  // zero vector when the truth is unknown
  double lambda_true = 1.0;
  std::vector<int> support_true;  // sorted
  bool has_truth = true;

  static constexpr FieldKind field = FieldTraits<Scalar>::kind;
  static constexpr double rho = FieldTraits<Scalar>::rho;

  int M() const { return static_cast<int>(H.rows()); }
  int L() const { return static_cast<int>(H.cols()); }
};

struct GenConfig {
  int M = 100;
  int L = 256;
  int K = 20;
  double snr_db = 30.0;
  FieldKind field = FieldKind::Complex;
  std::uint64_t seed = 0;
  /// Explicit noise precision; required for meaningful SNR when K = 0.
  std::optional<double> noise_precision;
};

struct Metrics {
  double mse = 0.0;  // ||alpha_hat - alpha_true||^2, NaN without truth
  int k_hat = 0;
  int iterations = 0;
  bool support_exact = false;
};

/// Noise precision for a given SNR under SNR = E|(H alpha)_m|^2 / E|w_m|^2 = K * lambda
/// (unit-variance dictionary entries and weights).
inline double snr_to_noise_precision(double snr_db, int K)
{
  if (K < 1) throw std::invalid_argument("snr_to_noise_precision: K must be >= 1");
  return std::pow(10.0, snr_db / 10.0) / K;
}

inline constexpr const char* kSnrDefinition = "lambda=10^(snr_db/10)/K";

inline void validate(const GenConfig& cfg)
{
  if (cfg.M < 1 || cfg.L < 1) throw std::invalid_argument("GenConfig: M and L must be positive");
  if (cfg.K < 0 || cfg.K > cfg.L) throw std::invalid_argument("GenConfig: require 0 <= K <= L");
  if (cfg.noise_precision && !(*cfg.noise_precision > 0.0))
    throw std::invalid_argument("GenConfig: noise precision must be positive");
}

/// Draws H (row-major order), the support, the weights, then the noise, all
/// from one generator seeded with cfg.seed. For K = 0 without an explicit
/// precision the SNR is referred to a single component.
template <FieldScalar Scalar>
ProblemInstance<Scalar> generate_problem(const GenConfig& cfg)
{
  validate(cfg);
  if (cfg.field != FieldTraits<Scalar>::kind)
    throw std::invalid_argument("generate_problem: field does not match scalar type");
  Rng rng(cfg.seed);
  ProblemInstance<Scalar> p;
  p.H.resize(cfg.M, cfg.L);
  for (int m = 0; m < cfg.M; ++m)
    for (int l = 0; l < cfg.L; ++l) p.H(m, l) = rng.gaussian<Scalar>(1.0);

  p.support_true = rng.sample_without_replacement(cfg.L, cfg.K);
  std::sort(p.support_true.begin(), p.support_true.end());
  p.alpha_true = Vec<Scalar>::Zero(cfg.L);
  for (int l : p.support_true) p.alpha_true(l) = rng.gaussian<Scalar>(1.0);

  p.lambda_true = cfg.noise_precision ? *cfg.noise_precision
                                      : snr_to_noise_precision(cfg.snr_db, std::max(cfg.K, 1));
  const double noise_var = 1.0 / p.lambda_true;
  p.y = p.H * p.alpha_true;
  for (int m = 0; m < cfg.M; ++m) p.y(m) += rng.gaussian<Scalar>(noise_var);
  p.has_truth = true;
  return p;
}

namespace detail {

template <FieldScalar Scalar>
Mat<Scalar> support_columns(const ProblemInstance<Scalar>& p)
{
  Mat<Scalar> Ho(p.M(), static_cast<Eigen::Index>(p.support_true.size()));
  for (std::size_t k = 0; k < p.support_true.size(); ++k) Ho.col(k) = p.H.col(p.support_true[k]);
  return Ho;
}

template <FieldScalar Scalar>
Eigen::LLT<Mat<Scalar>> support_gram_factor(const Mat<Scalar>& Ho)
{
  const Mat<Scalar> G = Ho.adjoint() * Ho;
  Eigen::LLT<Mat<Scalar>> llt(G);
  if (llt.info() != Eigen::Success || llt.rcond() < 1e-13)
    throw NumericalError("oracle: support columns of H are linearly dependent");
  return llt;
}

}  // namespace detail

/// Least squares on the true support, exact zeros elsewhere.
template <FieldScalar Scalar>
Vec<Scalar> oracle_estimate(const ProblemInstance<Scalar>& p)
{
  Vec<Scalar> est = Vec<Scalar>::Zero(p.L());
  if (p.support_true.empty()) return est;
  const Mat<Scalar> Ho = detail::support_columns(p);
  const auto llt = detail::support_gram_factor<Scalar>(Ho);
  const Vec<Scalar> coef = llt.solve(Ho.adjoint() * p.y);
  for (std::size_t k = 0; k < p.support_true.size(); ++k) est(p.support_true[k]) = coef(k);
  return est;
}

/// lambda^{-1} trace((Ho^H Ho)^{-1}).
template <FieldScalar Scalar>
double oracle_mse(const ProblemInstance<Scalar>& p)
{
  if (p.support_true.empty()) return 0.0;
  const Mat<Scalar> Ho = detail::support_columns(p);
  const auto llt = detail::support_gram_factor<Scalar>(Ho);
  const Mat<Scalar> inv = llt.solve(Mat<Scalar>::Identity(Ho.cols(), Ho.cols()));
  return std::real(inv.trace()) / p.lambda_true;
}

template <FieldScalar Scalar>
Metrics evaluate(const Vec<Scalar>& alpha_hat, const ProblemInstance<Scalar>& p, int iterations)
{
  if (alpha_hat.size() != p.L())
    throw std::invalid_argument("evaluate: estimate has length " + std::to_string(alpha_hat.size()) +
                                ", expected " + std::to_string(p.L()));
  Metrics m;
  m.iterations = iterations;
  std::vector<int> support;
  for (int l = 0; l < p.L(); ++l)
    if (std::abs(alpha_hat(l)) > 0.0) support.push_back(l);
  m.k_hat = static_cast<int>(support.size());
  if (p.has_truth) {
    m.mse = (alpha_hat - p.alpha_true).squaredNorm();
    m.support_exact = support == p.support_true;
  } else {
    m.mse = std::numeric_limits<double>::quiet_NaN();
  }
  return m;
}

}  // namespace sbl
