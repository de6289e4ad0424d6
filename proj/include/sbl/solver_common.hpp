#pragma once

// Pieces shared by the three inference engines.

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "sbl/field.hpp"
#include "sbl/model.hpp"

namespace sbl {

inline constexpr double kLambdaMax = 1e12;

struct LambdaMode {
  enum class Kind { Known, Estimate };
  Kind kind = Kind::Estimate;
  double value = 0.0;  // used when Known
  int burn_in = 10;    // fast scheme: iterations before the first noise update

  static LambdaMode known(double lambda)
  {
    if (!(lambda > 0.0) || !std::isfinite(lambda)) throw std::invalid_argument("LambdaMode: lambda must be positive");
    return {Kind::Known, lambda, 10};
  }
  static LambdaMode estimate(int burn_in = 10) { return {Kind::Estimate, 0.0, burn_in}; }
  bool is_known() const { return kind == Kind::Known; }
};

template <FieldScalar Scalar>
struct RunResult {
  Vec<Scalar> estimate;  // full length, exact zeros off the active set
  Metrics metrics;
  std::vector<double> objective;  // objective value after each iteration
  std::vector<int> active;        // final active set, ascending
  double lambda = 0.0;
  bool converged = false;
  bool all_pruned = false;
};

namespace detail {

template <FieldScalar Scalar>
Mat<Scalar> gather_columns(const Mat<Scalar>& H, const std::vector<int>& idx)
{
  Mat<Scalar> out(H.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t k = 0; k < idx.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = H.col(idx[k]);
  return out;
}

/// Initial noise precision when it is to be estimated.
template <FieldScalar Scalar>
double default_lambda(const ProblemInstance<Scalar>& p, double scale = 1.0)
{
  const double e = p.y.squaredNorm();
  if (!(e > 0.0)) return kLambdaMax;
  return std::min(kLambdaMax, scale * p.M() / e);
}

/// ||y - H_a mu||^2 + trace(H_a Sigma H_a^H).
template <FieldScalar Scalar>
double expected_residual(const Mat<Scalar>& Ha, const Vec<Scalar>& y, const Vec<Scalar>& mu, const Mat<Scalar>& sigma)
{
  if (Ha.cols() == 0) return y.squaredNorm();
  const double fit = (y - Ha * mu).squaredNorm();
  const double tr = std::real((Ha * sigma).cwiseProduct(Ha.conjugate()).sum());
  return fit + tr;
}

/// Columns with nonzero norm; an all-zero column can never explain data.
template <FieldScalar Scalar>
std::vector<int> usable_columns(const Mat<Scalar>& H)
{
  std::vector<int> out;
  for (int l = 0; l < H.cols(); ++l)
    if (H.col(l).squaredNorm() > 0.0) out.push_back(l);
  return out;
}

template <FieldScalar Scalar>
Vec<Scalar> scatter(int L, const std::vector<int>& active, const Vec<Scalar>& values)
{
  Vec<Scalar> out = Vec<Scalar>::Zero(L);
  for (std::size_t k = 0; k < active.size(); ++k) out(active[k]) = values(static_cast<Eigen::Index>(k));
  return out;
}

template <FieldScalar Scalar>
void finish(RunResult<Scalar>& r, const ProblemInstance<Scalar>& p, int iterations)
{
  r.metrics = evaluate(r.estimate, p, iterations);
}

}  // namespace detail

}  // namespace sbl
