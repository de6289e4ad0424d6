#pragma once

#include <complex>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>

#include <Eigen/Dense>

namespace sbl {

enum class FieldKind { Real, Complex };

/// Field constant: 1/2 for real models, 1 for complex models.
constexpr double rho(FieldKind f) noexcept { return f == FieldKind::Real ? 0.5 : 1.0; }

inline std::string_view to_string(FieldKind f) noexcept
{
  return f == FieldKind::Real ? "real" : "complex";
}

inline FieldKind parse_field(std::string_view s)
{
  if (s == "real") return FieldKind::Real;
  if (s == "complex") return FieldKind::Complex;
  throw std::invalid_argument("unknown field '" + std::string(s) + "' (expected real|complex)");
}

template <typename T>
struct is_complex : std::false_type {};
template <typename T>
struct is_complex<std::complex<T>> : std::true_type {};

template <typename Scalar>
concept FieldScalar = std::is_same_v<Scalar, double> || std::is_same_v<Scalar, std::complex<double>>;

template <FieldScalar Scalar>
struct FieldTraits {
  static constexpr FieldKind kind = is_complex<Scalar>::value ? FieldKind::Complex : FieldKind::Real;
  static constexpr double rho = sbl::rho(kind);
};

template <FieldScalar Scalar>
using Mat = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <FieldScalar Scalar>
using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using RealVec = Eigen::VectorXd;

/// Raised when a numerical step (factorization, root polish) cannot produce a
/// trustworthy result.
class NumericalError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace sbl
