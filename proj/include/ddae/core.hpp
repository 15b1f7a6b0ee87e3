#pragma once

#include <cmath>
#include <complex>
#include <limits>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace ddae {

using Complex = std::complex<double>;
using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Delays closer than this are the same delay.
inline constexpr double kDelayMergeTol = 1e-12;

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Matrix shapes that do not fit together.
class DimensionError : public Error {
 public:
  using Error::Error;
};

/// Out-of-range or malformed argument (negative delay, bad option, ...).
class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// The algebraic block U^T A_0 V of a DDAE is singular, so the
/// differential/difference splitting does not exist.
class AssumptionViolation : public Error {
 public:
  AssumptionViolation(const std::string& what, double smallest_singular_value)
      : Error(what), smallest_singular_value_(smallest_singular_value) {}

  double smallest_singular_value() const noexcept { return smallest_singular_value_; }

 private:
  double smallest_singular_value_;
};

namespace detail {

inline std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

inline double spectral_norm(const Matrix& m) {
  if (m.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(m);
  return svd.singularValues()(0);
}

}  // namespace detail
}  // namespace ddae
