#pragma once

#include <string>
#include <vector>

#include "ddae/asymptotic.hpp"
#include "ddae/spectrum.hpp"

// Derivatives of the eigenvalue-based objectives with respect to the
// parameters of an AffineFamily, at points where they are differentiable.

namespace ddae {

/// Value and gradient of an objective at one parameter point.
struct GradientSample {
  double value = kInf;
  Vector gradient;
  std::string active;          ///< what determines the value (root, theta maximizer, ...)
  bool differentiable = false;
};

struct RootDerivative {
  CVector gradient;  ///< d lambda / d p_j
  bool differentiable = false;
};

/// Simple-root sensitivity
///   d lambda / d p_j = -(u^H dDelta/dp_j v) / (u^H Delta'(lambda) v)
/// with u, v the left and right null vectors of Delta(lambda) and
/// dDelta/dp_j = -sum_i coeff_{i,j} e^{-lambda tau_i}.
inline RootDerivative root_derivative(const AffineFamily& fam, const Vector& p, Complex lambda) {
  const DdaeSystem sys = fam.assemble(p);
  const CharacteristicMatrix delta(sys);
  const CMatrix D = delta(lambda);
  const auto n = D.rows();
  Eigen::JacobiSVD<CMatrix> svd(D, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const CVector u = svd.matrixU().col(n - 1);
  const CVector v = svd.matrixV().col(n - 1);

  RootDerivative out;
  out.gradient = CVector::Zero(fam.num_params());
  const Complex denom = (u.adjoint() * delta.derivative(lambda) * v)(0);
  const bool simple = n == 1 || s(n - 2) > 1e3 * s(n - 1);
  const double dscale = std::max(1.0, detail::spectral_norm(sys.E()) + sys.max_delay() * sys.coefficient_norm_sum());
  if (!simple || std::abs(denom) <= 1e-8 * dscale) return out;

  std::vector<Complex> w(fam.num_slots());
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(-lambda * fam.delays()[i]);
  for (Eigen::Index j = 0; j < fam.num_params(); ++j) {
    CMatrix dD = CMatrix::Zero(n, n);
    for (std::size_t i = 0; i < w.size(); ++i) {
      const Matrix& C = fam.coefficient(i, j);
      if (!C.isZero(0.0)) dD -= w[i] * C.cast<Complex>();
    }
    out.gradient(j) = -(u.adjoint() * dD * v)(0) / denom;
  }
  out.differentiable = true;
  return out;
}

/// Gradient of the spectral abscissa from the rightmost root. Not
/// differentiable when two root pairs share the rightmost real part (within
/// dedup_tol) or the rightmost root is not simple.
inline GradientSample abscissa_gradient(const AffineFamily& fam, const Vector& p, RootOptions opts = {}) {
  opts.cd_warning = false;
  GradientSample g;
  g.gradient = Vector::Zero(fam.num_params());
  const RootSet rs = compute_roots(fam.assemble(p), opts);
  if (rs.corrected.empty()) {
    g.value = -kInf;
    return g;
  }
  Complex top = rs.corrected.front();
  if (top.imag() < 0.0) top = std::conj(top);
  g.value = top.real();
  g.active = "root " + std::to_string(top.real()) + (top.imag() >= 0 ? "+" : "") + std::to_string(top.imag()) + "i";
  bool tie = false;
  for (Complex z : rs.corrected) {
    if (std::abs(z - top) <= opts.dedup_tol || std::abs(z - std::conj(top)) <= opts.dedup_tol) continue;
    if (z.real() >= top.real() - opts.dedup_tol) tie = true;
  }
  const RootDerivative d = root_derivative(fam, p, top);
  g.gradient = d.gradient.real();
  g.differentiable = d.differentiable && !tie;
  return g;
}

namespace detail {

/// f(zeta; p) with its p- and zeta-derivatives at the maximizing angles
/// (the angles are held fixed, envelope argument).
struct FSample {
  double value = 0.0;
  Vector dp;
  double dzeta = 0.0;
  bool differentiable = true;
  std::vector<double> theta;
};

inline FSample f_with_gradient(const AffineFamily& fam, const Vector& p, double zeta, const ThetaGrid& grid) {
  FSample out;
  out.dp = Vector::Zero(fam.num_params());
  const DdaeSystem sys = fam.assemble(p);
  const Decomposition dec = decompose(sys);
  if (dec.nu == 0) return out;

  // Difference part indexed by the family slots so that coefficients line up.
  const std::size_t slots = fam.num_slots();
  std::vector<Matrix> A22(slots);
  for (std::size_t i = 0; i < slots; ++i) A22[i] = dec.U.transpose() * fam.matrix(i, p) * dec.V;
  Eigen::PartialPivLU<Matrix> lu(A22[0]);
  DifferencePart d;
  for (std::size_t k = 1; k < slots; ++k) {
    d.M.push_back(lu.solve(A22[k]).cast<Complex>());
    d.delays.push_back(fam.delays()[k]);
  }
  const RadiusMaximum rm = maximize_radius(d, zeta, grid);
  out.value = rm.value;
  out.dzeta = rm.dzeta;
  out.theta = rm.theta;
  if (rm.value == 0.0) return out;
  out.differentiable = rm.unique && rm.eig.simple;

  // T = A22_0^{-1} S with S = sum_k A22_k w_k; dT = A22_0^{-1} (dS - dA22_0 T).
  std::vector<Complex> w(slots, 0.0);
  for (std::size_t k = 1; k < slots; ++k) {
    w[k] = std::exp(-zeta * fam.delays()[k]) * std::polar(1.0, rm.theta[k - 1]);
  }
  const Complex phase = std::conj(rm.eig.mu) / rm.value;
  for (Eigen::Index j = 0; j < fam.num_params(); ++j) {
    CMatrix dS = CMatrix::Zero(dec.nu, dec.nu);
    bool any = false;
    for (std::size_t k = 1; k < slots; ++k) {
      const Matrix& C = fam.coefficient(k, j);
      if (C.isZero(0.0)) continue;
      dS += w[k] * (dec.U.transpose() * C * dec.V).cast<Complex>();
      any = true;
    }
    const Matrix& C0 = fam.coefficient(0, j);
    if (!C0.isZero(0.0)) {
      dS -= (dec.U.transpose() * C0 * dec.V).cast<Complex>() * rm.T;
      any = true;
    }
    if (!any) continue;
    const CMatrix dT = lu.solve(Matrix::Identity(dec.nu, dec.nu)).cast<Complex>() * dS;
    out.dp(j) = std::real(phase * (rm.eig.yh * dT * rm.eig.x)(0));
  }
  return out;
}

}  // namespace detail

/// Gradient of gamma0 with the maximizing angles held fixed.
inline GradientSample gamma0_gradient(const AffineFamily& fam, const Vector& p, const ThetaGrid& grid = {}) {
  const detail::FSample f = detail::f_with_gradient(fam, p, 0.0, grid);
  GradientSample g;
  g.value = f.value;
  g.gradient = f.dp;
  g.differentiable = f.differentiable;
  g.active = "gamma0 maximizer";
  return g;
}

/// Gradient of C_D by implicit differentiation of f(C_D; p) = 1:
/// dC_D/dp = -(df/dp) / (df/dzeta).
inline GradientSample cd_gradient(const AffineFamily& fam, const Vector& p, const ThetaGrid& grid = {}) {
  GradientSample g;
  g.gradient = Vector::Zero(fam.num_params());
  g.active = "C_D";
  const Decomposition dec = decompose(fam.assemble(p));
  const double cd = robust_difference_abscissa(dec, grid);
  g.value = cd;
  if (!std::isfinite(cd)) {
    g.differentiable = cd == -kInf;
    return g;
  }
  const detail::FSample f = detail::f_with_gradient(fam, p, cd, grid);
  if (!(f.dzeta < 0.0)) return g;
  g.gradient = -f.dp / f.dzeta;
  g.differentiable = f.differentiable;
  return g;
}

}  // namespace ddae
