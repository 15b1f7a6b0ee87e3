#pragma once

#include <functional>
#include <random>

#include "ddae/ddae.hpp"

namespace ddae::test {

inline Matrix plant_A() {
  Matrix A(3, 3);
  A << -0.08, -0.03, 0.2, 0.2, -0.04, -0.005, -0.06, 0.2, -0.07;
  return A;
}

inline PlantIo example1() {
  Matrix B(3, 1);
  B << -0.1, -0.2, 0.1;
  return create_plant(TermList(plant_A(), 0.0), TermList(B, 5.0), TermList(Matrix::Identity(3, 3), 0.0));
}

inline PlantIo example2(double tau1 = 2.5) {
  PlantIo p = example1();
  Matrix d1(3, 1), d2(3, 1);
  d1 << 3, 4, 1;
  d2 << 0.4, -0.4, -0.4;
  p.D11 = TermList({d1, d2}, {tau1, 5.0});
  validate(p);
  return p;
}

inline Matrix row(std::initializer_list<double> v) {
  Matrix m(1, static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double x : v) m(0, i++) = x;
  return m;
}

inline Matrix scalar(double v) { return Matrix::Constant(1, 1, v); }

inline Matrix random_matrix(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c, double scale = 1.0) {
  std::normal_distribution<double> N(0.0, scale);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = N(rng);
  return m;
}

/// Central difference gradient.
inline Vector fd_gradient(const std::function<double(const Vector&)>& f, const Vector& p, double h) {
  Vector g(p.size());
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    Vector a = p, b = p;
    a(j) += h;
    b(j) -= h;
    g(j) = (f(a) - f(b)) / (2.0 * h);
  }
  return g;
}

/// rho(M1 + M2 e^{j phi}) maximized by brute force over `points` values of phi.
inline double brute_force_gamma0(const CMatrix& M1, const CMatrix& M2, int points) {
  double best = 0.0;
  for (int k = 0; k < points; ++k) {
    const double phi = 2.0 * std::numbers::pi * k / points;
    const CMatrix T = M1 + std::polar(1.0, phi) * M2;
    const Complex tr = T.trace(), det = T.determinant();
    const Complex disc = std::sqrt(tr * tr - 4.0 * det);
    best = std::max({best, std::abs(0.5 * (tr + disc)), std::abs(0.5 * (tr - disc))});
  }
  return best;
}

/// Difference-only DDAE 0 = -x + M1 x(t - tau1) + M2 x(t - tau2) coupled to a stable
/// ODE state, so that the difference part is exactly (M1, M2).
inline DdaeSystem difference_system(const Matrix& M1, const Matrix& M2, double tau1, double tau2) {
  const Eigen::Index k = M1.rows();
  const Eigen::Index n = k + 1;
  Matrix E = Matrix::Zero(n, n);
  E(0, 0) = 1.0;
  Matrix A0 = Matrix::Zero(n, n);
  A0(0, 0) = -1.0;
  A0.bottomRightCorner(k, k) = -Matrix::Identity(k, k);
  Matrix A1 = Matrix::Zero(n, n), A2 = Matrix::Zero(n, n);
  A1.bottomRightCorner(k, k) = M1;
  A2.bottomRightCorner(k, k) = M2;
  return DdaeSystem(E, {{A0, 0.0}, {A1, tau1}, {A2, tau2}});
}

}  // namespace ddae::test
