#include <gtest/gtest.h>

#include "support.hpp"

using namespace ddae;
using ddae::test::row;
using ddae::test::scalar;

namespace {

const Complex kLambertRoot(-0.318131505204764135, 1.337235701430689409);

/// Newton on lambda + e^{-lambda} = 0.
Complex lambert_newton(Complex z) {
  for (int i = 0; i < 50; ++i) z -= (z + std::exp(-z)) / (1.0 - std::exp(-z));
  return z;
}

/// Number of zeros of g inside the rectangle, by the argument principle
/// (phase increments along the boundary, sampled densely).
template <class F>
int winding_number(F g, double re0, double re1, double im0, double im1, int per_side) {
  std::vector<Complex> path;
  auto side = [&](Complex a, Complex b) {
    for (int k = 0; k < per_side; ++k) path.push_back(a + (b - a) * (static_cast<double>(k) / per_side));
  };
  side({re0, im0}, {re1, im0});
  side({re1, im0}, {re1, im1});
  side({re1, im1}, {re0, im1});
  side({re0, im1}, {re0, im0});
  double total = 0.0;
  Complex prev = g(path.back());
  for (Complex z : path) {
    const Complex cur = g(z);
    total += std::arg(cur / prev);
    prev = cur;
  }
  return static_cast<int>(std::lround(total / (2.0 * std::numbers::pi)));
}

}  // namespace

TEST(Spectrum, ScalarOde) {
  const DdaeSystem s(scalar(1), {{scalar(-1), 0.0}});
  const RootSet rs = compute_roots(s);
  ASSERT_EQ(rs.corrected.size(), 1u);
  EXPECT_NEAR(rs.corrected[0].real(), -1.0, 1e-12);
  EXPECT_EQ(rs.corrected[0].imag(), 0.0);
}

TEST(Spectrum, LambertOracleAgreesWithFrozenValue) {
  const Complex z = lambert_newton({-0.3, 1.3});
  EXPECT_LT(std::abs(z - kLambertRoot), 1e-14);
}

TEST(Spectrum, RetardedScalarRightmostRoot) {
  const DdaeSystem s(scalar(1), {{scalar(-1), 1.0}});
  const RootSet rs = compute_roots(s);
  ASSERT_GE(rs.corrected.size(), 2u);
  EXPECT_LT(std::abs(rs.corrected[0] - kLambertRoot), 1e-6);
  EXPECT_LT(std::abs(rs.corrected[1] - std::conj(kLambertRoot)), 1e-6);
  EXPECT_NEAR(spectral_abscissa(s), kLambertRoot.real(), 1e-6);
}

TEST(Spectrum, DelayFreeIndexOneDdae) {
  // x1' = -2 x1 + x2, 0 = x1 - x2  =>  x1' = -x1.
  Matrix E = Matrix::Zero(2, 2);
  E(0, 0) = 1.0;
  Matrix A(2, 2);
  A << -2, 1, 1, -1;
  const RootSet rs = compute_roots(DdaeSystem(E, {{A, 0.0}}));
  ASSERT_EQ(rs.corrected.size(), 1u);
  EXPECT_NEAR(rs.corrected[0].real(), -1.0, 1e-12);
}

TEST(Spectrum, ResidualContractAndConjugateSymmetry) {
  const DdaeSystem cl = interconnect(test::example2(), static_controller(row({0.0409, 0.0612, 0.3837})));
  RootOptions o;
  const RootSet rs = compute_roots(cl, o);
  ASSERT_EQ(rs.corrected.size(), rs.residuals.size());
  const double scale_E = cl.norm_E(), scale_A = cl.coefficient_norm_sum();
  for (std::size_t i = 0; i < rs.corrected.size(); ++i) {
    const Complex z = rs.corrected[i];
    EXPECT_LE(rs.residuals[i], o.newton_tol * std::max(1.0, std::abs(z) * scale_E + scale_A));
    EXPECT_NEAR(smallest_singular_value(CharacteristicMatrix(cl)(z)), rs.residuals[i], 1e-12);
    if (z.imag() != 0.0) {
      const bool has_conj = std::any_of(rs.corrected.begin(), rs.corrected.end(),
                                        [&](Complex w) { return std::abs(w - std::conj(z)) < 1e-9; });
      EXPECT_TRUE(has_conj) << z;
    }
  }
  EXPECT_TRUE(std::is_sorted(rs.corrected.begin(), rs.corrected.end(),
                             [](Complex a, Complex b) { return a.real() > b.real(); }));
}

TEST(Spectrum, MinimalRealPartFilterAndWarning) {
  const DdaeSystem cl = interconnect(test::example2(), static_controller(row({0.0249, 0.1076, 0.3173})));
  RootOptions o;
  o.minimal_real_part = -0.2;
  const RootSet rs = compute_roots(cl, o);
  for (Complex z : rs.corrected) EXPECT_GE(z.real(), -0.2);
  EXPECT_TRUE(rs.cd_ge_c);
  EXPECT_NEAR(rs.C_D, -0.00602, 1e-4);
  EXPECT_FALSE(rs.warnings.empty());
}

TEST(Spectrum, NoCdWarningWithoutDifferencePart) {
  const RootSet rs = compute_roots(plant_dynamics(test::example1()));
  EXPECT_FALSE(rs.cd_ge_c);
  EXPECT_EQ(rs.C_D, -kInf);
}

TEST(Spectrum, ArgumentPrincipleForNeutralConversion) {
  // lambda (1 + g e^{-lambda}) - h = 0 for the neutral equation
  // d/dt (z + g z(t-1)) = h z.
  const double g = 0.5, h = -1.0;
  const DdaeSystem s = neutral_to_ddae(TermList(scalar(g), 1.0), TermList(scalar(h), 0.0));
  RootOptions o;
  o.N = 60;
  const RootSet rs = compute_roots(s, o);
  auto chi = [&](Complex z) { return z * (1.0 + g * std::exp(-z)) - h; };
  const double re0 = -1.5, re1 = 0.5, im0 = -20.0, im1 = 20.0;
  const int expected = winding_number(chi, re0, re1, im0, im1, 20000);
  int inside = 0;
  for (Complex z : rs.corrected) {
    EXPECT_LT(std::abs(chi(z)), 1e-8 * std::max(1.0, std::abs(z)));
    if (z.real() > re0 && z.real() < re1 && z.imag() > im0 && z.imag() < im1) ++inside;
  }
  EXPECT_GT(expected, 5);
  EXPECT_EQ(inside, expected);
}

TEST(Spectrum, DiscretizationRespectsSizeBudget) {
  const DdaeSystem s = interconnect(test::example1(), static_controller(row({0.1, 0.2, 0.3})));
  const Pencil P = discretize(s, 2000, 300);
  EXPECT_LE(P.A.rows(), 300);
  EXPECT_FALSE(P.warning.empty());
  const Pencil Q = discretize(s, 10);
  EXPECT_EQ(Q.A.rows(), 77);
  EXPECT_EQ(Q.N, 10);
}

TEST(Spectrum, OptionValidation) {
  RootOptions o;
  o.N = 1;
  EXPECT_THROW(compute_roots(plant_dynamics(test::example1()), o), InvalidArgument);
  const Pencil P = discretize(plant_dynamics(test::example1()), 10);
  EXPECT_EQ(P.A.rows(), 3);  // no delays: the pencil is (A0, E)
  o = {};
  o.newton_tol = 0.0;
  EXPECT_THROW(o.check(), InvalidArgument);
}

TEST(Spectrum, AdaptiveRefinementIsStable) {
  const DdaeSystem cl = interconnect(test::example1(), static_controller(row({0.47, 0.52, 0.61})));
  RootOptions o;
  o.minimal_real_part = -0.5;
  const RootSet a = compute_roots(cl, o);
  o.N = 2 * a.N_used;
  const RootSet b = compute_roots(cl, o);
  ASSERT_EQ(a.corrected.size(), b.corrected.size());
  for (std::size_t i = 0; i < a.corrected.size(); ++i) EXPECT_LT(std::abs(a.corrected[i] - b.corrected[i]), 1e-7);
}

TEST(Asymptotic, ScalarDifferenceAbscissa) {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> A(0.1, 3.0), T(0.2, 4.0);
  for (int k = 0; k < 20; ++k) {
    const double a = (k % 2 ? -1.0 : 1.0) * A(rng), tau = T(rng);
    DifferencePart d;
    d.M = {CMatrix::Constant(1, 1, a)};
    d.delays = {tau};
    EXPECT_NEAR(robust_difference_abscissa(d), std::log(std::abs(a)) / tau, 1e-8);
    EXPECT_NEAR(maximize_radius(d, 0.0).value, std::abs(a), 1e-14);
  }
}

TEST(Asymptotic, NoDifferencePartSentinel) {
  const Decomposition d = decompose(plant_dynamics(test::example1()));
  EXPECT_EQ(robust_difference_abscissa(d), -kInf);
  EXPECT_EQ(gamma0(d), 0.0);
  DifferencePart z;
  z.M = {CMatrix::Zero(2, 2)};
  z.delays = {1.0};
  EXPECT_EQ(robust_difference_abscissa(z), -kInf);
}

TEST(Asymptotic, GridRefinementMatchesFinerGrid) {
  std::mt19937_64 rng(17);
  for (int k = 0; k < 10; ++k) {
    DifferencePart d;
    for (int i = 0; i < 3; ++i) d.M.push_back(test::random_matrix(rng, 2, 2, 0.4).cast<Complex>());
    d.delays = {1.0, 1.7, 2.9};
    ThetaGrid fine;
    fine.points = 128;
    EXPECT_NEAR(maximize_radius(d, 0.0).value, maximize_radius(d, 0.0, fine).value, 1e-10);
  }
}

TEST(Asymptotic, BruteForceGammaTwoDelays) {
  std::mt19937_64 rng(23);
  for (int k = 0; k < 5; ++k) {
    const Matrix M1 = test::random_matrix(rng, 2, 2, 0.5), M2 = test::random_matrix(rng, 2, 2, 0.5);
    const double brute = test::brute_force_gamma0(M1.cast<Complex>(), M2.cast<Complex>(), 200000);
    const double g = gamma0(decompose(test::difference_system(M1, M2, 1.0, 2.3)));
    EXPECT_NEAR(g, brute, 1e-6);
    EXPECT_GE(g, brute - 1e-12);
  }
}

TEST(Asymptotic, FIsStrictlyDecreasing) {
  std::mt19937_64 rng(29);
  for (int k = 0; k < 5; ++k) {
    DifferencePart d;
    for (int i = 0; i < 2; ++i) d.M.push_back(test::random_matrix(rng, 2, 2, 0.6).cast<Complex>());
    d.delays = {0.7, 1.9};
    double prev = kInf;
    for (int i = 0; i < 10; ++i) {
      const double f = maximize_radius(d, -1.0 + 0.2 * i).value;
      EXPECT_LT(f, prev);
      prev = f;
    }
  }
}

TEST(Asymptotic, SignOfCdFollowsGamma0) {
  std::mt19937_64 rng(31);
  for (int k = 0; k < 10; ++k) {
    DifferencePart d;
    const double s = 0.3 + 0.1 * k;
    for (int i = 0; i < 2; ++i) d.M.push_back(test::random_matrix(rng, 2, 2, s).cast<Complex>());
    d.delays = {1.0, 2.5};
    const double g = maximize_radius(d, 0.0).value;
    const double cd = robust_difference_abscissa(d);
    EXPECT_EQ(g < 1.0, cd < 0.0) << g << " " << cd;
    EXPECT_NEAR(maximize_radius(d, cd).value, 1.0, 1e-10);
  }
}

TEST(Asymptotic, DerivativeWithRespectToZeta) {
  std::mt19937_64 rng(37);
  DifferencePart d;
  for (int i = 0; i < 2; ++i) d.M.push_back(test::random_matrix(rng, 2, 2, 0.5).cast<Complex>());
  d.delays = {1.0, 2.2};
  const RadiusMaximum r = maximize_radius(d, 0.1);
  const double h = 1e-6;
  const double fd = (maximize_radius(d, 0.1 + h).value - maximize_radius(d, 0.1 - h).value) / (2 * h);
  EXPECT_NEAR(r.dzeta, fd, 1e-6 * std::max(1.0, std::abs(fd)));
}

TEST(Asymptotic, SpectralRadiusClosedFormMatchesEigensolver) {
  std::mt19937_64 rng(41);
  for (int k = 0; k < 20; ++k) {
    const CMatrix T = test::random_matrix(rng, 2, 2).cast<Complex>() + Complex(0, 1) * test::random_matrix(rng, 2, 2).cast<Complex>();
    Eigen::ComplexEigenSolver<CMatrix> es(T, false);
    EXPECT_NEAR(spectral_radius(T), es.eigenvalues().cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Asymptotic, ThetaGridValidation) {
  ThetaGrid g;
  g.points = 2;
  EXPECT_THROW(g.check(), InvalidArgument);
}

TEST(Stability, ExampleOneIsUnstable) {
  const StrongStabilityReport r = strong_stability(plant_dynamics(test::example1()));
  EXPECT_NEAR(r.c, 0.1081, 1e-4);
  EXPECT_EQ(r.C_D, -kInf);
  EXPECT_EQ(r.C, r.c);
  EXPECT_FALSE(r.strongly_stable);
}

TEST(Stability, ScalarDifferenceGain) {
  const DdaeSystem s(scalar(0), {{scalar(1), 0.0}, {scalar(1.5), 1.0}});
  const StrongStabilityReport r = strong_stability(s);
  EXPECT_NEAR(r.gamma0, 1.5, 1e-14);
  EXPECT_NEAR(r.C_D, std::log(1.5), 1e-8);
  EXPECT_EQ(r.Xi, 1);
  EXPECT_FALSE(r.strongly_stable);
}

TEST(Stability, RobustAbscissaIsMax) {
  const DdaeSystem cl = interconnect(test::example2(), static_controller(row({0.0249, 0.1076, 0.3173})));
  const StrongStabilityReport r = strong_stability(cl);
  EXPECT_EQ(r.C, std::max(r.c, r.C_D));
  EXPECT_NEAR(robust_spectral_abscissa(cl), r.C, 1e-12);
  EXPECT_TRUE(r.strongly_stable);
  EXPECT_LT(r.gamma0, 1.0);
}
