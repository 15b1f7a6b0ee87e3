#include <gtest/gtest.h>

#include "support.hpp"

using namespace ddae;
using ddae::test::row;

namespace {

double rel_error(const Vector& a, const Vector& b) {
  return (a - b).lpNorm<Eigen::Infinity>() / std::max(1e-8, b.lpNorm<Eigen::Infinity>());
}

Vector vec(std::initializer_list<double> v) {
  Vector x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double a : v) x(i++) = a;
  return x;
}

}  // namespace

TEST(Sensitivity, RootDerivativeMatchesFiniteDifference) {
  const ControllerFamily cf = make_controller_family(test::example1(), 0);
  const Vector p = vec({0.3, 0.4, 0.5});
  const RootSet rs = compute_roots(cf.family.assemble(p));
  const Complex lambda = rs.corrected.front();
  const RootDerivative d = root_derivative(cf.family, p, lambda);
  ASSERT_TRUE(d.differentiable);
  const double h = 1e-6;
  for (Eigen::Index j = 0; j < p.size(); ++j) {
    Vector a = p, b = p;
    a(j) += h;
    b(j) -= h;
    const Complex za = newton_correct(cf.family.assemble(a), lambda).root;
    const Complex zb = newton_correct(cf.family.assemble(b), lambda).root;
    const Complex fd = (za - zb) / (2 * h);
    EXPECT_LT(std::abs(d.gradient(j) - fd), 1e-5 * std::max(1.0, std::abs(fd)));
  }
}

TEST(Sensitivity, AbscissaGradient) {
  const ControllerFamily cf = make_controller_family(test::example1(), 1);
  std::mt19937_64 rng(2);
  int checked = 0;
  for (int k = 0; k < 6; ++k) {
    const Vector p = test::random_matrix(rng, cf.family.num_params(), 1, 0.3);
    const GradientSample g = abscissa_gradient(cf.family, p);
    if (!g.differentiable) continue;
    const Vector fd = test::fd_gradient([&](const Vector& q) { return spectral_abscissa(cf.family.assemble(q)); }, p, 1e-6);
    EXPECT_LT(rel_error(g.gradient, fd), 1e-4);
    ++checked;
  }
  EXPECT_GT(checked, 3);
}

TEST(Sensitivity, Gamma0AndCdGradients) {
  const ControllerFamily cf = make_controller_family(test::example2(), 0);
  const Vector p = vec({0.05, 0.07, 0.35});
  const GradientSample g0 = gamma0_gradient(cf.family, p);
  ASSERT_TRUE(g0.differentiable);
  const Vector fd0 = test::fd_gradient([&](const Vector& q) { return gamma0(decompose(cf.family.assemble(q))); }, p, 1e-6);
  EXPECT_LT(rel_error(g0.gradient, fd0), 1e-4);

  const GradientSample cd = cd_gradient(cf.family, p);
  ASSERT_TRUE(cd.differentiable);
  const Vector fdc = test::fd_gradient(
      [&](const Vector& q) { return robust_difference_abscissa(decompose(cf.family.assemble(q))); }, p, 1e-6);
  EXPECT_LT(rel_error(cd.gradient, fdc), 1e-4);
}

TEST(Sensitivity, CdGradientWithoutDifferencePart) {
  const ControllerFamily cf = make_controller_family(test::example1(), 0);
  const GradientSample g = cd_gradient(cf.family, vec({0.1, 0.2, 0.3}));
  EXPECT_EQ(g.value, -kInf);
  EXPECT_TRUE(g.gradient.isZero());
}

TEST(Optimize, MinNormConvexCombination) {
  Matrix G(2, 2);
  G << 1, 0, 0, 1;
  const Vector x = min_norm_convex_combination(G);
  EXPECT_NEAR(x(0), 0.5, 1e-10);
  EXPECT_NEAR(x(1), 0.5, 1e-10);
  Matrix H(2, 3);
  H << 1, -1, 0.5, 1, 1, 2;
  const Vector y = min_norm_convex_combination(H);
  EXPECT_NEAR(y(0), 0.0, 1e-10);
  EXPECT_NEAR(y(1), 1.0, 1e-10);
  Matrix Z(2, 2);
  Z << 1, -1, 0, 0;
  EXPECT_NEAR(min_norm_convex_combination(Z).norm(), 0.0, 1e-12);
  Matrix W(2, 1);
  W << 3, -4;
  EXPECT_TRUE(min_norm_convex_combination(W).isApprox(W.col(0)));
}

TEST(Optimize, SmoothQuadratic) {
  Oracle f = [](const Vector& x) {
    GradientSample s;
    s.value = (x.array() - 1.0).square().sum();
    s.gradient = 2.0 * (x.array() - 1.0).matrix();
    s.differentiable = true;
    return s;
  };
  SolveOptions o;
  const MinimizeResult r = nonsmooth_minimize(f, Vector::Zero(4), o);
  EXPECT_LT(r.f, 1e-10);
  EXPECT_TRUE(std::is_sorted(r.trace.rbegin(), r.trace.rend()));
}

TEST(Optimize, NonsmoothMaxOfLinear) {
  // max(|x1|, 2|x2|) + 0.1 x1 has its minimum 0 at the origin.
  Oracle f = [](const Vector& x) {
    GradientSample s;
    s.gradient = Vector::Zero(2);
    const double a = std::abs(x(0)), b = 2.0 * std::abs(x(1));
    s.value = std::max(a, b) + 0.1 * x(0);
    if (a >= b) s.gradient(0) = (x(0) >= 0 ? 1.0 : -1.0);
    else s.gradient(1) = (x(1) >= 0 ? 2.0 : -2.0);
    s.gradient(0) += 0.1;
    s.differentiable = a != b && x(0) != 0 && x(1) != 0;
    return s;
  };
  SolveOptions o;
  const MinimizeResult r = nonsmooth_minimize(f, vec({1.3, -0.7}), o);
  EXPECT_LT(r.f, 1e-3);
}

TEST(Optimize, SolveOptionsValidation) {
  SolveOptions o;
  o.wolfe_c1 = 0.6;
  EXPECT_THROW(o.check(), InvalidArgument);
  o = {};
  o.gs_radii = {1e-2, 1e-1};
  EXPECT_THROW(o.check(), InvalidArgument);
  o = {};
  o.gamma = 1.5;
  EXPECT_THROW(o.check(), InvalidArgument);
}

TEST(Optimize, RobustAbscissaIsMaxOfParts) {
  const ControllerFamily cf = make_controller_family(test::example2(), 0);
  std::mt19937_64 rng(8);
  for (int k = 0; k < 5; ++k) {
    const Vector p = test::random_matrix(rng, 3, 1, 0.2);
    double c = 0, cd = 0;
    const GradientSample s = robust_abscissa_sample(cf.family, p, {}, &c, &cd);
    EXPECT_EQ(s.value, std::max(c, cd));
  }
}

TEST(Optimize, StaticStabilizationIsDeterministic) {
  SolveOptions o;
  o.starts = 1;
  o.seed = 4;
  const SynthesisResult a = stabilization_max(test::example1(), 0, o);
  const SynthesisResult b = stabilization_max(test::example1(), 0, o);
  EXPECT_EQ(a.parameters, b.parameters);
  EXPECT_EQ(a.objective, b.objective);
  EXPECT_LT(a.objective, 0.0);
  EXPECT_TRUE(a.report.strongly_stable);
  EXPECT_EQ(a.objective, a.report.C);
  EXPECT_LE(a.trace.back(), a.trace.front());
}

TEST(Optimize, FixedStructureKeepsObjective) {
  SolveOptions o;
  o.starts = 1;
  const SynthesisResult r = stabilization_max(test::example1(), 0, o, row({1, 1, 1}), row({0, 0, 0}));
  EXPECT_EQ(r.parameters.size(), 0);
  EXPECT_NEAR(r.objective, 0.1081, 1e-4);
  EXPECT_FALSE(r.report.strongly_stable);
}

TEST(Optimize, BarrierInfeasibleWhenGammaCannotDrop) {
  SolveOptions o;
  o.starts = 1;
  EXPECT_THROW(stabilization_barrier(test::example2(), 0, o, row({1, 1, 1}), row({1, 1, 1})), Infeasible);
}

TEST(Optimize, BarrierIteratesStayInterior) {
  SolveOptions o;
  o.starts = 1;
  const SynthesisResult r = stabilization_barrier(test::example2(), 0, o);
  ASSERT_TRUE(r.feasible);
  ASSERT_FALSE(r.constraint_trace.empty());
  for (double g : r.constraint_trace) EXPECT_LT(g, o.gamma);
  EXPECT_LT(r.report.gamma0, o.gamma);
  EXPECT_LT(r.report.c, 0.0);
  EXPECT_TRUE(r.report.strongly_stable);
}
