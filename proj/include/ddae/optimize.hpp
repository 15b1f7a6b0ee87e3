#pragma once

#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "ddae/sensitivity.hpp"
#include "ddae/stability.hpp"

namespace ddae {

/// Raised when no parameter point satisfies gamma0 < gamma.
class Infeasible : public Error {
 public:
  using Error::Error;
};

struct SolveOptions {
  int starts = 5;
  std::uint64_t seed = 1;
  int bfgs_max_iter = 400;
  double wolfe_c1 = 1e-4;
  double wolfe_c2 = 0.5;
  int gs_samples = 0;  ///< 0 selects 2 * n_p
  std::vector<double> gs_radii{1e-1, 1e-2, 1e-3};
  int gs_max_iter = 20;  ///< gradient sampling iterations per radius
  double stop_tol = 1e-5;
  std::vector<double> barrier_r{1e-3, 1e-4, 1e-5};
  double gamma = 1.0 - 1e-3;
  double init_std = 0.5;    ///< standard deviation of random initial gains
  double init_shift = 0.5;  ///< A_c starts shifted by -init_shift * I
  double target = -kInf;    ///< stop as soon as the objective drops below this
  RootOptions roots;

  void check() const {
    if (!(0.0 < wolfe_c1 && wolfe_c1 < wolfe_c2 && wolfe_c2 < 1.0)) {
      throw InvalidArgument("SolveOptions: need 0 < c1 < c2 < 1");
    }
    for (std::size_t i = 0; i < gs_radii.size(); ++i) {
      if (!(gs_radii[i] > 0.0) || (i > 0 && !(gs_radii[i] < gs_radii[i - 1]))) {
        throw InvalidArgument("SolveOptions: sampling radii must be positive and strictly decreasing");
      }
    }
    if (!(gamma <= 1.0)) throw InvalidArgument("SolveOptions: gamma must not exceed 1");
    for (double r : barrier_r) {
      if (!(r > 0.0)) throw InvalidArgument("SolveOptions: barrier weights must be positive");
    }
    if (starts < 1) throw InvalidArgument("SolveOptions: need at least one start");
    roots.check();
  }
};

using Oracle = std::function<GradientSample(const Vector&)>;

struct MinimizeResult {
  Vector x;
  double f = kInf;
  std::vector<double> trace;  ///< objective at accepted iterates
  int evaluations = 0;
  std::string status;
};

/// Minimum-norm element of the convex hull of the columns of G (Wolfe's
/// active-set algorithm over the simplex).
inline Vector min_norm_convex_combination(const Matrix& G) {
  const auto m = G.cols();
  if (m == 0) throw InvalidArgument("min_norm_convex_combination: no points");
  Eigen::Index j0 = 0;
  G.colwise().squaredNorm().minCoeff(&j0);
  std::vector<Eigen::Index> S{j0};
  std::vector<double> lam{1.0};
  Vector x = G.col(j0);
  const double scale = G.colwise().squaredNorm().maxCoeff();
  for (int major = 0; major < 100 + 10 * static_cast<int>(m); ++major) {
    Eigen::Index j = 0;
    (G.transpose() * x).minCoeff(&j);
    if (x.dot(G.col(j)) >= x.squaredNorm() - 1e-12 * scale) break;
    if (std::find(S.begin(), S.end(), j) != S.end()) break;
    S.push_back(j);
    lam.push_back(0.0);
    for (int minor = 0; minor < 100; ++minor) {
      const auto k = static_cast<Eigen::Index>(S.size());
      Matrix K = Matrix::Zero(k + 1, k + 1);
      for (Eigen::Index a = 0; a < k; ++a) {
        for (Eigen::Index b = 0; b < k; ++b) K(a, b) = G.col(S[a]).dot(G.col(S[b]));
        K(a, k) = 1.0;
        K(k, a) = 1.0;
      }
      K.topLeftCorner(k, k).diagonal().array() += 1e-14 * scale;
      Vector rhs = Vector::Zero(k + 1);
      rhs(k) = 1.0;
      const Vector mu = K.fullPivLu().solve(rhs).head(k);
      if ((mu.array() > 1e-15).all()) {
        for (Eigen::Index a = 0; a < k; ++a) lam[a] = mu(a);
        break;
      }
      double theta = 1.0;
      for (Eigen::Index a = 0; a < k; ++a) {
        if (mu(a) <= 1e-15) theta = std::min(theta, lam[a] / (lam[a] - mu(a)));
      }
      for (Eigen::Index a = 0; a < k; ++a) lam[a] += theta * (mu(a) - lam[a]);
      std::vector<Eigen::Index> S2;
      std::vector<double> l2;
      for (Eigen::Index a = 0; a < k; ++a) {
        if (lam[a] > 1e-15) {
          S2.push_back(S[a]);
          l2.push_back(lam[a]);
        }
      }
      S = std::move(S2);
      lam = std::move(l2);
      double tot = 0.0;
      for (double l : lam) tot += l;
      for (double& l : lam) l /= tot;
    }
    x.setZero(G.rows());
    for (std::size_t a = 0; a < S.size(); ++a) x += lam[a] * G.col(S[a]);
  }
  return x;
}

namespace detail {

struct Point {
  Vector x;
  GradientSample s;
};

inline Vector random_unit(Eigen::Index n, std::mt19937_64& rng) {
  std::normal_distribution<double> N01;
  Vector u(n);
  for (Eigen::Index i = 0; i < n; ++i) u(i) = N01(rng);
  const double nu = u.norm();
  return nu > 0.0 ? Vector(u / nu) : Vector(Vector::Unit(n, 0));
}

}  // namespace detail

/// BFGS with weak Wolfe line search, followed by gradient sampling.
///
/// The oracle must return a value everywhere (+inf outside the domain).
/// Points flagged non-differentiable are perturbed once by 1e-10 of the
/// parameter scale; if still flagged, BFGS stops and gradient sampling
/// takes over. Deterministic for a fixed seed.
inline MinimizeResult nonsmooth_minimize(const Oracle& oracle, const Vector& x0, const SolveOptions& opts,
                                         const std::function<void(const Vector&, double)>& on_accept = {}) {
  opts.check();
  const Eigen::Index n = x0.size();
  std::mt19937_64 rng(opts.seed);
  MinimizeResult out;
  auto eval = [&](const Vector& x) {
    ++out.evaluations;
    GradientSample s = oracle(x);
    if (!std::isfinite(s.value)) s.differentiable = false;
    if (s.gradient.size() != n || !s.gradient.allFinite()) {
      s.gradient = Vector::Zero(n);
      s.differentiable = false;
    }
    return s;
  };
  auto scale_of = [](const Vector& x) { return std::max(1.0, x.size() ? x.cwiseAbs().maxCoeff() : 0.0); };
  auto accept = [&](const detail::Point& p) {
    out.trace.push_back(p.s.value);
    if (on_accept) on_accept(p.x, p.s.value);
  };
  auto done = [&](const detail::Point& p) { return p.s.value < opts.target; };

  detail::Point cur{x0, eval(x0)};
  if (!std::isfinite(cur.s.value)) {
    out.x = x0;
    out.f = cur.s.value;
    out.status = "infeasible start";
    return out;
  }
  accept(cur);
  if (n == 0 || done(cur)) {
    out.x = cur.x;
    out.f = cur.s.value;
    out.status = n == 0 ? "no parameters" : "target reached";
    return out;
  }

  auto retry_if_flagged = [&](detail::Point& p) {
    if (p.s.differentiable) return true;
    if (!std::isfinite(p.s.value)) return false;
    detail::Point q{p.x + 1e-10 * scale_of(p.x) * detail::random_unit(n, rng), {}};
    q.s = eval(q.x);
    if (q.s.differentiable && q.s.value <= p.s.value + 1e-12 * std::max(1.0, std::abs(p.s.value))) {
      p = std::move(q);
      return true;
    }
    return false;
  };

  // Phase (a): BFGS.
  std::string status = "bfgs iteration limit";
  Matrix H = Matrix::Identity(n, n);
  bool scaled = false;
  std::vector<detail::Point> recent;
  for (int it = 0; it < opts.bfgs_max_iter; ++it) {
    if (!retry_if_flagged(cur)) {
      status = "nondifferentiable point";
      break;
    }
    const Vector& g = cur.s.gradient;
    if (g.norm() <= opts.stop_tol) {
      status = "stationary";
      break;
    }
    Vector d = -H * g;
    if (g.dot(d) >= 0.0) {
      H.setIdentity();
      d = -g;
    }
    const double gd = g.dot(d);
    double lo = 0.0, hi = kInf, t = 1.0;
    bool ok = false;
    detail::Point trial;
    for (int ls = 0; ls < 60; ++ls) {
      trial.x = cur.x + t * d;
      trial.s = eval(trial.x);
      if (!(trial.s.value <= cur.s.value + opts.wolfe_c1 * t * gd)) {
        hi = t;
      } else {
        if (!trial.s.differentiable && !retry_if_flagged(trial)) break;
        if (trial.s.gradient.dot(d) < opts.wolfe_c2 * gd) {
          lo = t;
        } else {
          ok = true;
          break;
        }
      }
      t = std::isfinite(hi) ? 0.5 * (lo + hi) : 2.0 * t;
      if (std::isfinite(hi) && hi - lo < 1e-14 * std::max(1.0, lo)) break;
    }
    if (!ok) {
      // Keep any decrease found, then hand over to gradient sampling.
      if (trial.s.value < cur.s.value && std::isfinite(trial.s.value)) {
        cur = trial;
        accept(cur);
      }
      status = "line search failed";
      break;
    }
    const Vector s = trial.x - cur.x;
    const Vector y = trial.s.gradient - g;
    const double sy = s.dot(y);
    cur = std::move(trial);
    accept(cur);
    if (done(cur)) {
      out.x = cur.x;
      out.f = cur.s.value;
      out.status = "target reached";
      return out;
    }
    if (sy > 0.0) {
      if (!scaled) {
        H *= sy / y.squaredNorm();
        scaled = true;
      }
      const double rho = 1.0 / sy;
      const Matrix V = Matrix::Identity(n, n) - rho * y * s.transpose();
      H = V.transpose() * H * V + rho * s * s.transpose();
    }
    // Nonsmooth stationarity from gradients at nearby recent iterates.
    recent.push_back(cur);
    if (recent.size() > static_cast<std::size_t>(std::min<Eigen::Index>(n + 1, 10))) recent.erase(recent.begin());
    std::vector<Vector> near;
    for (const auto& r : recent) {
      if ((r.x - cur.x).norm() <= 1e-4 * scale_of(cur.x) && r.s.differentiable) near.push_back(r.s.gradient);
    }
    if (near.size() > 1) {
      Matrix G(n, static_cast<Eigen::Index>(near.size()));
      for (std::size_t k = 0; k < near.size(); ++k) G.col(static_cast<Eigen::Index>(k)) = near[k];
      if (min_norm_convex_combination(G).norm() <= opts.stop_tol) {
        status = "stationary (nonsmooth)";
        break;
      }
    }
  }

  // Phase (b): gradient sampling with shrinking radii.
  const int samples = opts.gs_samples > 0 ? opts.gs_samples : static_cast<int>(2 * n);
  for (double radius0 : opts.gs_radii) {
    for (int it = 0; it < opts.gs_max_iter; ++it) {
      const double radius = radius0 * scale_of(cur.x);
      std::vector<Vector> grads;
      if (cur.s.differentiable) grads.push_back(cur.s.gradient);
      std::uniform_real_distribution<double> U01(0.0, 1.0);
      for (int k = 0; k < samples; ++k) {
        const double r = radius * std::pow(U01(rng), 1.0 / static_cast<double>(n));
        const Vector xs = cur.x + r * detail::random_unit(n, rng);
        const GradientSample gs = eval(xs);
        if (gs.differentiable && std::isfinite(gs.value)) grads.push_back(gs.gradient);
      }
      if (grads.empty()) break;
      Matrix G(n, static_cast<Eigen::Index>(grads.size()));
      for (std::size_t k = 0; k < grads.size(); ++k) G.col(static_cast<Eigen::Index>(k)) = grads[k];
      const Vector w = min_norm_convex_combination(G);
      const double wn = w.norm();
      if (wn <= opts.stop_tol) break;
      const Vector d = -w / wn;
      bool moved = false;
      for (double t = 1.0; t > 1e-12; t *= 0.5) {
        detail::Point trial{cur.x + t * d, {}};
        trial.s = eval(trial.x);
        if (trial.s.value < cur.s.value - 1e-6 * t * wn) {
          cur = std::move(trial);
          accept(cur);
          moved = true;
          break;
        }
      }
      if (done(cur)) {
        out.x = cur.x;
        out.f = cur.s.value;
        out.status = "target reached";
        return out;
      }
      if (!moved) break;
    }
  }
  out.x = cur.x;
  out.f = cur.s.value;
  out.status = status;
  return out;
}

/// Value and gradient of C = max(c, C_D) for the family at p. Points where
/// the algebraic block is singular evaluate to +inf.
inline GradientSample robust_abscissa_sample(const AffineFamily& fam, const Vector& p, const RootOptions& opts,
                                             double* c_out = nullptr, double* cd_out = nullptr) {
  GradientSample out;
  out.gradient = Vector::Zero(fam.num_params());
  try {
    const GradientSample c = abscissa_gradient(fam, p, opts);
    const GradientSample cd = cd_gradient(fam, p, opts.grid);
    if (c_out) *c_out = c.value;
    if (cd_out) *cd_out = cd.value;
    out = c.value >= cd.value ? c : cd;
    if (c.value == cd.value) out.differentiable = false;
  } catch (const AssumptionViolation&) {
    out.value = kInf;
    out.differentiable = false;
  }
  return out;
}

/// Barrier objective c(p) - r log(gamma - gamma0(p)); +inf outside gamma0 < gamma.
inline GradientSample barrier_sample(const AffineFamily& fam, const Vector& p, double r, const SolveOptions& opts) {
  GradientSample out;
  out.gradient = Vector::Zero(fam.num_params());
  try {
    const GradientSample g0 = gamma0_gradient(fam, p, opts.roots.grid);
    if (!(g0.value < opts.gamma)) {
      out.value = kInf;
      return out;
    }
    const GradientSample c = abscissa_gradient(fam, p, opts.roots);
    const double slack = opts.gamma - g0.value;
    out.value = c.value - r * std::log(slack);
    out.gradient = c.gradient + (r / slack) * g0.gradient;
    out.differentiable = c.differentiable && g0.differentiable;
    out.active = c.active;
  } catch (const AssumptionViolation&) {
    out.value = kInf;
  }
  return out;
}

struct SynthesisResult {
  ControllerIo controller;
  Vector parameters;
  double objective = kInf;  ///< C for the max variant, c for the barrier variant
  StrongStabilityReport report;
  std::vector<double> trace;
  std::vector<double> constraint_trace;  ///< gamma0 at accepted barrier iterates
  bool feasible = true;
};

namespace detail {

inline Vector initial_point(const ControllerLayout& L, const SolveOptions& opts, std::mt19937_64& rng) {
  std::normal_distribution<double> N(0.0, opts.init_std);
  Matrix K(L.rows(), L.cols());
  for (Eigen::Index c = 0; c < K.cols(); ++c) {
    for (Eigen::Index r = 0; r < K.rows(); ++r) K(r, c) = N(rng);
  }
  K.topLeftCorner(L.n_c, L.n_c).diagonal().array() -= opts.init_shift;
  Vector p(L.num_params());
  for (Eigen::Index j = 0; j < p.size(); ++j) p(j) = K.data()[L.free_index[j]];
  return p;
}

/// Spectral abscissa oracle whose N is checked against 2N at accepted
/// iterates (every tenth one) and raised when the two disagree.
class AdaptiveRoots {
 public:
  AdaptiveRoots(const AffineFamily& fam, RootOptions opts) : fam_(&fam), opts_(std::move(opts)) {
    if (opts_.N == 0) opts_.N = std::max(2, default_points(fam.assemble(Vector::Zero(fam.num_params())), opts_));
    opts_.cd_warning = false;
    if (!std::isfinite(opts_.minimal_real_part)) opts_.rightmost_window = std::min(opts_.rightmost_window, 0.5);
  }
  const RootOptions& options() const { return opts_; }
  void validate(const Vector& p) {
    if (++accepted_ % 10 != 0) return;
    const Eigen::Index limit = opts_.max_pencil_size / fam_->dim() - 1;
    if (2 * opts_.N > limit) return;
    try {
      const DdaeSystem sys = fam_->assemble(p);
      RootOptions twice = opts_;
      twice.N *= 2;
      const double c1 = spectral_abscissa(sys, opts_);
      const double c2 = spectral_abscissa(sys, twice);
      if (std::abs(c1 - c2) > 1e-8 * std::max(1.0, std::abs(c2))) opts_.N *= 2;
    } catch (const AssumptionViolation&) {
    }
  }

 private:
  const AffineFamily* fam_;
  RootOptions opts_;
  int accepted_ = 0;
};

inline SolveOptions seeded(const SolveOptions& opts, std::uint64_t salt) {
  SolveOptions o = opts;
  o.seed = opts.seed * 0x9E3779B97F4A7C15ULL + salt;
  return o;
}

}  // namespace detail

/// Minimizes the robust spectral abscissa C over controllers of the given
/// order, from `starts` random initial points.
inline SynthesisResult stabilization_max(const PlantIo& plant, Eigen::Index order, const SolveOptions& opts = {},
                                         std::optional<Matrix> fixed_mask = std::nullopt,
                                         std::optional<Matrix> fixed_values = std::nullopt) {
  opts.check();
  const ControllerFamily cf = make_controller_family(plant, order, fixed_mask, fixed_values);
  std::mt19937_64 rng(opts.seed);
  SynthesisResult best;
  MinimizeResult best_run;
  for (int s = 0; s < opts.starts; ++s) {
    const Vector p0 = detail::initial_point(cf.layout, opts, rng);
    detail::AdaptiveRoots roots(cf.family, opts.roots);
    Oracle oracle = [&](const Vector& p) { return robust_abscissa_sample(cf.family, p, roots.options()); };
    const MinimizeResult run = nonsmooth_minimize(oracle, p0, detail::seeded(opts, s),
                                                  [&](const Vector& x, double) { roots.validate(x); });
    if (s == 0 || run.f < best_run.f) best_run = run;
  }
  best.parameters = best_run.x;
  best.controller = cf.layout.controller(best_run.x);
  best.trace = best_run.trace;
  const DdaeSystem sys = cf.family.assemble(best_run.x);
  best.report = strong_stability(sys, opts.roots);
  best.objective = best.report.C;
  return best;
}

struct FeasibilityResult {
  Vector p;
  double gamma0 = kInf;
  bool feasible = false;
};

/// Searches for p with gamma0(p) < gamma by minimizing gamma0 from p0.
inline FeasibilityResult feasibility_phase(const AffineFamily& fam, const Vector& p0, const SolveOptions& opts) {
  FeasibilityResult out;
  auto g0 = [&](const Vector& p) {
    try {
      return gamma0_gradient(fam, p, opts.roots.grid);
    } catch (const AssumptionViolation&) {
      GradientSample s;
      s.gradient = Vector::Zero(fam.num_params());
      return s;
    }
  };
  const GradientSample first = g0(p0);
  if (first.value < opts.gamma) return {p0, first.value, true};
  SolveOptions o = opts;
  o.target = opts.gamma;
  const MinimizeResult run = nonsmooth_minimize(g0, p0, o);
  out.p = run.x;
  out.gamma0 = run.f;
  out.feasible = run.f < opts.gamma;
  return out;
}

/// Minimizes c subject to gamma0 < gamma: feasibility phase, then the
/// barrier problems min c - r log(gamma - gamma0) for the decreasing r
/// schedule, each warm-started from the previous solution.
inline SynthesisResult stabilization_barrier(const PlantIo& plant, Eigen::Index order, const SolveOptions& opts = {},
                                             std::optional<Matrix> fixed_mask = std::nullopt,
                                             std::optional<Matrix> fixed_values = std::nullopt) {
  opts.check();
  const ControllerFamily cf = make_controller_family(plant, order, fixed_mask, fixed_values);
  std::mt19937_64 rng(opts.seed);
  SynthesisResult best;
  best.feasible = false;
  double best_c = kInf;
  for (int s = 0; s < opts.starts; ++s) {
    const Vector p0 = detail::initial_point(cf.layout, opts, rng);
    const FeasibilityResult feas = feasibility_phase(cf.family, p0, detail::seeded(opts, 1000 + s));
    if (!feas.feasible) continue;
    Vector p = feas.p;
    std::vector<double> trace, constraint;
    detail::AdaptiveRoots roots(cf.family, opts.roots);
    for (std::size_t k = 0; k < opts.barrier_r.size(); ++k) {
      const double r = opts.barrier_r[k];
      Oracle oracle = [&](const Vector& q) {
        SolveOptions o = opts;
        o.roots = roots.options();
        return barrier_sample(cf.family, q, r, o);
      };
      const MinimizeResult run =
          nonsmooth_minimize(oracle, p, detail::seeded(opts, 100 * s + k), [&](const Vector& x, double) {
            roots.validate(x);
            constraint.push_back(gamma0_gradient(cf.family, x, opts.roots.grid).value);
          });
      p = run.x;
      trace.insert(trace.end(), run.trace.begin(), run.trace.end());
    }
    const double c = spectral_abscissa(cf.family.assemble(p), opts.roots);
    if (c < best_c) {
      best_c = c;
      best.parameters = p;
      best.trace = std::move(trace);
      best.constraint_trace = std::move(constraint);
      best.feasible = true;
    }
  }
  if (!best.feasible) {
    throw Infeasible("stabilization_barrier: no controller with gamma0 < " + std::to_string(opts.gamma) +
                     " found");
  }
  best.controller = cf.layout.controller(best.parameters);
  best.report = strong_stability(cf.family.assemble(best.parameters), opts.roots);
  best.objective = best.report.c;
  return best;
}

}  // namespace ddae
