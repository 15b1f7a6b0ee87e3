#pragma once

#include <algorithm>
#include <cstdint>
#include <numbers>
#include <random>
#include <vector>

#include <boost/math/tools/minima.hpp>
#include <boost/math/tools/toms748_solve.hpp>

#include "ddae/model.hpp"

// Delay-difference part of a DDAE: the torus maximization
//
//   f(zeta) = max_theta rho( sum_k M_k exp(-zeta tau_k) exp(j theta_k) )
//
// with gamma0 = f(0), and the robust difference abscissa C_D, the unique
// zero of f(zeta) - 1.

namespace ddae {

/// Settings for the maximization over the angles theta in [0, 2 pi)^m.
struct ThetaGrid {
  int points = 64;            ///< grid points per angle
  bool refine = true;         ///< local correction of grid maximizers
  double step_tol = 1e-12;    ///< stop the ascent when steps get this small
  int restarts = 10;          ///< extra random local ascents when three or more angles are free
  std::uint64_t seed = 12345;

  void check() const {
    if (points < 8) throw InvalidArgument("ThetaGrid: need at least 8 points per angle");
    if (!(step_tol > 0.0)) throw InvalidArgument("ThetaGrid: step_tol must be positive");
  }
};

/// The matrices M_k = (U^T A_0 V)^{-1} U^T A_k V with their delays.
struct DifferencePart {
  std::vector<CMatrix> M;
  std::vector<double> delays;

  Eigen::Index dim() const { return M.empty() ? 0 : M[0].rows(); }
  bool trivial() const {
    return std::all_of(M.begin(), M.end(), [](const CMatrix& m) { return m.isZero(0.0); });
  }
};

inline DifferencePart difference_part(const Decomposition& dec) {
  DifferencePart d;
  for (std::size_t k = 0; k < dec.M.size(); ++k) {
    d.M.push_back(dec.M[k].cast<Complex>());
    d.delays.push_back(dec.delays[k]);
  }
  return d;
}

/// Dominant eigenvalue mu of a small complex matrix together with right
/// eigenvector x and left row vector yh normalized so that yh * x = 1.
struct DominantEigen {
  Complex mu{0.0, 0.0};
  CVector x;
  Eigen::RowVectorXcd yh;
  bool simple = true;  ///< no other eigenvalue of the same modulus, well-conditioned basis
};

inline double spectral_radius(const CMatrix& T) {
  if (T.rows() == 1) return std::abs(T(0, 0));
  if (T.rows() == 2) {
    const Complex tr = T(0, 0) + T(1, 1);
    const Complex det = T(0, 0) * T(1, 1) - T(0, 1) * T(1, 0);
    const Complex disc = std::sqrt(tr * tr - 4.0 * det);
    return 0.5 * std::max(std::abs(tr + disc), std::abs(tr - disc));
  }
  Eigen::ComplexEigenSolver<CMatrix> es(T, false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline DominantEigen dominant_eigen(const CMatrix& T) {
  DominantEigen d;
  const auto n = T.rows();
  if (n == 1) {
    d.mu = T(0, 0);
    d.x = CVector::Ones(1);
    d.yh = Eigen::RowVectorXcd::Ones(1);
    return d;
  }
  Eigen::ComplexEigenSolver<CMatrix> es(T, true);
  const CVector& ev = es.eigenvalues();
  Eigen::Index i = 0;
  ev.cwiseAbs().maxCoeff(&i);
  d.mu = ev(i);
  const double r = std::abs(d.mu);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (k != i && std::abs(ev(k)) >= r * (1.0 - 1e-9) && r > 0.0) d.simple = false;
  }
  const CMatrix& X = es.eigenvectors();
  Eigen::FullPivLU<CMatrix> lu(X);
  if (!lu.isInvertible() || lu.rcond() < 1e-10) {
    d.simple = false;
    d.x = X.col(i);
    d.yh = X.col(i).adjoint() / X.col(i).squaredNorm();
    return d;
  }
  const CMatrix Xinv = lu.inverse();
  d.x = X.col(i);
  d.yh = Xinv.row(i);
  return d;
}

/// Result of maximizing the spectral radius over the angles.
struct RadiusMaximum {
  double value = 0.0;
  std::vector<double> theta;   ///< maximizer, one angle per delay
  DominantEigen eig;           ///< dominant eigen-triple at the maximizer
  CMatrix T;                   ///< sum_k M_k w_k e^{j theta_k} at the maximizer
  double dzeta = 0.0;          ///< derivative of f with respect to zeta
  bool unique = true;          ///< no competing maximizer (up to conjugation)
};

namespace detail {

class RadiusObjective {
 public:
  RadiusObjective(const DifferencePart& d, double zeta) {
    for (std::size_t k = 0; k < d.M.size(); ++k) {
      if (d.M[k].isZero(0.0)) continue;
      active_.push_back(k);
      W_.push_back(d.M[k] * std::exp(-zeta * d.delays[k]));
      tau_.push_back(d.delays[k]);
    }
  }

  std::size_t num_active() const { return active_.size(); }
  const std::vector<std::size_t>& active() const { return active_; }

  /// free holds the angles of active terms 1..; the first active angle is 0.
  CMatrix matrix(const std::vector<double>& free) const {
    CMatrix T = W_[0];
    for (std::size_t k = 1; k < W_.size(); ++k) T += W_[k] * std::polar(1.0, free[k - 1]);
    return T;
  }
  double value(const std::vector<double>& free) const { return spectral_radius(matrix(free)); }

  /// Gradient of rho with respect to the free angles (zero if not simple).
  std::vector<double> gradient(const std::vector<double>& free, double* val) const {
    const CMatrix T = matrix(free);
    const DominantEigen e = dominant_eigen(T);
    *val = std::abs(e.mu);
    std::vector<double> g(free.size(), 0.0);
    if (!e.simple || *val == 0.0) return g;
    const Complex phase = std::conj(e.mu) / *val;
    for (std::size_t k = 1; k < W_.size(); ++k) {
      const Complex dmu = (e.yh * (W_[k] * Complex(0.0, 1.0) * std::polar(1.0, free[k - 1])) * e.x)(0);
      g[k - 1] = std::real(phase * dmu);
    }
    return g;
  }

  double dzeta(const std::vector<double>& free, const DominantEigen& e) const {
    const double r = std::abs(e.mu);
    if (r == 0.0) return 0.0;
    CMatrix dT = -tau_[0] * W_[0];
    for (std::size_t k = 1; k < W_.size(); ++k) dT += -tau_[k] * W_[k] * std::polar(1.0, free[k - 1]);
    return std::real(std::conj(e.mu) / r * (e.yh * dT * e.x)(0));
  }

 private:
  std::vector<std::size_t> active_;
  std::vector<CMatrix> W_;
  std::vector<double> tau_;
};

inline double wrap_angle(double a) {
  constexpr double two_pi = 2.0 * std::numbers::pi;
  a = std::fmod(a, two_pi);
  return a < 0.0 ? a + two_pi : a;
}

inline double angle_distance(double a, double b) {
  const double d = wrap_angle(a - b);
  return std::min(d, 2.0 * std::numbers::pi - d);
}

inline double torus_distance(const std::vector<double>& a, const std::vector<double>& b, bool conjugate) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, angle_distance(a[i], conjugate ? -b[i] : b[i]));
  return d;
}

/// Gradient ascent with backtracking, then golden/Brent sweeps per angle
/// over a shrinking window (handles maximizers at eigenvalue crossings).
inline double refine_maximum(const RadiusObjective& obj, std::vector<double>& th, double h,
                             const ThetaGrid& grid) {
  double val = obj.value(th);
  if (th.size() > 1) {
    double step = h;
    for (int it = 0; it < 200 && step > grid.step_tol; ++it) {
      double v0 = 0.0;
      const auto g = obj.gradient(th, &v0);
      double gn = 0.0;
      for (double gi : g) gn += gi * gi;
      gn = std::sqrt(gn);
      if (gn < 1e-14) break;
      bool moved = false;
      while (step > grid.step_tol) {
        std::vector<double> trial = th;
        for (std::size_t i = 0; i < th.size(); ++i) trial[i] += step * g[i] / gn;
        const double tv = obj.value(trial);
        if (tv > v0 + 1e-4 * step * gn) {
          th = trial;
          val = tv;
          moved = true;
          step *= 2.0;
          break;
        }
        step *= 0.5;
      }
      if (!moved) break;
    }
  }
  constexpr int bits = std::numeric_limits<double>::digits / 2 + 4;
  double window = h;
  for (int sweep = 0; sweep < 8; ++sweep) {
    const double before = val;
    for (std::size_t i = 0; i < th.size(); ++i) {
      auto line = [&](double a) {
        std::vector<double> t = th;
        t[i] = a;
        return -obj.value(t);
      };
      std::uintmax_t iters = 200;
      const auto [a, fa] =
          boost::math::tools::brent_find_minima(line, th[i] - window, th[i] + window, bits, iters);
      if (-fa > val) {
        th[i] = a;
        val = -fa;
      }
    }
    if (val - before <= 1e-15 * std::max(1.0, val)) break;
    window *= 0.5;
  }
  for (auto& a : th) a = wrap_angle(a);
  return val;
}

}  // namespace detail

/// Maximizes rho(sum_k M_k e^{-zeta tau_k} e^{j theta_k}) over the torus.
///
/// The angle of the first nonzero term is fixed to 0 (a common phase does
/// not change the spectral radius), so only m - 1 angles are searched.
inline RadiusMaximum maximize_radius(const DifferencePart& d, double zeta, const ThetaGrid& grid = {}) {
  grid.check();
  RadiusMaximum res;
  res.theta.assign(d.M.size(), 0.0);
  const detail::RadiusObjective obj(d, zeta);
  if (obj.num_active() == 0) {
    res.T = CMatrix::Zero(d.dim(), d.dim());
    res.eig.x = CVector::Zero(d.dim());
    res.eig.yh = Eigen::RowVectorXcd::Zero(d.dim());
    return res;
  }
  const std::size_t dims = obj.num_active() - 1;

  struct Candidate {
    std::vector<double> th;
    double val;
  };
  std::vector<Candidate> cands;
  double h = 2.0 * std::numbers::pi;

  if (dims == 0) {
    cands.push_back({{}, obj.value({})});
  } else {
    int P = grid.points;
    while (P > 8 && std::pow(static_cast<double>(P), static_cast<double>(dims)) > 1e6) --P;
    h = 2.0 * std::numbers::pi / P;
    std::size_t total = 1;
    for (std::size_t i = 0; i < dims; ++i) total *= static_cast<std::size_t>(P);
    std::vector<double> vals(total);
    std::vector<double> th(dims);
    for (std::size_t idx = 0; idx < total; ++idx) {
      std::size_t r = idx;
      for (std::size_t i = 0; i < dims; ++i) {
        th[i] = h * static_cast<double>(r % P);
        r /= P;
      }
      vals[idx] = obj.value(th);
    }
    // Local maxima of the periodic grid.
    std::vector<std::size_t> stride(dims, 1);
    for (std::size_t i = 1; i < dims; ++i) stride[i] = stride[i - 1] * P;
    for (std::size_t idx = 0; idx < total; ++idx) {
      bool is_max = true;
      for (std::size_t i = 0; i < dims && is_max; ++i) {
        const std::size_t c = (idx / stride[i]) % P;
        const std::size_t up = idx - c * stride[i] + ((c + 1) % P) * stride[i];
        const std::size_t dn = idx - c * stride[i] + ((c + P - 1) % P) * stride[i];
        if (vals[up] > vals[idx] || vals[dn] > vals[idx]) is_max = false;
      }
      if (!is_max) continue;
      std::size_t r = idx;
      for (std::size_t i = 0; i < dims; ++i) {
        th[i] = h * static_cast<double>(r % P);
        r /= P;
      }
      cands.push_back({th, vals[idx]});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) { return a.val > b.val; });
    if (cands.size() > 6) cands.resize(6);
    if (dims >= 2) {
      std::mt19937_64 rng(grid.seed);
      std::uniform_real_distribution<double> U(0.0, 2.0 * std::numbers::pi);
      for (int r = 0; r < grid.restarts; ++r) {
        for (auto& a : th) a = U(rng);
        cands.push_back({th, obj.value(th)});
      }
    }
    if (grid.refine) {
      for (auto& c : cands) c.val = detail::refine_maximum(obj, c.th, h, grid);
    }
  }

  std::size_t best = 0;
  for (std::size_t i = 1; i < cands.size(); ++i) {
    if (cands[i].val > cands[best].val) best = i;
  }
  const auto& b = cands[best];
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (i == best || cands[i].val < b.val * (1.0 - 1e-9)) continue;
    const double dist = std::min(detail::torus_distance(cands[i].th, b.th, false),
                                 detail::torus_distance(cands[i].th, b.th, true));
    if (dist > 1e-3) res.unique = false;
  }

  const auto& act = obj.active();
  for (std::size_t i = 0; i < dims; ++i) res.theta[act[i + 1]] = b.th[i];
  res.T = obj.matrix(b.th);
  res.eig = dominant_eigen(res.T);
  res.value = std::abs(res.eig.mu);
  res.dzeta = obj.dzeta(b.th, res.eig);
  return res;
}

/// f(zeta) on the difference part of `dec`; 0 when there is none.
inline double f_eval(const Decomposition& dec, double zeta, const ThetaGrid& grid = {}) {
  if (dec.nu == 0) return 0.0;
  return maximize_radius(difference_part(dec), zeta, grid).value;
}

/// gamma0 = f(0); 0 for systems with nonsingular E.
inline double gamma0(const Decomposition& dec, const ThetaGrid& grid = {}) { return f_eval(dec, 0.0, grid); }

/// Unique zero of the strictly decreasing function zeta -> f(zeta) - 1.
/// Returns -inf when the difference part is absent or identically zero.
inline double robust_difference_abscissa(const DifferencePart& d, const ThetaGrid& grid = {},
                                         double tol = 1e-13) {
  if (d.M.empty() || d.trivial()) return -kInf;
  auto g = [&](double zeta) {
    const double v = maximize_radius(d, zeta, grid).value;
    return v > 0.0 ? std::log(v) : -kInf;
  };
  const double g0 = g(0.0);
  if (g0 == 0.0) return 0.0;
  if (!std::isfinite(g0)) return -kInf;

  double tau_min = kInf;
  for (std::size_t k = 0; k < d.M.size(); ++k) {
    if (!d.M[k].isZero(0.0)) tau_min = std::min(tau_min, d.delays[k]);
  }
  double lo = 0.0, hi = 0.0, glo = g0, ghi = g0;
  double step = std::max(std::abs(g0) / tau_min, 1e-3);
  for (int i = 0; i < 80; ++i) {
    if (g0 > 0.0) {
      hi = lo + step;
      ghi = g(hi);
      if (ghi == 0.0) return hi;
      if (ghi < 0.0) break;
      lo = hi;
      glo = ghi;
    } else {
      lo = hi - step;
      glo = g(lo);
      if (glo == 0.0) return lo;
      if (glo > 0.0) break;
      hi = lo;
      ghi = glo;
    }
    step *= 2.0;
  }
  if (!(glo > 0.0 && ghi < 0.0)) return g0 > 0.0 ? kInf : -kInf;

  std::uintmax_t iters = 200;
  auto stop = [tol](double a, double b) { return std::abs(b - a) <= tol * std::max(1.0, std::abs(a)); };
  const auto [a, b] = boost::math::tools::toms748_solve(g, lo, hi, glo, ghi, stop, iters);
  return 0.5 * (a + b);
}

inline double robust_difference_abscissa(const Decomposition& dec, const ThetaGrid& grid = {},
                                         double tol = 1e-13) {
  if (dec.nu == 0) return -kInf;
  return robust_difference_abscissa(difference_part(dec), grid, tol);
}

}  // namespace ddae
