#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include <lapacke.h>

#include "ddae/asymptotic.hpp"
#include "ddae/model.hpp"

namespace ddae {

/// Options for characteristic root computation.
struct RootOptions {
  /// Only roots with Re >= minimal_real_part are reported. -inf selects the
  /// default region (whatever the default discretization resolves).
  double minimal_real_part = -kInf;
  int N = 0;        ///< discretization points; 0 selects the heuristic
  int N_max = 400;  ///< cap on the heuristic
  double newton_tol = 1e-10;
  int newton_max_iter = 30;
  double dedup_tol = 1e-6;
  Eigen::Index max_pencil_size = 3000;
  bool cd_warning = true;  ///< compute C_D and flag C_D >= c
  /// Stop Newton corrections once the raw roots fall this far below the
  /// rightmost corrected root (inf corrects everything). Used by the
  /// optimizers, which only need the rightmost roots.
  double rightmost_window = kInf;
  ThetaGrid grid;

  void check() const {
    if (N_max < 5) throw InvalidArgument("RootOptions: N_max must be at least 5");
    if (N != 0 && N < 2) throw InvalidArgument("RootOptions: N must be at least 2");
    if (!(rightmost_window > 0.0)) throw InvalidArgument("RootOptions: rightmost_window must be positive");
    if (!(newton_tol > 0.0) || !(dedup_tol > 0.0)) throw InvalidArgument("RootOptions: tolerances must be positive");
    if (newton_max_iter < 1) throw InvalidArgument("RootOptions: newton_max_iter must be positive");
  }
};

/// Characteristic matrix Delta(lambda) = lambda E - A_0 - sum_i A_i e^{-lambda tau_i}
/// and its derivative E + sum_i tau_i A_i e^{-lambda tau_i}.
class CharacteristicMatrix {
 public:
  explicit CharacteristicMatrix(const DdaeSystem& sys)
      : sys_(&sys), norm_E_(sys.norm_E()), norm_A_(sys.coefficient_norm_sum()) {}

  CMatrix operator()(Complex lambda) const {
    CMatrix D = lambda * sys_->E().cast<Complex>();
    for (const auto& t : sys_->terms()) D -= std::exp(-lambda * t.delay) * t.matrix.cast<Complex>();
    return D;
  }

  CMatrix derivative(Complex lambda) const {
    CMatrix D = sys_->E().cast<Complex>();
    for (const auto& t : sys_->terms()) {
      if (t.delay > 0.0) D += (t.delay * std::exp(-lambda * t.delay)) * t.matrix.cast<Complex>();
    }
    return D;
  }

  /// Scale used by the residual contract: max(1, |lambda| ||E|| + sum ||A_i||).
  double scale(Complex lambda) const { return std::max(1.0, std::abs(lambda) * norm_E_ + norm_A_); }

 private:
  const DdaeSystem* sys_;
  double norm_E_;
  double norm_A_;
};

inline CMatrix char_matrix(const DdaeSystem& sys, Complex lambda) { return CharacteristicMatrix(sys)(lambda); }
inline CMatrix char_matrix_derivative(const DdaeSystem& sys, Complex lambda) {
  return CharacteristicMatrix(sys).derivative(lambda);
}

inline double smallest_singular_value(const CMatrix& M) {
  Eigen::JacobiSVD<CMatrix> svd(M);
  return svd.singularValues()(svd.singularValues().size() - 1);
}

/// Generalized eigenvalue problem lambda B v = A v.
struct Pencil {
  Matrix A;
  Matrix B;
  int N = 0;
  std::string warning;  ///< set when N was lowered to fit the size budget
};

/// Heuristic number of discretization points for a system.
inline int default_points(const DdaeSystem& sys, const RootOptions& opts) {
  if (sys.num_delays() == 0) return 0;
  const double tau_m = sys.max_delay();
  const double omega_cap = 20.0 / sys.min_positive_delay();
  const int n = static_cast<int>(std::ceil(4.0 + 2.0 * tau_m * omega_cap / std::numbers::pi));
  return std::min(opts.N_max, std::max(15, n));
}

namespace detail {

/// Chebyshev extreme points x_k = cos(k pi / N) and the differentiation matrix.
inline void chebyshev(int N, Vector& x, Matrix& D) {
  x.resize(N + 1);
  for (int k = 0; k <= N; ++k) x(k) = std::cos(std::numbers::pi * k / N);
  D.setZero(N + 1, N + 1);
  auto c = [N](int k) { return (k == 0 || k == N) ? 2.0 : 1.0; };
  for (int i = 0; i <= N; ++i) {
    for (int j = 0; j <= N; ++j) {
      if (i == j) continue;
      const double sign = ((i + j) % 2 == 0) ? 1.0 : -1.0;
      D(i, j) = c(i) / c(j) * sign / (x(i) - x(j));
    }
  }
  for (int i = 0; i <= N; ++i) D(i, i) = -D.row(i).sum();
}

/// Barycentric interpolation weights of the Chebyshev extreme points at t.
inline Vector interpolation_row(const Vector& x, double t) {
  const auto n = x.size();
  Vector l = Vector::Zero(n);
  for (Eigen::Index k = 0; k < n; ++k) {
    if (std::abs(t - x(k)) < 1e-14) {
      l(k) = 1.0;
      return l;
    }
  }
  double denom = 0.0;
  for (Eigen::Index k = 0; k < n; ++k) {
    double w = (k % 2 == 0) ? 1.0 : -1.0;
    if (k == 0 || k == n - 1) w *= 0.5;
    l(k) = w / (t - x(k));
    denom += l(k);
  }
  return l / denom;
}

/// Finite eigenvalues of lambda B v = A v by shift-and-invert on a real shift.
inline std::vector<Complex> pencil_eigenvalues(const Matrix& A, const Matrix& B) {
  const auto n = A.rows();
  static constexpr double shifts[] = {0.1234, -0.4321, 0.7071, -1.618, 2.718};
  for (double sigma : shifts) {
    Eigen::PartialPivLU<Matrix> lu(A - sigma * B);
    if (!(lu.rcond() > 1e-14)) continue;
    Matrix M = lu.solve(B);
    Vector wr(n), wi(n);
    const lapack_int info = LAPACKE_dgeev(LAPACK_COL_MAJOR, 'N', 'N', static_cast<lapack_int>(n), M.data(),
                                          static_cast<lapack_int>(n), wr.data(), wi.data(), nullptr, 1, nullptr, 1);
    if (info != 0) continue;
    std::vector<Complex> out;
    for (Eigen::Index i = 0; i < n; ++i) {
      const Complex mu(wr(i), wi(i));
      if (std::abs(mu) == 0.0) continue;
      const Complex lambda = sigma + 1.0 / mu;
      if (!std::isfinite(lambda.real()) || !std::isfinite(lambda.imag()) || std::abs(lambda) > 1e8) continue;
      out.push_back(lambda);
    }
    return out;
  }
  throw Error("pencil_eigenvalues: no usable shift found");
}

}  // namespace detail

/// Spectral collocation of the DDAE on Chebyshev extreme points mapped to
/// [-tau_m, 0]. Unknowns are the values x(theta_k); the node theta_0 = 0
/// carries the DDAE relation with delayed values interpolated at -tau_i,
/// the other nodes carry lambda x_k = (D x)_k.
inline Pencil discretize(const DdaeSystem& sys, int N, Eigen::Index max_size = 3000) {
  if (N < 2) throw InvalidArgument("discretize: N must be at least 2");
  const auto n = sys.dim();
  Pencil P;
  if (sys.num_delays() == 0) {
    P.A = sys.terms()[0].matrix;
    P.B = sys.E();
    return P;
  }
  if (n * (N + 1) > max_size) {
    const int lowered = static_cast<int>(max_size / n) - 1;
    if (lowered < 2) throw InvalidArgument("discretize: size budget too small for this system");
    P.warning = "discretization lowered from N=" + std::to_string(N) + " to N=" + std::to_string(lowered) +
                " to respect the eigenvalue problem size budget";
    N = lowered;
  }
  P.N = N;
  const double tau_m = sys.max_delay();
  Vector x;
  Matrix Dx;
  detail::chebyshev(N, x, Dx);
  const Matrix D = (2.0 / tau_m) * Dx;  // d/dtheta with theta = tau_m (x - 1) / 2

  const auto dim = n * (N + 1);
  P.A.setZero(dim, dim);
  P.B.setZero(dim, dim);
  P.B.topLeftCorner(n, n) = sys.E();
  P.A.topLeftCorner(n, n) = sys.terms()[0].matrix;
  for (std::size_t i = 1; i < sys.terms().size(); ++i) {
    const auto& t = sys.terms()[i];
    const Vector l = detail::interpolation_row(x, 1.0 - 2.0 * t.delay / tau_m);
    for (int k = 0; k <= N; ++k) {
      if (l(k) != 0.0) P.A.block(0, k * n, n, n) += l(k) * t.matrix;
    }
  }
  for (int r = 1; r <= N; ++r) {
    P.B.block(r * n, r * n, n, n).setIdentity();
    for (int k = 0; k <= N; ++k) P.A.block(r * n, k * n, n, n).diagonal().setConstant(D(r, k));
  }
  return P;
}

struct NewtonResult {
  Complex root;
  double residual = kInf;  ///< smallest singular value of Delta(root)
  int iterations = 0;
  bool converged = false;
};

/// Newton's method on the bordered system Delta(lambda) v = 0, c^H v = 1,
/// with c the right singular vector of Delta(lambda0) for its smallest
/// singular value.
inline NewtonResult newton_correct(const CharacteristicMatrix& delta, Complex lambda0, const RootOptions& opts) {
  NewtonResult res;
  res.root = lambda0;
  if (!std::isfinite(lambda0.real()) || !std::isfinite(lambda0.imag())) return res;
  CMatrix D0 = delta(lambda0);
  const auto n = D0.rows();
  Eigen::JacobiSVD<CMatrix> svd0(D0, Eigen::ComputeFullV);
  const CVector c = svd0.matrixV().col(n - 1);
  CVector v = c;
  Complex lambda = lambda0;
  CMatrix J(n + 1, n + 1);
  CVector F(n + 1);
  for (int it = 1; it <= opts.newton_max_iter; ++it) {
    res.iterations = it;
    const CMatrix D = delta(lambda);
    J.topLeftCorner(n, n) = D;
    J.topRightCorner(n, 1) = delta.derivative(lambda) * v;
    J.bottomLeftCorner(1, n) = c.adjoint();
    J(n, n) = 0.0;
    F.head(n) = D * v;
    F(n) = (c.adjoint() * v)(0) - 1.0;
    Eigen::PartialPivLU<CMatrix> lu(J);
    if (!(lu.rcond() > 1e-15)) break;
    const CVector step = lu.solve(-F);
    if (!step.allFinite()) break;
    v += step.head(n);
    lambda += step(n);
    if (!std::isfinite(lambda.real()) || !std::isfinite(lambda.imag())) return res;
    if (std::abs(step(n)) <= 1e-14 * std::max(1.0, std::abs(lambda))) break;
  }
  res.root = lambda;
  res.residual = smallest_singular_value(delta(lambda));
  res.converged = res.residual <= opts.newton_tol * delta.scale(lambda);
  return res;
}

inline NewtonResult newton_correct(const DdaeSystem& sys, Complex lambda0, const RootOptions& opts = {}) {
  return newton_correct(CharacteristicMatrix(sys), lambda0, opts);
}

/// Characteristic roots, sorted by decreasing real part (then imaginary part).
struct RootSet {
  std::vector<Complex> corrected;  ///< Newton-corrected roots
  std::vector<double> residuals;   ///< smallest singular value of Delta per corrected root
  std::vector<Complex> raw;        ///< discretization approximations
  int N_used = 0;
  double C_D = -kInf;
  bool cd_ge_c = false;  ///< the "C_D >= c" situation
  std::vector<std::string> warnings;

  double abscissa() const { return corrected.empty() ? -kInf : corrected.front().real(); }
};

namespace detail {

inline bool root_order(Complex a, Complex b) {
  if (a.real() != b.real()) return a.real() > b.real();
  return a.imag() > b.imag();
}

inline void dedup(std::vector<Complex>& roots, std::vector<double>& res, double tol) {
  std::vector<std::size_t> idx(roots.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return root_order(roots[a], roots[b]); });
  std::vector<Complex> r;
  std::vector<double> e;
  for (std::size_t i : idx) {
    bool dup = false;
    for (std::size_t j = 0; j < r.size(); ++j) {
      if (std::abs(r[j] - roots[i]) <= tol) {
        dup = true;
        if (res[i] < e[j]) {
          r[j] = roots[i];
          e[j] = res[i];
        }
        break;
      }
    }
    if (!dup) {
      r.push_back(roots[i]);
      e.push_back(res[i]);
    }
  }
  idx.resize(r.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return root_order(r[a], r[b]); });
  roots.clear();
  res.clear();
  for (std::size_t i : idx) {
    roots.push_back(r[i]);
    res.push_back(e[i]);
  }
}

inline RootSet roots_at(const DdaeSystem& sys, const CharacteristicMatrix& delta, int N, const RootOptions& opts) {
  RootSet out;
  const Pencil P = discretize(sys, std::max(N, 2), opts.max_pencil_size);
  if (!P.warning.empty()) out.warnings.push_back(P.warning);
  out.N_used = P.N;
  out.raw = pencil_eigenvalues(P.A, P.B);

  const double floor = opts.minimal_real_part;
  const double margin = std::isfinite(floor) ? 0.25 * std::max(1.0, std::abs(floor)) : 0.0;
  std::vector<Complex> candidates;
  for (Complex z : out.raw) {
    if (z.imag() < 0.0) continue;  // conjugates are added afterwards
    if (std::isfinite(floor) && z.real() < floor - margin) continue;
    candidates.push_back(z);
  }
  std::sort(candidates.begin(), candidates.end(), root_order);
  std::vector<Complex> roots;
  std::vector<double> res;
  double rightmost = -kInf;
  for (Complex z : candidates) {
    if (z.real() < rightmost - opts.rightmost_window) break;
    const NewtonResult nr = newton_correct(delta, z, opts);
    if (!nr.converged) continue;
    Complex r = nr.root;
    if (r.imag() < 0.0) r = std::conj(r);
    if (std::isfinite(floor) && r.real() < floor) continue;
    rightmost = std::max(rightmost, r.real());
    roots.push_back(r);
    res.push_back(nr.residual);
  }
  dedup(roots, res, opts.dedup_tol);
  const std::size_t half = roots.size();
  for (std::size_t i = 0; i < half; ++i) {
    if (roots[i].imag() > 0.5 * opts.dedup_tol) {
      roots.push_back(std::conj(roots[i]));
      res.push_back(res[i]);
    }
  }
  dedup(roots, res, opts.dedup_tol);
  out.corrected = std::move(roots);
  out.residuals = std::move(res);
  return out;
}

inline bool same_root_set(const std::vector<Complex>& a, const std::vector<Complex>& b, double tol) {
  if (a.size() != b.size()) return false;
  for (Complex z : a) {
    const bool found = std::any_of(b.begin(), b.end(), [&](Complex w) { return std::abs(z - w) <= tol; });
    if (!found) return false;
  }
  return true;
}

}  // namespace detail

/// Characteristic roots by spectral discretization plus Newton correction.
///
/// With an explicit minimal_real_part and no explicit N, N is doubled from
/// the heuristic value until the corrected roots in the half plane stop
/// changing (or the size budget is reached).
inline RootSet compute_roots(const DdaeSystem& sys, const RootOptions& opts = {}) {
  opts.check();
  const Decomposition dec = decompose(sys);
  const CharacteristicMatrix delta(sys);

  RootSet out;
  if (sys.num_delays() == 0) {
    out = detail::roots_at(sys, delta, 2, opts);
    out.N_used = 0;
  } else if (opts.N > 0) {
    out = detail::roots_at(sys, delta, opts.N, opts);
  } else {
    const int N0 = default_points(sys, opts);
    out = detail::roots_at(sys, delta, N0, opts);
    if (std::isfinite(opts.minimal_real_part)) {
      const int N_limit = static_cast<int>(opts.max_pencil_size / sys.dim()) - 1;
      int N = N0;
      while (2 * N <= N_limit) {
        N *= 2;
        RootSet next = detail::roots_at(sys, delta, N, opts);
        const bool stable = detail::same_root_set(out.corrected, next.corrected, 1e3 * opts.dedup_tol);
        out = std::move(next);
        if (stable) break;
      }
    }
  }
  if (opts.cd_warning && dec.nu > 0) {
    out.C_D = robust_difference_abscissa(dec, opts.grid);
    out.cd_ge_c = out.C_D >= out.abscissa();
    if (out.cd_ge_c) out.warnings.push_back("case C_D>=c");
  }
  return out;
}

/// Spectral abscissa c (max real part of the characteristic roots); -inf
/// when the finite spectrum is empty.
inline double spectral_abscissa(const DdaeSystem& sys, RootOptions opts = {}) {
  opts.cd_warning = false;
  return compute_roots(sys, opts).abscissa();
}

}  // namespace ddae
