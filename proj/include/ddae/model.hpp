#pragma once

#include <algorithm>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "ddae/core.hpp"

namespace ddae {

/// One term A_i x(t - tau_i) of a delay equation.
struct DelayTerm {
  Matrix matrix;
  double delay = 0.0;
};

/// E x'(t) = sum_i A_i x(t - tau_i) with tau_0 = 0 < tau_1 < ... < tau_m.
///
/// The constructor canonicalizes its input: terms are sorted by delay,
/// delays equal up to kDelayMergeTol are merged by summing their matrices,
/// delayed terms that are exactly zero are dropped, and a zero A_0 is
/// inserted when no undelayed term was given.
class DdaeSystem {
 public:
  DdaeSystem(Matrix E, std::vector<DelayTerm> terms) : E_(std::move(E)) {
    const auto n = E_.rows();
    if (n < 1 || E_.cols() != n) {
      throw DimensionError("DdaeSystem: E must be square and nonempty, got " + detail::shape(E_));
    }
    for (const auto& t : terms) {
      if (t.matrix.rows() != n || t.matrix.cols() != n) {
        throw DimensionError("DdaeSystem: term matrix is " + detail::shape(t.matrix) +
                             ", expected " + detail::shape(E_));
      }
      if (!std::isfinite(t.delay) || t.delay < 0.0) {
        throw InvalidArgument("DdaeSystem: delays must be finite and nonnegative");
      }
    }
    std::stable_sort(terms.begin(), terms.end(),
                     [](const DelayTerm& a, const DelayTerm& b) { return a.delay < b.delay; });
    terms_.push_back({Matrix::Zero(n, n), 0.0});
    for (auto& t : terms) {
      auto& last = terms_.back();
      if (t.delay - last.delay <= kDelayMergeTol) {
        last.matrix += t.matrix;
      } else {
        terms_.push_back(std::move(t));
      }
    }
    std::erase_if(terms_, [&](const DelayTerm& t) { return t.delay > 0.0 && t.matrix.isZero(0.0); });
  }

  Eigen::Index dim() const noexcept { return E_.rows(); }
  const Matrix& E() const noexcept { return E_; }
  const std::vector<DelayTerm>& terms() const noexcept { return terms_; }

  /// Number of positive delays m.
  std::size_t num_delays() const noexcept { return terms_.size() - 1; }
  double max_delay() const noexcept { return terms_.back().delay; }
  double min_positive_delay() const noexcept {
    return terms_.size() > 1 ? terms_[1].delay : 0.0;
  }

  /// Same matrices with tau_1..tau_m replaced (the result is re-canonicalized).
  DdaeSystem with_delays(std::span<const double> delays) const {
    if (delays.size() != num_delays()) {
      throw DimensionError("with_delays: expected " + std::to_string(num_delays()) + " delays");
    }
    std::vector<DelayTerm> terms = terms_;
    for (std::size_t i = 0; i < delays.size(); ++i) terms[i + 1].delay = delays[i];
    return DdaeSystem(E_, std::move(terms));
  }

  /// ||E|| and sum_i ||A_i|| in the spectral norm; used to scale residuals.
  double norm_E() const { return detail::spectral_norm(E_); }
  double coefficient_norm_sum() const {
    double s = 0.0;
    for (const auto& t : terms_) s += detail::spectral_norm(t.matrix);
    return s;
  }

 private:
  Matrix E_;
  std::vector<DelayTerm> terms_;
};

/// Matrices with their delays, as in the (A, hA) pairs of the system files.
struct TermList {
  std::vector<Matrix> matrices;
  std::vector<double> delays;

  TermList() = default;
  TermList(std::vector<Matrix> m, std::vector<double> d)
      : matrices(std::move(m)), delays(std::move(d)) {}
  TermList(Matrix m, double d) : matrices{std::move(m)}, delays{d} {}

  bool empty() const noexcept { return matrices.empty(); }
  std::size_t size() const noexcept { return matrices.size(); }
};

/// Input-output delay system
///   E z'(t) = sum A_i z(t - hA_i) + sum B1_i u(t - hB1_i)
///   y(t)    = sum C1_i z(t - hC1_i) + sum D11_i u(t - hD11_i).
/// Used for both plants and controllers. A controller with n_state = 0 is
/// a static gain and carries only D11.
struct IoSystem {
  Eigen::Index n_state = 0;
  Eigen::Index n_in = 0;
  Eigen::Index n_out = 0;
  Matrix E;
  TermList A, B1, C1, D11;
};

using PlantIo = IoSystem;
using ControllerIo = IoSystem;

namespace detail {

inline void check_terms(const TermList& t, Eigen::Index rows, Eigen::Index cols, const char* name) {
  if (t.matrices.size() != t.delays.size()) {
    throw DimensionError(std::string(name) + ": " + std::to_string(t.matrices.size()) +
                         " matrices but " + std::to_string(t.delays.size()) + " delays");
  }
  for (std::size_t i = 0; i < t.size(); ++i) {
    const auto& m = t.matrices[i];
    if (m.rows() != rows || m.cols() != cols) {
      throw DimensionError(std::string(name) + "[" + std::to_string(i) + "] is " + shape(m) +
                           ", expected " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    if (!std::isfinite(t.delays[i]) || t.delays[i] < 0.0) {
      throw InvalidArgument(std::string(name) + ": negative or non-finite delay");
    }
  }
}

}  // namespace detail

/// Checks the shape and delay invariants of an IoSystem; throws on violation.
inline void validate(const IoSystem& s) {
  if (s.n_state < 0 || s.n_in < 0 || s.n_out < 0) throw DimensionError("IoSystem: negative dimension");
  if (s.E.rows() != s.n_state || s.E.cols() != s.n_state) {
    throw DimensionError("IoSystem: E is " + detail::shape(s.E) + ", expected " +
                         std::to_string(s.n_state) + "x" + std::to_string(s.n_state));
  }
  detail::check_terms(s.A, s.n_state, s.n_state, "A");
  detail::check_terms(s.B1, s.n_state, s.n_in, "B1");
  detail::check_terms(s.C1, s.n_out, s.n_state, "C1");
  detail::check_terms(s.D11, s.n_out, s.n_in, "D11");
}

/// Builds and validates an IoSystem, inferring the dimensions from the
/// first nonempty term list that determines them. E defaults to identity.
inline IoSystem make_io_system(TermList A, TermList B, TermList C, TermList D = {},
                               std::optional<Matrix> E = std::nullopt) {
  IoSystem s;
  if (!A.empty()) s.n_state = A.matrices[0].rows();
  else if (!B.empty()) s.n_state = B.matrices[0].rows();
  else if (!C.empty()) s.n_state = C.matrices[0].cols();
  else if (E) s.n_state = E->rows();

  if (!B.empty()) s.n_in = B.matrices[0].cols();
  else if (!D.empty()) s.n_in = D.matrices[0].cols();

  if (!C.empty()) s.n_out = C.matrices[0].rows();
  else if (!D.empty()) s.n_out = D.matrices[0].rows();

  s.E = E ? std::move(*E) : Matrix::Identity(s.n_state, s.n_state);
  s.A = std::move(A);
  s.B1 = std::move(B);
  s.C1 = std::move(C);
  s.D11 = std::move(D);
  validate(s);
  return s;
}

/// Plant constructor with the argument order (A, B1, C1, D11, E).
inline PlantIo create_plant(TermList A, TermList B, TermList C, TermList D = {},
                            std::optional<Matrix> E = std::nullopt) {
  return make_io_system(std::move(A), std::move(B), std::move(C), std::move(D), std::move(E));
}

/// u = D y.
inline ControllerIo static_controller(const Matrix& D) {
  IoSystem c;
  c.n_in = D.cols();
  c.n_out = D.rows();
  c.E = Matrix(0, 0);
  c.D11 = TermList(D, 0.0);
  return c;
}

/// z_c' = Ac z_c + Bc y,  u = Cc z_c + Dc y.
inline ControllerIo dynamic_controller(const Matrix& Ac, const Matrix& Bc, const Matrix& Cc,
                                       const Matrix& Dc) {
  if (Ac.rows() == 0) return static_controller(Dc);
  return make_io_system(TermList(Ac, 0.0), TermList(Bc, 0.0), TermList(Cc, 0.0), TermList(Dc, 0.0));
}

/// Open-loop state dynamics E z' = sum A_i z(t - hA_i), i.e. the plant with u = 0.
inline DdaeSystem plant_dynamics(const PlantIo& plant) {
  validate(plant);
  if (plant.n_state == 0) throw DimensionError("plant_dynamics: plant has no state");
  std::vector<DelayTerm> terms;
  for (std::size_t i = 0; i < plant.A.size(); ++i) terms.push_back({plant.A.matrices[i], plant.A.delays[i]});
  return DdaeSystem(plant.E, std::move(terms));
}

/// Closed loop of a plant and a controller with state x = [z; z_c; u; y].
/// Inputs and outputs stay as algebraic variables; nothing is eliminated.
inline DdaeSystem interconnect(const PlantIo& plant, const ControllerIo& ctrl) {
  validate(plant);
  validate(ctrl);
  if (plant.n_in != ctrl.n_out || plant.n_out != ctrl.n_in) {
    throw DimensionError("interconnect: plant has " + std::to_string(plant.n_in) + " inputs and " +
                         std::to_string(plant.n_out) + " outputs, controller has " +
                         std::to_string(ctrl.n_in) + " inputs and " + std::to_string(ctrl.n_out) +
                         " outputs");
  }
  const Eigen::Index nz = plant.n_state, nc = ctrl.n_state, nu = plant.n_in, ny = plant.n_out;
  const Eigen::Index n = nz + nc + nu + ny;
  const Eigen::Index oz = 0, oc = nz, ou = nz + nc, oy = nz + nc + nu;
  if (n == 0) throw DimensionError("interconnect: empty closed loop");

  Matrix E = Matrix::Zero(n, n);
  E.block(oz, oz, nz, nz) = plant.E;
  E.block(oc, oc, nc, nc) = ctrl.E;

  std::vector<DelayTerm> terms;
  auto add = [&](const TermList& list, Eigen::Index row, Eigen::Index col) {
    for (std::size_t i = 0; i < list.size(); ++i) {
      Matrix m = Matrix::Zero(n, n);
      m.block(row, col, list.matrices[i].rows(), list.matrices[i].cols()) = list.matrices[i];
      terms.push_back({std::move(m), list.delays[i]});
    }
  };
  add(plant.A, oz, oz);
  add(plant.B1, oz, ou);
  add(ctrl.A, oc, oc);
  add(ctrl.B1, oc, oy);
  add(ctrl.C1, ou, oc);
  add(ctrl.D11, ou, oy);
  add(plant.C1, oy, oz);
  add(plant.D11, oy, ou);

  Matrix minus_io = Matrix::Zero(n, n);
  minus_io.block(ou, ou, nu + ny, nu + ny) = -Matrix::Identity(nu + ny, nu + ny);
  terms.push_back({std::move(minus_io), 0.0});
  return DdaeSystem(std::move(E), std::move(terms));
}

/// d/dt (z + sum G_i z(t - tau_i)) = sum H_i z(t - tau_i), rewritten with the
/// slack v = z + sum G_i z(t - tau_i) as a DDAE in x = [v; z].
inline DdaeSystem neutral_to_ddae(const TermList& G, const TermList& H) {
  Eigen::Index nz = 0;
  if (!H.empty()) nz = H.matrices[0].rows();
  else if (!G.empty()) nz = G.matrices[0].rows();
  if (nz == 0) throw DimensionError("neutral_to_ddae: no matrices given");
  detail::check_terms(G, nz, nz, "G");
  detail::check_terms(H, nz, nz, "H");
  for (double d : G.delays) {
    if (d <= kDelayMergeTol) {
      throw InvalidArgument(
          "neutral_to_ddae: G term at delay 0 is not allowed; fold it into the identity "
          "coefficient of z instead");
    }
  }
  const Eigen::Index n = 2 * nz;
  Matrix E = Matrix::Zero(n, n);
  E.topLeftCorner(nz, nz).setIdentity();

  std::vector<DelayTerm> terms;
  Matrix a0 = Matrix::Zero(n, n);
  a0.block(nz, 0, nz, nz) = -Matrix::Identity(nz, nz);
  a0.block(nz, nz, nz, nz) = Matrix::Identity(nz, nz);
  terms.push_back({std::move(a0), 0.0});
  for (std::size_t i = 0; i < H.size(); ++i) {
    Matrix m = Matrix::Zero(n, n);
    m.block(0, nz, nz, nz) = H.matrices[i];
    terms.push_back({std::move(m), H.delays[i]});
  }
  for (std::size_t i = 0; i < G.size(); ++i) {
    Matrix m = Matrix::Zero(n, n);
    m.block(nz, nz, nz, nz) = G.matrices[i];
    terms.push_back({std::move(m), G.delays[i]});
  }
  return DdaeSystem(std::move(E), std::move(terms));
}

/// Splitting of a DDAE into coupled differential and difference parts.
///
/// U and V span the left and right nullspaces of E (U^T E = 0, E V = 0),
/// U_perp and V_perp their orthogonal complements. Block matrices are
/// E11 = U_perp^T E V_perp and A_i^(jk) with j, k in {1, 2} selecting
/// (U_perp, U) on the left and (V_perp, V) on the right. M[k-1] holds
/// (U^T A_0 V)^{-1} U^T A_k V for k = 1..m.
struct Decomposition {
  Eigen::Index nu = 0;
  Matrix U, V, U_perp, V_perp;
  Matrix E11;
  std::vector<Matrix> A11, A12, A21, A22;
  std::vector<Matrix> M;
  std::vector<double> delays;  // tau_1..tau_m matching M

  bool nonsingular_E() const noexcept { return nu == 0; }
};

namespace detail {

inline Matrix orthonormal_complement(const Matrix& basis, Eigen::Index n) {
  if (basis.cols() == 0) return Matrix::Identity(n, n);
  Eigen::HouseholderQR<Matrix> qr(basis);
  Matrix q = qr.householderQ() * Matrix::Identity(n, n);
  return q.rightCols(n - basis.cols());
}

}  // namespace detail

/// Decomposition with caller-supplied orthonormal nullspace bases.
inline Decomposition decompose_with_bases(const DdaeSystem& sys, const Matrix& U, const Matrix& V) {
  const auto n = sys.dim();
  if (U.rows() != n || V.rows() != n || U.cols() != V.cols()) {
    throw DimensionError("decompose: nullspace bases have inconsistent shapes");
  }
  Decomposition d;
  d.nu = U.cols();
  if (d.nu == 0) return d;
  d.U = U;
  d.V = V;
  d.U_perp = detail::orthonormal_complement(U, n);
  d.V_perp = detail::orthonormal_complement(V, n);
  d.E11 = d.U_perp.transpose() * sys.E() * d.V_perp;
  for (const auto& t : sys.terms()) {
    d.A11.push_back(d.U_perp.transpose() * t.matrix * d.V_perp);
    d.A12.push_back(d.U_perp.transpose() * t.matrix * d.V);
    d.A21.push_back(d.U.transpose() * t.matrix * d.V_perp);
    d.A22.push_back(d.U.transpose() * t.matrix * d.V);
  }
  Eigen::JacobiSVD<Matrix> svd(d.A22[0]);
  const double smin = svd.singularValues()(d.nu - 1);
  const double scale = std::max(1.0, detail::spectral_norm(sys.terms()[0].matrix));
  if (!(smin > 1e-12 * scale)) {
    throw AssumptionViolation(
        "U^T A_0 V is singular (smallest singular value " + std::to_string(smin) + ")", smin);
  }
  Eigen::PartialPivLU<Matrix> lu(d.A22[0]);
  for (std::size_t k = 1; k < sys.terms().size(); ++k) {
    d.M.push_back(lu.solve(d.A22[k]));
    d.delays.push_back(sys.terms()[k].delay);
  }
  return d;
}

/// Nullspace bases from the SVD of E; singular values at or below
/// rank_tol * sigma_max count as zero. nu == 0 means E is nonsingular and
/// there is no difference part.
inline Decomposition decompose(const DdaeSystem& sys, double rank_tol = 1e-10) {
  const auto n = sys.dim();
  Eigen::JacobiSVD<Matrix> svd(sys.E(), Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vector& s = svd.singularValues();
  const double smax = s(0);
  Eigen::Index rank = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    if (s(i) > rank_tol * smax) ++rank;
  }
  const Eigen::Index nu = n - rank;
  if (nu == 0) return Decomposition{};
  return decompose_with_bases(sys, svd.matrixU().rightCols(nu), svd.matrixV().rightCols(nu));
}

/// Systems whose matrices depend affinely on parameters p:
///   A_i(p) = base_i + sum_j p_j coeff_{i,j},  E and delays fixed.
class AffineFamily {
 public:
  AffineFamily(Matrix E, std::vector<double> delays, std::vector<Matrix> base,
               std::vector<std::vector<Matrix>> coeffs)
      : E_(std::move(E)), delays_(std::move(delays)), base_(std::move(base)), coeffs_(std::move(coeffs)) {
    if (delays_.empty() || delays_[0] != 0.0) throw InvalidArgument("AffineFamily: first slot must have delay 0");
    if (base_.size() != delays_.size() || coeffs_.size() != delays_.size()) {
      throw DimensionError("AffineFamily: slot count mismatch");
    }
    n_p_ = coeffs_[0].size();
    for (std::size_t i = 0; i < delays_.size(); ++i) {
      if (i > 0 && !(delays_[i] > delays_[i - 1])) throw InvalidArgument("AffineFamily: delays must increase");
      if (coeffs_[i].size() != static_cast<std::size_t>(n_p_)) throw DimensionError("AffineFamily: parameter count mismatch");
      if (base_[i].rows() != E_.rows() || base_[i].cols() != E_.cols()) throw DimensionError("AffineFamily: base shape");
      for (const auto& c : coeffs_[i]) {
        if (c.rows() != E_.rows() || c.cols() != E_.cols()) throw DimensionError("AffineFamily: coefficient shape");
      }
    }
  }

  Eigen::Index num_params() const noexcept { return n_p_; }
  Eigen::Index dim() const noexcept { return E_.rows(); }
  std::size_t num_slots() const noexcept { return delays_.size(); }
  const Matrix& E() const noexcept { return E_; }
  const std::vector<double>& delays() const noexcept { return delays_; }
  const Matrix& base(std::size_t slot) const { return base_[slot]; }
  const Matrix& coefficient(std::size_t slot, Eigen::Index j) const { return coeffs_[slot][j]; }

  Matrix matrix(std::size_t slot, const Vector& p) const {
    check(p);
    Matrix m = base_[slot];
    for (Eigen::Index j = 0; j < n_p_; ++j) {
      if (p(j) != 0.0) m += p(j) * coeffs_[slot][j];
    }
    return m;
  }

  DdaeSystem assemble(const Vector& p) const {
    std::vector<DelayTerm> terms;
    for (std::size_t i = 0; i < delays_.size(); ++i) terms.push_back({matrix(i, p), delays_[i]});
    return DdaeSystem(E_, std::move(terms));
  }

 private:
  void check(const Vector& p) const {
    if (p.size() != n_p_) {
      throw DimensionError("AffineFamily: expected " + std::to_string(n_p_) + " parameters, got " +
                           std::to_string(p.size()));
    }
  }

  Matrix E_;
  std::vector<double> delays_;
  std::vector<Matrix> base_;
  std::vector<std::vector<Matrix>> coeffs_;
  Eigen::Index n_p_ = 0;
};

/// Maps a parameter vector onto the controller gain K = [Ac Bc; Cc Dc]
/// (column-major order over the free entries of K).
struct ControllerLayout {
  Eigen::Index n_c = 0, n_u = 0, n_y = 0;
  Matrix fixed_mask;    // nonzero entries of K are not parameters
  Matrix fixed_values;  // values used for the fixed entries
  std::vector<Eigen::Index> free_index;

  Eigen::Index rows() const noexcept { return n_c + n_u; }
  Eigen::Index cols() const noexcept { return n_c + n_y; }
  Eigen::Index num_params() const noexcept { return static_cast<Eigen::Index>(free_index.size()); }

  Matrix gain(const Vector& p) const {
    if (p.size() != num_params()) throw DimensionError("ControllerLayout: wrong parameter count");
    Matrix K = fixed_values;
    for (Eigen::Index j = 0; j < num_params(); ++j) K.data()[free_index[j]] = p(j);
    return K;
  }

  ControllerIo controller(const Vector& p) const {
    const Matrix K = gain(p);
    return dynamic_controller(K.topLeftCorner(n_c, n_c), K.topRightCorner(n_c, n_y),
                              K.bottomLeftCorner(n_u, n_c), K.bottomRightCorner(n_u, n_y));
  }

  /// Inverse of controller(): reads the free entries back from a delay-free
  /// controller with identity E.
  Vector parameters(const ControllerIo& c) const {
    validate(c);
    if (c.n_state != n_c || c.n_in != n_y || c.n_out != n_u) {
      throw DimensionError("ControllerLayout: controller does not match the layout");
    }
    Matrix K = Matrix::Zero(rows(), cols());
    auto put = [](Matrix& dst, const TermList& list, Eigen::Index r, Eigen::Index col, Eigen::Index nr,
                  Eigen::Index nc) {
      for (std::size_t i = 0; i < list.size(); ++i) {
        if (list.delays[i] > kDelayMergeTol) throw InvalidArgument("ControllerLayout: delayed controller term");
        dst.block(r, col, nr, nc) += list.matrices[i];
      }
    };
    put(K, c.A, 0, 0, n_c, n_c);
    put(K, c.B1, 0, n_c, n_c, n_y);
    put(K, c.C1, n_c, 0, n_u, n_c);
    put(K, c.D11, n_c, n_c, n_u, n_y);
    Vector p(num_params());
    for (Eigen::Index j = 0; j < num_params(); ++j) p(j) = K.data()[free_index[j]];
    return p;
  }
};

struct ControllerFamily {
  AffineFamily family;
  ControllerLayout layout;
};

/// Closed loops of `plant` with all controllers of order n_c, as an affine
/// family in the free entries of [Ac Bc; Cc Dc].
inline ControllerFamily make_controller_family(const PlantIo& plant, Eigen::Index n_c,
                                               std::optional<Matrix> fixed_mask = std::nullopt,
                                               std::optional<Matrix> fixed_values = std::nullopt) {
  if (n_c < 0) throw InvalidArgument("make_controller_family: negative controller order");
  validate(plant);
  ControllerLayout L;
  L.n_c = n_c;
  L.n_u = plant.n_in;
  L.n_y = plant.n_out;
  L.fixed_mask = fixed_mask ? *fixed_mask : Matrix::Zero(L.rows(), L.cols());
  L.fixed_values = fixed_values ? *fixed_values : Matrix::Zero(L.rows(), L.cols());
  if (L.fixed_mask.rows() != L.rows() || L.fixed_mask.cols() != L.cols() ||
      L.fixed_values.rows() != L.rows() || L.fixed_values.cols() != L.cols()) {
    throw DimensionError("make_controller_family: mask must be " + std::to_string(L.rows()) + "x" +
                         std::to_string(L.cols()));
  }
  for (Eigen::Index k = 0; k < L.fixed_mask.size(); ++k) {
    if (L.fixed_mask.data()[k] == 0.0) {
      L.free_index.push_back(k);
      L.fixed_values.data()[k] = 0.0;
    }
  }

  const DdaeSystem base = interconnect(plant, L.controller(Vector::Zero(L.num_params())));
  const Eigen::Index n = base.dim();
  std::vector<double> delays;
  std::vector<Matrix> bases;
  for (const auto& t : base.terms()) {
    delays.push_back(t.delay);
    bases.push_back(t.matrix);
  }
  const Eigen::Index oc = plant.n_state, ou = plant.n_state + n_c, oy = ou + L.n_u;
  std::vector<std::vector<Matrix>> coeffs(delays.size());
  for (Eigen::Index j = 0; j < L.num_params(); ++j) {
    const Eigen::Index r = L.free_index[j] % L.rows();
    const Eigen::Index c = L.free_index[j] / L.rows();
    const Eigen::Index row = r < n_c ? oc + r : ou + (r - n_c);
    const Eigen::Index col = c < n_c ? oc + c : oy + (c - n_c);
    for (std::size_t s = 0; s < delays.size(); ++s) coeffs[s].push_back(Matrix::Zero(n, n));
    coeffs[0].back()(row, col) = 1.0;
  }
  return {AffineFamily(base.E(), std::move(delays), std::move(bases), std::move(coeffs)), std::move(L)};
}

}  // namespace ddae
