#pragma once

#include "ddae/asymptotic.hpp"
#include "ddae/spectrum.hpp"

namespace ddae {

/// Exponential stability under infinitesimal delay perturbations.
struct StrongStabilityReport {
  double c = -kInf;    ///< spectral abscissa
  double C_D = -kInf;  ///< robust spectral abscissa of the difference part
  double C = -kInf;    ///< robust spectral abscissa, max(c, C_D)
  double gamma0 = 0.0;
  bool strongly_stable = false;
  int Xi = -1;  ///< sign of C_D
};

/// C = max(c, C_D). Systems with nonsingular E have no difference part and C = c.
inline double robust_spectral_abscissa(const DdaeSystem& sys, const RootOptions& opts = {}) {
  const Decomposition dec = decompose(sys);
  const double c = spectral_abscissa(sys, opts);
  const double cd = robust_difference_abscissa(dec, opts.grid);
  return std::max(c, cd);
}

inline StrongStabilityReport strong_stability(const DdaeSystem& sys, const RootOptions& opts = {}) {
  const Decomposition dec = decompose(sys);
  StrongStabilityReport r;
  r.c = spectral_abscissa(sys, opts);
  if (dec.nu > 0) {
    const DifferencePart d = difference_part(dec);
    r.gamma0 = maximize_radius(d, 0.0, opts.grid).value;
    r.C_D = robust_difference_abscissa(d, opts.grid);
  }
  r.C = std::max(r.c, r.C_D);
  // The sign of C_D follows gamma0 - 1; both come from the same f.
  r.Xi = r.gamma0 < 1.0 ? -1 : (r.gamma0 > 1.0 ? 1 : 0);
  r.strongly_stable = r.c < 0.0 && r.gamma0 < 1.0;
  return r;
}

}  // namespace ddae
