#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "squeezeband/common.hpp"
#include "squeezeband/params.hpp"

// Second-moment state of the Gaussian quadrature distribution and its
// principal-axis decomposition.

namespace squeezeband {

// (V_X, V_Y, C) with C = <XY + YX>/2 - <X><Y>. Dimensionless; ground state
// has V_X = V_Y = 1/2, C = 0.
struct CovarianceTriple {
  double v_x = 0.5;
  double v_y = 0.5;
  double c = 0.0;
};

inline double determinant(const CovarianceTriple& cov) {
  return cov.v_x * cov.v_y - cov.c * cov.c;
}

inline bool is_physical(const CovarianceTriple& cov, double det_slack = 0.0) {
  return cov.v_x > 0.0 && cov.v_y > 0.0 && std::isfinite(cov.c) &&
         determinant(cov) >= -det_slack;
}

inline void validate(const CovarianceTriple& cov) {
  if (!is_physical(cov, 1e-12 * std::max(1.0, cov.v_x * cov.v_y)))
    throw validation_error("covariance triple is not positive semidefinite");
}

// Variance of the quadrature X cos(alpha) - Y sin(alpha); alpha = 0 gives V_X.
inline double variance_at_angle(const CovarianceTriple& cov, double alpha) {
  double ca = std::cos(alpha), sa = std::sin(alpha);
  return cov.v_x * ca * ca + cov.v_y * sa * sa - 2.0 * cov.c * ca * sa;
}

// Covariance of the frame rotated by beta: X' = X cos(beta) + Y sin(beta),
// Y' = -X sin(beta) + Y cos(beta). A pump-phase shift theta -> theta + beta
// maps the steady state through exactly this rotation.
inline CovarianceTriple rotate(const CovarianceTriple& cov, double beta) {
  double cb = std::cos(beta), sb = std::sin(beta);
  CovarianceTriple out;
  out.v_x = cb * cb * cov.v_x + sb * sb * cov.v_y + 2.0 * cb * sb * cov.c;
  out.v_y = sb * sb * cov.v_x + cb * cb * cov.v_y - 2.0 * cb * sb * cov.c;
  out.c = (cov.v_y - cov.v_x) * cb * sb + (cb * cb - sb * sb) * cov.c;
  return out;
}

// Principal variances and the antisqueezing angle: the orientation of the
// maximal-variance axis measured from the Y axis. On the branch delta >= 0,
// chi >= 0 (C >= 0, V_Y >= V_X) the angle lies in [0, pi/4] and coincides
// with (1/2) atan(2C / (V_Y - V_X)); atan2 extends it everywhere else.
struct SqueezingSolution {
  double v_minus = 0.5;
  double v_plus = 0.5;
  double angle = 0.0;
};

inline SqueezingSolution principal_axes(const CovarianceTriple& cov) {
  validate(cov);
  SqueezingSolution out;
  double mean = 0.5 * (cov.v_x + cov.v_y);
  double radius = std::hypot(0.5 * (cov.v_y - cov.v_x), cov.c);
  out.v_minus = mean - radius;
  out.v_plus = mean + radius;
  if (radius <= 8.0 * std::numeric_limits<double>::epsilon() * mean) {
    out.angle = 0.0;  // isotropic: any angle works, pick 0 deterministically
    out.v_minus = out.v_plus = mean;
  } else {
    out.angle = 0.5 * std::atan2(2.0 * cov.c, cov.v_y - cov.v_x);
  }
  return out;
}

// Nearest (Frobenius) positive-semidefinite triple; used to absorb bounded
// floating-point drift in long trajectory integrations.
inline CovarianceTriple project_psd(const CovarianceTriple& cov,
                                    double floor = 0.0) {
  double mean = 0.5 * (cov.v_x + cov.v_y);
  double half_diff = 0.5 * (cov.v_x - cov.v_y);
  double radius = std::hypot(half_diff, cov.c);
  double lo = mean - radius;
  double hi = mean + radius;
  if (lo >= floor) return cov;
  lo = std::max(lo, floor);
  hi = std::max(hi, floor);
  if (radius == 0.0) return CovarianceTriple{hi, hi, 0.0};
  // eigenvectors are unchanged; rebuild with clamped eigenvalues
  double cos_t = half_diff / radius;
  double sin_t = cov.c / radius;
  double m = 0.5 * (hi + lo), r = 0.5 * (hi - lo);
  CovarianceTriple out;
  out.v_x = m + r * cos_t;
  out.v_y = m - r * cos_t;
  out.c = r * sin_t;
  return out;
}

}  // namespace squeezeband
