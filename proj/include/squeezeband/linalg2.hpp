#pragma once

#include <cmath>
#include <complex>

// Small dense 2x2 helpers for the filter realization.

namespace squeezeband {

struct Mat2 {
  double a = 0.0, b = 0.0;  // [[a, b],
  double c = 0.0, d = 0.0;  //  [c, d]]

  double trace() const { return a + d; }
  double det() const { return a * d - b * c; }
};

struct Vec2 {
  double x = 0.0, y = 0.0;
};

inline Vec2 mul(const Mat2& m, const Vec2& v) {
  return Vec2{m.a * v.x + m.b * v.y, m.c * v.x + m.d * v.y};
}

// exp(M) for a real 2x2 matrix, via M = tau I + B with tr(B) = 0 and
// B^2 = (tau^2 - det M) I:
//   exp(M) = e^tau [ cosh(q) I + sinhc(q) B ],  q^2 = tau^2 - det M,
// with cosh/sinhc continued through q^2 < 0 as cos/sinc.
inline Mat2 expm(const Mat2& m) {
  double tau = 0.5 * m.trace();
  double q2 = tau * tau - m.det();
  double coshq, sinhc;
  if (std::abs(q2) < 1e-12) {
    // series in q2 around the defective/double-root case
    coshq = 1.0 + 0.5 * q2 + q2 * q2 / 24.0;
    sinhc = 1.0 + q2 / 6.0 + q2 * q2 / 120.0;
  } else if (q2 > 0.0) {
    double q = std::sqrt(q2);
    coshq = std::cosh(q);
    sinhc = std::sinh(q) / q;
  } else {
    double w = std::sqrt(-q2);
    coshq = std::cos(w);
    sinhc = std::sin(w) / w;
  }
  double e = std::exp(tau);
  Mat2 out;
  out.a = e * (coshq + sinhc * (m.a - tau));
  out.b = e * (sinhc * m.b);
  out.c = e * (sinhc * m.c);
  out.d = e * (coshq + sinhc * (m.d - tau));
  return out;
}

// Largest |eigenvalue| of a real 2x2 matrix.
inline double max_eigenvalue_magnitude(const Mat2& m) {
  double tau = 0.5 * m.trace();
  double q2 = tau * tau - m.det();
  if (q2 >= 0.0) {
    double q = std::sqrt(q2);
    return std::max(std::abs(tau + q), std::abs(tau - q));
  }
  return std::hypot(tau, std::sqrt(-q2));
}

// Solves (i w I - M) z = rhs for complex z (used for transfer functions).
inline void resolvent_solve(const Mat2& m, double w,
                            const std::complex<double>& r0,
                            const std::complex<double>& r1,
                            std::complex<double>& z0,
                            std::complex<double>& z1) {
  std::complex<double> iw(0.0, w);
  std::complex<double> a00 = iw - m.a, a01 = -m.b;
  std::complex<double> a10 = -m.c, a11 = iw - m.d;
  std::complex<double> det = a00 * a11 - a01 * a10;
  z0 = (r0 * a11 - a01 * r1) / det;
  z1 = (a00 * r1 - r0 * a10) / det;
}

}  // namespace squeezeband
