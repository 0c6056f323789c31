#pragma once

#include <algorithm>
#include <cmath>
#include <sstream>

#include "squeezeband/covariance.hpp"
#include "squeezeband/moments.hpp"
#include "squeezeband/ode.hpp"
#include "squeezeband/params.hpp"

// Closed-form steady states of the moment flow.
//
// Unconditional (eta = 0), pump phase pi/4, below threshold, with
// M = V_T + N_BA and D = chi_th^2 - chi^2:
//
//   V_X = (1 - chi (delta - chi) / D) M
//   V_Y = (1 + chi (delta + chi) / D) M
//   C   = chi gamma M / D
//
// whose principal variances are M / (1 +- chi/chi_th) at the antisqueezing
// angle alpha0 = (1/2) atan(gamma/delta).
//
// Conditional (eta mu > 0), written in the frame theta = pi/4 - alpha1 where
// the covariance vanishes and X is the squeezed quadrature:
//
//   V_X = [sqrt((gamma + chi sin2a1)^2 + 4 gamma^2 SNR) - gamma - chi sin2a1]
//         / (4 eta mu)                          (V_Y: sin2a1 -> -sin2a1)
//
// with the antisqueezing angle given in closed form by
//
//   cos(2 alpha1) = (delta/chi_th) sqrt( (B + 4 gamma^2 S - R) / (2 chi^2) ),
//   B = chi_th^2 + chi^2,  S = SNR,
//   R = sqrt((chi_th^2 - chi^2)^2 + 8 B gamma^2 S + 16 gamma^4 S^2).
//
// Since (B + 4 g^2 S)^2 - R^2 = 4 chi_th^2 chi^2, this is evaluated here in
// the subtraction-free form
//
//   cos(2 alpha1) = delta sqrt(2) / sqrt(B + 4 gamma^2 S + R),
//
// which stays exact in the chi -> 0 and S -> infinity limits. The angle
// satisfies the implicit relation (checked by appendix_residual)
//
//   (delta^2 tan^2(2a1) - gamma^2)(1 - (chi^2/delta^2) cos^2(2a1))
//       = 8 eta mu gamma (V_T + N_BA).
//
// The resolved-sideband fixed point has no closed form and is solved
// numerically (pseudo-time relaxation plus a damped Newton polish).

namespace squeezeband {

namespace detail {

constexpr double sqrt2 = 1.41421356237309504880;

inline void require_nonnegative_detuning(const NormalizedModel& m,
                                         const char* where) {
  if (m.delta < 0.0)
    throw validation_error(
        std::string(where) +
        ": requires delta >= 0; mirror the Y quadrature for negative detuning");
}

// Threshold policy. The unconditional state exists only strictly below
// threshold. The conditional state exists for chi <= chi_th whenever the
// record carries information (eta mu > 0): measurement-induced damping keeps
// the error dynamics stable at threshold, and the figure conventions place
// the drive exactly there.
inline void require_below_threshold_unconditional(double chi, double chi_th,
                                                  const char* where) {
  if (chi >= chi_th) {
    std::ostringstream os;
    os << where << ": unconditional variances diverge at or above threshold "
       << "(chi/gamma=" << chi << ", chi_th/gamma=" << chi_th << ")";
    throw above_threshold_error(os.str());
  }
}

inline void require_solvable_conditional(double chi, double chi_th,
                                         double eta_mu, const char* where) {
  const double slack = 1.0 + 1e-9;  // tolerate at-threshold constructions
  if (chi > chi_th * slack) {
    std::ostringstream os;
    os << where << ": drive above threshold (chi/gamma=" << chi
       << ", chi_th/gamma=" << chi_th << ")";
    throw above_threshold_error(os.str());
  }
  if (eta_mu <= 0.0 && chi >= chi_th) {
    std::ostringstream os;
    os << where << ": at/above threshold with eta*mu = 0 there is no "
       << "conditioning to stabilize the steady state";
    throw above_threshold_error(os.str());
  }
}

struct AngleTerms {
  double cos_2a = 0.0;   // cos(2 alpha1)
  double sin_2a = 1.0;   // sin(2 alpha1)
  double kappa_c = 0.0;  // chi cos(2 alpha1), units of gamma
  double kappa_s = 0.0;  // chi sin(2 alpha1), units of gamma
  double q = 0.0;        // gamma chi cos(2 alpha1) / delta, finite at delta=0
  double alpha1 = quarter_pi;
};

// Implicit-equation residual in normalized units (gamma = 1):
//   g(2a) = (delta^2 tan^2(2a) - 1)(1 - (chi^2/delta^2) cos^2(2a)) - 4 S
inline double angle_residual_norm(double two_alpha, double chi, double delta,
                                  double snr) {
  double t = std::tan(two_alpha);
  double c = std::cos(two_alpha);
  double ratio = chi / delta;
  return (delta * delta * t * t - 1.0) * (1.0 - ratio * ratio * c * c) -
         4.0 * snr;
}

inline double angle_residual_norm_derivative(double two_alpha, double chi,
                                             double delta, double snr) {
  (void)snr;
  double t = std::tan(two_alpha);
  double c = std::cos(two_alpha);
  double s = std::sin(two_alpha);
  double sec2 = 1.0 + t * t;
  double ratio2 = (chi / delta) * (chi / delta);
  double f1 = delta * delta * t * t - 1.0;
  double f2 = 1.0 - ratio2 * c * c;
  double df1 = 2.0 * delta * delta * t * sec2;
  double df2 = ratio2 * 2.0 * c * s;
  return df1 * f2 + f1 * df2;
}

// Closed-form antisqueezing angle, no threshold policy applied (the
// resolved-sideband solver uses this as an initial guess beyond the standard
// threshold).
inline AngleTerms conditional_angle_terms(const NormalizedModel& m) {
  AngleTerms a;
  double chi = m.chi, delta = m.delta;
  double s = m.snr();
  double chi_th2 = 1.0 + delta * delta;
  double b = chi_th2 + chi * chi;
  double d = chi_th2 - chi * chi;
  double r = std::sqrt(d * d + 8.0 * b * s + 16.0 * s * s);
  double w = std::sqrt(b + 4.0 * s + r);

  a.cos_2a = delta * sqrt2 / w;
  a.kappa_c = chi * delta * sqrt2 / w;
  a.q = chi * sqrt2 / w;
  a.sin_2a = std::sqrt(std::max(0.0, 1.0 - a.cos_2a * a.cos_2a));

  // One guarded Newton step on the implicit equation protects against the
  // residual cancellation in 1 - cos^2 for near-axis angles.
  if (delta > 0.0 && chi > 0.0 && s > 0.0 && a.cos_2a > 0.0 && a.sin_2a > 0.0) {
    double u = std::atan2(a.sin_2a, a.cos_2a);
    double g = angle_residual_norm(u, chi, delta, s);
    double dg = angle_residual_norm_derivative(u, chi, delta, s);
    if (std::isfinite(g) && std::isfinite(dg) && dg != 0.0) {
      double u2 = u - g / dg;
      if (u2 > 0.0 && u2 < 2.0 * quarter_pi) {
        double g2 = angle_residual_norm(u2, chi, delta, s);
        if (std::isfinite(g2) && std::abs(g2) < std::abs(g)) {
          a.cos_2a = std::cos(u2);
          a.sin_2a = std::sin(u2);
          a.kappa_c = chi * a.cos_2a;
          a.q = a.kappa_c / delta;
        }
      }
    }
  }
  a.kappa_s = chi * a.sin_2a;
  a.alpha1 = 0.5 * std::atan2(a.sin_2a, a.cos_2a);
  return a;
}

// Conditional variances in the c = 0 frame given the angle terms; valid for
// any chi as long as snr > 0 or kappa_s < 1.
struct ConditionalPair {
  double v_x = 0.0;
  double v_y = 0.0;
};

inline ConditionalPair conditional_pair(const NormalizedModel& m,
                                        const AngleTerms& a) {
  double s = m.snr();
  double big_m = m.heated_variance();
  ConditionalPair p;
  double vxa = 1.0 + a.kappa_s;
  p.v_x = 2.0 * big_m / (std::sqrt(vxa * vxa + 4.0 * s) + vxa);
  double vya = 1.0 - a.kappa_s;
  if (vya >= 0.0) {
    p.v_y = 2.0 * big_m / (std::sqrt(vya * vya + 4.0 * s) + vya);
  } else {
    // above the undriven threshold the antisqueezed variance is pinned by
    // the conditioning alone: (sqrt(vya^2 + 4S) - vya) / (4 eta mu)
    p.v_y = big_m * (std::sqrt(vya * vya + 4.0 * s) - vya) / (2.0 * s);
  }
  return p;
}

inline double bare_conditional_norm(double snr, double big_m) {
  return 2.0 * big_m / (1.0 + std::sqrt(1.0 + 4.0 * snr));
}

}  // namespace detail

// Unconditional (record discarded) steady-state covariance. The closed form
// lives at pump phase pi/4; other phases are reached by the exact frame
// rotation. Throws above_threshold_error at or above threshold.
inline flagged<CovarianceTriple> unconditional_steady_state(
    const OscillatorParams& osc, const PumpParams& pump,
    const MeasurementParams& meas) {
  NormalizedModel m = normalize(osc, pump, meas);
  detail::require_below_threshold_unconditional(m.chi, m.chi_th(),
                                                "unconditional_steady_state");
  double big_m = m.heated_variance();
  double chi = m.chi, delta = m.delta;
  // D = chi_th^2 - chi^2, factored to keep accuracy near threshold
  double d = (m.chi_th() - chi) * (m.chi_th() + chi);
  CovarianceTriple at_quarter_pi;
  at_quarter_pi.v_x = (1.0 - chi * (delta - chi) / d) * big_m;
  at_quarter_pi.v_y = (1.0 + chi * (delta + chi) / d) * big_m;
  at_quarter_pi.c = chi * big_m / d;

  flagged<CovarianceTriple> out;
  out.value = rotate(at_quarter_pi, m.theta - detail::quarter_pi);
  out.flags = m.flags;
  return out;
}

// Steady-state conditional variance with no parametric drive:
//   V_0 = (sqrt(1 + 4 SNR) - 1) / (4 eta mu / gamma),
// continuously extended to V_T + N_BA at eta mu = 0.
inline double bare_conditional_variance(const OscillatorParams& osc,
                                        const MeasurementParams& meas) {
  NormalizedModel m = normalize(osc, PumpParams{}, meas);
  return detail::bare_conditional_norm(m.snr(), m.heated_variance());
}

struct ConditionalAngle {
  double alpha1 = 0.0;      // radians from the Y axis, in [alpha0, pi/4]
  double cos_2a = 1.0;      // cos(2 alpha1)
  double sin_2a = 0.0;      // sin(2 alpha1)
  double chi_cos_2a = 0.0;  // chi cos(2 alpha1), caller units
  double chi_sin_2a = 0.0;  // chi sin(2 alpha1), caller units
  flag_list flags;
};

// Antisqueezing angle of the conditional steady state. At delta = 0 the
// detuned closed form degenerates; the angle is pi/4 exactly there (verified
// against the ODE fixed point) and the result is flagged.
inline ConditionalAngle conditional_angle(const OscillatorParams& osc,
                                          const PumpParams& pump,
                                          const MeasurementParams& meas) {
  NormalizedModel m = normalize(osc, pump, meas);
  detail::require_nonnegative_detuning(m, "conditional_angle");
  detail::require_solvable_conditional(m.chi, m.chi_th(), m.eta_mu(),
                                       "conditional_angle");
  detail::AngleTerms a = detail::conditional_angle_terms(m);
  ConditionalAngle out;
  out.alpha1 = a.alpha1;
  out.cos_2a = a.cos_2a;
  out.sin_2a = a.sin_2a;
  out.chi_cos_2a = a.kappa_c * m.gamma;
  out.chi_sin_2a = a.kappa_s * m.gamma;
  out.flags = m.flags;
  if (m.delta == 0.0 && m.chi > 0.0)
    out.flags.push_back({flag_code::resonant_drive_angle,
                         "delta = 0: angle fixed at pi/4; detuned closed form "
                         "not applicable"});
  return out;
}

struct ConditionalSteadyState {
  CovarianceTriple cov;         // (V_X, V_Y, 0) in the frame where X is squeezed
  SqueezingSolution squeezing;  // v_minus = V_X, v_plus = V_Y, angle = alpha1
  double v0 = 0.0;              // undriven conditional variance at the same SNR
  double snr = 0.0;
  double pump_theta = 0.0;      // pi/4 - alpha1: phase realizing this frame
  flag_list flags;
};

// Conditional steady-state variances. The result is expressed in the frame
// with pump phase pi/4 - alpha1, where the covariance vanishes and X is the
// maximally squeezed quadrature; rotate() maps it to any other phase.
inline ConditionalSteadyState conditional_variances(
    const OscillatorParams& osc, const PumpParams& pump,
    const MeasurementParams& meas) {
  NormalizedModel m = normalize(osc, pump, meas);
  detail::require_nonnegative_detuning(m, "conditional_variances");
  detail::require_solvable_conditional(m.chi, m.chi_th(), m.eta_mu(),
                                       "conditional_variances");
  detail::AngleTerms a = detail::conditional_angle_terms(m);
  detail::ConditionalPair p = detail::conditional_pair(m, a);

  ConditionalSteadyState out;
  out.cov = CovarianceTriple{p.v_x, p.v_y, 0.0};
  out.squeezing = SqueezingSolution{p.v_x, p.v_y, a.alpha1};
  out.v0 = detail::bare_conditional_norm(m.snr(), m.heated_variance());
  out.snr = m.snr();
  out.pump_theta = detail::quarter_pi - a.alpha1;
  out.flags = m.flags;
  if (m.delta == 0.0 && m.chi > 0.0)
    out.flags.push_back({flag_code::resonant_drive_angle,
                         "delta = 0: angle fixed at pi/4; detuned closed form "
                         "not applicable"});
  return out;
}

// LHS - RHS of the implicit antisqueezing-angle equation, in the caller's
// rate^2 units. Zero at the true alpha1; strictly monotone on (alpha0, pi/4)
// below threshold, which makes it usable as a bracketing oracle.
inline double appendix_residual(double alpha, const OscillatorParams& osc,
                                const PumpParams& pump,
                                const MeasurementParams& meas) {
  NormalizedModel m = normalize(osc, pump, meas);
  if (!(m.delta > 0.0))
    throw validation_error("appendix_residual: requires delta > 0");
  double r = detail::angle_residual_norm(2.0 * alpha, m.chi, m.delta, m.snr());
  return r * m.gamma * m.gamma;
}

// Numerically solved fixed point of the resolved-sideband variance flow at
// pump phase pi/4 (no closed form exists): pseudo-time relaxation from the
// mapped standard closed form, then a damped Newton polish to residual below
// 1e-10 (normalized units, scaled by the heated variance).
inline flagged<CovarianceTriple> rsb_steady_state(const OscillatorParams& osc,
                                                  const PumpParams& pump,
                                                  const MeasurementParams& meas) {
  NormalizedModel m = normalize(osc, pump, meas);
  detail::require_quarter_pi_theta(m, "rsb_steady_state");
  double thr = std::hypot(1.0 + 0.5 * m.mu, m.delta);
  detail::require_solvable_conditional(m.chi, thr, m.eta_mu(),
                                       "rsb_steady_state");

  // Initial guess. At eta = 1 the flow equals the standard one with mu/4, so
  // the mapped closed form is exact there and close elsewhere; above the
  // undriven threshold with eta mu = 0 fall back to the thermal point.
  CovarianceTriple guess;
  if (m.eta_mu() > 0.0 && m.delta >= 0.0) {
    NormalizedModel ms = m;
    ms.mu = 0.25 * m.mu;
    detail::AngleTerms a = detail::conditional_angle_terms(ms);
    detail::ConditionalPair p = detail::conditional_pair(ms, a);
    guess = rotate(CovarianceTriple{p.v_x, p.v_y, 0.0}, a.alpha1);
  } else {
    double v = 2.0 * m.n / (2.0 + m.mu) + 0.5;
    guess = CovarianceTriple{v, v, 0.0};
  }

  detail::RsbCoeffs k = detail::RsbCoeffs::from(m);
  auto rhs = [&](const CovarianceTriple& v) {
    return detail::rsb_variance_rhs(v, k);
  };
  auto residual = [&](const CovarianceTriple& v) {
    CovarianceRates r = rhs(v);
    return std::max({std::abs(r.d_v_x), std::abs(r.d_v_y), std::abs(r.d_c)});
  };

  double scale = std::max(1.0, m.heated_variance());
  // the absolute residual cannot beat rounding of the individual flow terms,
  // which matters for near-threshold states with huge antisqueezed variance
  auto rounding_floor = [&](const CovarianceTriple& v) {
    double ux = v.v_x - 0.5, uy = v.v_y - 0.5;
    double t = k.damp * (std::abs(ux) + std::abs(uy) + std::abs(v.c)) +
               2.0 * (std::abs(k.delta) + k.chi) *
                   (std::abs(v.c) + v.v_x + v.v_y) +
               k.heat +
               k.cond * (ux * ux + uy * uy + v.c * v.c +
                         std::abs(v.c) * (std::abs(ux) + std::abs(uy)));
    return 32.0 * 2.220446049250313e-16 * t;
  };
  auto target_at = [&](const CovarianceTriple& v) {
    return std::max(1e-10 * scale, rounding_floor(v));
  };

  auto newton = [&](CovarianceTriple v, double& res) {
    res = residual(v);
    for (int iter = 0; iter < 80 && res > target_at(v); ++iter) {
      CovarianceRates f = rhs(v);
      double ux = v.v_x - 0.5, uy = v.v_y - 0.5;
      // Jacobian of the resolved-sideband flow
      double j00 = -k.damp - 2.0 * k.cond * ux;
      double j02 = -2.0 * (k.delta - k.chi) - 2.0 * k.cond * v.c;
      double j11 = -k.damp - 2.0 * k.cond * uy;
      double j12 = 2.0 * (k.delta + k.chi) - 2.0 * k.cond * v.c;
      double j20 = k.delta + k.chi - k.cond * v.c;
      double j21 = -k.delta + k.chi - k.cond * v.c;
      double j22 = -k.damp - k.cond * (ux + uy);
      // solve J d = -F (J has zeros at (0,1) and (1,0))
      double det = j00 * (j11 * j22 - j12 * j21) + j02 * (-j11 * j20);
      if (det == 0.0 || !std::isfinite(det)) break;
      double b0 = -f.d_v_x, b1 = -f.d_v_y, b2 = -f.d_c;
      double d0 =
          (b0 * (j11 * j22 - j12 * j21) + j02 * (b1 * j21 - j11 * b2)) / det;
      double d1 =
          (j00 * (b1 * j22 - j12 * b2) + b0 * j12 * j20 - j02 * b1 * j20) / det;
      double d2 = (j00 * (j11 * b2 - b1 * j21) - b0 * j11 * j20) / det;
      double step = 1.0;
      CovarianceTriple cand;
      bool improved = false;
      for (int ls = 0; ls < 40; ++ls) {
        cand = CovarianceTriple{v.v_x + step * d0, v.v_y + step * d1,
                                v.c + step * d2};
        if (cand.v_x > 0.0 && cand.v_y > 0.0 && residual(cand) < res) {
          improved = true;
          break;
        }
        step *= 0.5;
      }
      if (!improved) break;
      v = cand;
      res = residual(v);
    }
    return v;
  };

  // The stabilizing fixed point is the attractor of the flow, so its
  // linearization must be Hurwitz; this guards Newton against landing on a
  // spurious Riccati root.
  auto is_stable_root = [&](const CovarianceTriple& v) {
    if (!is_physical(v, 1e-10 * scale * scale)) return false;
    double ux = v.v_x - 0.5, uy = v.v_y - 0.5;
    double j00 = -k.damp - 2.0 * k.cond * ux;
    double j02 = -2.0 * (k.delta - k.chi) - 2.0 * k.cond * v.c;
    double j11 = -k.damp - 2.0 * k.cond * uy;
    double j12 = 2.0 * (k.delta + k.chi) - 2.0 * k.cond * v.c;
    double j20 = k.delta + k.chi - k.cond * v.c;
    double j21 = -k.delta + k.chi - k.cond * v.c;
    double j22 = -k.damp - k.cond * (ux + uy);
    // Routh-Hurwitz for lambda^3 + a lambda^2 + b lambda + c
    double a = -(j00 + j11 + j22);
    double b = j00 * j11 + j00 * j22 + j11 * j22 - j02 * j20 - j12 * j21;
    double c = -(j00 * (j11 * j22 - j12 * j21) - j02 * j11 * j20);
    return a > 0.0 && c > 0.0 && a * b > c;
  };

  double res = 0.0;
  CovarianceTriple v = newton(guess, res);
  if (res > target_at(v) || !is_stable_root(v)) {
    // fall back: relax in pseudo-time into the basin, then polish. All flow
    // modes decay at least at ~(2 gamma + mu), so the hold window shrinks
    // accordingly for stiff (large mu) cases.
    OscillatorParams osc_n{1.0, m.n, {}};
    PumpParams pump_n{m.chi, m.delta, detail::quarter_pi};
    MeasurementParams meas_n{m.mu, m.eta};
    SteadyStateOptions sopts;
    sopts.residual_tol = 1e-6;
    sopts.hold_relaxation_times = std::min(1.0, 20.0 / k.damp);
    CovarianceTriple relaxed =
        integrate_variances_to_steady_state(guess, RhsKind::rsb, osc_n, pump_n,
                                            meas_n, sopts)
            .value;
    v = newton(relaxed, res);
  }

  if (res > target_at(v) || !is_stable_root(v)) {
    std::ostringstream os;
    os << "rsb_steady_state: solver stalled at residual " << res
       << " (target " << target_at(v) << ") for chi/gamma=" << m.chi
       << ", delta/gamma=" << m.delta << ", mu/gamma=" << m.mu
       << ", eta=" << m.eta << ", N=" << m.n;
    throw convergence_error(os.str());
  }

  flagged<CovarianceTriple> out;
  out.value = v;
  out.flags = m.flags;
  return out;
}

}  // namespace squeezeband
