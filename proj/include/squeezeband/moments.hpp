#pragma once

#include <cmath>

#include "squeezeband/covariance.hpp"
#include "squeezeband/params.hpp"

// Time-domain right-hand sides for the Gaussian moment description:
//
//   d<X> = [-(gamma + chi cos2theta)<X> - (delta - chi sin2theta)<Y>] dt
//          + sqrt(4 eta mu) (V_X dW1 + C dW2)
//   d<Y> = [-(gamma - chi cos2theta)<Y> + (delta + chi sin2theta)<X>] dt
//          + sqrt(4 eta mu) (C dW1 + V_Y dW2)
//
//   dV_X/dt = -2(gamma + chi cos2theta) V_X - 2(delta - chi sin2theta) C
//             + gamma(2N+1) + mu - 4 eta mu (V_X^2 + C^2)
//   dV_Y/dt = -2(gamma - chi cos2theta) V_Y + 2(delta + chi sin2theta) C
//             + gamma(2N+1) + mu - 4 eta mu (V_Y^2 + C^2)
//   dC/dt   = -2 gamma C - delta (V_Y - V_X) + chi sin2theta (V_X + V_Y)
//             - 4 eta mu C (V_X + V_Y)
//
// plus the resolved-sideband variant (pump phase pi/4, zero-temperature
// optical bath replacing the back-action terms):
//
//   dV_X/dt = -(2 gamma + mu)(V_X - 1/2) - 2(delta - chi) C + 2 N gamma
//             - eta mu [(V_X - 1/2)^2 + C^2]
//   dV_Y/dt = -(2 gamma + mu)(V_Y - 1/2) + 2(delta + chi) C + 2 N gamma
//             - eta mu [(V_Y - 1/2)^2 + C^2]
//   dC/dt   = -(2 gamma + mu) C - delta (V_Y - V_X) + chi (V_X + V_Y)
//             - eta mu C (V_X + V_Y - 1)
//
// Setting third and higher cumulants to zero closes the hierarchy, so these
// are exact for Gaussian states.

namespace squeezeband {

struct MomentState {
  double mean_x = 0.0;
  double mean_y = 0.0;
  CovarianceTriple cov;
};

struct CovarianceRates {
  double d_v_x = 0.0;
  double d_v_y = 0.0;
  double d_c = 0.0;
};

struct MomentRates {
  double d_mean_x = 0.0;
  double d_mean_y = 0.0;
  CovarianceRates cov;
};

// 2x2 drift matrix of the means, d(mean)/dt = A mean.
struct Drift2 {
  double a_xx = 0.0, a_xy = 0.0;
  double a_yx = 0.0, a_yy = 0.0;
};

namespace detail {

// Precomputed coefficients for the standard (heterodyne-style) moment flow.
struct MomentCoeffs {
  double gamma, delta;
  double chi_c;      // chi cos(2 theta)
  double chi_s;      // chi sin(2 theta)
  double diffusion;  // gamma(2N+1) + mu
  double cond;       // 4 eta mu
  double b;          // sqrt(4 eta mu), measurement gain on the means

  static MomentCoeffs from(const NormalizedModel& m) {
    MomentCoeffs k;
    k.gamma = 1.0;
    k.delta = m.delta;
    k.chi_c = m.chi * std::cos(2.0 * m.theta);
    k.chi_s = m.chi * std::sin(2.0 * m.theta);
    k.diffusion = (2.0 * m.n + 1.0) + m.mu;
    k.cond = 4.0 * m.eta * m.mu;
    k.b = std::sqrt(k.cond);
    return k;
  }

  // Same coefficients with explicit overrides (absolute units).
  static MomentCoeffs raw(double gamma, double n, double chi, double delta,
                          double theta, double mu, double eta) {
    MomentCoeffs k;
    k.gamma = gamma;
    k.delta = delta;
    k.chi_c = chi * std::cos(2.0 * theta);
    k.chi_s = chi * std::sin(2.0 * theta);
    k.diffusion = gamma * (2.0 * n + 1.0) + mu;
    k.cond = 4.0 * eta * mu;
    k.b = std::sqrt(k.cond);
    return k;
  }

  Drift2 drift() const {
    return Drift2{-(gamma + chi_c), -(delta - chi_s),
                  (delta + chi_s), -(gamma - chi_c)};
  }
};

inline CovarianceRates variance_rhs(const CovarianceTriple& v,
                                    const MomentCoeffs& k) {
  CovarianceRates r;
  r.d_v_x = -2.0 * (k.gamma + k.chi_c) * v.v_x - 2.0 * (k.delta - k.chi_s) * v.c +
            k.diffusion - k.cond * (v.v_x * v.v_x + v.c * v.c);
  r.d_v_y = -2.0 * (k.gamma - k.chi_c) * v.v_y + 2.0 * (k.delta + k.chi_s) * v.c +
            k.diffusion - k.cond * (v.v_y * v.v_y + v.c * v.c);
  r.d_c = -2.0 * k.gamma * v.c - k.delta * (v.v_y - v.v_x) +
          k.chi_s * (v.v_x + v.v_y) - k.cond * v.c * (v.v_x + v.v_y);
  return r;
}

// Coefficients for the resolved-sideband flow (theta = pi/4 only).
struct RsbCoeffs {
  double gamma, delta, chi;
  double damp;       // 2 gamma + mu
  double heat;       // 2 N gamma
  double cond;       // eta mu

  static RsbCoeffs from(const NormalizedModel& m) {
    RsbCoeffs k;
    k.gamma = 1.0;
    k.delta = m.delta;
    k.chi = m.chi;
    k.damp = 2.0 + m.mu;
    k.heat = 2.0 * m.n;
    k.cond = m.eta * m.mu;
    return k;
  }
};

inline CovarianceRates rsb_variance_rhs(const CovarianceTriple& v,
                                        const RsbCoeffs& k) {
  double ux = v.v_x - 0.5;
  double uy = v.v_y - 0.5;
  CovarianceRates r;
  r.d_v_x = -k.damp * ux - 2.0 * (k.delta - k.chi) * v.c + k.heat -
            k.cond * (ux * ux + v.c * v.c);
  r.d_v_y = -k.damp * uy + 2.0 * (k.delta + k.chi) * v.c + k.heat -
            k.cond * (uy * uy + v.c * v.c);
  r.d_c = -k.damp * v.c - k.delta * (v.v_y - v.v_x) + k.chi * (v.v_x + v.v_y) -
          k.cond * v.c * (ux + uy);
  return r;
}

constexpr double quarter_pi = 0.78539816339744830962;

inline void require_quarter_pi_theta(const NormalizedModel& m,
                                     const char* where) {
  if (std::abs(m.theta - quarter_pi) > 1e-9)
    throw validation_error(std::string(where) +
                           ": defined for pump phase theta = pi/4 only");
}

}  // namespace detail

// Conditional variance flow at arbitrary pump phase. Rates come back in the
// caller's units.
inline CovarianceRates variance_rhs(const CovarianceTriple& cov,
                                    const OscillatorParams& osc,
                                    const PumpParams& pump,
                                    const MeasurementParams& meas) {
  NormalizedModel m = normalize(osc, pump, meas);
  CovarianceRates r = detail::variance_rhs(cov, detail::MomentCoeffs::from(m));
  r.d_v_x *= m.gamma;
  r.d_v_y *= m.gamma;
  r.d_c *= m.gamma;
  return r;
}

// Resolved-sideband variance flow (pump phase pi/4). At eta = 1 this equals
// the standard flow with mu -> mu/4; at mu = 0 the two flows coincide.
inline CovarianceRates rsb_variance_rhs(const CovarianceTriple& cov,
                                        const OscillatorParams& osc,
                                        const PumpParams& pump,
                                        const MeasurementParams& meas) {
  NormalizedModel m = normalize(osc, pump, meas);
  detail::require_quarter_pi_theta(m, "rsb_variance_rhs");
  CovarianceRates r = detail::rsb_variance_rhs(cov, detail::RsbCoeffs::from(m));
  r.d_v_x *= m.gamma;
  r.d_v_y *= m.gamma;
  r.d_c *= m.gamma;
  return r;
}

// Unconditional moment flow with two thermal-like baths: the mechanical bath
// (gamma, N) and an optical bath (gamma_c, N_c) from sideband cooling.
// Total damping gamma + gamma_c, total diffusion
// gamma(2N+1) + gamma_c(2 N_c + 1). No measurement conditioning.
inline MomentRates rsb_deterministic_mean_rhs(const MomentState& state,
                                              const OscillatorParams& osc,
                                              const PumpParams& pump,
                                              const RsbParams& rsb) {
  validate(osc);
  validate(pump, osc);
  validate(rsb);
  double gamma_tot = osc.gamma + rsb.gamma_c;
  double diffusion = osc.gamma * (2.0 * osc.bath_phonons + 1.0) +
                     rsb.gamma_c * (2.0 * rsb.n_c + 1.0);
  double theta = canonical_theta(pump.theta);
  double chi_c = pump.chi * std::cos(2.0 * theta);
  double chi_s = pump.chi * std::sin(2.0 * theta);

  MomentRates r;
  r.d_mean_x = -(gamma_tot + chi_c) * state.mean_x -
               (pump.delta - chi_s) * state.mean_y;
  r.d_mean_y = -(gamma_tot - chi_c) * state.mean_y +
               (pump.delta + chi_s) * state.mean_x;
  const CovarianceTriple& v = state.cov;
  r.cov.d_v_x = -2.0 * (gamma_tot + chi_c) * v.v_x -
                2.0 * (pump.delta - chi_s) * v.c + diffusion;
  r.cov.d_v_y = -2.0 * (gamma_tot - chi_c) * v.v_y +
                2.0 * (pump.delta + chi_s) * v.c + diffusion;
  r.cov.d_c = -2.0 * gamma_tot * v.c - pump.delta * (v.v_y - v.v_x) +
              chi_s * (v.v_x + v.v_y);
  return r;
}

// Drift matrix of the conditional means, in the caller's units.
inline Drift2 mean_drift(const OscillatorParams& osc, const PumpParams& pump) {
  NormalizedModel m = normalize(osc, pump, MeasurementParams{0.0, 1.0});
  Drift2 a = detail::MomentCoeffs::from(m).drift();
  a.a_xx *= m.gamma;
  a.a_xy *= m.gamma;
  a.a_yx *= m.gamma;
  a.a_yy *= m.gamma;
  return a;
}

}  // namespace squeezeband
