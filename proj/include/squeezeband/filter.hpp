#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstddef>
#include <vector>

#include "squeezeband/linalg2.hpp"
#include "squeezeband/sde.hpp"
#include "squeezeband/steady_state.hpp"

// Stationary optimal estimator of the quadrature amplitudes from the
// measurement record. Rewriting the conditional mean equations in terms of
// dQ = sqrt(4 eta mu) <.> dt + dW at the conditional steady state (pump phase
// pi/4 - alpha1, C = 0) gives the linear filter
//
//   d x_est = [-(gamma_X + chi sin2a1) x_est - (delta - chi cos2a1) y_est] dt
//             + sqrt(4 eta mu) V_X dQ_X
//   d y_est = [-(gamma_Y - chi sin2a1) y_est + (delta + chi cos2a1) x_est] dt
//             + sqrt(4 eta mu) V_Y dQ_Y
//
// with gamma_X = gamma + 4 eta mu V_X, gamma_Y = gamma + 4 eta mu V_Y. The
// canonical implementation is this two-state realization, discretized exactly
// per step through the matrix exponential of drift*dt; it is total (works in
// the overdamped branch) and numerically stable.
//
// Its poles are -Gamma +- i Omega with Gamma = (gamma_X + gamma_Y)/2 and
// Omega^2 = det(drift) - Gamma^2, which reproduces the closed forms
// Gamma = delta tan(2 alpha1) and
// Omega^2 = delta^2 - chi^2 cos^2(2a1)(1 + gamma^2/delta^2) on delta > 0.
//
// In the underdamped branch delta^2 > chi^2 the impulse response is the
// convolution-kernel form
//
//   x_est = g_xx [cos(Omega t + phi) e^{-Gamma t}] * dQ_X
//         + g_xy [sin(Omega t)       e^{-Gamma t}] * dQ_Y
//   y_est = g_yy [cos(Omega t - phi) e^{-Gamma t}] * dQ_Y
//         + g_yx [sin(Omega t)       e^{-Gamma t}] * dQ_X
//
//   phi  = atan(gamma chi cos2a1 / (delta Omega))
//   g_xx = sec(phi) sqrt(4 eta mu) V_X      g_yy = sec(phi) sqrt(4 eta mu) V_Y
//   g_xy = -(delta - chi cos2a1) sqrt(4 eta mu) V_Y / Omega
//   g_yx = +(delta + chi cos2a1) sqrt(4 eta mu) V_X / Omega
//
// (phases and signs as implied by the transfer function; a secondary view,
// cross-checked numerically against the state-space realization).

namespace squeezeband {

struct FilterParams {
  double omega_f = 0.0;   // ringing frequency Omega (0 in the overdamped branch)
  double gamma_f = 0.0;   // bandwidth Gamma = (gamma_x + gamma_y)/2
  double phi = 0.0;       // kernel phase offset
  double g_xx = 0.0, g_xy = 0.0, g_yy = 0.0, g_yx = 0.0;  // kernel gains
  double gamma_x = 0.0, gamma_y = 0.0;  // per-quadrature damping rates
  // realization data
  Mat2 drift;                     // 2x2 mean-estimate drift matrix
  double b_x = 0.0, b_y = 0.0;    // record injection gains sqrt(4 eta mu) V
  double v_x = 0.0, v_y = 0.0;    // conditional variances behind the gains
  double chi_sin_2a = 0.0, chi_cos_2a = 0.0;
  double delta = 0.0, gamma = 0.0, chi = 0.0;
  double alpha1 = 0.0;
  bool underdamped = false;
  flag_list flags;
};

inline FilterParams filter_params(const OscillatorParams& osc,
                                  const PumpParams& pump,
                                  const MeasurementParams& meas) {
  ConditionalSteadyState ss = conditional_variances(osc, pump, meas);
  NormalizedModel m = normalize(osc, pump, meas);
  detail::AngleTerms a = detail::conditional_angle_terms(m);

  FilterParams fp;
  fp.flags = ss.flags;
  fp.v_x = ss.cov.v_x;
  fp.v_y = ss.cov.v_y;
  fp.alpha1 = a.alpha1;
  fp.delta = m.delta * m.gamma;
  fp.gamma = m.gamma;
  fp.chi = m.chi * m.gamma;
  fp.chi_sin_2a = a.kappa_s * m.gamma;
  fp.chi_cos_2a = a.kappa_c * m.gamma;

  double four_eta_mu = 4.0 * m.eta_mu() * m.gamma;  // caller units
  fp.gamma_x = m.gamma + four_eta_mu * fp.v_x;
  fp.gamma_y = m.gamma + four_eta_mu * fp.v_y;
  fp.gamma_f = 0.5 * (fp.gamma_x + fp.gamma_y);
  double b_scale = std::sqrt(four_eta_mu);
  fp.b_x = b_scale * fp.v_x;
  fp.b_y = b_scale * fp.v_y;

  fp.drift = Mat2{-(fp.gamma_x + fp.chi_sin_2a), -(fp.delta - fp.chi_cos_2a),
                  fp.delta + fp.chi_cos_2a, -(fp.gamma_y - fp.chi_sin_2a)};

  double omega2 = fp.drift.det() - fp.gamma_f * fp.gamma_f;
  fp.underdamped = omega2 > 0.0;
  fp.omega_f = std::sqrt(std::max(0.0, omega2));

  if (fp.underdamped) {
    double q = a.q * m.gamma;  // gamma chi cos2a1 / delta, finite at delta = 0
    fp.phi = std::atan2(q, fp.omega_f);
    double sec_phi = std::hypot(fp.omega_f, q) / fp.omega_f;
    fp.g_xx = sec_phi * fp.b_x;
    fp.g_yy = sec_phi * fp.b_y;
    fp.g_xy = -(fp.delta - fp.chi_cos_2a) * fp.b_y / fp.omega_f;
    fp.g_yx = (fp.delta + fp.chi_cos_2a) * fp.b_x / fp.omega_f;
  } else {
    fp.flags.push_back({flag_code::overdamped_filter,
                        "delta^2 <= chi^2: poles are real, sinusoidal kernel "
                        "form not emitted (state-space realization remains "
                        "valid)"});
  }
  return fp;
}

// Filtered estimates, one entry per record increment: x_est[k] is the
// estimate at t = (k+1) dt, conditioned on increments 0..k.
struct EstimatePath {
  std::vector<double> x_est;
  std::vector<double> y_est;
};

inline EstimatePath filter_state_space(const MeasurementRecord& record,
                                       const FilterParams& fp,
                                       double init_x = 0.0,
                                       double init_y = 0.0) {
  validate(record);
  double lam = max_eigenvalue_magnitude(fp.drift);
  if (record.dt * lam >= 0.1)
    throw validation_error(
        "filter_state_space: dt * max|eigenvalue| = " +
        std::to_string(record.dt * lam) + " >= 0.1; reduce the step");

  Mat2 phi = expm(Mat2{fp.drift.a * record.dt, fp.drift.b * record.dt,
                       fp.drift.c * record.dt, fp.drift.d * record.dt});
  std::size_t n = record.dq_x.size();
  EstimatePath out;
  out.x_est.reserve(n);
  out.y_est.reserve(n);
  double x = init_x, y = init_y;
  const double bound = 1e12 * (1.0 + std::abs(init_x) + std::abs(init_y));
  for (std::size_t k = 0; k < n; ++k) {
    double nx = phi.a * x + phi.b * y + fp.b_x * record.dq_x[k];
    double ny = phi.c * x + phi.d * y + fp.b_y * record.dq_y[k];
    x = nx;
    y = ny;
    out.x_est.push_back(x);
    out.y_est.push_back(y);
    if (!(std::abs(x) < bound && std::abs(y) < bound))
      throw convergence_error(
          "filter_state_space: estimate diverged at step " + std::to_string(k) +
          " (|x|=" + std::to_string(std::abs(x)) + ")");
  }
  return out;
}

// Transfer functions from the measurement currents to the estimates.
struct FrequencyResponse {
  std::vector<double> omega;
  std::vector<std::complex<double>> h_xx, h_xy, h_yx, h_yy;
};

// Closed form:
//   <X_est(w)> = sqrt(4 eta mu) [ (gamma_Y - chi sin2a1 + iw) V_X Q_X
//                                 - (delta - chi cos2a1) V_Y Q_Y ] / den(w)
//   den(w) = delta^2 - chi^2 + gamma_X gamma_Y
//            + chi sin2a1 (gamma_Y - gamma_X) - w^2 + iw (gamma_X + gamma_Y)
// and symmetrically for Y (numerator derived from the realization since only
// the X form is usually quoted).
inline FrequencyResponse frequency_response(const FilterParams& fp,
                                            const std::vector<double>& omega) {
  FrequencyResponse out;
  out.omega = omega;
  std::size_t n = omega.size();
  out.h_xx.resize(n);
  out.h_xy.resize(n);
  out.h_yx.resize(n);
  out.h_yy.resize(n);
  double den_const = fp.delta * fp.delta - fp.chi * fp.chi +
                     fp.gamma_x * fp.gamma_y +
                     fp.chi_sin_2a * (fp.gamma_y - fp.gamma_x);
  double den_lin = fp.gamma_x + fp.gamma_y;
  for (std::size_t i = 0; i < n; ++i) {
    double w = omega[i];
    std::complex<double> den(den_const - w * w, w * den_lin);
    out.h_xx[i] = fp.b_x * std::complex<double>(fp.gamma_y - fp.chi_sin_2a, w) / den;
    out.h_xy[i] = -fp.b_y * (fp.delta - fp.chi_cos_2a) / den;
    out.h_yy[i] = fp.b_y * std::complex<double>(fp.gamma_x + fp.chi_sin_2a, w) / den;
    out.h_yx[i] = fp.b_x * (fp.delta + fp.chi_cos_2a) / den;
  }
  return out;
}

// Same response computed numerically from the state-space realization,
// (iw I - A)^{-1} B; the independent route for the cross-check.
inline FrequencyResponse state_space_response(const FilterParams& fp,
                                              const std::vector<double>& omega) {
  FrequencyResponse out;
  out.omega = omega;
  std::size_t n = omega.size();
  out.h_xx.resize(n);
  out.h_xy.resize(n);
  out.h_yx.resize(n);
  out.h_yy.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    std::complex<double> zx, zy;
    resolvent_solve(fp.drift, omega[i], fp.b_x, 0.0, zx, zy);
    out.h_xx[i] = zx;
    out.h_yx[i] = zy;
    resolvent_solve(fp.drift, omega[i], 0.0, fp.b_y, zx, zy);
    out.h_xy[i] = zx;
    out.h_yy[i] = zy;
  }
  return out;
}

// The four (gain, kernel shape) pairs of the underdamped time-domain form.
struct KernelForm {
  double omega = 0.0, gamma = 0.0, phi = 0.0;
  double g_xx = 0.0, g_xy = 0.0, g_yy = 0.0, g_yx = 0.0;

  double k_xx(double t) const {
    return g_xx * std::cos(omega * t + phi) * std::exp(-gamma * t);
  }
  double k_xy(double t) const {
    return g_xy * std::sin(omega * t) * std::exp(-gamma * t);
  }
  double k_yy(double t) const {
    return g_yy * std::cos(omega * t - phi) * std::exp(-gamma * t);
  }
  double k_yx(double t) const {
    return g_yx * std::sin(omega * t) * std::exp(-gamma * t);
  }
};

inline KernelForm kernel_form(const FilterParams& fp) {
  if (!fp.underdamped)
    throw unsupported_branch_error(
        "kernel_form: overdamped regime (delta^2 <= chi^2); use the "
        "state-space realization");
  return KernelForm{fp.omega_f, fp.gamma_f, fp.phi,
                    fp.g_xx, fp.g_xy, fp.g_yy, fp.g_yx};
}

// Discretized convolution of the kernels against the record increments;
// matches filter_state_space up to O(dt) discretization differences.
inline EstimatePath apply_kernels(const MeasurementRecord& record,
                                  const KernelForm& kf,
                                  double truncation = 1e-9) {
  validate(record);
  std::size_t n = record.dq_x.size();
  std::size_t window = n;
  if (kf.gamma > 0.0) {
    double t_cut = -std::log(truncation) / kf.gamma;
    window = std::min<std::size_t>(
        n, static_cast<std::size_t>(t_cut / record.dt) + 1);
  }
  // kernel tables sampled at the same lags the exact discretization uses
  std::vector<double> kxx(window), kxy(window), kyy(window), kyx(window);
  for (std::size_t j = 0; j < window; ++j) {
    double t = static_cast<double>(j) * record.dt;
    kxx[j] = kf.k_xx(t);
    kxy[j] = kf.k_xy(t);
    kyy[j] = kf.k_yy(t);
    kyx[j] = kf.k_yx(t);
  }
  EstimatePath out;
  out.x_est.assign(n, 0.0);
  out.y_est.assign(n, 0.0);
  for (std::size_t k = 0; k < n; ++k) {
    double sx = 0.0, sy = 0.0;
    std::size_t jmax = std::min(window, k + 1);
    for (std::size_t j = 0; j < jmax; ++j) {
      double qx = record.dq_x[k - j];
      double qy = record.dq_y[k - j];
      sx += kxx[j] * qx + kxy[j] * qy;
      sy += kyy[j] * qy + kyx[j] * qx;
    }
    out.x_est[k] = sx;
    out.y_est[k] = sy;
  }
  return out;
}

}  // namespace squeezeband
