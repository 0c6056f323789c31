#pragma once

#include <cmath>
#include <optional>
#include <sstream>
#include <string>

#include "squeezeband/common.hpp"

// Parameter types and scalar derived quantities for a parametrically driven
// mechanical mode under continuous quadrature measurement.
//
// Conventions:
//   - quadratures X, Y in a frame rotating at half the drive frequency,
//     ground-state variance 1/2 for each;
//   - all rates are angular frequencies in the caller's units. Everything
//     downstream depends only on ratios, so operations normalize to gamma = 1
//     internally and rescale rate-valued outputs on the way out;
//   - the pump phase enters the dynamics only through 2*theta, so theta is
//     canonical modulo pi.

namespace squeezeband {

inline constexpr double ground_state_variance = 0.5;  // V_g

struct OscillatorParams {
  double gamma = 1.0;        // intrinsic damping rate (omega_m / Q)
  double bath_phonons = 0.0; // N, mean thermal occupation of the bath
  std::optional<double> omega_m{};  // resonance frequency, only used for
                                    // validity checks and stiffness conversion
};

struct PumpParams {
  double chi = 0.0;    // parametric drive strength
  double delta = 0.0;  // drive detuning: drive frequency = 2(omega_m + delta)
  double theta = 0.0;  // drive phase, canonical in [0, pi)
};

struct MeasurementParams {
  double mu = 0.0;   // measurement rate (zero-temperature bath coupling)
  double eta = 1.0;  // quantum efficiency in [0, 1]
};

// Raw cavity-device parameters, used only to derive mu.
struct CavityParams {
  double g = 0.0;      // optomechanical coupling rate
  double nbar = 0.0;   // mean intracavity photon number
  double kappa = 0.0;  // cavity linewidth
  double x_zpf = 0.0;  // zero-point RMS displacement
};

// Effective optical bath from resolved-sideband cooling.
struct RsbParams {
  double gamma_c = 0.0;  // optical damping rate
  double n_c = 0.0;      // effective cavity occupation
};

struct ModelParams {
  OscillatorParams osc;
  PumpParams pump;
  MeasurementParams meas;
};

namespace detail {

inline std::string fmt(double x) {
  std::ostringstream os;
  os.precision(17);
  os << x;
  return os.str();
}

}  // namespace detail

inline double canonical_theta(double theta) {
  constexpr double pi = 3.14159265358979323846;
  double t = std::fmod(theta, pi);
  if (t < 0) t += pi;
  if (t >= pi) t = 0.0;  // fmod rounding at the boundary
  return t;
}

inline flag_list validate(const OscillatorParams& osc) {
  if (!(osc.gamma > 0.0) || !std::isfinite(osc.gamma))
    throw validation_error("oscillator: gamma must be positive, got " +
                           detail::fmt(osc.gamma));
  if (!(osc.bath_phonons >= 0.0) || !std::isfinite(osc.bath_phonons))
    throw validation_error("oscillator: bath phonon number must be >= 0, got " +
                           detail::fmt(osc.bath_phonons));
  flag_list flags;
  if (osc.omega_m) {
    if (!(*osc.omega_m > 0.0) || !std::isfinite(*osc.omega_m))
      throw validation_error("oscillator: omega_m must be positive, got " +
                             detail::fmt(*osc.omega_m));
    if (*osc.omega_m < 10.0 * osc.gamma)
      flags.push_back({flag_code::rwa_omega_m_comparable,
                       "omega_m < 10 gamma: slowly-varying-envelope "
                       "description is marginal"});
  }
  return flags;
}

inline flag_list validate(const PumpParams& pump,
                          const OscillatorParams& osc = {}) {
  if (!(pump.chi >= 0.0) || !std::isfinite(pump.chi))
    throw validation_error("pump: chi must be >= 0, got " +
                           detail::fmt(pump.chi));
  if (!std::isfinite(pump.delta))
    throw validation_error("pump: delta must be finite");
  if (!std::isfinite(pump.theta))
    throw validation_error("pump: theta must be finite");
  flag_list flags;
  if (osc.omega_m && pump.chi >= *osc.omega_m / 10.0)
    flags.push_back({flag_code::rwa_chi_large,
                     "chi >= omega_m/10: rotating-wave treatment of the "
                     "parametric drive is marginal"});
  return flags;
}

inline flag_list validate(const MeasurementParams& meas,
                          const OscillatorParams& osc = {}) {
  if (!(meas.mu >= 0.0) || !std::isfinite(meas.mu))
    throw validation_error("measurement: mu must be >= 0, got " +
                           detail::fmt(meas.mu));
  if (!(meas.eta >= 0.0 && meas.eta <= 1.0))
    throw validation_error("measurement: eta must lie in [0, 1], got " +
                           detail::fmt(meas.eta));
  flag_list flags;
  if (osc.omega_m && meas.mu >= *osc.omega_m / 10.0)
    flags.push_back({flag_code::rwa_mu_large,
                     "mu >= omega_m/10: quadrature decomposition of the "
                     "measurement is marginal"});
  return flags;
}

inline flag_list validate(const CavityParams& cav,
                          std::optional<double> omega_m = {}) {
  if (!(cav.g > 0.0) || !(cav.nbar > 0.0) || !(cav.kappa > 0.0) ||
      !(cav.x_zpf > 0.0))
    throw validation_error("cavity: g, nbar, kappa, x_zpf must all be positive");
  flag_list flags;
  if (omega_m && cav.kappa < 10.0 * *omega_m)
    flags.push_back({flag_code::bad_cavity_violated,
                     "kappa < 10 omega_m: bad-cavity limit assumed by the "
                     "measurement-rate formula is marginal"});
  return flags;
}

inline void validate(const RsbParams& rsb) {
  if (!(rsb.gamma_c >= 0.0) || !std::isfinite(rsb.gamma_c))
    throw validation_error("rsb: gamma_c must be >= 0");
  if (!(rsb.n_c >= 0.0) || !std::isfinite(rsb.n_c))
    throw validation_error("rsb: n_c must be >= 0");
}

// All parameters expressed in units of gamma, theta canonicalized. This is
// the internal working representation for every closed form.
struct NormalizedModel {
  double gamma = 1.0;  // original scale, for rescaling rate outputs
  double n = 0.0;
  double chi = 0.0;
  double delta = 0.0;
  double theta = 0.0;
  double mu = 0.0;
  double eta = 1.0;
  flag_list flags;

  double v_t() const { return n + 0.5; }               // thermal variance
  double n_ba() const { return 0.5 * mu; }             // back-action phonons
  double heated_variance() const { return v_t() + n_ba(); }
  double snr() const { return 2.0 * eta * mu * heated_variance(); }
  double chi_th() const { return std::hypot(1.0, delta); }
  double eta_mu() const { return eta * mu; }
};

inline NormalizedModel normalize(const ModelParams& p) {
  NormalizedModel m;
  m.flags = validate(p.osc);
  append_flags(m.flags, validate(p.pump, p.osc));
  append_flags(m.flags, validate(p.meas, p.osc));
  m.gamma = p.osc.gamma;
  m.n = p.osc.bath_phonons;
  m.chi = p.pump.chi / m.gamma;
  m.delta = p.pump.delta / m.gamma;
  m.theta = canonical_theta(p.pump.theta);
  m.mu = p.meas.mu / m.gamma;
  m.eta = p.meas.eta;
  return m;
}

inline NormalizedModel normalize(const OscillatorParams& osc,
                                 const PumpParams& pump,
                                 const MeasurementParams& meas) {
  return normalize(ModelParams{osc, pump, meas});
}

// Scalar diagnostics derived from the configuration. Rate-valued fields are
// in the caller's units; the rest are dimensionless.
struct DerivedQuantities {
  double n_ba = 0.0;    // back-action phonon number mu / (2 gamma)
  double v_t = 0.5;     // thermal variance N + 1/2
  double snr = 0.0;     // 2 eta mu (V_T + N_BA) / gamma
  double chi_th = 0.0;  // instability threshold sqrt(gamma^2 + delta^2)
  std::optional<double> omega_e{};  // elliptical frequency, only for chi^2 < delta^2
  double v_g = ground_state_variance;
  flag_list flags;
};

// mu = 8 g^2 x_zpf^2 nbar / kappa (bad-cavity limit).
inline flagged<double> measurement_rate_from_cavity(
    const CavityParams& cav, std::optional<double> omega_m = {}) {
  flagged<double> out;
  out.flags = validate(cav, omega_m);
  out.value = 8.0 * cav.g * cav.g * cav.x_zpf * cav.x_zpf * cav.nbar / cav.kappa;
  return out;
}

// chi = omega_m k_r / (2 k_0) for a spring constant modulated by k_r about k_0.
inline flagged<double> chi_from_spring(double omega_m, double k_r, double k_0) {
  if (!(k_0 > 0.0)) throw validation_error("chi_from_spring: k_0 must be positive");
  if (!(k_r >= 0.0)) throw validation_error("chi_from_spring: k_r must be >= 0");
  if (!(omega_m > 0.0))
    throw validation_error("chi_from_spring: omega_m must be positive");
  flagged<double> out;
  out.value = omega_m * k_r / (2.0 * k_0);
  if (k_r > k_0)
    out.flags.push_back({flag_code::kr_exceeds_k0,
                         "k_r > k_0: stiffness modulation exceeds the static "
                         "stiffness"});
  return out;
}

// Self-oscillation threshold of the parametric drive.
inline double chi_threshold(const OscillatorParams& osc, const PumpParams& pump) {
  validate(osc);
  validate(pump, osc);
  return std::hypot(osc.gamma, pump.delta);
}

// Threshold with the extra optical damping mu/2 from resolved-sideband cooling.
inline double rsb_threshold(const OscillatorParams& osc, const PumpParams& pump,
                            const MeasurementParams& meas) {
  validate(osc);
  validate(pump, osc);
  validate(meas, osc);
  return std::hypot(osc.gamma + 0.5 * meas.mu, pump.delta);
}

inline DerivedQuantities derived_quantities(const OscillatorParams& osc,
                                            const PumpParams& pump,
                                            const MeasurementParams& meas) {
  NormalizedModel m = normalize(osc, pump, meas);
  DerivedQuantities d;
  d.n_ba = m.n_ba();
  d.v_t = m.v_t();
  d.snr = m.snr();
  d.chi_th = m.chi_th() * m.gamma;
  if (m.chi < std::abs(m.delta)) {
    // omega_e = sqrt(delta^2 - chi^2); factored for accuracy near chi ~ |delta|
    double ad = std::abs(m.delta);
    d.omega_e = std::sqrt((ad - m.chi) * (ad + m.chi)) * m.gamma;
  }
  d.flags = m.flags;
  return d;
}

}  // namespace squeezeband
