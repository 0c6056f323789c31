#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <sstream>
#include <type_traits>
#include <vector>

#include "squeezeband/common.hpp"
#include "squeezeband/moments.hpp"

// Deterministic integration of the moment flows: classical RK4 with
// step-doubling error control. Used as the oracle route for every closed-form
// steady state, so it stays independent of those closed forms.

namespace squeezeband {

struct OdeOptions {
  double rel_tol = 1e-10;
  double abs_tol = 1e-12;
  double t_max = 1e6;          // horizon (in the units of the supplied rhs)
  double initial_dt = 1e-3;
  double steady_tol = 0.0;     // >0: stop once max|rhs| < steady_tol ...
  double steady_hold = 0.0;    // ... sustained over this much time
  double diverge_bound = 1e15; // any |y_i| beyond this is a divergence
};

template <std::size_t N>
struct OdeResult {
  std::array<double, N> y{};
  double t = 0.0;
  bool steady = false;
  double max_rhs = 0.0;  // residual at the final state
  std::size_t steps = 0;
};

namespace detail {

template <std::size_t N, class Rhs>
std::array<double, N> rk4_step(const std::array<double, N>& y, double dt,
                               const Rhs& rhs) {
  std::array<double, N> k1 = rhs(y), y2{}, k2{}, y3{}, k3{}, y4{}, k4{}, out{};
  for (std::size_t i = 0; i < N; ++i) y2[i] = y[i] + 0.5 * dt * k1[i];
  k2 = rhs(y2);
  for (std::size_t i = 0; i < N; ++i) y3[i] = y[i] + 0.5 * dt * k2[i];
  k3 = rhs(y3);
  for (std::size_t i = 0; i < N; ++i) y4[i] = y[i] + dt * k3[i];
  k4 = rhs(y4);
  for (std::size_t i = 0; i < N; ++i)
    out[i] = y[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
  return out;
}

template <std::size_t N>
double max_abs(const std::array<double, N>& v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

template <std::size_t N>
std::string state_diag(double t, const std::array<double, N>& y) {
  std::ostringstream os;
  os.precision(6);
  os << "t=" << t << ", state=(";
  for (std::size_t i = 0; i < N; ++i) os << (i ? ", " : "") << y[i];
  os << ")";
  return os.str();
}

}  // namespace detail

// Adaptive RK4 with step doubling. Optional per-accepted-step observer
// (used for trajectory sampling and invariant checks).
template <std::size_t N, class Rhs,
          class Observer = std::nullptr_t>
OdeResult<N> integrate_adaptive(std::array<double, N> y, const Rhs& rhs,
                                const OdeOptions& opts = {},
                                Observer&& observe = nullptr) {
  OdeResult<N> res;
  double t = 0.0;
  double dt = opts.initial_dt;
  double held = 0.0;
  const double order_exp = 1.0 / 5.0;

  if constexpr (!std::is_same_v<std::decay_t<Observer>, std::nullptr_t>)
    observe(t, y);

  while (t < opts.t_max) {
    dt = std::min(dt, opts.t_max - t);
    auto full = detail::rk4_step(y, dt, rhs);
    auto half = detail::rk4_step(y, 0.5 * dt, rhs);
    auto two_half = detail::rk4_step(half, 0.5 * dt, rhs);

    double err = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
      double scale = opts.abs_tol +
                     opts.rel_tol * std::max(std::abs(y[i]), std::abs(two_half[i]));
      err = std::max(err, std::abs(full[i] - two_half[i]) / scale);
    }
    err /= 15.0;  // step-doubling estimate for a 4th-order method

    if (err <= 1.0) {
      // accept (with the local-extrapolation correction folded in)
      for (std::size_t i = 0; i < N; ++i)
        y[i] = two_half[i] + (two_half[i] - full[i]) / 15.0;
      t += dt;
      ++res.steps;

      if (detail::max_abs(y) > opts.diverge_bound)
        throw convergence_error("ode: state diverged, " +
                                detail::state_diag(t, y));
      if constexpr (!std::is_same_v<std::decay_t<Observer>, std::nullptr_t>)
        observe(t, y);

      if (opts.steady_tol > 0.0) {
        double r = detail::max_abs(rhs(y));
        if (r < opts.steady_tol) {
          held += dt;
          if (held >= opts.steady_hold) {
            res.y = y;
            res.t = t;
            res.steady = true;
            res.max_rhs = r;
            return res;
          }
        } else {
          held = 0.0;
        }
      }
    }
    double grow = 0.9 * std::pow(std::max(err, 1e-30), -order_exp);
    dt *= std::clamp(grow, 0.2, 5.0);
    if (!(dt > 0.0) || !std::isfinite(dt))
      throw convergence_error("ode: step size collapsed, " +
                              detail::state_diag(t, y));
  }

  res.y = y;
  res.t = t;
  res.steady = false;
  res.max_rhs = detail::max_abs(rhs(y));
  if (opts.steady_tol > 0.0)
    throw convergence_error(
        "ode: horizon exhausted before reaching steady state, residual=" +
        std::to_string(res.max_rhs) + ", " + detail::state_diag(t, y));
  return res;
}

enum class RhsKind { standard, rsb };

// Relaxes the variance flow to its fixed point. This is the oracle path for
// the closed-form steady states: it never touches them.
struct SteadyStateOptions {
  double residual_tol = 1e-10;  // on max|dV/dt| in units of gamma * scale
  double hold_relaxation_times = 1.0;
  double horizon_relaxation_times = 1e6;
};

inline flagged<CovarianceTriple> integrate_variances_to_steady_state(
    const CovarianceTriple& initial, RhsKind kind, const OscillatorParams& osc,
    const PumpParams& pump, const MeasurementParams& meas,
    const SteadyStateOptions& sopts = {}) {
  NormalizedModel m = normalize(osc, pump, meas);
  if (kind == RhsKind::rsb) detail::require_quarter_pi_theta(m, "integrate_variances");
  validate(initial);

  auto rhs_fn = [&](const std::array<double, 3>& y) -> std::array<double, 3> {
    CovarianceTriple v{y[0], y[1], y[2]};
    CovarianceRates r = (kind == RhsKind::standard)
                            ? detail::variance_rhs(v, detail::MomentCoeffs::from(m))
                            : detail::rsb_variance_rhs(v, detail::RsbCoeffs::from(m));
    return {r.d_v_x, r.d_v_y, r.d_c};
  };

  OdeOptions opts;
  double scale = std::max(1.0, m.heated_variance());
  opts.steady_tol = sopts.residual_tol * scale;
  opts.steady_hold = sopts.hold_relaxation_times;  // one relaxation time 1/gamma
  opts.t_max = sopts.horizon_relaxation_times;
  opts.diverge_bound = 1e15 * scale;
  // near the fixed point the accepted-step error wander shows up as a
  // residual of order rel_tol * |y| * rate, so the step tolerance must sit
  // well below the steady-state threshold
  opts.rel_tol = 1e-13;
  opts.abs_tol = 1e-15 * scale;

  auto res = integrate_adaptive<3>({initial.v_x, initial.v_y, initial.c},
                                   rhs_fn, opts);
  flagged<CovarianceTriple> out;
  out.value = CovarianceTriple{res.y[0], res.y[1], res.y[2]};
  out.flags = m.flags;
  return out;
}

struct CovarianceSample {
  double t;  // in units of 1/gamma
  CovarianceTriple cov;
};

// Fixed-horizon trajectory of the variance flow, sampled at every accepted
// internal step.
inline std::vector<CovarianceSample> integrate_variances_path(
    const CovarianceTriple& initial, RhsKind kind, const OscillatorParams& osc,
    const PumpParams& pump, const MeasurementParams& meas, double horizon) {
  NormalizedModel m = normalize(osc, pump, meas);
  if (kind == RhsKind::rsb) detail::require_quarter_pi_theta(m, "integrate_variances");
  validate(initial);
  if (!(horizon > 0.0))
    throw validation_error("integrate_variances: horizon must be positive");

  auto rhs_fn = [&](const std::array<double, 3>& y) -> std::array<double, 3> {
    CovarianceTriple v{y[0], y[1], y[2]};
    CovarianceRates r = (kind == RhsKind::standard)
                            ? detail::variance_rhs(v, detail::MomentCoeffs::from(m))
                            : detail::rsb_variance_rhs(v, detail::RsbCoeffs::from(m));
    return {r.d_v_x, r.d_v_y, r.d_c};
  };

  std::vector<CovarianceSample> path;
  OdeOptions opts;
  double scale = std::max(1.0, m.heated_variance());
  opts.t_max = horizon;
  opts.diverge_bound = 1e15 * scale;
  opts.abs_tol = 1e-13 * scale;
  integrate_adaptive<3>({initial.v_x, initial.v_y, initial.c}, rhs_fn, opts,
                        [&](double t, const std::array<double, 3>& y) {
                          path.push_back({t, CovarianceTriple{y[0], y[1], y[2]}});
                        });
  return path;
}

// Deterministic two-bath moment flow (means + covariance), for the
// sideband-cooling cross-checks.
inline MomentState integrate_rsb_deterministic_to_steady_state(
    const MomentState& initial, const OscillatorParams& osc,
    const PumpParams& pump, const RsbParams& rsb,
    const SteadyStateOptions& sopts = {}) {
  auto rhs_fn = [&](const std::array<double, 5>& y) -> std::array<double, 5> {
    MomentState s{y[0], y[1], CovarianceTriple{y[2], y[3], y[4]}};
    MomentRates r = rsb_deterministic_mean_rhs(s, osc, pump, rsb);
    return {r.d_mean_x, r.d_mean_y, r.cov.d_v_x, r.cov.d_v_y, r.cov.d_c};
  };
  OdeOptions opts;
  double scale = std::max(1.0, osc.bath_phonons + 1.0);
  opts.steady_tol = sopts.residual_tol * scale * osc.gamma;
  opts.steady_hold = sopts.hold_relaxation_times / osc.gamma;
  opts.t_max = sopts.horizon_relaxation_times / osc.gamma;
  opts.diverge_bound = 1e15 * scale;
  opts.rel_tol = 1e-13;
  opts.abs_tol = 1e-15 * scale;
  auto res = integrate_adaptive<5>(
      {initial.mean_x, initial.mean_y, initial.cov.v_x, initial.cov.v_y,
       initial.cov.c},
      rhs_fn, opts);
  return MomentState{res.y[0], res.y[1],
                     CovarianceTriple{res.y[2], res.y[3], res.y[4]}};
}

}  // namespace squeezeband
