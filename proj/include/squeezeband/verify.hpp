#pragma once

#include <cmath>
#include <cstdint>
#include <mutex>
#include <vector>

#include "squeezeband/filter.hpp"
#include "squeezeband/parallel.hpp"
#include "squeezeband/sde.hpp"

// Monte-Carlo verification that the filtered estimate attains the conditional
// variances: the stationary mean-square error <(X_true - X_est)^2> over an
// ensemble of ground-truth co-simulations equals V_X (and likewise for Y).
// Trajectories are embarrassingly parallel; each one owns a private stream.

namespace squeezeband {

// Per-trajectory second moments of (truth, estimate) over the stationary
// window; enough to evaluate the MSE under any scalar rescaling of the
// estimate, mse(s) = <x^2> - 2 s <x xh> + s^2 <xh^2>.
struct ErrorMoments {
  double sxx = 0.0, sxh = 0.0, shh = 0.0;
  double syy = 0.0, syh = 0.0, shh_y = 0.0;
  std::size_t n = 0;
  bool failed = false;

  double mse_x(double scale = 1.0) const {
    return (sxx - 2.0 * scale * sxh + scale * scale * shh) /
           static_cast<double>(n);
  }
  double mse_y(double scale = 1.0) const {
    return (syy - 2.0 * scale * syh + scale * scale * shh_y) /
           static_cast<double>(n);
  }
};

struct EnsembleConfig {
  std::size_t n_trajectories = 500;
  double dt = 0.0;            // 0: derive from the step rule with dt_factor
  double dt_factor = 0.5;     // fraction of max_stable_dt when dt == 0
  double horizon_bandwidths = 200.0;  // trajectory length in units of 1/Gamma
  double burn_bandwidths = 10.0;      // discarded transient, units of 1/Gamma
  std::uint64_t seed = 1;
};

struct EnsembleResult {
  std::vector<ErrorMoments> trajectories;
  double dt = 0.0;
  std::size_t n_steps = 0;
  std::size_t burn_steps = 0;
  std::size_t failures = 0;
};

struct MseStats {
  double mean = 0.0;
  double std_error = 0.0;
};

inline MseStats mse_stats_x(const std::vector<ErrorMoments>& moments,
                            double scale = 1.0) {
  MseStats st;
  std::size_t n = 0;
  for (const auto& m : moments)
    if (!m.failed) {
      st.mean += m.mse_x(scale);
      ++n;
    }
  if (n == 0) return st;
  st.mean /= static_cast<double>(n);
  double var = 0.0;
  for (const auto& m : moments)
    if (!m.failed) {
      double d = m.mse_x(scale) - st.mean;
      var += d * d;
    }
  if (n > 1) st.std_error = std::sqrt(var / (static_cast<double>(n) - 1.0) /
                                      static_cast<double>(n));
  return st;
}

inline MseStats mse_stats_y(const std::vector<ErrorMoments>& moments,
                            double scale = 1.0) {
  MseStats st;
  std::size_t n = 0;
  for (const auto& m : moments)
    if (!m.failed) {
      st.mean += m.mse_y(scale);
      ++n;
    }
  if (n == 0) return st;
  st.mean /= static_cast<double>(n);
  double var = 0.0;
  for (const auto& m : moments)
    if (!m.failed) {
      double d = m.mse_y(scale) - st.mean;
      var += d * d;
    }
  if (n > 1) st.std_error = std::sqrt(var / (static_cast<double>(n) - 1.0) /
                                      static_cast<double>(n));
  return st;
}

inline EnsembleResult filter_mse_ensemble(const OscillatorParams& osc,
                                          const PumpParams& pump,
                                          const MeasurementParams& meas,
                                          const FilterParams& fp,
                                          const EnsembleConfig& cfg) {
  if (!(fp.b_x > 0.0) || !(fp.b_y > 0.0))
    throw validation_error(
        "filter_mse_ensemble: eta*mu = 0 leaves no information in the record");

  EnsembleResult out;
  out.dt = cfg.dt > 0.0 ? cfg.dt
                        : cfg.dt_factor * max_stable_dt(osc, pump, meas);
  double horizon = cfg.horizon_bandwidths / fp.gamma_f;
  double burn = cfg.burn_bandwidths / fp.gamma_f;
  out.n_steps = static_cast<std::size_t>(std::ceil(horizon / out.dt));
  out.burn_steps = static_cast<std::size_t>(std::ceil(burn / out.dt));
  if (out.burn_steps >= out.n_steps)
    throw validation_error("filter_mse_ensemble: burn-in exceeds the horizon");
  out.trajectories.assign(cfg.n_trajectories, ErrorMoments{});

  // simulate at the conditional frame's pump phase so the targets are the
  // closed-form (V_X, V_Y)
  PumpParams pump_frame = pump;
  pump_frame.theta = detail::quarter_pi - fp.alpha1;

  parallel_for(cfg.n_trajectories, [&](std::size_t i) {
    ErrorMoments& em = out.trajectories[i];
    try {
      TruthSimulation sim = simulate_truth_and_record(
          osc, pump_frame, meas, out.dt, out.n_steps, cfg.seed, i);
      EstimatePath est = filter_state_space(sim.record, fp);
      // est[k-1] is conditioned on increments through time k dt, where the
      // truth path holds its k-th sample
      for (std::size_t k = std::max<std::size_t>(out.burn_steps, 1);
           k < out.n_steps; ++k) {
        double x = sim.path.x[k], y = sim.path.y[k];
        double xh = est.x_est[k - 1], yh = est.y_est[k - 1];
        em.sxx += x * x;
        em.sxh += x * xh;
        em.shh += xh * xh;
        em.syy += y * y;
        em.syh += y * yh;
        em.shh_y += yh * yh;
        ++em.n;
      }
    } catch (const error&) {
      em.failed = true;
    }
  });
  for (const auto& m : out.trajectories)
    if (m.failed) ++out.failures;
  return out;
}

}  // namespace squeezeband
