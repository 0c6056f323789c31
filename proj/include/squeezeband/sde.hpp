#pragma once

#include <cmath>
#include <cstdint>
#include <sstream>
#include <vector>

#include "squeezeband/moments.hpp"
#include "squeezeband/params.hpp"
#include "squeezeband/rng.hpp"

// Stochastic trajectory simulation.
//
// simulate_conditional: Euler-Maruyama co-integration of the conditional
// means (stochastic) and covariances (deterministic), synthesizing the
// measurement record from the innovations:
//   dQ_X = sqrt(4 eta mu) <X> dt + dW1,  dQ_Y = sqrt(4 eta mu) <Y> dt + dW2.
//
// simulate_truth_and_record: classical ground-truth co-simulation for filter
// verification. The Gaussian conditional dynamics are equivalent to a
// classical linear-Gaussian filtering problem whose state carries the same
// drift, process noise of intensity gamma(2N+1) + mu per quadrature, and
// measurement gain sqrt(4 eta mu); the conditional variances are then the
// stationary mean-square estimation errors for that problem.

namespace squeezeband {

// Integrated measurement increments dQ over steps of size dt, plus the RNG
// provenance needed to reproduce them.
struct MeasurementRecord {
  double dt = 0.0;
  std::vector<double> dq_x;
  std::vector<double> dq_y;
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
};

inline void validate(const MeasurementRecord& rec) {
  if (!(rec.dt > 0.0)) throw validation_error("record: dt must be positive");
  if (rec.dq_x.size() != rec.dq_y.size())
    throw validation_error("record: dq_x and dq_y lengths differ");
  for (std::size_t i = 0; i < rec.dq_x.size(); ++i)
    if (!std::isfinite(rec.dq_x[i]) || !std::isfinite(rec.dq_y[i]))
      throw validation_error("record: non-finite increment");
}

// Conditional moment trajectory sampled at t_k = k dt (index 0 = initial
// state, so the arrays have n_steps + 1 entries).
struct MomentTrajectory {
  double dt = 0.0;
  std::vector<double> t;
  std::vector<double> mean_x, mean_y;
  std::vector<double> v_x, v_y, c;
  int clamp_count = 0;  // covariance PSD projections applied (diagnostic)
};

// Ground-truth quadrature path sampled at the left endpoint of each record
// step (same length as the record).
struct TruePath {
  std::vector<double> x;
  std::vector<double> y;
};

// Largest Euler-Maruyama step honoring the 1/50-of-fastest-timescale rule.
inline double max_stable_dt(const OscillatorParams& osc, const PumpParams& pump,
                            const MeasurementParams& meas) {
  NormalizedModel m = normalize(osc, pump, meas);
  double fastest = std::max({1.0 + m.snr(),  // covers gamma_X,Y growth with SNR
                             std::abs(m.delta), m.chi, 1.0 + m.chi});
  return 1.0 / (50.0 * fastest * m.gamma);
}

namespace detail {

inline void require_step_ok(double dt, const OscillatorParams& osc,
                            const PumpParams& pump,
                            const MeasurementParams& meas, const char* where) {
  if (!(dt > 0.0))
    throw validation_error(std::string(where) + ": dt must be positive");
  double lim = max_stable_dt(osc, pump, meas);
  if (dt > lim * (1.0 + 1e-9)) {
    std::ostringstream os;
    os << where << ": dt=" << dt << " exceeds the stability rule dt <= " << lim
       << " (1/50 of the fastest timescale)";
    throw validation_error(os.str());
  }
}

}  // namespace detail

struct ConditionalSimulation {
  MomentTrajectory trajectory;
  MeasurementRecord record;
};

inline ConditionalSimulation simulate_conditional(
    const MomentState& initial, const OscillatorParams& osc,
    const PumpParams& pump, const MeasurementParams& meas, double dt,
    std::size_t n_steps, std::uint64_t seed, std::uint64_t stream = 0,
    std::size_t store_every = 1) {
  detail::require_step_ok(dt, osc, pump, meas, "simulate_conditional");
  validate(initial.cov);
  if (store_every == 0) store_every = 1;

  NormalizedModel m = normalize(osc, pump, meas);
  detail::MomentCoeffs k = detail::MomentCoeffs::raw(
      m.gamma, m.n, m.chi * m.gamma, m.delta * m.gamma, m.theta,
      m.mu * m.gamma, m.eta);
  Drift2 a = k.drift();
  const double b = k.b;  // sqrt(4 eta mu)
  const double sqrt_dt = std::sqrt(dt);
  const double det_slack = 1e-12 * std::max(1.0, m.heated_variance() *
                                                     m.heated_variance());

  RandomStream rng(seed, stream);
  ConditionalSimulation out;
  out.record.dt = dt;
  out.record.seed = seed;
  out.record.stream = stream;
  out.record.dq_x.reserve(n_steps);
  out.record.dq_y.reserve(n_steps);
  MomentTrajectory& tr = out.trajectory;
  tr.dt = dt * static_cast<double>(store_every);
  std::size_t n_stored = n_steps / store_every + 1;
  tr.t.reserve(n_stored);
  tr.mean_x.reserve(n_stored);
  tr.mean_y.reserve(n_stored);
  tr.v_x.reserve(n_stored);
  tr.v_y.reserve(n_stored);
  tr.c.reserve(n_stored);

  double mx = initial.mean_x, my = initial.mean_y;
  CovarianceTriple v = initial.cov;

  auto store = [&](std::size_t step) {
    tr.t.push_back(static_cast<double>(step) * dt);
    tr.mean_x.push_back(mx);
    tr.mean_y.push_back(my);
    tr.v_x.push_back(v.v_x);
    tr.v_y.push_back(v.v_y);
    tr.c.push_back(v.c);
  };

  store(0);
  for (std::size_t step = 0; step < n_steps; ++step) {
    double dw1 = sqrt_dt * rng.next_normal();
    double dw2 = sqrt_dt * rng.next_normal();
    out.record.dq_x.push_back(b * mx * dt + dw1);
    out.record.dq_y.push_back(b * my * dt + dw2);

    double nmx = mx + (a.a_xx * mx + a.a_xy * my) * dt +
                 b * (v.v_x * dw1 + v.c * dw2);
    double nmy = my + (a.a_yx * mx + a.a_yy * my) * dt +
                 b * (v.c * dw1 + v.v_y * dw2);
    CovarianceRates r = detail::variance_rhs(v, k);
    v.v_x += r.d_v_x * dt;
    v.v_y += r.d_v_y * dt;
    v.c += r.d_c * dt;
    mx = nmx;
    my = nmy;

    if (determinant(v) < -det_slack || v.v_x < 0.0 || v.v_y < 0.0) {
      v = project_psd(v);
      ++tr.clamp_count;
    }
    if (!std::isfinite(mx) || !std::isfinite(my))
      throw convergence_error("simulate_conditional: means diverged at step " +
                              std::to_string(step));
    if ((step + 1) % store_every == 0) store(step + 1);
  }
  return out;
}

struct TruthSimulation {
  TruePath path;
  MeasurementRecord record;
};

inline TruthSimulation simulate_truth_and_record(
    const OscillatorParams& osc, const PumpParams& pump,
    const MeasurementParams& meas, double dt, std::size_t n_steps,
    std::uint64_t seed, std::uint64_t stream = 0,
    double init_x = 0.0, double init_y = 0.0) {
  detail::require_step_ok(dt, osc, pump, meas, "simulate_truth_and_record");

  NormalizedModel m = normalize(osc, pump, meas);
  detail::MomentCoeffs k = detail::MomentCoeffs::raw(
      m.gamma, m.n, m.chi * m.gamma, m.delta * m.gamma, m.theta,
      m.mu * m.gamma, m.eta);
  Drift2 a = k.drift();
  const double b = k.b;
  const double sigma = std::sqrt(k.diffusion);  // gamma(2N+1) + mu
  const double sqrt_dt = std::sqrt(dt);

  RandomStream rng(seed, stream);
  TruthSimulation out;
  out.record.dt = dt;
  out.record.seed = seed;
  out.record.stream = stream;
  out.record.dq_x.reserve(n_steps);
  out.record.dq_y.reserve(n_steps);
  out.path.x.reserve(n_steps);
  out.path.y.reserve(n_steps);

  double x = init_x, y = init_y;
  for (std::size_t step = 0; step < n_steps; ++step) {
    out.path.x.push_back(x);
    out.path.y.push_back(y);
    // fixed draw order: process noise first, then measurement noise
    double db1 = sqrt_dt * rng.next_normal();
    double db2 = sqrt_dt * rng.next_normal();
    double dw1 = sqrt_dt * rng.next_normal();
    double dw2 = sqrt_dt * rng.next_normal();
    out.record.dq_x.push_back(b * x * dt + dw1);
    out.record.dq_y.push_back(b * y * dt + dw2);
    double nx = x + (a.a_xx * x + a.a_xy * y) * dt + sigma * db1;
    double ny = y + (a.a_yx * x + a.a_yy * y) * dt + sigma * db2;
    x = nx;
    y = ny;
    if (!std::isfinite(x) || !std::isfinite(y))
      throw convergence_error(
          "simulate_truth_and_record: path diverged at step " +
          std::to_string(step));
  }
  return out;
}

}  // namespace squeezeband
