#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>

#include "squeezeband/filter.hpp"
#include "squeezeband/rng.hpp"
#include "squeezeband/verify.hpp"

using namespace squeezeband;

namespace {


double mu_for_snr(double snr, double n, double eta) {
  double v_t = n + 0.5;
  return std::sqrt(v_t * v_t + snr / eta) - v_t;
}

// Independent matrix exponential: scaling and squaring on a plain Taylor
// series, for cross-checking the closed-form expm.
Mat2 expm_taylor(Mat2 m) {
  int squarings = 0;
  double norm = std::abs(m.a) + std::abs(m.b) + std::abs(m.c) + std::abs(m.d);
  while (norm > 0.25) {
    m = Mat2{m.a / 2, m.b / 2, m.c / 2, m.d / 2};
    norm /= 2;
    ++squarings;
  }
  Mat2 acc{1, 0, 0, 1};
  Mat2 term{1, 0, 0, 1};
  for (int k = 1; k <= 24; ++k) {
    term = Mat2{(term.a * m.a + term.b * m.c) / k, (term.a * m.b + term.b * m.d) / k,
                (term.c * m.a + term.d * m.c) / k, (term.c * m.b + term.d * m.d) / k};
    acc = Mat2{acc.a + term.a, acc.b + term.b, acc.c + term.c, acc.d + term.d};
  }
  for (int s = 0; s < squarings; ++s)
    acc = Mat2{acc.a * acc.a + acc.b * acc.c, acc.a * acc.b + acc.b * acc.d,
               acc.c * acc.a + acc.d * acc.c, acc.c * acc.b + acc.d * acc.d};
  return acc;
}

}  // namespace

TEST_CASE("matrix exponential matches a Taylor-series oracle") {
  RandomStream rng(61);
  for (int i = 0; i < 100; ++i) {
    Mat2 m{4.0 * (rng.next_uniform() - 0.5), 4.0 * (rng.next_uniform() - 0.5),
           4.0 * (rng.next_uniform() - 0.5), 4.0 * (rng.next_uniform() - 0.5)};
    Mat2 a = expm(m);
    Mat2 b = expm_taylor(m);
    CHECK(a.a == Catch::Approx(b.a).epsilon(1e-11).margin(1e-12));
    CHECK(a.b == Catch::Approx(b.b).epsilon(1e-11).margin(1e-12));
    CHECK(a.c == Catch::Approx(b.c).epsilon(1e-11).margin(1e-12));
    CHECK(a.d == Catch::Approx(b.d).epsilon(1e-11).margin(1e-12));
  }
  // defective (double-eigenvalue) and near-defective branches
  for (double eps : {0.0, 1e-8, -1e-8}) {
    Mat2 m{0.3, 1.0, 0.0, 0.3 + eps};
    Mat2 a = expm(m);
    Mat2 b = expm_taylor(m);
    CHECK(a.a == Catch::Approx(b.a).epsilon(1e-12));
    CHECK(a.b == Catch::Approx(b.b).epsilon(1e-12));  // e^0.3 * t term
    CHECK(a.c == Catch::Approx(b.c).margin(1e-12));
    CHECK(a.d == Catch::Approx(b.d).epsilon(1e-12));
  }
}

TEST_CASE("filter parameters: closed-form identities") {
  OscillatorParams osc{1.0, 0.0, {}};
  double chi = 10.0, delta = std::sqrt(chi * (chi + 2.0));
  PumpParams pump{chi, delta, 0.0};

  SECTION("no conditioning: bandwidth gamma, ringing at the elliptical frequency") {
    FilterParams fp = filter_params(osc, pump, {3.0, 0.0});
    double omega_e = std::sqrt(delta * delta - chi * chi);
    CHECK(std::abs(fp.gamma_f - 1.0) < 1e-10);
    CHECK(std::abs(fp.omega_f - omega_e) < 1e-10 * omega_e);
    CHECK(fp.g_xx == 0.0);
  }
  SECTION("bandwidth equals delta tan(2 alpha1) and the damping-sum form") {
    for (double snr : {0.01, 1.0, 100.0, 1e4}) {
      MeasurementParams meas{mu_for_snr(snr, 0.0, 1.0), 1.0};
      FilterParams fp = filter_params(osc, pump, meas);
      CHECK(fp.gamma_f ==
            Catch::Approx(fp.delta * std::tan(2.0 * fp.alpha1)).epsilon(1e-10));
      auto ss = conditional_variances(osc, pump, meas);
      double gf = 1.0 + 2.0 * meas.eta * meas.mu * (ss.cov.v_x + ss.cov.v_y);
      CHECK(fp.gamma_f == Catch::Approx(gf).epsilon(1e-13));
      CHECK(fp.gamma_f == Catch::Approx(0.5 * (fp.gamma_x + fp.gamma_y)));
      // quoted ringing-frequency closed form (needs delta > 0)
      double c2 = std::cos(2.0 * fp.alpha1);
      double printed = delta * delta -
                       chi * chi * c2 * c2 * (1.0 + 1.0 / (delta * delta));
      CHECK(fp.omega_f * fp.omega_f ==
            Catch::Approx(printed).epsilon(1e-9));
      // gain normalization
      double b = std::sqrt(4.0 * meas.eta * meas.mu);
      CHECK(fp.g_xx ==
            Catch::Approx(b * ss.cov.v_x / std::cos(fp.phi)).epsilon(1e-12));
      CHECK(fp.g_yy ==
            Catch::Approx(b * ss.cov.v_y / std::cos(fp.phi)).epsilon(1e-12));
    }
  }
  SECTION("strong measurement: phase offset vanishes, drive drops out") {
    // the drive decouples at relative order chi / (gamma sqrt(SNR))
    double snr = 1e12;
    MeasurementParams meas{mu_for_snr(snr, 0.0, 1.0), 1.0};
    FilterParams weak = filter_params(osc, {5.0, 40.0, 0.0}, meas);
    FilterParams strong = filter_params(osc, {50.0, 400.0, 0.0}, meas);
    CHECK(std::abs(weak.phi) < 1e-5);
    CHECK(std::abs(strong.phi) < 1e-5);
    CHECK(weak.gamma_f == Catch::Approx(strong.gamma_f).epsilon(1e-3));
    CHECK(weak.g_xx == Catch::Approx(strong.g_xx).epsilon(1e-3));
    CHECK(weak.g_yy == Catch::Approx(strong.g_yy).epsilon(1e-3));
  }
  SECTION("bandwidth grows monotonically with SNR") {
    double prev = 0.0;
    for (double ls = -3.0; ls <= 4.01; ls += 0.25) {
      FilterParams fp = filter_params(
          osc, pump, {mu_for_snr(std::pow(10.0, ls), 0.0, 1.0), 1.0});
      CHECK(fp.gamma_f >= prev);
      prev = fp.gamma_f;
    }
  }
  SECTION("per-quadrature dampings: equal in both limits, far apart near SNR = 1 at threshold") {
    double chi_t = 100.0, delta_t = std::sqrt(chi_t * chi_t - 1.0);
    PumpParams at_th{chi_t, delta_t, 0.0};
    auto ratio = [&](double snr) {
      FilterParams fp =
          filter_params(osc, at_th, {mu_for_snr(snr, 0.0, 1.0), 1.0});
      return fp.gamma_y / fp.gamma_x;
    };
    // the bad-measurement-limit approach is slow at threshold (root-root law)
    CHECK(ratio(1e-12) < 1.001);
    CHECK(ratio(1e-6) < ratio(1e-3));
    CHECK(ratio(1.0) > 5.0);
    CHECK(ratio(1e8) < 1.02);
  }
  SECTION("overdamped branch is flagged and kernel form refuses it") {
    FilterParams fp = filter_params(osc, {1.0, 0.3, 0.0}, {0.05, 0.5});
    CHECK_FALSE(fp.underdamped);
    CHECK(has_flag(fp.flags, flag_code::overdamped_filter));
    CHECK_THROWS_AS(kernel_form(fp), unsupported_branch_error);
  }
}

TEST_CASE("state-space filter: free decay matches the exact propagator") {
  OscillatorParams osc{1.0, 0.5, {}};
  double chi = 3.0, delta = 8.0;
  MeasurementParams meas{1.5, 0.8};
  FilterParams fp = filter_params(osc, {chi, delta, 0.0}, meas);

  REQUIRE(fp.underdamped);
  const double period = 2.0 * M_PI / fp.omega_f;
  MeasurementRecord zero;
  zero.dt = period / 200.0;
  zero.dq_x.assign(1000, 0.0);
  zero.dq_y.assign(1000, 0.0);
  EstimatePath est = filter_state_space(zero, fp, 1.0, -0.5);
  REQUIRE(est.x_est.size() == zero.dq_x.size());
  for (std::size_t k : {std::size_t(99), std::size_t(499), std::size_t(999)}) {
    double t = static_cast<double>(k + 1) * zero.dt;
    Mat2 phi = expm_taylor(Mat2{fp.drift.a * t, fp.drift.b * t,
                                fp.drift.c * t, fp.drift.d * t});
    Vec2 exact = mul(phi, Vec2{1.0, -0.5});
    CHECK(est.x_est[k] == Catch::Approx(exact.x).margin(1e-9));
    CHECK(est.y_est[k] == Catch::Approx(exact.y).margin(1e-9));
  }
  // over one full ring period the propagator is a pure contraction by
  // exp(-Gamma T), componentwise
  double contraction = std::exp(-fp.gamma_f * period);
  for (std::size_t k : {std::size_t(100), std::size_t(400)}) {
    CHECK(est.x_est[k + 200] ==
          Catch::Approx(est.x_est[k] * contraction).epsilon(1e-6));
    CHECK(est.y_est[k + 200] ==
          Catch::Approx(est.y_est[k] * contraction).epsilon(1e-6));
  }
}

TEST_CASE("state-space filter enforces its step bound") {
  OscillatorParams osc{1.0, 0.0, {}};
  FilterParams fp = filter_params(osc, {3.0, 8.0, 0.0}, {1.0, 1.0});
  MeasurementRecord rec;
  rec.dt = 0.2;  // dt * |eigenvalue| >= 0.1 here
  rec.dq_x.assign(10, 0.0);
  rec.dq_y.assign(10, 0.0);
  CHECK_THROWS_AS(filter_state_space(rec, fp), validation_error);
}

TEST_CASE("stationary filter reproduces the conditional means from the same record") {
  OscillatorParams osc{1.0, 0.0, {}};
  double chi = 2.0, delta = 5.0;
  MeasurementParams meas{2.0, 0.9};
  auto ss = conditional_variances(osc, {chi, delta, 0.0}, meas);
  PumpParams frame{chi, delta, ss.pump_theta};
  FilterParams fp = filter_params(osc, {chi, delta, 0.0}, meas);

  // start the moments at the settled covariance so gains coincide throughout
  MomentState init{0.0, 0.0, ss.cov};
  double dt0 = 0.5 * max_stable_dt(osc, frame, meas);
  std::size_t n0 = static_cast<std::size_t>(20.0 / dt0);

  double prev_rms = 0.0;
  std::vector<double> rms_list;
  for (int level = 0; level < 3; ++level) {
    double dt = dt0 / std::pow(2.0, level);
    std::size_t n = n0 << level;
    auto sim = simulate_conditional(init, osc, frame, meas, dt, n, 31);
    EstimatePath est = filter_state_space(sim.record, fp);
    double acc = 0.0;
    std::size_t burn = static_cast<std::size_t>(2.0 / fp.gamma_f / dt);
    for (std::size_t k = burn; k <= n; ++k) {
      // trajectory sample k sits at t = k dt, estimate index k-1 likewise
      double dx = est.x_est[k - 1] - sim.trajectory.mean_x[k];
      double dy = est.y_est[k - 1] - sim.trajectory.mean_y[k];
      acc += dx * dx + dy * dy;
    }
    double rms = std::sqrt(acc / static_cast<double>(n - burn + 1));
    rms_list.push_back(rms);
    prev_rms = rms;
  }
  (void)prev_rms;
  // pathwise agreement improves at order >= 1/2 under step halving
  CHECK(rms_list[1] < rms_list[0]);
  CHECK(rms_list[2] < rms_list[1]);
  double order = std::log2(rms_list[0] / rms_list[2]) / 2.0;
  CHECK(order >= 0.45);
  // and the agreement is tight in absolute terms at the finest level
  CHECK(rms_list[2] < 0.05 * std::sqrt(ss.cov.v_y));
}

TEST_CASE("frequency response: closed form vs realization") {
  OscillatorParams osc{1.0, 1.0, {}};
  double chi = 5.0, delta = 20.0;
  MeasurementParams meas{3.0, 0.8};
  FilterParams fp = filter_params(osc, {chi, delta, 0.0}, meas);

  std::vector<double> grid;
  for (double lw = -2.0; lw <= 4.001; lw += 0.05)
    grid.push_back(std::pow(10.0, lw));
  FrequencyResponse closed = frequency_response(fp, grid);
  FrequencyResponse reali = state_space_response(fp, grid);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    auto rel = [](std::complex<double> a, std::complex<double> b) {
      return std::abs(a - b) / std::max(1e-300, std::abs(b));
    };
    CHECK(rel(closed.h_xx[i], reali.h_xx[i]) < 1e-8);
    CHECK(rel(closed.h_xy[i], reali.h_xy[i]) < 1e-8);
    CHECK(rel(closed.h_yx[i], reali.h_yx[i]) < 1e-8);
    CHECK(rel(closed.h_yy[i], reali.h_yy[i]) < 1e-8);
  }

  SECTION("denominator constant term equals Omega^2 + Gamma^2") {
    double den_const = fp.delta * fp.delta - fp.chi * fp.chi +
                       fp.gamma_x * fp.gamma_y +
                       fp.chi_sin_2a * (fp.gamma_y - fp.gamma_x);
    CHECK(den_const == Catch::Approx(fp.omega_f * fp.omega_f +
                                     fp.gamma_f * fp.gamma_f)
                           .epsilon(1e-8));
  }

  SECTION("no drive: two decoupled single poles of width gamma + 4 eta mu V0") {
    MeasurementParams m0{2.0, 0.7};
    FilterParams fp0 = filter_params(osc, {0.0, 0.0, 0.0}, m0);
    double v0 = bare_conditional_variance(osc, m0);
    double width = 1.0 + 4.0 * m0.eta * m0.mu * v0;
    std::vector<double> w{0.3, 2.0, 11.0};
    FrequencyResponse r = frequency_response(fp0, w);
    for (std::size_t i = 0; i < w.size(); ++i) {
      std::complex<double> pole(width, w[i]);
      std::complex<double> expected =
          std::sqrt(4.0 * m0.eta * m0.mu) * v0 / pole;
      CHECK(std::abs(r.h_xx[i] - expected) < 1e-12 * std::abs(expected));
      CHECK(std::abs(r.h_xy[i]) < 1e-14);
    }
  }
}

TEST_CASE("kernel form: discretized convolution tracks the exact realization") {
  OscillatorParams osc{1.0, 0.5, {}};
  double chi = 2.0, delta = 5.0;
  MeasurementParams meas{1.0, 0.9};
  auto ss = conditional_variances(osc, {chi, delta, 0.0}, meas);
  PumpParams frame{chi, delta, ss.pump_theta};
  FilterParams fp = filter_params(osc, {chi, delta, 0.0}, meas);
  KernelForm kf = kernel_form(fp);

  // kernels at zero lag reproduce the injection gains
  CHECK(kf.k_xx(0.0) == Catch::Approx(fp.b_x).epsilon(1e-12));
  CHECK(kf.k_yy(0.0) == Catch::Approx(fp.b_y).epsilon(1e-12));
  CHECK(kf.k_xy(0.0) == 0.0);

  double dt = 1e-3;
  std::size_t n = static_cast<std::size_t>(30.0 / dt);
  auto sim = simulate_conditional(MomentState{0.0, 0.0, ss.cov}, osc, frame,
                                  meas, dt, n, 77);
  EstimatePath exact = filter_state_space(sim.record, fp);
  EstimatePath conv = apply_kernels(sim.record, kf, 1e-9);

  REQUIRE(conv.x_est.size() == n);
  double acc = 0.0, ref = 0.0;
  std::size_t burn = static_cast<std::size_t>(2.0 / fp.gamma_f / dt);
  for (std::size_t k = burn; k < n; ++k) {
    acc += (conv.x_est[k] - exact.x_est[k]) * (conv.x_est[k] - exact.x_est[k]) +
           (conv.y_est[k] - exact.y_est[k]) * (conv.y_est[k] - exact.y_est[k]);
    ref += exact.x_est[k] * exact.x_est[k] + exact.y_est[k] * exact.y_est[k];
  }
  CHECK(std::sqrt(acc / ref) < 1e-3);
}

TEST_CASE("ensemble mean-square error approaches the conditional variances (smoke)") {
  // undriven case: gamma = 1, eta = 1, mu = 1 gives SNR = 2, V0 = 1/2
  OscillatorParams osc{1.0, 0.0, {}};
  PumpParams pump{0.0, 0.0, 0.0};
  MeasurementParams meas{1.0, 1.0};
  FilterParams fp = filter_params(osc, pump, meas);

  EnsembleConfig cfg;
  cfg.n_trajectories = 150;
  cfg.horizon_bandwidths = 120.0;
  cfg.burn_bandwidths = 10.0;
  cfg.seed = 99;
  EnsembleResult er = filter_mse_ensemble(osc, pump, meas, fp, cfg);
  REQUIRE(er.failures == 0);
  MseStats mx = mse_stats_x(er.trajectories);
  CHECK(mx.mean == Catch::Approx(0.5).epsilon(0.1));

  // local optimality: rescaling the gains by +-10% cannot beat the filter
  MseStats up = mse_stats_x(er.trajectories, 1.1);
  MseStats down = mse_stats_x(er.trajectories, 0.9);
  CHECK(up.mean >= mx.mean - 2.0 * mx.std_error);
  CHECK(down.mean >= mx.mean - 2.0 * mx.std_error);
}

TEST_CASE("kernel window edge cases") {
  OscillatorParams osc{1.0, 0.0, {}};
  FilterParams fp = filter_params(osc, {1.0, 4.0, 0.0}, {1.0, 1.0});
  KernelForm kf = kernel_form(fp);
  MeasurementRecord rec;
  rec.dt = 1e-3;
  rec.dq_x.assign(50, 0.01);  // record shorter than any truncation window
  rec.dq_y.assign(50, -0.01);
  EstimatePath a = apply_kernels(rec, kf, 1e-12);
  EstimatePath b = apply_kernels(rec, kf, 0.5);  // aggressive truncation
  REQUIRE(a.x_est.size() == 50);
  CHECK(a.x_est[0] == Catch::Approx(kf.k_xx(0.0) * 0.01 + kf.k_xy(0.0) * -0.01));
  // truncation only drops exponentially small tail contributions
  CHECK(a.x_est[49] == Catch::Approx(b.x_est[49]).epsilon(0.5));
}

TEST_CASE("ensemble statistics are independent of the worker count") {
  OscillatorParams osc{1.0, 0.0, {}};
  PumpParams pump{1.0, 3.0, 0.0};
  MeasurementParams meas{1.0, 0.9};
  FilterParams fp = filter_params(osc, pump, meas);
  EnsembleConfig cfg;
  cfg.n_trajectories = 24;
  cfg.horizon_bandwidths = 30.0;
  cfg.burn_bandwidths = 5.0;
  cfg.seed = 17;
  setenv("SQUEEZEBAND_THREADS", "1", 1);
  EnsembleResult serial = filter_mse_ensemble(osc, pump, meas, fp, cfg);
  setenv("SQUEEZEBAND_THREADS", "4", 1);
  EnsembleResult threaded = filter_mse_ensemble(osc, pump, meas, fp, cfg);
  unsetenv("SQUEEZEBAND_THREADS");
  REQUIRE(serial.trajectories.size() == threaded.trajectories.size());
  for (std::size_t i = 0; i < serial.trajectories.size(); ++i) {
    CHECK(serial.trajectories[i].sxx == threaded.trajectories[i].sxx);
    CHECK(serial.trajectories[i].sxh == threaded.trajectories[i].sxh);
    CHECK(serial.trajectories[i].syy == threaded.trajectories[i].syy);
  }
}

TEST_CASE("ensemble rejects configurations without information") {
  OscillatorParams osc{1.0, 0.0, {}};
  PumpParams pump{0.0, 0.0, 0.0};
  FilterParams fp = filter_params(osc, pump, {1.0, 1.0});
  fp.b_x = 0.0;  // emulate eta = 0 gains
  EnsembleConfig cfg;
  CHECK_THROWS_AS(filter_mse_ensemble(osc, pump, {1.0, 0.0}, fp, cfg),
                  validation_error);
}
