#include <catch2/catch_amalgamated.hpp>

#include "squeezeband/params.hpp"
#include "squeezeband/rng.hpp"

using namespace squeezeband;

TEST_CASE("measurement rate from cavity parameters") {
  CHECK(measurement_rate_from_cavity({1.0, 1.0, 8.0, 1.0}).value ==
        Catch::Approx(1.0));
  CHECK(measurement_rate_from_cavity({2.0, 1.0, 8.0, 1.0}).value ==
        Catch::Approx(4.0));

  // linear in the photon number
  RandomStream rng(7);
  for (int i = 0; i < 50; ++i) {
    CavityParams cav{0.1 + rng.next_uniform(), 0.1 + 10.0 * rng.next_uniform(),
                     0.1 + 5.0 * rng.next_uniform(), 0.1 + rng.next_uniform()};
    CavityParams doubled = cav;
    doubled.nbar *= 2.0;
    CHECK(measurement_rate_from_cavity(doubled).value ==
          Catch::Approx(2.0 * measurement_rate_from_cavity(cav).value));
  }

  CHECK_THROWS_AS(measurement_rate_from_cavity({0.0, 1.0, 1.0, 1.0}),
                  validation_error);
  CHECK_THROWS_AS(measurement_rate_from_cavity({1.0, 1.0, -1.0, 1.0}),
                  validation_error);

  // bad-cavity validity flag needs omega_m
  auto flagged_rate = measurement_rate_from_cavity({1.0, 1.0, 5.0, 1.0}, 2.0);
  CHECK(has_flag(flagged_rate.flags, flag_code::bad_cavity_violated));
  auto ok_rate = measurement_rate_from_cavity({1.0, 1.0, 50.0, 1.0}, 2.0);
  CHECK_FALSE(has_flag(ok_rate.flags, flag_code::bad_cavity_violated));
}

TEST_CASE("drive strength from spring-constant modulation") {
  CHECK(chi_from_spring(123.0, 0.0, 1.0).value == 0.0);
  CHECK(chi_from_spring(1e6, 1e-4, 1.0).value == Catch::Approx(50.0));

  // linear in k_r at fixed k_0
  for (double kr : {0.1, 0.2, 0.4}) {
    CHECK(chi_from_spring(10.0, 2.0 * kr, 3.0).value ==
          Catch::Approx(2.0 * chi_from_spring(10.0, kr, 3.0).value));
  }

  CHECK_THROWS_AS(chi_from_spring(1.0, 0.5, 0.0), validation_error);
  CHECK_THROWS_AS(chi_from_spring(1.0, -0.5, 1.0), validation_error);
  CHECK(has_flag(chi_from_spring(1.0, 2.0, 1.0).flags,
                 flag_code::kr_exceeds_k0));
}

TEST_CASE("derived quantities: frozen examples") {
  OscillatorParams osc{1.0, 0.0, {}};

  SECTION("no bath, no measurement") {
    auto d = derived_quantities(osc, PumpParams{}, MeasurementParams{0.0, 1.0});
    CHECK(d.v_t == 0.5);
    CHECK(d.n_ba == 0.0);
    CHECK(d.snr == 0.0);
  }
  SECTION("unit measurement rate") {
    auto d = derived_quantities(osc, PumpParams{}, MeasurementParams{1.0, 1.0});
    CHECK(d.snr == Catch::Approx(2.0).epsilon(1e-14));  // 2*(1/2)*1 + 1
  }
  SECTION("threshold at unit detuning") {
    auto d = derived_quantities(osc, PumpParams{0.0, 1.0, 0.0},
                                MeasurementParams{0.0, 1.0});
    CHECK(d.chi_th == Catch::Approx(std::sqrt(2.0)).epsilon(1e-15));
  }
  SECTION("elliptical frequency defined only for chi^2 < delta^2") {
    auto d1 = derived_quantities(osc, PumpParams{3.0, 5.0, 0.0},
                                 MeasurementParams{0.0, 1.0});
    REQUIRE(d1.omega_e.has_value());
    CHECK(*d1.omega_e == Catch::Approx(4.0).epsilon(1e-14));
    auto d2 = derived_quantities(osc, PumpParams{5.0, 3.0, 0.0},
                                 MeasurementParams{0.0, 1.0});
    CHECK_FALSE(d2.omega_e.has_value());
    auto d3 = derived_quantities(osc, PumpParams{3.0, 3.0, 0.0},
                                 MeasurementParams{0.0, 1.0});
    CHECK_FALSE(d3.omega_e.has_value());
  }
}

TEST_CASE("snr decomposition holds to machine precision") {
  RandomStream rng(11);
  for (int i = 0; i < 200; ++i) {
    double gamma = 0.1 + 10.0 * rng.next_uniform();
    double n = 100.0 * rng.next_uniform();
    double mu = 50.0 * rng.next_uniform() * gamma;
    double eta = rng.next_uniform();
    auto d = derived_quantities({gamma, n, {}}, PumpParams{},
                                MeasurementParams{mu, eta});
    double decomposed = 2.0 * eta * mu * (n + 0.5) / gamma +
                        eta * mu * mu / (gamma * gamma);
    CHECK(d.snr == Catch::Approx(decomposed).epsilon(1e-12).margin(1e-300));
  }
}

TEST_CASE("threshold behavior") {
  OscillatorParams osc{1.0, 0.0, {}};
  CHECK(chi_threshold(osc, PumpParams{0.0, 0.0, 0.0}) == 1.0);
  // monotone in |delta|
  double prev = 0.0;
  for (double delta : {0.0, 0.5, 1.0, 2.0, 10.0}) {
    double th = chi_threshold(osc, PumpParams{0.0, delta, 0.0});
    CHECK(th >= prev);
    prev = th;
    CHECK(th == chi_threshold(osc, PumpParams{0.0, -delta, 0.0}));
  }
  // rsb threshold reduces to the bare one at mu = 0 and grows with mu
  for (double delta : {0.0, 2.0}) {
    PumpParams pump{0.0, delta, 0.0};
    CHECK(rsb_threshold(osc, pump, MeasurementParams{0.0, 1.0}) ==
          chi_threshold(osc, pump));
    double last = 0.0;
    for (double mu : {0.0, 0.5, 1.0, 2.0, 8.0}) {
      double th = rsb_threshold(osc, pump, MeasurementParams{mu, 1.0});
      CHECK(th >= last);
      last = th;
    }
  }
  CHECK(rsb_threshold(osc, PumpParams{0.0, 0.0, 0.0},
                      MeasurementParams{2.0, 1.0}) == Catch::Approx(2.0));
}

TEST_CASE("joint rescaling leaves dimensionless outputs invariant") {
  RandomStream rng(3);
  for (int i = 0; i < 100; ++i) {
    double gamma = 0.2 + 5.0 * rng.next_uniform();
    double n = 30.0 * rng.next_uniform();
    double chi = 3.0 * gamma * rng.next_uniform();
    double delta = 5.0 * gamma * (rng.next_uniform() - 0.3);
    double mu = 4.0 * gamma * rng.next_uniform();
    double eta = rng.next_uniform();
    double s = 0.01 + 100.0 * rng.next_uniform();

    auto d1 = derived_quantities({gamma, n, {}}, {chi, delta, 0.3},
                                 {mu, eta});
    auto d2 = derived_quantities({s * gamma, n, {}},
                                 {s * chi, s * delta, 0.3}, {s * mu, eta});
    CHECK(d2.n_ba == Catch::Approx(d1.n_ba).epsilon(1e-12));
    CHECK(d2.v_t == d1.v_t);
    CHECK(d2.snr == Catch::Approx(d1.snr).epsilon(1e-12).margin(1e-300));
    CHECK(d2.chi_th == Catch::Approx(s * d1.chi_th).epsilon(1e-12));
    if (d1.omega_e)
      CHECK(*d2.omega_e == Catch::Approx(s * *d1.omega_e).epsilon(1e-12));
  }
}

TEST_CASE("parameter validation") {
  CHECK_THROWS_AS(validate(OscillatorParams{0.0, 0.0, {}}), validation_error);
  CHECK_THROWS_AS(validate(OscillatorParams{-1.0, 0.0, {}}), validation_error);
  CHECK_THROWS_AS(validate(OscillatorParams{1.0, -0.1, {}}), validation_error);
  CHECK_THROWS_AS(validate(MeasurementParams{-1.0, 0.5}), validation_error);
  CHECK_THROWS_AS(validate(MeasurementParams{1.0, 1.5}), validation_error);
  CHECK_THROWS_AS(validate(MeasurementParams{1.0, -0.1}), validation_error);
  CHECK_THROWS_AS(validate(PumpParams{-1.0, 0.0, 0.0}), validation_error);

  // validity warnings
  auto flags = validate(OscillatorParams{1.0, 0.0, 5.0});
  CHECK(has_flag(flags, flag_code::rwa_omega_m_comparable));
  OscillatorParams osc{1.0, 0.0, 1000.0};
  CHECK(has_flag(validate(MeasurementParams{200.0, 1.0}, osc),
                 flag_code::rwa_mu_large));
  CHECK_FALSE(has_flag(validate(MeasurementParams{10.0, 1.0}, osc),
                       flag_code::rwa_mu_large));
  CHECK(has_flag(validate(PumpParams{200.0, 0.0, 0.0}, osc),
                 flag_code::rwa_chi_large));
}

TEST_CASE("pump phase is canonical modulo pi") {
  constexpr double pi = 3.14159265358979323846;
  CHECK(canonical_theta(0.0) == 0.0);
  CHECK(canonical_theta(0.3) == Catch::Approx(0.3));
  CHECK(canonical_theta(0.3 + pi) == Catch::Approx(0.3).epsilon(1e-12));
  CHECK(canonical_theta(-0.3) == Catch::Approx(pi - 0.3).epsilon(1e-12));
  CHECK(canonical_theta(5.0 * pi + 0.1) == Catch::Approx(0.1).epsilon(1e-9));
  double t = canonical_theta(-7.123);
  CHECK(t >= 0.0);
  CHECK(t < pi);
}
