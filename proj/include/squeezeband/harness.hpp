#pragma once

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "squeezeband/csv.hpp"
#include "squeezeband/filter.hpp"
#include "squeezeband/ode.hpp"
#include "squeezeband/parallel.hpp"
#include "squeezeband/sde.hpp"
#include "squeezeband/steady_state.hpp"
#include "squeezeband/verify.hpp"

// Configuration-driven front end shared by the CLI and the test suite.
// Configs are a single JSON document; unless a gamma field says otherwise all
// rates are expressed in units of gamma. Identical config + seed produces
// byte-identical CSV/JSON outputs.

namespace squeezeband::harness {

using json = nlohmann::ordered_json;

class config_error : public error {
 public:
  explicit config_error(const std::string& what) : error(what) {}
};

namespace detail2 {

inline void require_keys(const json& j, const char* where,
                         std::initializer_list<const char*> allowed) {
  if (!j.is_object())
    throw config_error(std::string(where) + ": expected a JSON object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    bool ok = false;
    for (const char* k : allowed)
      if (it.key() == k) {
        ok = true;
        break;
      }
    if (!ok)
      throw config_error(std::string(where) + ": unknown key '" + it.key() +
                         "'");
  }
}

inline double get_number(const json& j, const char* where) {
  if (!j.is_number())
    throw config_error(std::string(where) + ": expected a number");
  return j.get<double>();
}

}  // namespace detail2

// Detuning may be a plain number (units of gamma) or one of the figure
// conventions: "at-threshold" places the drive exactly at threshold
// (delta = sqrt(chi^2 - gamma^2)); "detuned-by-gamma" places it gamma below
// threshold (chi_th = chi + gamma).
struct DeltaSpec {
  enum class Kind { value, at_threshold, detuned_by_gamma } kind = Kind::value;
  double value = 0.0;

  double resolve(double chi_over_gamma) const {
    switch (kind) {
      case Kind::value:
        return value;
      case Kind::at_threshold:
        if (chi_over_gamma < 1.0)
          throw config_error(
              "delta 'at-threshold' requires chi >= gamma (chi_th >= gamma "
              "always)");
        return std::sqrt((chi_over_gamma - 1.0) * (chi_over_gamma + 1.0));
      case Kind::detuned_by_gamma:
        return std::sqrt(chi_over_gamma * (chi_over_gamma + 2.0));
    }
    return 0.0;
  }
};

struct ModelConfig {
  double gamma = 1.0;
  double n = 0.0;
  std::optional<double> omega_m{};
  double chi = 0.0;
  DeltaSpec delta{};
  double theta = squeezeband::detail::quarter_pi;
  std::optional<double> mu{};
  std::optional<double> snr{};
  double eta = 1.0;

  ModelParams resolve() const {
    ModelParams p;
    p.osc.gamma = gamma;
    p.osc.bath_phonons = n;
    if (omega_m) p.osc.omega_m = *omega_m * gamma;
    p.pump.chi = chi * gamma;
    p.pump.delta = delta.resolve(chi) * gamma;
    p.pump.theta = theta;
    p.meas.eta = eta;
    if (mu && snr)
      throw config_error("model: specify exactly one of 'mu' and 'snr'");
    if (mu) {
      p.meas.mu = *mu * gamma;
    } else if (snr) {
      // solve eta m^2 + 2 eta V_T m = snr for m = mu/gamma
      if (!(eta > 0.0))
        throw config_error("model: 'snr' needs eta > 0 to determine mu");
      if (!(*snr >= 0.0)) throw config_error("model: 'snr' must be >= 0");
      double v_t = n + 0.5;
      double mu_over_gamma = std::sqrt(v_t * v_t + *snr / eta) - v_t;
      p.meas.mu = mu_over_gamma * gamma;
    } else {
      p.meas.mu = 0.0;
    }
    return p;
  }
};

inline ModelConfig parse_model(const json& j) {
  detail2::require_keys(j, "model",
                        {"gamma", "n", "omega_m", "chi", "delta", "theta",
                         "mu", "snr", "eta"});
  ModelConfig m;
  if (j.contains("gamma")) m.gamma = detail2::get_number(j["gamma"], "model.gamma");
  if (j.contains("n")) m.n = detail2::get_number(j["n"], "model.n");
  if (j.contains("omega_m") && !j["omega_m"].is_null())
    m.omega_m = detail2::get_number(j["omega_m"], "model.omega_m");
  if (j.contains("chi")) m.chi = detail2::get_number(j["chi"], "model.chi");
  if (j.contains("delta") && !j["delta"].is_null()) {
    const json& d = j["delta"];
    if (d.is_string()) {
      std::string s = d.get<std::string>();
      if (s == "at-threshold")
        m.delta.kind = DeltaSpec::Kind::at_threshold;
      else if (s == "detuned-by-gamma")
        m.delta.kind = DeltaSpec::Kind::detuned_by_gamma;
      else
        throw config_error("model.delta: unknown convention '" + s +
                           "' (use a number, \"at-threshold\" or "
                           "\"detuned-by-gamma\")");
    } else {
      m.delta.kind = DeltaSpec::Kind::value;
      m.delta.value = detail2::get_number(d, "model.delta");
    }
  }
  if (j.contains("theta")) m.theta = detail2::get_number(j["theta"], "model.theta");
  if (j.contains("mu") && !j["mu"].is_null())
    m.mu = detail2::get_number(j["mu"], "model.mu");
  if (j.contains("snr") && !j["snr"].is_null())
    m.snr = detail2::get_number(j["snr"], "model.snr");
  if (j.contains("eta")) m.eta = detail2::get_number(j["eta"], "model.eta");
  return m;
}

struct SweepAxis {
  std::string param;  // chi | delta | theta | mu | eta | n | snr
  bool log_scale = false;
  double min = 0.0;
  double max = 0.0;
  std::size_t count = 0;

  std::vector<double> grid() const {
    if (count == 0) throw config_error("sweep axis: count must be >= 1");
    std::vector<double> g(count);
    if (count == 1) {
      g[0] = min;
      return g;
    }
    if (log_scale) {
      if (!(min > 0.0) || !(max > 0.0))
        throw config_error("sweep axis '" + param +
                           "': log scale needs positive bounds");
      double l0 = std::log(min), l1 = std::log(max);
      for (std::size_t i = 0; i < count; ++i)
        g[i] = std::exp(l0 + (l1 - l0) * static_cast<double>(i) /
                                 static_cast<double>(count - 1));
    } else {
      for (std::size_t i = 0; i < count; ++i)
        g[i] = min + (max - min) * static_cast<double>(i) /
                         static_cast<double>(count - 1);
    }
    return g;
  }
};

struct RunConfig {
  ModelConfig model;
  // sweep
  std::vector<SweepAxis> sweep_axes;
  bool allow_divergence = false;
  // simulate
  double sim_dt = 0.0;  // 0 = derive from the step rule
  std::size_t sim_steps = 20000;
  std::size_t store_every = 1;
  bool with_truth = false;
  bool with_estimates = false;
  // filter-verify
  std::size_t n_trajectories = 500;
  double horizon_bandwidths = 200.0;
  double burn_bandwidths = 10.0;
  double dt_factor = 0.5;
  double tolerance = 0.05;
  // figure
  std::string figure = "fig2";
  std::size_t snr_points = 141;
  double snr_min = 1e-3, snr_max = 1e4;
  std::size_t mu_points = 101;
  double mu_min = 1e-2, mu_max = 1e2;
  std::size_t n_points = 101;
  double n_max = 10.0;
  double fig5_n = 0.0;
  // steady-state extras
  bool include_rsb = false;
  std::optional<SweepAxis> response_grid{};
  // common
  std::optional<std::uint64_t> seed{};
  std::string out = "out";
};

inline SweepAxis parse_axis(const json& j, const char* where) {
  detail2::require_keys(j, where, {"param", "scale", "min", "max", "count"});
  SweepAxis ax;
  if (!j.contains("param") || !j["param"].is_string())
    throw config_error(std::string(where) + ": 'param' (string) is required");
  ax.param = j["param"].get<std::string>();
  static const char* known[] = {"chi", "delta", "theta", "mu", "eta", "n", "snr"};
  bool ok = false;
  for (const char* k : known)
    if (ax.param == k) ok = true;
  if (!ok)
    throw config_error(std::string(where) + ": unknown parameter '" +
                       ax.param + "'");
  if (j.contains("scale")) {
    std::string s = j["scale"].get<std::string>();
    if (s == "log")
      ax.log_scale = true;
    else if (s != "linear")
      throw config_error(std::string(where) + ": scale must be linear|log");
  }
  if (!j.contains("min") || !j.contains("max") || !j.contains("count"))
    throw config_error(std::string(where) + ": min, max, count are required");
  ax.min = detail2::get_number(j["min"], "axis.min");
  ax.max = detail2::get_number(j["max"], "axis.max");
  ax.count = j["count"].get<std::size_t>();
  return ax;
}

inline RunConfig parse_config(const json& j) {
  detail2::require_keys(j, "config",
                        {"mode", "model", "sweep", "simulate", "filter_verify",
                         "figure", "steady_state", "seed", "out"});
  RunConfig cfg;
  if (j.contains("model")) cfg.model = parse_model(j["model"]);
  if (j.contains("sweep")) {
    detail2::require_keys(j["sweep"], "sweep", {"axes", "allow_divergence"});
    if (j["sweep"].contains("axes")) {
      const json& axes = j["sweep"]["axes"];
      if (!axes.is_array() || axes.empty())
        throw config_error("sweep.axes: expected a nonempty array");
      for (const auto& a : axes) cfg.sweep_axes.push_back(parse_axis(a, "sweep.axes"));
    }
    if (j["sweep"].contains("allow_divergence"))
      cfg.allow_divergence = j["sweep"]["allow_divergence"].get<bool>();
  }
  if (j.contains("simulate")) {
    const json& s = j["simulate"];
    detail2::require_keys(s, "simulate",
                          {"dt", "n_steps", "store_every", "with_truth",
                           "with_estimates"});
    if (s.contains("dt") && !s["dt"].is_null())
      cfg.sim_dt = detail2::get_number(s["dt"], "simulate.dt");
    if (s.contains("n_steps")) cfg.sim_steps = s["n_steps"].get<std::size_t>();
    if (s.contains("store_every"))
      cfg.store_every = s["store_every"].get<std::size_t>();
    if (s.contains("with_truth")) cfg.with_truth = s["with_truth"].get<bool>();
    if (s.contains("with_estimates"))
      cfg.with_estimates = s["with_estimates"].get<bool>();
  }
  if (j.contains("filter_verify")) {
    const json& f = j["filter_verify"];
    detail2::require_keys(f, "filter_verify",
                          {"n_trajectories", "horizon_bandwidths",
                           "burn_bandwidths", "dt_factor", "tolerance"});
    if (f.contains("n_trajectories"))
      cfg.n_trajectories = f["n_trajectories"].get<std::size_t>();
    if (f.contains("horizon_bandwidths"))
      cfg.horizon_bandwidths =
          detail2::get_number(f["horizon_bandwidths"], "horizon_bandwidths");
    if (f.contains("burn_bandwidths"))
      cfg.burn_bandwidths =
          detail2::get_number(f["burn_bandwidths"], "burn_bandwidths");
    if (f.contains("dt_factor"))
      cfg.dt_factor = detail2::get_number(f["dt_factor"], "dt_factor");
    if (f.contains("tolerance"))
      cfg.tolerance = detail2::get_number(f["tolerance"], "tolerance");
  }
  if (j.contains("figure")) {
    const json& f = j["figure"];
    detail2::require_keys(f, "figure",
                          {"which", "snr_points", "snr_min", "snr_max",
                           "mu_points", "mu_min", "mu_max", "n_points", "n_max",
                           "n"});
    if (f.contains("which")) cfg.figure = f["which"].get<std::string>();
    if (f.contains("snr_points")) cfg.snr_points = f["snr_points"].get<std::size_t>();
    if (f.contains("snr_min")) cfg.snr_min = detail2::get_number(f["snr_min"], "snr_min");
    if (f.contains("snr_max")) cfg.snr_max = detail2::get_number(f["snr_max"], "snr_max");
    if (f.contains("mu_points")) cfg.mu_points = f["mu_points"].get<std::size_t>();
    if (f.contains("mu_min")) cfg.mu_min = detail2::get_number(f["mu_min"], "mu_min");
    if (f.contains("mu_max")) cfg.mu_max = detail2::get_number(f["mu_max"], "mu_max");
    if (f.contains("n_points")) cfg.n_points = f["n_points"].get<std::size_t>();
    if (f.contains("n_max")) cfg.n_max = detail2::get_number(f["n_max"], "n_max");
    if (f.contains("n")) cfg.fig5_n = detail2::get_number(f["n"], "figure.n");
  }
  if (j.contains("steady_state")) {
    const json& s = j["steady_state"];
    detail2::require_keys(s, "steady_state", {"include_rsb", "frequency_response"});
    if (s.contains("include_rsb")) cfg.include_rsb = s["include_rsb"].get<bool>();
    if (s.contains("frequency_response")) {
      SweepAxis ax = parse_axis(s["frequency_response"], "frequency_response");
      cfg.response_grid = ax;
    }
  }
  if (j.contains("seed") && !j["seed"].is_null())
    cfg.seed = j["seed"].get<std::uint64_t>();
  if (j.contains("out")) cfg.out = j["out"].get<std::string>();
  return cfg;
}

inline RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw config_error("cannot open config file: " + path);
  json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config parse error: " + std::string(e.what()));
  }
  try {
    return parse_config(j);
  } catch (const nlohmann::json::exception& e) {
    throw config_error("config error: " + std::string(e.what()));
  }
}

inline std::string flags_to_string(const flag_list& flags) {
  std::string s;
  for (const auto& f : flags) {
    if (!s.empty()) s += ';';
    switch (f.code) {
      case flag_code::rwa_omega_m_comparable: s += "rwa-omega-m"; break;
      case flag_code::rwa_mu_large: s += "rwa-mu"; break;
      case flag_code::rwa_chi_large: s += "rwa-chi"; break;
      case flag_code::bad_cavity_violated: s += "bad-cavity"; break;
      case flag_code::kr_exceeds_k0: s += "kr-exceeds-k0"; break;
      case flag_code::overdamped_filter: s += "overdamped-filter"; break;
      case flag_code::resonant_drive_angle: s += "resonant-drive-angle"; break;
      case flag_code::covariance_clamped: s += "covariance-clamped"; break;
    }
  }
  return s;
}

// ---------------------------------------------------------------------------
// sweep

inline Dataset run_sweep(const RunConfig& cfg) {
  if (cfg.sweep_axes.empty())
    throw config_error("sweep: at least one axis is required");
  std::vector<std::vector<double>> grids;
  std::size_t total = 1;
  for (const auto& ax : cfg.sweep_axes) {
    grids.push_back(ax.grid());
    total *= grids.back().size();
  }

  Dataset ds;
  ds.name = "sweep";
  ds.header = {"gamma", "n",  "chi",    "delta", "theta", "mu",
               "eta",   "snr", "chi_th", "n_ba",  "v_t",   "v_x",
               "v_y",   "alpha1", "v0", "flags", "error"};

  struct Row {
    std::vector<Cell> cells;
  };
  std::vector<Row> rows(total);

  auto point_model = [&](std::size_t flat) {
    ModelConfig m = cfg.model;
    std::size_t rem = flat;
    for (std::size_t a = cfg.sweep_axes.size(); a-- > 0;) {
      double v = grids[a][rem % grids[a].size()];
      rem /= grids[a].size();
      const std::string& p = cfg.sweep_axes[a].param;
      if (p == "chi") m.chi = v;
      else if (p == "delta") { m.delta.kind = DeltaSpec::Kind::value; m.delta.value = v; }
      else if (p == "theta") m.theta = v;
      else if (p == "mu") { m.mu = v; m.snr.reset(); }
      else if (p == "eta") m.eta = v;
      else if (p == "n") m.n = v;
      else if (p == "snr") { m.snr = v; m.mu.reset(); }
    }
    return m;
  };

  if (!cfg.allow_divergence) {
    for (std::size_t i = 0; i < total; ++i) {
      ModelParams p = point_model(i).resolve();
      NormalizedModel nm = normalize(p);
      if (nm.chi > nm.chi_th() * (1.0 + 1e-9))
        throw config_error(
            "sweep: grid point " + std::to_string(i) +
            " is above threshold (chi/gamma=" + format_double(nm.chi) +
            ", chi_th/gamma=" + format_double(nm.chi_th()) +
            "); set sweep.allow_divergence to record such points as errors");
    }
  }

  parallel_for(total, [&](std::size_t i) {
    ModelConfig mc = point_model(i);
    std::vector<Cell>& c = rows[i].cells;
    try {
      ModelParams p = mc.resolve();
      DerivedQuantities d = derived_quantities(p.osc, p.pump, p.meas);
      ConditionalSteadyState ss = conditional_variances(p.osc, p.pump, p.meas);
      c = {p.osc.gamma,     p.osc.bath_phonons, p.pump.chi,
           p.pump.delta,    p.pump.theta,       p.meas.mu,
           p.meas.eta,      d.snr,              d.chi_th,
           d.n_ba,          d.v_t,              ss.cov.v_x,
           ss.cov.v_y,      ss.squeezing.angle, ss.v0,
           flags_to_string(ss.flags),           std::string()};
    } catch (const error& e) {
      // echo the requested inputs even when they cannot be resolved
      std::string msg = e.what();
      double delta = 0.0, mu = mc.mu ? *mc.mu * mc.gamma : 0.0;
      try {
        delta = mc.delta.resolve(mc.chi) * mc.gamma;
      } catch (const error&) {
      }
      c = {mc.gamma,  mc.n, mc.chi * mc.gamma, delta,
           mc.theta,  mu,   mc.eta,            0.0,
           0.0,       0.0,  0.0,               0.0,
           0.0,       0.0,  0.0,               std::string(),
           std::string(msg)};
    }
  });

  for (auto& r : rows) ds.add_row(std::move(r.cells));
  return ds;
}

// ---------------------------------------------------------------------------
// figures

namespace detail2 {

inline std::vector<double> log_grid(double lo, double hi, std::size_t count) {
  SweepAxis ax;
  ax.param = "grid";
  ax.log_scale = true;
  ax.min = lo;
  ax.max = hi;
  ax.count = count;
  return ax.grid();
}

// mu/gamma realizing a target SNR at given (N, eta).
inline double mu_for_snr(double snr, double n, double eta) {
  double v_t = n + 0.5;
  return std::sqrt(v_t * v_t + snr / eta) - v_t;
}

}  // namespace detail2

// Antisqueezing angle and squeezing ratio vs SNR, for chi in {10, 100} gamma
// at both detuning conventions. All columns are realization-independent
// (they depend on chi/gamma, delta/gamma and SNR only).
inline Dataset figure2(const RunConfig& cfg) {
  Dataset ds;
  ds.name = "fig2";
  ds.header = {"snr",    "chi_over_gamma", "detuning",      "delta_over_gamma",
               "chi_th_over_gamma", "alpha0", "alpha1",     "v_x_over_m",
               "v0_over_m",         "vx_over_v0"};
  std::vector<double> snr_grid =
      detail2::log_grid(cfg.snr_min, cfg.snr_max, cfg.snr_points);
  const double chis[] = {10.0, 100.0};
  const char* convs[] = {"at-threshold", "detuned-by-gamma"};
  for (double chi : chis) {
    for (const char* conv : convs) {
      DeltaSpec dsp;
      dsp.kind = (std::string(conv) == "at-threshold")
                     ? DeltaSpec::Kind::at_threshold
                     : DeltaSpec::Kind::detuned_by_gamma;
      double delta = dsp.resolve(chi);
      double chi_th = std::hypot(1.0, delta);
      double alpha0 = 0.5 * std::atan2(1.0, delta);
      for (double snr : snr_grid) {
        double mu = detail2::mu_for_snr(snr, 0.0, 1.0);
        OscillatorParams osc{1.0, 0.0, {}};
        PumpParams pump{chi, delta, 0.0};
        MeasurementParams meas{mu, 1.0};
        ConditionalSteadyState ss = conditional_variances(osc, pump, meas);
        double m = 0.5 + 0.5 * mu;  // V_T + N_BA for the (N=0, eta=1) realization
        ds.add_row({snr, chi, std::string(conv), delta, chi_th, alpha0,
                    ss.squeezing.angle, ss.cov.v_x / m, ss.v0 / m,
                    ss.cov.v_x / ss.v0});
      }
    }
  }
  return ds;
}

// Conditional variance over thermal variance vs SNR at chi = 100 gamma,
// at-threshold detuning, eta = 1, for N in {100, 1, 0}; plus the undriven
// curves V0/V_T.
inline Dataset figure3(const RunConfig& cfg) {
  Dataset ds;
  ds.name = "fig3";
  ds.header = {"snr", "n",  "mu_over_gamma", "chi_over_gamma",
               "delta_over_gamma", "v_t", "v_x", "v0",
               "v_x_over_vt",      "v0_over_vt"};
  std::vector<double> snr_grid =
      detail2::log_grid(cfg.snr_min, cfg.snr_max, cfg.snr_points);
  const double chi = 100.0;
  DeltaSpec dsp;
  dsp.kind = DeltaSpec::Kind::at_threshold;
  double delta = dsp.resolve(chi);
  for (double n : {100.0, 1.0, 0.0}) {
    for (double snr : snr_grid) {
      double mu = detail2::mu_for_snr(snr, n, 1.0);
      OscillatorParams osc{1.0, n, {}};
      PumpParams pump{chi, delta, 0.0};
      MeasurementParams meas{mu, 1.0};
      ConditionalSteadyState ss = conditional_variances(osc, pump, meas);
      double v_t = n + 0.5;
      ds.add_row({snr, n, mu, chi, delta, v_t, ss.cov.v_x, ss.v0,
                  ss.cov.v_x / v_t, ss.v0 / v_t});
    }
  }
  return ds;
}

// Quantum-squeezing map V_X/V_g over the (N, mu/gamma) plane at
// chi = delta = 100 gamma, eta = 1, plus the back-action boundary overlay
// mu/gamma = N + 1/2.
inline std::vector<Dataset> figure4(const RunConfig& cfg) {
  Dataset grid;
  grid.name = "fig4_grid";
  grid.header = {"n", "mu_over_gamma", "chi_over_gamma", "delta_over_gamma",
                 "eta", "snr", "v_x", "v_x_over_vg"};
  // N axis: log-like grid with 0 attached as a linear segment start
  std::vector<double> n_grid;
  n_grid.push_back(0.0);
  if (cfg.n_points > 1) {
    auto tail = detail2::log_grid(1e-2, cfg.n_max, cfg.n_points - 1);
    n_grid.insert(n_grid.end(), tail.begin(), tail.end());
  }
  std::vector<double> mu_grid =
      detail2::log_grid(cfg.mu_min, cfg.mu_max, cfg.mu_points);
  const double chi = 100.0, delta = 100.0;
  for (double n : n_grid) {
    for (double mu : mu_grid) {
      OscillatorParams osc{1.0, n, {}};
      PumpParams pump{chi, delta, 0.0};
      MeasurementParams meas{mu, 1.0};
      ConditionalSteadyState ss = conditional_variances(osc, pump, meas);
      grid.add_row({n, mu, chi, delta, 1.0, ss.snr, ss.cov.v_x,
                    ss.cov.v_x / ground_state_variance});
    }
  }
  Dataset overlay;
  overlay.name = "fig4_overlay";
  overlay.header = {"n", "mu_over_gamma"};
  for (double n : n_grid) overlay.add_row({n, n + 0.5});
  return {grid, overlay};
}

// Squeezed conditional variance over mu at eta = 0.1, chi = 100 gamma,
// detuning gamma away from threshold: standard continuous measurement vs the
// ideal resolved-sideband model (numerical fixed point).
inline Dataset figure5(const RunConfig& cfg) {
  Dataset ds;
  ds.name = "fig5";
  ds.header = {"mu_over_gamma", "model", "n", "eta", "chi_over_gamma",
               "delta_over_gamma", "v_minus", "v_minus_over_vg", "v_x", "v_y",
               "c", "error"};
  std::vector<double> mu_grid =
      detail2::log_grid(cfg.mu_min, cfg.mu_max, cfg.mu_points);
  const double chi = 100.0, eta = 0.1;
  const double n = cfg.fig5_n;
  DeltaSpec dsp;
  dsp.kind = DeltaSpec::Kind::detuned_by_gamma;
  double delta = dsp.resolve(chi);
  OscillatorParams osc{1.0, n, {}};
  for (double mu : mu_grid) {
    MeasurementParams meas{mu, eta};
    try {
      ConditionalSteadyState ss =
          conditional_variances(osc, PumpParams{chi, delta, 0.0}, meas);
      ds.add_row({mu, std::string("standard"), n, eta, chi, delta, ss.cov.v_x,
                  ss.cov.v_x / ground_state_variance, ss.cov.v_x, ss.cov.v_y,
                  0.0, std::string()});
    } catch (const error& e) {
      ds.add_row({mu, std::string("standard"), n, eta, chi, delta, 0.0, 0.0,
                  0.0, 0.0, 0.0, std::string(e.what())});
    }
    try {
      auto rsb = rsb_steady_state(
          osc, PumpParams{chi, delta, squeezeband::detail::quarter_pi}, meas);
      SqueezingSolution sq = principal_axes(rsb.value);
      ds.add_row({mu, std::string("rsb"), n, eta, chi, delta, sq.v_minus,
                  sq.v_minus / ground_state_variance, rsb.value.v_x,
                  rsb.value.v_y, rsb.value.c, std::string()});
    } catch (const error& e) {
      ds.add_row({mu, std::string("rsb"), n, eta, chi, delta, 0.0, 0.0, 0.0,
                  0.0, 0.0, std::string(e.what())});
    }
  }
  return ds;
}

inline std::vector<Dataset> run_figure(const RunConfig& cfg) {
  if (cfg.figure == "fig2") return {figure2(cfg)};
  if (cfg.figure == "fig3") return {figure3(cfg)};
  if (cfg.figure == "fig4") return figure4(cfg);
  if (cfg.figure == "fig5") return {figure5(cfg)};
  if (cfg.figure == "all") {
    std::vector<Dataset> all = {figure2(cfg), figure3(cfg)};
    for (auto& d : figure4(cfg)) all.push_back(std::move(d));
    all.push_back(figure5(cfg));
    return all;
  }
  throw config_error("figure.which must be fig2|fig3|fig4|fig5|all");
}

// ---------------------------------------------------------------------------
// filter-verify

inline json run_filter_verify(const RunConfig& cfg) {
  if (!cfg.seed)
    throw config_error("filter-verify: a seed is required (config or --seed)");
  ModelParams p = cfg.model.resolve();
  if (!(p.meas.eta * p.meas.mu > 0.0))
    throw config_error(
        "filter-verify: eta*mu = 0 leaves no information in the record; the "
        "filter is undefined (all gains zero)");

  ConditionalSteadyState target = conditional_variances(p.osc, p.pump, p.meas);
  FilterParams fp = filter_params(p.osc, p.pump, p.meas);

  EnsembleConfig ec;
  ec.n_trajectories = cfg.n_trajectories;
  ec.dt_factor = cfg.dt_factor;
  ec.horizon_bandwidths = cfg.horizon_bandwidths;
  ec.burn_bandwidths = cfg.burn_bandwidths;
  ec.seed = *cfg.seed;
  EnsembleResult er = filter_mse_ensemble(p.osc, p.pump, p.meas, fp, ec);
  MseStats mx = mse_stats_x(er.trajectories);
  MseStats my = mse_stats_y(er.trajectories);

  double rel_x = std::abs(mx.mean - target.cov.v_x) / target.cov.v_x;
  double rel_y = std::abs(my.mean - target.cov.v_y) / target.cov.v_y;
  bool pass_x = std::abs(mx.mean - target.cov.v_x) <=
                cfg.tolerance * target.cov.v_x + 2.0 * mx.std_error;
  bool pass_y = std::abs(my.mean - target.cov.v_y) <=
                cfg.tolerance * target.cov.v_y + 2.0 * my.std_error;

  json rep;
  rep["mode"] = "filter-verify";
  rep["model"] = {{"gamma", p.osc.gamma},
                  {"n", p.osc.bath_phonons},
                  {"chi", p.pump.chi},
                  {"delta", p.pump.delta},
                  {"theta_frame", target.pump_theta},
                  {"mu", p.meas.mu},
                  {"eta", p.meas.eta},
                  {"snr", target.snr}};
  rep["filter"] = {{"omega", fp.omega_f},   {"gamma_f", fp.gamma_f},
                   {"phi", fp.phi},         {"g_xx", fp.g_xx},
                   {"g_xy", fp.g_xy},       {"g_yy", fp.g_yy},
                   {"g_yx", fp.g_yx},       {"gamma_x", fp.gamma_x},
                   {"gamma_y", fp.gamma_y}, {"underdamped", fp.underdamped}};
  rep["targets"] = {{"v_x", target.cov.v_x}, {"v_y", target.cov.v_y}};
  json failed = json::array();
  for (std::size_t i = 0; i < er.trajectories.size(); ++i)
    if (er.trajectories[i].failed) failed.push_back(i);
  rep["ensemble"] = {{"n_trajectories", cfg.n_trajectories},
                     {"seed", *cfg.seed},
                     {"dt", er.dt},
                     {"n_steps", er.n_steps},
                     {"burn_steps", er.burn_steps},
                     {"failures", er.failures},
                     {"failed_trajectories", failed},
                     {"mse_x", mx.mean},
                     {"se_x", mx.std_error},
                     {"mse_y", my.mean},
                     {"se_y", my.std_error}};
  rep["relative_error"] = {{"x", rel_x}, {"y", rel_y}};
  rep["tolerance"] = cfg.tolerance;
  rep["pass"] = pass_x && pass_y;
  return rep;
}

// ---------------------------------------------------------------------------
// steady-state report

inline json run_steady_state(const RunConfig& cfg,
                             std::vector<Dataset>* extra_datasets = nullptr) {
  ModelParams p = cfg.model.resolve();
  DerivedQuantities d = derived_quantities(p.osc, p.pump, p.meas);
  json rep;
  rep["mode"] = "steady-state";
  rep["model"] = {{"gamma", p.osc.gamma},
                  {"n", p.osc.bath_phonons},
                  {"chi", p.pump.chi},
                  {"delta", p.pump.delta},
                  {"theta", canonical_theta(p.pump.theta)},
                  {"mu", p.meas.mu},
                  {"eta", p.meas.eta}};
  rep["derived"] = {{"n_ba", d.n_ba},
                    {"v_t", d.v_t},
                    {"snr", d.snr},
                    {"chi_th", d.chi_th},
                    {"rsb_chi_th", rsb_threshold(p.osc, p.pump, p.meas)},
                    {"v_g", d.v_g}};
  if (d.omega_e)
    rep["derived"]["omega_e"] = *d.omega_e;
  else
    rep["derived"]["omega_e"] = nullptr;
  rep["flags"] = flags_to_string(d.flags);

  // the unconditional block may legitimately be absent (at-threshold
  // conditional configurations); conditional failures are hard errors
  try {
    auto u = unconditional_steady_state(p.osc, p.pump, p.meas);
    SqueezingSolution sq = principal_axes(u.value);
    rep["unconditional"] = {{"v_x", u.value.v_x}, {"v_y", u.value.v_y},
                            {"c", u.value.c},     {"v_minus", sq.v_minus},
                            {"v_plus", sq.v_plus}, {"angle", sq.angle}};
  } catch (const error& e) {
    rep["unconditional"] = {{"error", e.what()}};
  }
  ConditionalSteadyState ss = conditional_variances(p.osc, p.pump, p.meas);
  rep["conditional"] = {{"v_x", ss.cov.v_x},
                        {"v_y", ss.cov.v_y},
                        {"alpha1", ss.squeezing.angle},
                        {"v0", ss.v0},
                        {"pump_theta_frame", ss.pump_theta}};
  FilterParams fp = filter_params(p.osc, p.pump, p.meas);
  rep["filter"] = {{"omega", fp.omega_f},   {"gamma_f", fp.gamma_f},
                   {"phi", fp.phi},         {"g_xx", fp.g_xx},
                   {"g_xy", fp.g_xy},       {"g_yy", fp.g_yy},
                   {"g_yx", fp.g_yx},       {"gamma_x", fp.gamma_x},
                   {"gamma_y", fp.gamma_y}, {"underdamped", fp.underdamped}};
  if (cfg.response_grid && extra_datasets) {
    std::vector<double> omegas = cfg.response_grid->grid();
    FrequencyResponse fr = frequency_response(fp, omegas);
    Dataset resp;
    resp.name = "frequency_response";
    resp.header = {"omega", "re_xx", "im_xx", "re_xy", "im_xy",
                   "re_yx", "im_yx", "re_yy", "im_yy"};
    for (std::size_t i = 0; i < omegas.size(); ++i)
      resp.add_row({fr.omega[i], fr.h_xx[i].real(), fr.h_xx[i].imag(),
                    fr.h_xy[i].real(), fr.h_xy[i].imag(), fr.h_yx[i].real(),
                    fr.h_yx[i].imag(), fr.h_yy[i].real(), fr.h_yy[i].imag()});
    extra_datasets->push_back(std::move(resp));
  }
  if (cfg.include_rsb) {
    try {
      PumpParams pq = p.pump;
      pq.theta = squeezeband::detail::quarter_pi;
      auto r = rsb_steady_state(p.osc, pq, p.meas);
      SqueezingSolution sq = principal_axes(r.value);
      rep["rsb"] = {{"v_x", r.value.v_x},     {"v_y", r.value.v_y},
                    {"c", r.value.c},         {"v_minus", sq.v_minus},
                    {"v_plus", sq.v_plus},    {"angle", sq.angle}};
    } catch (const error& e) {
      rep["rsb"] = {{"error", e.what()}};
    }
  }
  return rep;
}

// ---------------------------------------------------------------------------
// simulate

struct SimulateOutput {
  std::vector<Dataset> datasets;
  int clamp_count = 0;
};

inline SimulateOutput run_simulate(const RunConfig& cfg) {
  if (!cfg.seed)
    throw config_error("simulate: a seed is required (config or --seed)");
  ModelParams p = cfg.model.resolve();
  double dt = cfg.sim_dt > 0.0 ? cfg.sim_dt
                               : 0.9 * max_stable_dt(p.osc, p.pump, p.meas);

  // start from the thermal covariance and zero means unless conditioning has
  // a defined steady state to offer
  MomentState init;
  init.cov = CovarianceTriple{p.osc.bath_phonons + 0.5,
                              p.osc.bath_phonons + 0.5, 0.0};

  SimulateOutput out;
  ConditionalSimulation sim = simulate_conditional(
      init, p.osc, p.pump, p.meas, dt, cfg.sim_steps, *cfg.seed, 0,
      cfg.store_every);
  out.clamp_count = sim.trajectory.clamp_count;

  Dataset traj;
  traj.name = "trajectory";
  traj.header = {"t", "mean_x", "mean_y", "v_x", "v_y", "c"};
  for (std::size_t i = 0; i < sim.trajectory.t.size(); ++i)
    traj.add_row({sim.trajectory.t[i], sim.trajectory.mean_x[i],
                  sim.trajectory.mean_y[i], sim.trajectory.v_x[i],
                  sim.trajectory.v_y[i], sim.trajectory.c[i]});
  out.datasets.push_back(std::move(traj));

  Dataset rec;
  rec.name = "record";
  rec.header = {"t", "dq_x", "dq_y"};
  for (std::size_t i = 0; i < sim.record.dq_x.size(); ++i)
    rec.add_row({static_cast<double>(i) * dt, sim.record.dq_x[i],
                 sim.record.dq_y[i]});
  out.datasets.push_back(std::move(rec));

  if (cfg.with_truth) {
    TruthSimulation ts = simulate_truth_and_record(p.osc, p.pump, p.meas, dt,
                                                   cfg.sim_steps, *cfg.seed, 1);
    Dataset truth;
    truth.name = "truth";
    truth.header = {"t", "x", "y", "dq_x", "dq_y"};
    for (std::size_t i = 0; i < ts.path.x.size(); ++i)
      truth.add_row({static_cast<double>(i) * dt, ts.path.x[i], ts.path.y[i],
                     ts.record.dq_x[i], ts.record.dq_y[i]});
    out.datasets.push_back(std::move(truth));
  }
  if (cfg.with_estimates) {
    if (!(p.meas.eta * p.meas.mu > 0.0))
      throw config_error(
          "simulate.with_estimates: eta*mu = 0 leaves nothing to filter");
    FilterParams fp = filter_params(p.osc, p.pump, p.meas);
    EstimatePath est = filter_state_space(sim.record, fp);
    Dataset ds;
    ds.name = "estimates";
    ds.header = {"t", "x_est", "y_est"};
    for (std::size_t i = 0; i < est.x_est.size(); ++i)
      ds.add_row({static_cast<double>(i + 1) * dt, est.x_est[i], est.y_est[i]});
    out.datasets.push_back(std::move(ds));
  }
  return out;
}

// ---------------------------------------------------------------------------
// output helpers

inline void write_text_file(const std::filesystem::path& path,
                            const std::string& content) {
  std::filesystem::create_directories(path.parent_path());
  std::ofstream f(path, std::ios::binary);
  if (!f) throw error("cannot write " + path.string());
  f << content;
}

inline void write_datasets(const std::string& out_dir,
                           const std::vector<Dataset>& datasets) {
  for (const auto& ds : datasets)
    write_text_file(std::filesystem::path(out_dir) / (ds.name + ".csv"),
                    to_csv(ds));
}

inline std::string dump_json(const json& j) { return j.dump(2) + "\n"; }

}  // namespace squeezeband::harness
