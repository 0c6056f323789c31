// Command-line front end: steady-state reports, parameter sweeps, stochastic
// simulation, filter verification campaigns and figure-data regeneration.
//
//   squeezeband <mode> --config <path> [--seed N] [--out <path>]
//
// Exit codes: 0 success, 2 configuration error, 3 numerical failure.

#include <cstdio>
#include <exception>
#include <string>

#include <CLI11.hpp>

#include "squeezeband/harness.hpp"

namespace {

struct CliArgs {
  std::string mode;
  std::string config_path;
  std::string out_override;
  bool has_seed = false;
  std::uint64_t seed = 0;
};

int run(const CliArgs& args) {
  namespace hn = squeezeband::harness;
  hn::RunConfig cfg = hn::load_config(args.config_path);
  if (args.has_seed) cfg.seed = args.seed;
  if (!args.out_override.empty()) cfg.out = args.out_override;

  if (args.mode == "steady-state") {
    std::vector<squeezeband::Dataset> extra;
    hn::json rep = hn::run_steady_state(cfg, &extra);
    hn::write_text_file(std::filesystem::path(cfg.out) / "steady_state.json",
                        hn::dump_json(rep));
    hn::write_datasets(cfg.out, extra);
  } else if (args.mode == "sweep") {
    hn::write_datasets(cfg.out, {hn::run_sweep(cfg)});
  } else if (args.mode == "simulate") {
    hn::SimulateOutput out = hn::run_simulate(cfg);
    hn::write_datasets(cfg.out, out.datasets);
    if (out.clamp_count > 0)
      std::fprintf(stderr,
                   "note: covariance projected back to PSD %d time(s)\n",
                   out.clamp_count);
  } else if (args.mode == "filter-verify") {
    hn::json rep = hn::run_filter_verify(cfg);
    hn::write_text_file(std::filesystem::path(cfg.out) / "report.json",
                        hn::dump_json(rep));
    std::printf("filter-verify: mse_x=%s (target %s), mse_y=%s (target %s) -> %s\n",
                squeezeband::format_double(rep["ensemble"]["mse_x"].get<double>()).c_str(),
                squeezeband::format_double(rep["targets"]["v_x"].get<double>()).c_str(),
                squeezeband::format_double(rep["ensemble"]["mse_y"].get<double>()).c_str(),
                squeezeband::format_double(rep["targets"]["v_y"].get<double>()).c_str(),
                rep["pass"].get<bool>() ? "pass" : "FAIL");
  } else if (args.mode == "figure") {
    hn::write_datasets(cfg.out, hn::run_figure(cfg));
  } else {
    throw hn::config_error(
        "mode must be steady-state|sweep|simulate|filter-verify|figure");
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "squeezeband: steady states, trajectories and optimal filtering for a "
      "parametrically driven oscillator under continuous quadrature "
      "measurement"};
  app.require_subcommand(1);

  CliArgs args;
  const char* modes[] = {"steady-state", "sweep", "simulate", "filter-verify",
                         "figure"};
  for (const char* mode : modes) {
    CLI::App* sub = app.add_subcommand(mode);
    sub->add_option("--config", args.config_path, "JSON configuration file")
        ->required();
    sub->add_option("--seed", args.seed, "override the config seed");
    sub->add_option("--out", args.out_override, "override the output directory");
    sub->callback([&args, mode, sub] {
      args.mode = mode;
      args.has_seed = sub->count("--seed") > 0;
    });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    return run(args);
  } catch (const squeezeband::harness::config_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const squeezeband::validation_error& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const squeezeband::error& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 3;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 3;
  }
}
