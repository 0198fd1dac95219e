// rsbp: command-line driver for precoder sweeps.
//
//   rsbp run --preset fig3 --scale desk --out results/
//   rsbp run --config my.json --seed 7 --workers 4
//   rsbp complexity --M 16 --K 4 --T 4 --runs 20
//   rsbp presets
//   rsbp show-preset fig4 --scale full

#include <iostream>

#include "CLI11.hpp"
#include "rsbp/experiment.hpp"

using namespace rsbp;

int main(int argc, char** argv) {
  CLI::App app{"Rate-splitting bilinear precoder sweeps"};
  app.require_subcommand(1);

  std::string config_path, preset_name, scale = "desk", out_dir;
  std::uint64_t seed = 0;
  int workers = 0;
  bool traces = false;
  bool serial = false;
  auto* run = app.add_subcommand("run", "run a sweep and write CSV artifacts");
  auto* cfg_opt = run->add_option("--config", config_path, "JSON config file");
  auto* preset_opt = run->add_option("--preset", preset_name, "fig1-timing | fig2 | fig3 | fig4");
  cfg_opt->excludes(preset_opt);
  run->add_option("--scale", scale, "desk | full (presets only)")->check(CLI::IsMember({"desk", "full"}));
  run->add_option("--out", out_dir, "output directory (overrides the config)");
  auto* seed_opt = run->add_option("--seed", seed, "master seed override");
  run->add_option("--workers", workers, "OpenMP worker threads (0 = runtime default)");
  run->add_flag("--traces", traces, "also write per-iteration objective traces");
  run->add_flag("--serial", serial, "use the serial reference loop");

  int M = 16, K = 4, T = 4, runs = 20;
  double p_db = 30;
  std::uint64_t cseed = 1;
  auto* cx = app.add_subcommand("complexity", "time solver runs and print the flop proxy");
  cx->add_option("--M", M);
  cx->add_option("--K", K);
  cx->add_option("--T", T, "pilot length T_dl");
  cx->add_option("--runs", runs, "number of covariance draws to time");
  cx->add_option("--P-dB", p_db, "transmit power in dB");
  cx->add_option("--seed", cseed);

  app.add_subcommand("presets", "list preset names");

  std::string show_name, show_scale = "desk";
  auto* show = app.add_subcommand("show-preset", "print a preset as JSON");
  show->add_option("name", show_name)->required();
  show->add_option("--scale", show_scale)->check(CLI::IsMember({"desk", "full"}));

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      ExperimentConfig cfg;
      if (!config_path.empty()) {
        cfg = load_config(config_path);
      } else if (!preset_name.empty()) {
        cfg = preset(preset_name, parse_scale(scale));
      } else {
        std::cerr << "run: one of --config or --preset is required\n";
        return 1;
      }
      if (!out_dir.empty()) cfg.output_dir = out_dir;
      if (*seed_opt) cfg.master_seed = seed;
      if (traces) cfg.traces = true;
      if (workers > 0) set_worker_threads(workers);
      const RunOutcome res = run_experiment(cfg, serial ? Exec::Serial : Exec::Parallel, &std::cout);
      if (res.exit_code != 0) std::cerr << "error: " << res.message << "\n";
      else std::cout << "artifacts in " << cfg.output_dir << "\n";
      return res.exit_code;
    }
    if (*cx) {
      SweepSpec spec;
      spec.dims = {M, K, T};
      spec.dims.validate();
      spec.scenario.pathloss_min = 0.25;
      spec.pilot_power = M;
      spec.powers = {db_to_linear(p_db)};
      spec.modes = {Mode::RS};
      spec.n_cov = runs;
      spec.n_chan = 1;
      spec.master_seed = cseed;
      const SweepResult r = sweep(spec, Exec::Serial);
      std::cout << complexity_report(spec.dims, r.timings);
      return 0;
    }
    if (app.got_subcommand("presets")) {
      for (const auto& n : preset_names()) std::cout << n << "\n";
      return 0;
    }
    if (*show) {
      std::cout << to_json(preset(show_name, parse_scale(show_scale)));
      return 0;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
