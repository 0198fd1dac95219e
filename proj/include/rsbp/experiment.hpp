/**
 * @file experiment.hpp
 * @brief JSON experiment configs, named presets, and the run driver.
 *
 * Config keys (all optional except dims):
 *
 *   dims         {"M", "K", "T_dl"}
 *   scenario     {"n_paths", "angle_min_deg", "angle_max_deg", "cluster_spread_deg",
 *                 "gain_profile": "exponential"|"equal", "pathloss_min", "pathloss_max",
 *                 "antenna_spacing"}
 *   pilot_power  default M
 *   sigma        default 1
 *   P_t_dB       default [0, 5, ..., 40], strictly increasing
 *   modes        default ["RS", "NoRS"]
 *   n_cov, n_chan, master_seed, tol_rel, max_iter, output_dir, traces
 *
 * This is the only place where dB values exist; everything downstream is linear.
 */
#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsbp/evaluation.hpp"

namespace rsbp {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct ExperimentConfig {
  SystemDims dims;
  ScattererScenario scenario;
  double pilot_power = 0;  // 0 before defaults are applied; then M
  double sigma = 1.0;
  std::vector<double> P_t_dB;
  std::vector<Mode> modes;
  int n_cov = 10;
  int n_chan = 100;
  std::uint64_t master_seed = 1;
  double tol_rel = 1e-5;
  int max_iter = 200;
  std::string output_dir = "rsbp_out";
  bool traces = false;

  void validate() const;
  SweepSpec to_sweep_spec() const;
};

double db_to_linear(double db);

/// Parses and validates; unknown keys and bad values raise ConfigError naming the key.
ExperimentConfig parse_config(const std::string& text);
ExperimentConfig load_config(const std::string& path);
/// Canonical JSON with every default filled in; parsing it back gives the same config.
std::string to_json(const ExperimentConfig& config);

enum class Scale { Desk, Full };
Scale parse_scale(const std::string& s);

std::vector<std::string> preset_names();
ExperimentConfig preset(const std::string& name, Scale scale);

struct RunOutcome {
  int exit_code = 0;  // 0 ok, 1 config, 2 systemic
  SweepResult result;
  std::string message;
};

/**
 * Runs the sweep and writes rates.csv, timing.csv, config.json, summary.txt
 * (and traces.csv when enabled) into config.output_dir.
 */
RunOutcome run_experiment(const ExperimentConfig& config, Exec exec = Exec::Parallel,
                          std::ostream* log = nullptr);

/// I_iter * K * (2MKT)^3, the cost of K dense solves per iteration.
double complexity_flop_proxy(const SystemDims& dims, double iterations);

/// Table of the flop proxy and measured times, with the published run times for context.
std::string complexity_report(const SystemDims& dims, std::span<const TimingSample> timings);

}  // namespace rsbp
