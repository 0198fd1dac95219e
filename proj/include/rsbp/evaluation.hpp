/**
 * @file evaluation.hpp
 * @brief Rates achieved by fixed transformation vectors, and experiment sweeps.
 *
 * Precoders are re-formed for every realization from that realization's own
 * noisy training observations (p_c = A_c y, p_k = A_k y_k), and the
 * downlink noise has unit power.
 */
#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "rsbp/solver.hpp"

namespace rsbp {

struct McEstimate {
  double mean = 0;
  double std_error = 0;  // 0 when n == 1
  std::size_t n = 0;
};

/// min_k log2(1 + gamma_c,k) + sum_k log2(1 + gamma_p,k); the common term is dropped in NoRS mode.
double instantaneous_sum_rate(const TransformVector& v, const ChannelRealization& r, Mode mode = Mode::RS);

/**
 * Mean and standard error of instantaneous_sum_rate over n_chan fresh
 * realizations. One value is drawn from `rng` to seed per-realization
 * streams, so Serial and Parallel give identical output.
 */
McEstimate ergodic_rate_mc(const TransformVector& v, const CovarianceSet& cov, const PilotMatrix& pilot,
                           std::size_t n_chan, Rng& rng, Mode mode = Mode::RS, Exec exec = Exec::Parallel);

/// Sample mean of ||p_c||^2 + sum_k ||p_k||^2 over fresh realizations.
McEstimate mc_transmit_power(const TransformVector& v, const CovarianceSet& cov, const PilotMatrix& pilot,
                             std::size_t n_chan, Rng& rng);

/**
 * Compares the closed-form lower-bound sum rate with the per-user ergodic
 * rates it bounds: sum_k E[log2(1 + private SINR_k)] + min_k E[log2(1 + common SINR_k)],
 * with instantaneous SINRs that treat the other streams as noise.
 */
struct LowerBoundReport {
  double lb_sum_rate = 0;
  double mc_ergodic = 0;
  double mc_std_error = 0;
  double margin = 0;  // mc_ergodic - lb_sum_rate
  bool holds = true;  // lb_sum_rate <= mc_ergodic + 3 * mc_std_error
};

LowerBoundReport lower_bound_check(const TransformVector& v, const SinrTermCache& cache, const CovarianceSet& cov,
                                   const PilotMatrix& pilot, std::size_t n_chan, Rng& rng,
                                   Exec exec = Exec::Parallel);

struct RateReport {
  double P_t = 0;  // linear
  Mode mode = Mode::RS;
  double lb_sum_rate = 0;
  double mc_sum_rate_mean = 0;
  double mc_sum_rate_stderr = 0;
  int n_cov = 0;    // covariance draws that contributed
  int n_chan = 0;
  int n_failed = 0; // covariance draws skipped after a solver failure
};

struct TimingSample {
  double wall_time = 0;  // seconds
  int iterations = 0;
  int instance_id = 0;
};

/// Everything the sweep needs, in linear units.
struct SweepSpec {
  SystemDims dims;
  ScattererScenario scenario;
  double pilot_power = 1.0;
  double sigma = 1.0;
  std::vector<double> powers;  // linear P_t grid
  std::vector<Mode> modes;
  int n_cov = 1;
  int n_chan = 1;
  std::uint64_t master_seed = 1;
  double tol_rel = 1e-5;
  int max_iter = 200;
  bool keep_traces = false;

  void validate() const;
};

/// Result of one (covariance draw, P_t, mode) cell.
struct SweepCell {
  int cov_index = 0;
  int power_index = 0;
  Mode mode = Mode::RS;
  bool failed = false;
  double lb_sum_rate = 0;
  McEstimate mc;
  int iterations = 0;
  int k_opt = -1;
  SolverStatus status = SolverStatus::MaxIter;
  double wall_time = 0;
  std::vector<double> objective_trace;
  std::vector<int> k_trace;
};

struct SweepResult {
  std::vector<RateReport> reports;  // ordered by (power index, mode index)
  std::vector<SweepCell> cells;     // ordered by (cov, power, mode)
  std::vector<TimingSample> timings;
};

/**
 * For each covariance draw: one cache, one solver run per (P_t, mode), one
 * ergodic estimate. Covariance draw i and its channel realizations come from
 * streams keyed by (master_seed, i), so the realizations are shared across
 * the P_t grid and both modes. Aggregate standard error is the spread of the
 * per-draw means over sqrt(n_cov) (the single cell's error when n_cov == 1).
 */
SweepResult sweep(const SweepSpec& spec, Exec exec = Exec::Parallel);

struct CdfPoint {
  double value = 0;
  double fraction = 0;
};

std::vector<CdfPoint> runtime_cdf(std::span<const TimingSample> samples);

// CSV, 12 significant digits, fixed headers:
//   rates:  mode,P_t,lb_sum_rate,mc_sum_rate_mean,mc_sum_rate_stderr,n_cov,n_chan,n_failed
//   cdf:    run_time_sec,cdf
//   traces: cov_index,power_index,mode,iteration,objective_bits,k_opt
void write_rates_csv(std::ostream& os, std::span<const RateReport> reports);
std::vector<RateReport> read_rates_csv(std::istream& is);
void write_cdf_csv(std::ostream& os, std::span<const CdfPoint> cdf);
std::vector<CdfPoint> read_cdf_csv(std::istream& is);
void write_traces_csv(std::ostream& os, std::span<const SweepCell> cells);

}  // namespace rsbp
