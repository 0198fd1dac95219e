/**
 * @file solver.hpp
 * @brief Rate-splitting bilinear precoder design from channel statistics.
 *
 * The optimization variable is v = [a_c; a_1; ...; a_K] (length 2MKT), with
 * a_c = vec(A_c) occupying [0, MKT) and a_i = vec(A_i) occupying
 * [MKT + i*MT, MKT + (i+1)*MT) for 0-based user i.
 *
 * Each outer iteration updates the fractional-programming auxiliaries
 * (lambda, beta) in closed form, then, for every candidate common-rate user
 * k_c, solves the quadratic v-subproblem Y_{k_c} v' = x_{k_c} and rescales
 * v' onto the power surface v^H S v = P_t. The candidate with the largest
 * true objective (minimum over all users' common rates) is kept unless it
 * lowers the objective, in which case iteration stops at the previous point.
 *
 * User indices are 0-based throughout.
 */
#pragma once

#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "rsbp/parallel.hpp"
#include "rsbp/stat_terms.hpp"

namespace rsbp {

enum class Mode { RS, NoRS };

std::string to_string(Mode m);
Mode parse_mode(const std::string& s);

/// Which linear-algebra path solve_v takes. Both return the same v to rounding.
enum class Kernel {
  Structured,      // Y is block diagonal (+ rank one on the common block); solved per block
  DenseReference,  // full 2MKT x 2MKT assembly and one Hermitian solve
};

class TransformVector {
 public:
  TransformVector() = default;
  TransformVector(const SystemDims& dims, CVector v);
  static TransformVector zeros(const SystemDims& dims);
  static TransformVector from_blocks(const SystemDims& dims, const CVector& a_c,
                                     const std::vector<CVector>& a_list);

  const SystemDims& dims() const { return dims_; }
  const CVector& stacked() const { return v_; }
  CVector& stacked() { return v_; }

  auto common() const { return v_.head(dims_.mkt()); }
  auto common() { return v_.head(dims_.mkt()); }
  auto priv(int i) const { return v_.segment(dims_.mkt() + i * dims_.mt(), dims_.mt()); }
  auto priv(int i) { return v_.segment(dims_.mkt() + i * dims_.mt(), dims_.mt()); }

  /// A_c (M x K*T_dl) and A_i (M x T_dl), column-major unvec of the blocks.
  CMatrix common_matrix() const;
  CMatrix private_matrix(int i) const;

 private:
  SystemDims dims_;
  CVector v_;
};

/// Inner products and quadratic forms shared by the SINR bounds and the FP updates.
struct SinrTerms {
  std::vector<cd> za;                 // z_k^H a_c
  std::vector<cd> qa;                 // q_k^H a_k
  std::vector<double> zq;             // a_c^H Z_k a_c
  std::vector<double> interference;   // sum_j a_j^H Q_{j,k} a_j
  std::vector<double> gamma_p;        // private SINR lower bounds
  std::vector<double> gamma_c;        // common SINR lower bounds
};

SinrTerms evaluate_sinr_terms(const TransformVector& v, const SinrTermCache& cache);

double sinr_lb_private(const TransformVector& v, const SinrTermCache& cache, int k);
double sinr_lb_common(const TransformVector& v, const SinrTermCache& cache, int k);

/// sum_i log2(1 + gamma_p,i) + min_k log2(1 + gamma_c,k), in bits per channel use.
double objective_lb(const TransformVector& v, const SinrTermCache& cache);
double objective_lb(const SinrTerms& terms);

struct AuxiliaryState {
  std::vector<double> lambda_p, lambda_c;
  std::vector<cd> beta_p, beta_c;
};

/// lambda_i = gamma_p,i, lambda_c,k = gamma_c,k; betas are left at zero.
AuxiliaryState update_lambdas(const TransformVector& v, const SinrTermCache& cache);

/// Closed-form beta maximizers for the current v and lambdas (all K common betas).
void update_betas(const TransformVector& v, const SinrTermCache& cache, AuxiliaryState& aux);

/**
 * Quadratic-transform surrogate in nats for common user k_c (k_c < 0 drops
 * the common-rate part, as in NoRS mode). Tight at the closed-form lambda/beta.
 */
double fp_surrogate(const TransformVector& v, const SinrTermCache& cache, const AuxiliaryState& aux, int k_c);

struct LinearSystem {
  CMatrix Y;
  CVector x;
};

/// Dense Y_{k_c}, x_{k_c} of the power-rescaled v-subproblem. NoRS drops every beta_c term.
LinearSystem assemble_system(const AuxiliaryState& aux, const SinrTermCache& cache, int k_c,
                             double total_power, Mode mode);

/// 2 Re{x^H v} - v^H Y v: the v-dependent part of the rescaled surrogate.
double rescaled_surrogate(const TransformVector& v, const LinearSystem& sys);

/// Every beta is zero: Y vanishes and the v-update is undefined.
class DegenerateIterate : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Unscaled maximizer v' = Y^{-1} x of the rescaled surrogate.
TransformVector solve_v_unscaled(const AuxiliaryState& aux, const SinrTermCache& cache, int k_c,
                                 double total_power, Mode mode, Kernel kernel = Kernel::Structured);

/// v' rescaled so that v^H S v = P_t.
TransformVector solve_v(const AuxiliaryState& aux, const SinrTermCache& cache, int k_c, double total_power,
                        Mode mode, Kernel kernel = Kernel::Structured);

TransformVector rescale_to_power(const TransformVector& v, const SinrTermCache& cache, double total_power);

/// a_c = sum_k z_k (zero in NoRS), a_k = q_k, rescaled to the power surface.
TransformVector initial_point(const SinrTermCache& cache, Mode mode, double total_power);

struct Selection {
  int k_opt = 0;
  double objective_bits = 0;
};

/// Argmax of the true objective over candidates; near-ties (1e-12 relative) go to the smaller index.
Selection select_k_opt(std::span<const TransformVector> candidates, const SinrTermCache& cache);

struct SolverConfig {
  double total_power = 1.0;  // linear scale
  Mode mode = Mode::RS;
  double tol_rel = 1e-5;
  int max_iter = 200;
  Kernel kernel = Kernel::Structured;

  void validate() const;
};

enum class SolverStatus { Converged, DecreaseBreak, MaxIter };
std::string to_string(SolverStatus s);

struct SolverResult {
  TransformVector v_opt;
  int k_opt = -1;                      // -1 in NoRS mode
  std::vector<double> objective_trace; // bits; entry 0 is the initial point
  std::vector<int> k_trace;            // k_opt per trace entry, -1 for the initial point
  std::vector<double> power_trace;     // v^H S v of each trace entry
  int iterations = 0;
  int restarts = 0;
  double wall_time = 0;                // seconds
  SolverStatus status = SolverStatus::MaxIter;
};

/**
 * Full alternating optimization. A supplied init is rescaled onto the power
 * surface first (and its common block zeroed in NoRS mode). Throws
 * std::runtime_error if degenerate iterates persist after restarts.
 */
SolverResult run(const SinrTermCache& cache, const SolverConfig& config,
                 const std::optional<TransformVector>& init = std::nullopt, Exec exec = Exec::Parallel);

/// CSV rows "iteration,objective_bits,k_opt" with a header line.
std::string trace_csv(const SolverResult& result);

}  // namespace rsbp
