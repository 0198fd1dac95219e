/**
 * @file stat_terms.hpp
 * @brief Deterministic second-order terms consumed by the precoder optimizer.
 *
 * With p_c = A_c y, p_k = A_k y_k, a_c = vec(A_c), a_k = vec(A_k):
 *
 *     E[h_k^H p_c]      = z_k^H a_c              z_k    = (D^* (x) E_k) vec(C_h)
 *     var(h_k^H p_c)    = a_c^H Z_k a_c          Z_k    = C_y^T (x) C_k
 *     E[h_k^H p_k]      = q_k^H a_k              q_k    = (Phi^T (x) I_M) vec(C_k)
 *     E[|h_k^H p_j|^2]  = a_j^H Q_{j,k} a_j      Q_{j,k} = C_{y_j}^T (x) C_k   (j != k)
 *     var(h_k^H p_k)    = a_k^H Q_{k,k} a_k
 *     E[||p_i||^2]      = a_i^H F_i a_i          F_i    = C_{y_i}^T (x) I_M
 *     E[||p_c||^2]      = a_c^H F a_c            F      = blkdiag(F_1, ..., F_K)
 *
 * where D = I_K (x) Phi^H, E_k = e_k^T (x) I_M and C_h = blkdiag(C_1, ..., C_K).
 * C_h is the covariance of the stacked channel h; it is the only object of that
 * name kept here.
 */
#pragma once

#include <string>
#include <vector>

#include "rsbp/channel_model.hpp"

namespace rsbp {

struct SinrTermCache {
  SystemDims dims;
  std::vector<CVector> z;               // K x (MKT)
  std::vector<CMatrix> Zbig;            // K x (MKT x MKT)
  std::vector<CVector> q;               // K x (MT)
  std::vector<std::vector<CMatrix>> Q;  // Q[j][k], (MT x MT)
  std::vector<CMatrix> F_list;          // K x (MT x MT)
  CMatrix Fbig;                         // MKT x MKT

  /// Quadratic form with S = blkdiag(Fbig, F_1, ..., F_K); S is never stored densely.
  double power(const CVector& v) const;
  CMatrix dense_S() const;
};

struct QuadraticForms {
  std::vector<CMatrix> Zbig;
  std::vector<std::vector<CMatrix>> Q;
  std::vector<CMatrix> F_list;
  CMatrix Fbig;
};

/// Structured evaluation: block k of z_k is vec(C_k Phi), all other blocks are zero.
std::vector<CVector> compute_z(const CovarianceSet& cov, const PilotMatrix& pilot);
/// q_k = vec(C_k Phi).
std::vector<CVector> compute_q(const CovarianceSet& cov, const PilotMatrix& pilot);
QuadraticForms compute_quadratic_forms(const CovarianceSet& cov, const PilotMatrix& pilot);

SinrTermCache build_sinr_terms(const CovarianceSet& cov, const PilotMatrix& pilot);

/// One Monte-Carlo versus closed-form comparison.
struct ClosedFormCheck {
  std::string name;  // e.g. "E[h_k^H p_c]"
  int k = -1;        // user index (0-based), -1 when not applicable
  int j = -1;        // second index for interference terms
  cd closed_form;
  cd monte_carlo;
  double std_error = 0;  // standard error of monte_carlo (modulus for complex entries)
  double rel_error = 0;  // |mc - cf| / |cf|, 0 when both vanish
  double z_score = 0;    // |mc - cf| / std_error, 0 when both vanish

  bool within(double rel_tol, double n_sigma) const;
};

struct ClosedFormReport {
  std::size_t n_samples = 0;
  std::vector<ClosedFormCheck> checks;

  bool all_within(double rel_tol, double n_sigma) const;
};

/**
 * Draws n_samples fresh (h, n) pairs, forms the precoders from a_c and
 * a_list, and compares sample moments with the cached closed forms.
 * Rejects n_samples < 1000.
 */
ClosedFormReport verify_closed_forms_mc(const SinrTermCache& cache, const CovarianceSet& cov,
                                        const PilotMatrix& pilot, const CVector& a_c,
                                        const std::vector<CVector>& a_list, std::size_t n_samples,
                                        Rng& rng);

}  // namespace rsbp
