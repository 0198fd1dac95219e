/**
 * @file channel_model.hpp
 * @brief Synthetic channel statistics, pilot matrix, and training observations.
 *
 * Covariances follow a uniform-linear-array scatterer model:
 *
 *     C_k = g_k * sum_p alpha_{k,p} a(theta_{k,p}) a(theta_{k,p})^H,
 *     a(theta)_m = exp(j 2 pi d m sin(theta)),
 *
 * with the path gains normalized so that sum_p alpha_{k,p} = 1, i.e.
 * trace(C_k) = M * g_k. The per-user large-scale factor g_k is 1 unless the
 * scenario enables a path-loss range.
 */
#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "rsbp/matrix_kit.hpp"

namespace rsbp {

/// M antennas, K users, T_dl pilot length.
struct SystemDims {
  int M = 1;
  int K = 1;
  int T = 1;

  void validate() const;
  Eigen::Index mt() const { return Eigen::Index(M) * T; }
  Eigen::Index mkt() const { return Eigen::Index(M) * K * T; }
  /// Length of the stacked transform vector [a_c; a_1; ...; a_K].
  Eigen::Index vdim() const { return 2 * mkt(); }
  bool operator==(const SystemDims&) const = default;
};

enum class GainProfile { Exponential, Equal };

struct ScattererScenario {
  int n_paths = 6;
  double angle_min_deg = -60.0;
  double angle_max_deg = 60.0;
  /// 0: every path angle is uniform over [angle_min, angle_max]. Otherwise
  /// paths are spread uniformly over +-spread/2 around a per-user center.
  double cluster_spread_deg = 0.0;
  GainProfile gain_profile = GainProfile::Exponential;
  /// Log-uniform per-user large-scale factor range; [1, 1] disables it.
  double pathloss_min = 1.0;
  double pathloss_max = 1.0;
  /// Element spacing in wavelengths.
  double antenna_spacing = 0.5;

  void validate() const;
};

struct CovarianceSet {
  std::vector<CMatrix> C;
  std::vector<double> sigma;

  int M() const { return C.empty() ? 0 : int(C.front().rows()); }
  int K() const { return int(C.size()); }
  void validate() const;
};

struct PilotMatrix {
  CMatrix phi;  // M x T_dl
  double power = 1.0;

  int M() const { return int(phi.rows()); }
  int T() const { return int(phi.cols()); }
};

struct ChannelRealization {
  std::vector<CVector> h;  // K x (M)
  std::vector<CVector> n;  // K x (T_dl), training noise draws
  std::vector<CVector> y;  // K x (T_dl), y_k = Phi^H h_k + n_k

  CVector stacked_h() const;
  CVector stacked_y() const;
};

/// Observation covariances C_{y_k} = Phi^H C_k Phi + sigma_k^2 I.
struct ObservationCovariance {
  std::vector<CMatrix> per_user;
  CMatrix stacked() const;  // blkdiag(C_{y_1}, ..., C_{y_K})
};

CVector steering_vector(int M, double theta_rad, double spacing = 0.5);

/// Single covariance from explicit paths; gains must be positive. Trace is M.
CMatrix covariance_from_paths(int M, std::span<const double> angles_rad,
                              std::span<const double> gains, double spacing = 0.5);

CovarianceSet build_covariance_set(const SystemDims& dims, const ScattererScenario& scenario,
                                   double sigma, Rng& rng);

PilotMatrix build_pilot_matrix(const SystemDims& dims, double pilot_power);

ObservationCovariance cov_y(const CovarianceSet& cov, const PilotMatrix& pilot);

/// Per-user channel and noise samplers with factorizations done once.
class RealizationSampler {
 public:
  RealizationSampler(const CovarianceSet& cov, const PilotMatrix& pilot);
  ChannelRealization operator()(Rng& rng) const;

 private:
  std::vector<ComplexGaussianSampler> channel_;
  std::vector<double> sigma_;
  CMatrix phi_h_;
};

ChannelRealization sample_realization(const CovarianceSet& cov, const PilotMatrix& pilot, Rng& rng);

// Text container: a tag line, scalar header, then one matrix per block as
// "rows cols" followed by rows*cols lines "re im" in column-major order,
// printed with 17 significant digits so that values round-trip exactly.
void write_covariance_set(std::ostream& os, const CovarianceSet& cov);
CovarianceSet read_covariance_set(std::istream& is);
void write_pilot_matrix(std::ostream& os, const PilotMatrix& pilot);
PilotMatrix read_pilot_matrix(std::istream& is);

void save_covariance_set(const std::string& path, const CovarianceSet& cov);
CovarianceSet load_covariance_set(const std::string& path);
void save_pilot_matrix(const std::string& path, const PilotMatrix& pilot);
PilotMatrix load_pilot_matrix(const std::string& path);

}  // namespace rsbp
