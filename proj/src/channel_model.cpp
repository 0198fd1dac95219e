#include "rsbp/channel_model.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

namespace rsbp {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

void expect_tag(std::istream& is, const std::string& tag) {
  std::string got;
  int version = 0;
  if (!(is >> got >> version) || got != tag || version != 1)
    throw std::runtime_error("expected '" + tag + " 1' header, found '" + got + "'");
}

void write_matrix(std::ostream& os, const CMatrix& a) {
  os << a.rows() << ' ' << a.cols() << '\n';
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      os << a(i, j).real() << ' ' << a(i, j).imag() << '\n';
}

CMatrix read_matrix(std::istream& is) {
  Eigen::Index rows = -1, cols = -1;
  if (!(is >> rows >> cols) || rows < 0 || cols < 0)
    throw std::runtime_error("malformed matrix header");
  CMatrix a(rows, cols);
  for (Eigen::Index j = 0; j < cols; ++j)
    for (Eigen::Index i = 0; i < rows; ++i) {
      double re = 0, im = 0;
      if (!(is >> re >> im)) throw std::runtime_error("truncated matrix body");
      a(i, j) = {re, im};
    }
  return a;
}

}  // namespace

void SystemDims::validate() const {
  if (M < 1) throw std::invalid_argument("M must be >= 1");
  if (K < 1) throw std::invalid_argument("K must be >= 1");
  if (T < 1) throw std::invalid_argument("T_dl must be >= 1");
  if (T > M) throw std::invalid_argument("T_dl exceeds M");
}

void ScattererScenario::validate() const {
  if (n_paths < 1) throw std::invalid_argument("scenario: n_paths must be >= 1");
  if (!(angle_min_deg <= angle_max_deg)) throw std::invalid_argument("scenario: angle range is empty");
  if (cluster_spread_deg < 0) throw std::invalid_argument("scenario: cluster_spread_deg must be >= 0");
  if (!(pathloss_min > 0 && pathloss_min <= pathloss_max))
    throw std::invalid_argument("scenario: path-loss range must satisfy 0 < min <= max");
  if (!(antenna_spacing > 0)) throw std::invalid_argument("scenario: antenna_spacing must be > 0");
}

void CovarianceSet::validate() const {
  if (C.empty()) throw std::invalid_argument("covariance set is empty");
  if (sigma.size() != C.size()) throw std::invalid_argument("covariance set: sigma count mismatch");
  for (std::size_t k = 0; k < C.size(); ++k) {
    if (C[k].rows() != M() || C[k].cols() != M())
      throw std::invalid_argument("covariance set: inconsistent matrix size");
    if (!is_psd(C[k])) throw std::invalid_argument("covariance set: C_k is not Hermitian PSD");
    if (!(sigma[k] > 0)) throw std::invalid_argument("covariance set: sigma_k must be > 0");
  }
}

CVector ChannelRealization::stacked_h() const {
  Eigen::Index len = 0;
  for (const auto& x : h) len += x.size();
  CVector out(len);
  Eigen::Index off = 0;
  for (const auto& x : h) {
    out.segment(off, x.size()) = x;
    off += x.size();
  }
  return out;
}

CVector ChannelRealization::stacked_y() const {
  Eigen::Index len = 0;
  for (const auto& x : y) len += x.size();
  CVector out(len);
  Eigen::Index off = 0;
  for (const auto& x : y) {
    out.segment(off, x.size()) = x;
    off += x.size();
  }
  return out;
}

CMatrix ObservationCovariance::stacked() const { return blkdiag(per_user); }

CVector steering_vector(int M, double theta_rad, double spacing) {
  CVector a(M);
  const double phase = 2.0 * std::numbers::pi * spacing * std::sin(theta_rad);
  for (int m = 0; m < M; ++m) a(m) = std::polar(1.0, phase * m);
  return a;
}

CMatrix covariance_from_paths(int M, std::span<const double> angles_rad, std::span<const double> gains,
                              double spacing) {
  if (angles_rad.empty()) throw std::invalid_argument("covariance_from_paths: need at least one path");
  if (angles_rad.size() != gains.size())
    throw std::invalid_argument("covariance_from_paths: angle/gain count mismatch");
  double total = 0;
  for (double g : gains) {
    if (!(g > 0)) throw std::invalid_argument("covariance_from_paths: path gains must be positive");
    total += g;
  }
  CMatrix c = CMatrix::Zero(M, M);
  for (std::size_t p = 0; p < gains.size(); ++p) {
    const CVector a = steering_vector(M, angles_rad[p], spacing);
    c.noalias() += (gains[p] / total) * (a * a.adjoint());
  }
  return 0.5 * (c + c.adjoint());
}

CovarianceSet build_covariance_set(const SystemDims& dims, const ScattererScenario& scenario, double sigma,
                                   Rng& rng) {
  dims.validate();
  scenario.validate();
  if (!(sigma > 0)) throw std::invalid_argument("sigma must be > 0");
  CovarianceSet out;
  out.C.reserve(dims.K);
  const double lo = scenario.angle_min_deg, hi = scenario.angle_max_deg;
  for (int k = 0; k < dims.K; ++k) {
    std::vector<double> angles(scenario.n_paths), gains(scenario.n_paths);
    const double center = rng.uniform(lo, hi);
    for (int p = 0; p < scenario.n_paths; ++p) {
      const double deg = scenario.cluster_spread_deg > 0
                             ? center + rng.uniform(-0.5, 0.5) * scenario.cluster_spread_deg
                             : rng.uniform(lo, hi);
      angles[p] = deg * kDeg;
      gains[p] = scenario.gain_profile == GainProfile::Equal ? 1.0 : rng.exponential();
      // exponential draws can underflow to exactly zero in principle
      if (!(gains[p] > 0)) gains[p] = std::numeric_limits<double>::min();
    }
    double pathloss = 1.0;
    if (scenario.pathloss_max > scenario.pathloss_min) {
      const double u = rng.uniform(std::log(scenario.pathloss_min), std::log(scenario.pathloss_max));
      pathloss = std::exp(u);
    }
    CMatrix c = covariance_from_paths(dims.M, angles, gains, scenario.antenna_spacing);
    // covariance_from_paths normalizes trace(C) to M
    out.C.push_back(pathloss * c);
  }
  out.sigma.assign(dims.K, sigma);
  return out;
}

PilotMatrix build_pilot_matrix(const SystemDims& dims, double pilot_power) {
  dims.validate();
  if (!(pilot_power > 0)) throw std::invalid_argument("pilot power must be > 0");
  PilotMatrix p;
  p.power = pilot_power;
  p.phi.resize(dims.M, dims.T);
  const double scale = std::sqrt(pilot_power / dims.M);
  for (int t = 0; t < dims.T; ++t)
    for (int m = 0; m < dims.M; ++m) {
      // exact integer reduction keeps the phases symmetric for large M
      const long r = (long(m) * t) % dims.M;
      p.phi(m, t) = std::polar(scale, -2.0 * std::numbers::pi * double(r) / dims.M);
    }
  return p;
}

ObservationCovariance cov_y(const CovarianceSet& cov, const PilotMatrix& pilot) {
  ObservationCovariance out;
  out.per_user.reserve(cov.K());
  for (int k = 0; k < cov.K(); ++k) {
    CMatrix cy = pilot.phi.adjoint() * cov.C[k] * pilot.phi;
    cy = 0.5 * (cy + cy.adjoint());
    cy.diagonal().array() += cov.sigma[k] * cov.sigma[k];
    out.per_user.push_back(std::move(cy));
  }
  return out;
}

RealizationSampler::RealizationSampler(const CovarianceSet& cov, const PilotMatrix& pilot)
    : sigma_(cov.sigma), phi_h_(pilot.phi.adjoint()) {
  if (cov.M() != pilot.M()) throw std::invalid_argument("realization sampler: M mismatch");
  channel_.reserve(cov.K());
  for (const auto& c : cov.C) channel_.emplace_back(c);
}

ChannelRealization RealizationSampler::operator()(Rng& rng) const {
  ChannelRealization r;
  const std::size_t K = channel_.size();
  r.h.reserve(K);
  r.n.reserve(K);
  r.y.reserve(K);
  for (std::size_t k = 0; k < K; ++k) {
    r.h.push_back(channel_[k](rng));
    CVector n(phi_h_.rows());
    for (Eigen::Index t = 0; t < n.size(); ++t) n(t) = sigma_[k] * rng.complex_normal();
    r.y.push_back(phi_h_ * r.h.back() + n);
    r.n.push_back(std::move(n));
  }
  return r;
}

ChannelRealization sample_realization(const CovarianceSet& cov, const PilotMatrix& pilot, Rng& rng) {
  return RealizationSampler(cov, pilot)(rng);
}

void write_covariance_set(std::ostream& os, const CovarianceSet& cov) {
  const auto old = os.precision(17);
  os << "rsbp-covariance-set 1\n" << cov.M() << ' ' << cov.K() << '\n';
  for (double s : cov.sigma) os << s << '\n';
  for (const auto& c : cov.C) write_matrix(os, c);
  os.precision(old);
}

CovarianceSet read_covariance_set(std::istream& is) {
  expect_tag(is, "rsbp-covariance-set");
  int M = 0, K = 0;
  if (!(is >> M >> K) || M < 1 || K < 1) throw std::runtime_error("malformed covariance-set header");
  CovarianceSet cov;
  cov.sigma.resize(K);
  for (auto& s : cov.sigma)
    if (!(is >> s)) throw std::runtime_error("truncated sigma list");
  for (int k = 0; k < K; ++k) {
    cov.C.push_back(read_matrix(is));
    if (cov.C.back().rows() != M || cov.C.back().cols() != M)
      throw std::runtime_error("covariance matrix size does not match header");
  }
  return cov;
}

void write_pilot_matrix(std::ostream& os, const PilotMatrix& pilot) {
  const auto old = os.precision(17);
  os << "rsbp-pilot-matrix 1\n" << pilot.power << '\n';
  write_matrix(os, pilot.phi);
  os.precision(old);
}

PilotMatrix read_pilot_matrix(std::istream& is) {
  expect_tag(is, "rsbp-pilot-matrix");
  PilotMatrix p;
  if (!(is >> p.power)) throw std::runtime_error("missing pilot power");
  p.phi = read_matrix(is);
  return p;
}

void save_covariance_set(const std::string& path, const CovarianceSet& cov) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_covariance_set(os, cov);
}

CovarianceSet load_covariance_set(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_covariance_set(is);
}

void save_pilot_matrix(const std::string& path, const PilotMatrix& pilot) {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot open " + path + " for writing");
  write_pilot_matrix(os, pilot);
}

PilotMatrix load_pilot_matrix(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open " + path);
  return read_pilot_matrix(is);
}

}  // namespace rsbp
