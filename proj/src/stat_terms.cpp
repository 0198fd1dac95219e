#include "rsbp/stat_terms.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace rsbp {

namespace {

void check_dims(const CovarianceSet& cov, const PilotMatrix& pilot) {
  if (cov.C.empty()) throw std::invalid_argument("sinr terms: empty covariance set");
  if (cov.M() != pilot.M()) throw std::invalid_argument("sinr terms: covariance/pilot M mismatch");
}

CMatrix hermitize(const CMatrix& a) { return 0.5 * (a + a.adjoint()); }

// Running first/second moments for real and complex samples.
struct RealMoments {
  double sum = 0, sum_sq = 0;
  void add(double x) {
    sum += x;
    sum_sq += x * x;
  }
  double mean(std::size_t n) const { return sum / double(n); }
  double std_error(std::size_t n) const {
    const double m = mean(n);
    const double var = std::max(0.0, (sum_sq - double(n) * m * m) / double(n - 1));
    return std::sqrt(var / double(n));
  }
};

struct ComplexMoments {
  cd sum = 0;
  double sum_abs_sq = 0;
  void add(cd x) {
    sum += x;
    sum_abs_sq += std::norm(x);
  }
  cd mean(std::size_t n) const { return sum / double(n); }
  double variance(std::size_t n) const {
    return std::max(0.0, (sum_abs_sq - double(n) * std::norm(mean(n))) / double(n - 1));
  }
};

ClosedFormCheck make_check(std::string name, int k, int j, cd cf, cd mc, double se) {
  ClosedFormCheck c{std::move(name), k, j, cf, mc, se, 0.0, 0.0};
  const double diff = std::abs(mc - cf);
  if (diff > 0) {
    c.rel_error = std::abs(cf) > 0 ? diff / std::abs(cf) : std::numeric_limits<double>::infinity();
    c.z_score = se > 0 ? diff / se : std::numeric_limits<double>::infinity();
  }
  return c;
}

}  // namespace

double SinrTermCache::power(const CVector& v) const {
  const Eigen::Index mkt = dims.mkt(), mt = dims.mt();
  if (v.size() != dims.vdim()) throw std::invalid_argument("power: transform vector has wrong length");
  const auto a_c = v.head(mkt);
  double p = a_c.dot(Fbig * a_c).real();
  for (int i = 0; i < dims.K; ++i) {
    const auto a_i = v.segment(mkt + i * mt, mt);
    p += a_i.dot(F_list[i] * a_i).real();
  }
  return p;
}

CMatrix SinrTermCache::dense_S() const {
  std::vector<CMatrix> blocks;
  blocks.push_back(Fbig);
  for (const auto& f : F_list) blocks.push_back(f);
  return blkdiag(blocks);
}

std::vector<CVector> compute_z(const CovarianceSet& cov, const PilotMatrix& pilot) {
  check_dims(cov, pilot);
  const int K = cov.K();
  const Eigen::Index mt = Eigen::Index(pilot.M()) * pilot.T();
  std::vector<CVector> z(K, CVector::Zero(mt * K));
  for (int k = 0; k < K; ++k) z[k].segment(k * mt, mt) = vec(cov.C[k] * pilot.phi);
  return z;
}

std::vector<CVector> compute_q(const CovarianceSet& cov, const PilotMatrix& pilot) {
  check_dims(cov, pilot);
  std::vector<CVector> q;
  q.reserve(cov.K());
  for (const auto& c : cov.C) q.push_back(vec(c * pilot.phi));
  return q;
}

QuadraticForms compute_quadratic_forms(const CovarianceSet& cov, const PilotMatrix& pilot) {
  check_dims(cov, pilot);
  const int K = cov.K();
  const ObservationCovariance cy = cov_y(cov, pilot);
  const CMatrix cy_all_t = cy.stacked().transpose();
  const CMatrix eye = CMatrix::Identity(cov.M(), cov.M());

  QuadraticForms out;
  out.Zbig.reserve(K);
  out.F_list.reserve(K);
  out.Q.assign(K, std::vector<CMatrix>(K));
  for (int k = 0; k < K; ++k) out.Zbig.push_back(hermitize(kron(cy_all_t, cov.C[k])));
  for (int j = 0; j < K; ++j) {
    const CMatrix cyj_t = cy.per_user[j].transpose();
    for (int k = 0; k < K; ++k) out.Q[j][k] = hermitize(kron(cyj_t, cov.C[k]));
    out.F_list.push_back(hermitize(kron(cyj_t, eye)));
  }
  out.Fbig = blkdiag(out.F_list);
  return out;
}

SinrTermCache build_sinr_terms(const CovarianceSet& cov, const PilotMatrix& pilot) {
  QuadraticForms forms = compute_quadratic_forms(cov, pilot);
  SinrTermCache cache;
  cache.dims = SystemDims{cov.M(), cov.K(), pilot.T()};
  cache.dims.validate();
  cache.z = compute_z(cov, pilot);
  cache.q = compute_q(cov, pilot);
  cache.Zbig = std::move(forms.Zbig);
  cache.Q = std::move(forms.Q);
  cache.F_list = std::move(forms.F_list);
  cache.Fbig = std::move(forms.Fbig);
  return cache;
}

bool ClosedFormCheck::within(double rel_tol, double n_sigma) const {
  if (monte_carlo == closed_form) return true;
  return rel_error <= rel_tol && z_score <= n_sigma;
}

bool ClosedFormReport::all_within(double rel_tol, double n_sigma) const {
  for (const auto& c : checks)
    if (!c.within(rel_tol, n_sigma)) return false;
  return true;
}

ClosedFormReport verify_closed_forms_mc(const SinrTermCache& cache, const CovarianceSet& cov,
                                        const PilotMatrix& pilot, const CVector& a_c,
                                        const std::vector<CVector>& a_list, std::size_t n_samples,
                                        Rng& rng) {
  if (n_samples < 1000) throw std::invalid_argument("verify_closed_forms_mc: need at least 1000 samples");
  const SystemDims& d = cache.dims;
  const int K = d.K;
  if (a_c.size() != d.mkt() || int(a_list.size()) != K)
    throw std::invalid_argument("verify_closed_forms_mc: transform dimensions do not match cache");

  const CMatrix A_c = unvec(a_c, d.M, Eigen::Index(K) * d.T);
  std::vector<CMatrix> A(K);
  for (int k = 0; k < K; ++k) A[k] = unvec(a_list[k], d.M, d.T);

  std::vector<ComplexMoments> common_inner(K), private_inner(K);
  std::vector<RealMoments> common_dev_sq(K), private_dev_sq(K);
  std::vector<RealMoments> cross(K * K), power_i(K);
  RealMoments power_c;
  std::vector<std::vector<cd>> common_samples(K, std::vector<cd>(n_samples));
  std::vector<std::vector<cd>> private_samples(K, std::vector<cd>(n_samples));

  const RealizationSampler sampler(cov, pilot);
  for (std::size_t s = 0; s < n_samples; ++s) {
    const ChannelRealization r = sampler(rng);
    const CVector p_c = A_c * r.stacked_y();
    std::vector<CVector> p(K);
    for (int k = 0; k < K; ++k) p[k] = A[k] * r.y[k];
    power_c.add(p_c.squaredNorm());
    for (int k = 0; k < K; ++k) {
      power_i[k].add(p[k].squaredNorm());
      const cd gc = r.h[k].dot(p_c);  // h_k^H p_c
      common_inner[k].add(gc);
      common_samples[k][s] = gc;
      for (int j = 0; j < K; ++j) {
        const cd g = r.h[k].dot(p[j]);
        cross[j * K + k].add(std::norm(g));
        if (j == k) {
          private_inner[k].add(g);
          private_samples[k][s] = g;
        }
      }
    }
  }

  const std::size_t n = n_samples;
  // Variance estimates: mean of |x - xbar|^2 with its own standard error.
  for (int k = 0; k < K; ++k) {
    const cd mc = common_inner[k].mean(n), mp = private_inner[k].mean(n);
    for (std::size_t s = 0; s < n; ++s) {
      common_dev_sq[k].add(std::norm(common_samples[k][s] - mc));
      private_dev_sq[k].add(std::norm(private_samples[k][s] - mp));
    }
  }

  ClosedFormReport rep;
  rep.n_samples = n;
  const double nn = double(n);
  const double bessel = nn / (nn - 1.0);
  for (int k = 0; k < K; ++k) {
    const cd za = cache.z[k].dot(a_c);
    rep.checks.push_back(make_check("E[h_k^H p_c]", k, -1, za, common_inner[k].mean(n),
                                    std::sqrt(common_inner[k].variance(n) / nn)));
    const double zq = a_c.dot(cache.Zbig[k] * a_c).real();
    rep.checks.push_back(make_check("var(h_k^H p_c)", k, -1, zq, bessel * common_dev_sq[k].mean(n),
                                    bessel * common_dev_sq[k].std_error(n)));
    const cd qa = cache.q[k].dot(a_list[k]);
    rep.checks.push_back(make_check("E[h_k^H p_k]", k, -1, qa, private_inner[k].mean(n),
                                    std::sqrt(private_inner[k].variance(n) / nn)));
    const double qkk = a_list[k].dot(cache.Q[k][k] * a_list[k]).real();
    rep.checks.push_back(make_check("var(h_k^H p_k)", k, -1, qkk, bessel * private_dev_sq[k].mean(n),
                                    bessel * private_dev_sq[k].std_error(n)));
    for (int j = 0; j < K; ++j) {
      const double qjk = a_list[j].dot(cache.Q[j][k] * a_list[j]).real();
      const double cf = j == k ? std::norm(qa) + qjk : qjk;
      const RealMoments& m = cross[j * K + k];
      rep.checks.push_back(make_check("E[|h_k^H p_j|^2]", k, j, cf, m.mean(n), m.std_error(n)));
    }
    const double fi = a_list[k].dot(cache.F_list[k] * a_list[k]).real();
    rep.checks.push_back(make_check("E[||p_i||^2]", k, -1, fi, power_i[k].mean(n), power_i[k].std_error(n)));
  }
  const double fc = a_c.dot(cache.Fbig * a_c).real();
  rep.checks.push_back(make_check("E[||p_c||^2]", -1, -1, fc, power_c.mean(n), power_c.std_error(n)));
  return rep;
}

}  // namespace rsbp
