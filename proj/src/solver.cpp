#include "rsbp/solver.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <exception>
#include <limits>
#include <sstream>

#include <omp.h>

namespace rsbp {

namespace {

constexpr int kMaxRestarts = 5;
constexpr double kRestartPerturbation = 1e-3;
constexpr std::uint64_t kRestartSeed = 0x5eed0fb1a5ULL;

void check_compatible(const TransformVector& v, const SinrTermCache& cache) {
  if (!(v.dims() == cache.dims) || v.stacked().size() != cache.dims.vdim())
    throw std::invalid_argument("transform vector does not match the SINR term cache");
}

double total_beta_weight(const AuxiliaryState& aux, int k_c, Mode mode) {
  double w = 0;
  for (const cd& b : aux.beta_p) w += std::norm(b);
  if (mode == Mode::RS) w += std::norm(aux.beta_c[k_c]);
  return w;
}

CMatrix hermitize(const CMatrix& a) { return 0.5 * (a + a.adjoint()); }

}  // namespace

std::string to_string(Mode m) { return m == Mode::RS ? "RS" : "NoRS"; }

Mode parse_mode(const std::string& s) {
  if (s == "RS") return Mode::RS;
  if (s == "NoRS") return Mode::NoRS;
  throw std::invalid_argument("unknown mode '" + s + "' (expected RS or NoRS)");
}

std::string to_string(SolverStatus s) {
  switch (s) {
    case SolverStatus::Converged: return "converged";
    case SolverStatus::DecreaseBreak: return "decrease_break";
    case SolverStatus::MaxIter: return "max_iter";
  }
  return "unknown";
}

TransformVector::TransformVector(const SystemDims& dims, CVector v) : dims_(dims), v_(std::move(v)) {
  if (v_.size() != dims_.vdim()) throw std::invalid_argument("TransformVector: length must be 2*M*K*T_dl");
}

TransformVector TransformVector::zeros(const SystemDims& dims) {
  return TransformVector(dims, CVector::Zero(dims.vdim()));
}

TransformVector TransformVector::from_blocks(const SystemDims& dims, const CVector& a_c,
                                             const std::vector<CVector>& a_list) {
  if (a_c.size() != dims.mkt() || int(a_list.size()) != dims.K)
    throw std::invalid_argument("TransformVector: block dimensions do not match");
  TransformVector t = zeros(dims);
  t.common() = a_c;
  for (int i = 0; i < dims.K; ++i) {
    if (a_list[i].size() != dims.mt()) throw std::invalid_argument("TransformVector: a_i has wrong length");
    t.priv(i) = a_list[i];
  }
  return t;
}

CMatrix TransformVector::common_matrix() const {
  return unvec(CVector(common()), dims_.M, Eigen::Index(dims_.K) * dims_.T);
}

CMatrix TransformVector::private_matrix(int i) const { return unvec(CVector(priv(i)), dims_.M, dims_.T); }

SinrTerms evaluate_sinr_terms(const TransformVector& v, const SinrTermCache& cache) {
  check_compatible(v, cache);
  const int K = cache.dims.K;
  SinrTerms t;
  t.za.resize(K);
  t.qa.resize(K);
  t.zq.resize(K);
  t.interference.assign(K, 0.0);
  t.gamma_p.resize(K);
  t.gamma_c.resize(K);

  const CVector a_c = v.common();
  std::vector<CVector> a(K);
  for (int j = 0; j < K; ++j) a[j] = v.priv(j);

  for (int k = 0; k < K; ++k) {
    t.za[k] = cache.z[k].dot(a_c);
    t.zq[k] = a_c.dot(cache.Zbig[k] * a_c).real();
    t.qa[k] = cache.q[k].dot(a[k]);
    for (int j = 0; j < K; ++j) t.interference[k] += a[j].dot(cache.Q[j][k] * a[j]).real();
  }
  for (int k = 0; k < K; ++k) {
    const double qa2 = std::norm(t.qa[k]);
    t.gamma_p[k] = qa2 / (t.interference[k] + 1.0);
    t.gamma_c[k] = std::norm(t.za[k]) / (t.zq[k] + qa2 + t.interference[k] + 1.0);
  }
  return t;
}

double sinr_lb_private(const TransformVector& v, const SinrTermCache& cache, int k) {
  return evaluate_sinr_terms(v, cache).gamma_p.at(k);
}

double sinr_lb_common(const TransformVector& v, const SinrTermCache& cache, int k) {
  return evaluate_sinr_terms(v, cache).gamma_c.at(k);
}

double objective_lb(const SinrTerms& terms) {
  double sum = 0;
  double common = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < terms.gamma_p.size(); ++k) {
    sum += std::log2(1.0 + terms.gamma_p[k]);
    common = std::min(common, std::log2(1.0 + terms.gamma_c[k]));
  }
  return sum + (terms.gamma_c.empty() ? 0.0 : common);
}

double objective_lb(const TransformVector& v, const SinrTermCache& cache) {
  return objective_lb(evaluate_sinr_terms(v, cache));
}

AuxiliaryState update_lambdas(const TransformVector& v, const SinrTermCache& cache) {
  const SinrTerms t = evaluate_sinr_terms(v, cache);
  AuxiliaryState aux;
  aux.lambda_p = t.gamma_p;
  aux.lambda_c = t.gamma_c;
  aux.beta_p.assign(t.gamma_p.size(), cd{0.0, 0.0});
  aux.beta_c.assign(t.gamma_c.size(), cd{0.0, 0.0});
  return aux;
}

void update_betas(const TransformVector& v, const SinrTermCache& cache, AuxiliaryState& aux) {
  const SinrTerms t = evaluate_sinr_terms(v, cache);
  const std::size_t K = t.qa.size();
  aux.beta_p.resize(K);
  aux.beta_c.resize(K);
  for (std::size_t i = 0; i < K; ++i) {
    const double qa2 = std::norm(t.qa[i]);
    aux.beta_p[i] = std::sqrt(1.0 + aux.lambda_p[i]) * t.qa[i] / (qa2 + t.interference[i] + 1.0);
    aux.beta_c[i] = std::sqrt(1.0 + aux.lambda_c[i]) * t.za[i] /
                    (std::norm(t.za[i]) + t.zq[i] + qa2 + t.interference[i] + 1.0);
  }
}

double fp_surrogate(const TransformVector& v, const SinrTermCache& cache, const AuxiliaryState& aux, int k_c) {
  const SinrTerms t = evaluate_sinr_terms(v, cache);
  double f = 0;
  for (std::size_t i = 0; i < t.qa.size(); ++i) {
    const double l = aux.lambda_p[i];
    const cd b = aux.beta_p[i];
    f += std::log1p(l) - l + 2.0 * std::sqrt(1.0 + l) * (std::conj(b) * t.qa[i]).real() -
         std::norm(b) * (std::norm(t.qa[i]) + t.interference[i] + 1.0);
  }
  if (k_c >= 0) {
    const double l = aux.lambda_c[k_c];
    const cd b = aux.beta_c[k_c];
    f += std::log1p(l) - l + 2.0 * std::sqrt(1.0 + l) * (std::conj(b) * t.za[k_c]).real() -
         std::norm(b) * (std::norm(t.za[k_c]) + t.zq[k_c] + std::norm(t.qa[k_c]) + t.interference[k_c] + 1.0);
  }
  return f;
}

LinearSystem assemble_system(const AuxiliaryState& aux, const SinrTermCache& cache, int k_c, double total_power,
                             Mode mode) {
  const SystemDims& d = cache.dims;
  const int K = d.K;
  const Eigen::Index mkt = d.mkt(), mt = d.mt();
  if (mode == Mode::RS && (k_c < 0 || k_c >= K)) throw std::out_of_range("assemble_system: k_c out of range");
  const auto off = [&](int i) { return mkt + i * mt; };

  const double w = total_beta_weight(aux, k_c, mode);
  LinearSystem sys;
  sys.Y = (w / total_power) * cache.dense_S();
  sys.x = CVector::Zero(d.vdim());

  for (int i = 0; i < K; ++i) {
    const double b2 = std::norm(aux.beta_p[i]);
    sys.Y.block(off(i), off(i), mt, mt) += b2 * cache.q[i] * cache.q[i].adjoint();
    for (int j = 0; j < K; ++j) sys.Y.block(off(j), off(j), mt, mt) += b2 * cache.Q[j][i];
    sys.x.segment(off(i), mt) = std::sqrt(1.0 + aux.lambda_p[i]) * aux.beta_p[i] * cache.q[i];
  }
  if (mode == Mode::RS) {
    const double bc2 = std::norm(aux.beta_c[k_c]);
    const CVector& z = cache.z[k_c];
    sys.Y.block(0, 0, mkt, mkt) += bc2 * (cache.Zbig[k_c] + z * z.adjoint());
    sys.Y.block(off(k_c), off(k_c), mt, mt) += bc2 * cache.q[k_c] * cache.q[k_c].adjoint();
    for (int j = 0; j < K; ++j) sys.Y.block(off(j), off(j), mt, mt) += bc2 * cache.Q[j][k_c];
    sys.x.head(mkt) = std::sqrt(1.0 + aux.lambda_c[k_c]) * aux.beta_c[k_c] * z;
  }
  sys.Y = hermitize(sys.Y);
  return sys;
}

double rescaled_surrogate(const TransformVector& v, const LinearSystem& sys) {
  const CVector& x = v.stacked();
  return 2.0 * sys.x.dot(x).real() - x.dot(sys.Y * x).real();
}

TransformVector solve_v_unscaled(const AuxiliaryState& aux, const SinrTermCache& cache, int k_c,
                                 double total_power, Mode mode, Kernel kernel) {
  const SystemDims& d = cache.dims;
  const int K = d.K;
  if (mode == Mode::RS && (k_c < 0 || k_c >= K)) throw std::out_of_range("solve_v: k_c out of range");
  const double w = total_beta_weight(aux, k_c, mode);
  if (!(w > 0)) throw DegenerateIterate("solve_v: every beta is zero");

  if (kernel == Kernel::DenseReference) {
    const LinearSystem sys = assemble_system(aux, cache, k_c, total_power, mode);
    return TransformVector(d, hermitian_solve(sys.Y, sys.x));
  }

  // Every D_j^H Q D_j term and S sit on the block diagonal, and Z_k =
  // blkdiag(Q_{1,k}, ..., Q_{K,k}) because C_y is block diagonal, so Y
  // splits into K private blocks and one common block that is block
  // diagonal plus the rank-one z z^H term.
  const Eigen::Index mt = d.mt();
  const double bc2 = mode == Mode::RS ? std::norm(aux.beta_c[k_c]) : 0.0;
  const double fw = w / total_power;
  TransformVector out = TransformVector::zeros(d);

  for (int i = 0; i < K; ++i) {
    const cd rhs_scale = std::sqrt(1.0 + aux.lambda_p[i]) * aux.beta_p[i];
    if (rhs_scale == cd{0.0, 0.0}) continue;
    CMatrix Yi = fw * cache.F_list[i];
    for (int l = 0; l < K; ++l) {
      const double bl2 = std::norm(aux.beta_p[l]);
      if (bl2 > 0) Yi += bl2 * cache.Q[i][l];
    }
    Yi += std::norm(aux.beta_p[i]) * cache.q[i] * cache.q[i].adjoint();
    if (bc2 > 0) {
      Yi += bc2 * cache.Q[i][k_c];
      if (i == k_c) Yi += bc2 * cache.q[i] * cache.q[i].adjoint();
    }
    out.priv(i) = hermitian_solve(hermitize(Yi), rhs_scale * cache.q[i]);
  }

  if (mode == Mode::RS && bc2 > 0) {
    // Sherman-Morrison with x_c = c z:  Y_c^{-1} x_c = c B^{-1} z / (1 + |beta_c|^2 z^H B^{-1} z)
    const CVector& z = cache.z[k_c];
    const cd c = std::sqrt(1.0 + aux.lambda_c[k_c]) * aux.beta_c[k_c];
    CVector u = CVector::Zero(d.mkt());
    for (int i = 0; i < K; ++i) {
      const auto zi = z.segment(i * mt, mt);
      if (zi.squaredNorm() == 0.0) continue;
      const CMatrix Bi = hermitize(bc2 * cache.Zbig[k_c].block(i * mt, i * mt, mt, mt) +
                                   fw * cache.Fbig.block(i * mt, i * mt, mt, mt));
      u.segment(i * mt, mt) = hermitian_solve(Bi, CVector(zi));
    }
    const double denom = 1.0 + bc2 * z.dot(u).real();
    out.common() = (c / denom) * u;
  }
  return out;
}

TransformVector rescale_to_power(const TransformVector& v, const SinrTermCache& cache, double total_power) {
  const double p = cache.power(v.stacked());
  if (!(p > 0)) throw DegenerateIterate("rescale: transform vector carries no power");
  return TransformVector(v.dims(), std::sqrt(total_power / p) * v.stacked());
}

TransformVector solve_v(const AuxiliaryState& aux, const SinrTermCache& cache, int k_c, double total_power,
                        Mode mode, Kernel kernel) {
  return rescale_to_power(solve_v_unscaled(aux, cache, k_c, total_power, mode, kernel), cache, total_power);
}

TransformVector initial_point(const SinrTermCache& cache, Mode mode, double total_power) {
  TransformVector v = TransformVector::zeros(cache.dims);
  if (mode == Mode::RS)
    for (const auto& z : cache.z) v.common() += z;
  for (int k = 0; k < cache.dims.K; ++k) v.priv(k) = cache.q[k];
  return rescale_to_power(v, cache, total_power);
}

Selection select_k_opt(std::span<const TransformVector> candidates, const SinrTermCache& cache) {
  if (candidates.empty()) throw std::invalid_argument("select_k_opt: no candidates");
  Selection best{0, objective_lb(candidates[0], cache)};
  for (std::size_t k = 1; k < candidates.size(); ++k) {
    const double obj = objective_lb(candidates[k], cache);
    if (obj > best.objective_bits + 1e-12 * std::max(1.0, std::abs(best.objective_bits)))
      best = {int(k), obj};
  }
  return best;
}

void SolverConfig::validate() const {
  if (!(total_power > 0)) throw std::invalid_argument("solver: P_t must be > 0");
  if (!(tol_rel > 0)) throw std::invalid_argument("solver: tol_rel must be > 0");
  if (max_iter < 1) throw std::invalid_argument("solver: max_iter must be >= 1");
}

namespace {

TransformVector perturbed_start(const SinrTermCache& cache, Mode mode, double total_power, int restart) {
  TransformVector v = TransformVector::zeros(cache.dims);
  if (mode == Mode::RS)
    for (const auto& z : cache.z) v.common() += z;
  for (int k = 0; k < cache.dims.K; ++k) v.priv(k) = cache.q[k];
  Rng rng(derive_seed(kRestartSeed, {std::uint64_t(restart)}));
  const double n = double(v.stacked().size());
  const double base = v.stacked().norm();
  const double scale = (base > 0 ? kRestartPerturbation * base : 1.0) / std::sqrt(n);
  for (Eigen::Index i = 0; i < v.stacked().size(); ++i) {
    if (mode == Mode::NoRS && i < cache.dims.mkt()) continue;
    v.stacked()(i) += scale * rng.complex_normal();
  }
  return rescale_to_power(v, cache, total_power);
}

}  // namespace

SolverResult run(const SinrTermCache& cache, const SolverConfig& config, const std::optional<TransformVector>& init,
                 Exec exec) {
  config.validate();
  const auto t0 = std::chrono::steady_clock::now();
  const int K = cache.dims.K;
  const double P = config.total_power;
  const Mode mode = config.mode;

  SolverResult res;
  TransformVector v;
  try {
    if (init) {
      check_compatible(*init, cache);
      TransformVector start = *init;
      if (mode == Mode::NoRS) start.common().setZero();
      v = rescale_to_power(start, cache, P);
    } else {
      v = initial_point(cache, mode, P);
    }
  } catch (const DegenerateIterate&) {
    v = perturbed_start(cache, mode, P, res.restarts++);
  }

  double obj = objective_lb(v, cache);
  res.objective_trace.push_back(obj);
  res.k_trace.push_back(-1);
  res.power_trace.push_back(cache.power(v.stacked()));
  res.status = SolverStatus::MaxIter;

  const int n_candidates = mode == Mode::RS ? K : 1;
  std::vector<TransformVector> candidates(n_candidates);
  std::vector<std::exception_ptr> errors(n_candidates);

  for (int it = 0; it < config.max_iter; ++it) {
    AuxiliaryState aux = update_lambdas(v, cache);
    update_betas(v, cache, aux);

    bool degenerate = false;
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel && n_candidates > 1)
    for (int kc = 0; kc < n_candidates; ++kc) {
      try {
        candidates[kc] = solve_v(aux, cache, mode == Mode::RS ? kc : -1, P, mode, config.kernel);
        errors[kc] = nullptr;
      } catch (...) {
        errors[kc] = std::current_exception();
      }
    }
    for (int kc = 0; kc < n_candidates; ++kc) {
      if (!errors[kc]) continue;
      try {
        std::rethrow_exception(errors[kc]);
      } catch (const DegenerateIterate&) {
        degenerate = true;
      }
    }
    if (degenerate) {
      if (res.restarts >= kMaxRestarts) throw std::runtime_error("solver: degenerate iterates persist after restarts");
      v = perturbed_start(cache, mode, P, res.restarts++);
      obj = objective_lb(v, cache);
      continue;
    }

    const Selection sel = select_k_opt(candidates, cache);
    res.iterations = it + 1;
    if (sel.objective_bits < obj) {
      res.status = SolverStatus::DecreaseBreak;
      break;
    }
    v = candidates[sel.k_opt];
    const double change = std::abs(sel.objective_bits - obj) / std::max(std::abs(obj), 1e-300);
    obj = sel.objective_bits;
    res.objective_trace.push_back(obj);
    res.k_trace.push_back(mode == Mode::RS ? sel.k_opt : -1);
    res.power_trace.push_back(cache.power(v.stacked()));
    res.k_opt = mode == Mode::RS ? sel.k_opt : -1;
    if (change < config.tol_rel || obj == 0.0) {
      res.status = SolverStatus::Converged;
      break;
    }
  }

  if (mode == Mode::RS && res.k_opt < 0) {
    // no candidate accepted: report the user whose common rate binds at v
    const SinrTerms t = evaluate_sinr_terms(v, cache);
    res.k_opt = int(std::min_element(t.gamma_c.begin(), t.gamma_c.end()) - t.gamma_c.begin());
  }
  res.v_opt = std::move(v);
  res.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return res;
}

std::string trace_csv(const SolverResult& result) {
  std::ostringstream os;
  os.precision(12);
  os << "iteration,objective_bits,k_opt\n";
  for (std::size_t i = 0; i < result.objective_trace.size(); ++i)
    os << i << ',' << result.objective_trace[i] << ',' << result.k_trace[i] << '\n';
  return os.str();
}

int hardware_threads() { return omp_get_max_threads(); }

void set_worker_threads(int n) {
  if (n > 0) omp_set_num_threads(n);
}

}  // namespace rsbp
