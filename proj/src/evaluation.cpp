#include "rsbp/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <iomanip>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>

namespace rsbp {

namespace {

struct Precoders {
  CVector common;
  std::vector<CVector> priv;
};

Precoders form_precoders(const CMatrix& A_c, const std::vector<CMatrix>& A, const ChannelRealization& r) {
  Precoders p;
  p.common = A_c * r.stacked_y();
  p.priv.reserve(A.size());
  for (std::size_t k = 0; k < A.size(); ++k) p.priv.push_back(A[k] * r.y[k]);
  return p;
}

// Effective gains h_k^H p_j (row k, column j) and h_k^H p_c.
struct Gains {
  Eigen::MatrixXcd priv;
  Eigen::VectorXcd common;
};

Gains effective_gains(const Precoders& p, const ChannelRealization& r) {
  const Eigen::Index K = Eigen::Index(r.h.size());
  Gains g{Eigen::MatrixXcd(K, K), Eigen::VectorXcd(K)};
  for (Eigen::Index k = 0; k < K; ++k) {
    g.common(k) = r.h[k].dot(p.common);
    for (Eigen::Index j = 0; j < K; ++j) g.priv(k, j) = r.h[k].dot(p.priv[j]);
  }
  return g;
}

McEstimate summarize(const std::vector<double>& x) {
  McEstimate e;
  e.n = x.size();
  if (x.empty()) return e;
  double sum = 0;
  for (double v : x) sum += v;
  e.mean = sum / double(x.size());
  if (x.size() > 1) {
    double ss = 0;
    for (double v : x) ss += (v - e.mean) * (v - e.mean);
    e.std_error = std::sqrt(ss / double(x.size() - 1) / double(x.size()));
  }
  return e;
}

struct Transform {
  CMatrix A_c;
  std::vector<CMatrix> A;
};

Transform unpack(const TransformVector& v) {
  Transform t;
  t.A_c = v.common_matrix();
  for (int k = 0; k < v.dims().K; ++k) t.A.push_back(v.private_matrix(k));
  return t;
}

void check_dims(const TransformVector& v, const CovarianceSet& cov, const PilotMatrix& pilot) {
  const SystemDims& d = v.dims();
  if (d.M != cov.M() || d.K != cov.K() || d.M != pilot.M() || d.T != pilot.T())
    throw std::invalid_argument("evaluation: transform vector does not match covariance/pilot dimensions");
}

std::string fmt(double x) {
  std::ostringstream os;
  os << std::setprecision(12) << x;
  return os.str();
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

double instantaneous_sum_rate(const TransformVector& v, const ChannelRealization& r, Mode mode) {
  const Transform t = unpack(v);
  const Gains g = effective_gains(form_precoders(t.A_c, t.A, r), r);
  const Eigen::Index K = g.priv.rows();
  double sum = 0;
  double common = std::numeric_limits<double>::infinity();
  for (Eigen::Index k = 0; k < K; ++k) {
    const double all = g.priv.row(k).cwiseAbs2().sum();
    const double own = std::norm(g.priv(k, k));
    sum += std::log2(1.0 + own / (all - own + 1.0));
    common = std::min(common, std::log2(1.0 + std::norm(g.common(k)) / (all + 1.0)));
  }
  return mode == Mode::RS ? sum + common : sum;
}

McEstimate ergodic_rate_mc(const TransformVector& v, const CovarianceSet& cov, const PilotMatrix& pilot,
                           std::size_t n_chan, Rng& rng, Mode mode, Exec exec) {
  if (n_chan < 1) throw std::invalid_argument("ergodic_rate_mc: n_chan must be >= 1");
  check_dims(v, cov, pilot);
  const std::uint64_t base = rng.next_u64();
  const RealizationSampler sampler(cov, pilot);
  std::vector<double> rates(n_chan);
  const long n = long(n_chan);
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (long s = 0; s < n; ++s) {
    Rng local(derive_seed(base, {std::uint64_t(s)}));
    rates[s] = instantaneous_sum_rate(v, sampler(local), mode);
  }
  return summarize(rates);
}

McEstimate mc_transmit_power(const TransformVector& v, const CovarianceSet& cov, const PilotMatrix& pilot,
                             std::size_t n_chan, Rng& rng) {
  if (n_chan < 1) throw std::invalid_argument("mc_transmit_power: n_chan must be >= 1");
  check_dims(v, cov, pilot);
  const Transform t = unpack(v);
  const RealizationSampler sampler(cov, pilot);
  std::vector<double> power(n_chan);
  for (std::size_t s = 0; s < n_chan; ++s) {
    const Precoders p = form_precoders(t.A_c, t.A, sampler(rng));
    double e = p.common.squaredNorm();
    for (const auto& pk : p.priv) e += pk.squaredNorm();
    power[s] = e;
  }
  return summarize(power);
}

LowerBoundReport lower_bound_check(const TransformVector& v, const SinrTermCache& cache, const CovarianceSet& cov,
                                   const PilotMatrix& pilot, std::size_t n_chan, Rng& rng, Exec exec) {
  if (n_chan < 2) throw std::invalid_argument("lower_bound_check: n_chan must be >= 2");
  check_dims(v, cov, pilot);
  const int K = cov.K();
  const Transform t = unpack(v);
  const RealizationSampler sampler(cov, pilot);
  const std::uint64_t base = rng.next_u64();

  // per-sample private and common rates, laid out [sample][user]
  std::vector<double> rp(n_chan * K), rc(n_chan * K);
  const long n = long(n_chan);
#pragma omp parallel for schedule(static) if (exec == Exec::Parallel)
  for (long s = 0; s < n; ++s) {
    Rng local(derive_seed(base, {std::uint64_t(s)}));
    const ChannelRealization r = sampler(local);
    const Gains g = effective_gains(form_precoders(t.A_c, t.A, r), r);
    for (int k = 0; k < K; ++k) {
      const double all = g.priv.row(k).cwiseAbs2().sum();
      const double own = std::norm(g.priv(k, k));
      rp[s * K + k] = std::log2(1.0 + own / (all - own + 1.0));
      rc[s * K + k] = std::log2(1.0 + std::norm(g.common(k)) / (all + 1.0));
    }
  }

  std::vector<double> mean_c(K, 0.0);
  for (long s = 0; s < n; ++s)
    for (int k = 0; k < K; ++k) mean_c[k] += rc[s * K + k];
  const int k_min = int(std::min_element(mean_c.begin(), mean_c.end()) - mean_c.begin());
  std::vector<double> combined(n_chan);
  for (long s = 0; s < n; ++s) {
    double x = rc[s * K + k_min];
    for (int k = 0; k < K; ++k) x += rp[s * K + k];
    combined[s] = x;
  }
  const McEstimate mc = summarize(combined);

  LowerBoundReport rep;
  rep.lb_sum_rate = objective_lb(v, cache);
  rep.mc_ergodic = mc.mean;
  rep.mc_std_error = mc.std_error;
  rep.margin = rep.mc_ergodic - rep.lb_sum_rate;
  rep.holds = rep.lb_sum_rate <= rep.mc_ergodic + 3.0 * rep.mc_std_error;
  return rep;
}

void SweepSpec::validate() const {
  dims.validate();
  scenario.validate();
  if (!(pilot_power > 0)) throw std::invalid_argument("sweep: pilot_power must be > 0");
  if (!(sigma > 0)) throw std::invalid_argument("sweep: sigma must be > 0");
  if (powers.empty()) throw std::invalid_argument("sweep: P_t grid is empty");
  for (double p : powers)
    if (!(p > 0)) throw std::invalid_argument("sweep: P_t values must be > 0");
  if (modes.empty()) throw std::invalid_argument("sweep: mode list is empty");
  if (n_cov < 1 || n_chan < 1) throw std::invalid_argument("sweep: n_cov and n_chan must be >= 1");
  if (!(tol_rel > 0) || max_iter < 1) throw std::invalid_argument("sweep: invalid convergence settings");
}

SweepResult sweep(const SweepSpec& spec, Exec exec) {
  spec.validate();
  const int n_pow = int(spec.powers.size());
  const int n_mode = int(spec.modes.size());
  const int per_cov = n_pow * n_mode;
  std::vector<SweepCell> cells(std::size_t(spec.n_cov) * per_cov);
  const PilotMatrix pilot = build_pilot_matrix(spec.dims, spec.pilot_power);

#pragma omp parallel for schedule(dynamic, 1) if (exec == Exec::Parallel)
  for (int i = 0; i < spec.n_cov; ++i) {
    Rng cov_rng(derive_seed(spec.master_seed, {1, std::uint64_t(i)}));
    const std::uint64_t chan_seed = derive_seed(spec.master_seed, {2, std::uint64_t(i)});
    CovarianceSet cov;
    std::optional<SinrTermCache> cache;
    bool setup_failed = false;
    try {
      cov = build_covariance_set(spec.dims, spec.scenario, spec.sigma, cov_rng);
      cache = build_sinr_terms(cov, pilot);
    } catch (const std::exception&) {
      setup_failed = true;
    }
    for (int p = 0; p < n_pow; ++p) {
      for (int m = 0; m < n_mode; ++m) {
        SweepCell& cell = cells[std::size_t(i) * per_cov + p * n_mode + m];
        cell.cov_index = i;
        cell.power_index = p;
        cell.mode = spec.modes[m];
        if (setup_failed) {
          cell.failed = true;
          continue;
        }
        try {
          SolverConfig cfg;
          cfg.total_power = spec.powers[p];
          cfg.mode = spec.modes[m];
          cfg.tol_rel = spec.tol_rel;
          cfg.max_iter = spec.max_iter;
          const SolverResult res = run(*cache, cfg, std::nullopt, Exec::Serial);
          cell.lb_sum_rate = res.objective_trace.back();
          cell.iterations = res.iterations;
          cell.k_opt = res.k_opt;
          cell.status = res.status;
          cell.wall_time = res.wall_time;
          if (spec.keep_traces) {
            cell.objective_trace = res.objective_trace;
            cell.k_trace = res.k_trace;
          }
          Rng chan_rng(chan_seed);
          cell.mc = ergodic_rate_mc(res.v_opt, cov, pilot, std::size_t(spec.n_chan), chan_rng, cfg.mode,
                                    Exec::Serial);
        } catch (const std::exception&) {
          cell.failed = true;
        }
      }
    }
  }

  SweepResult out;
  for (int p = 0; p < n_pow; ++p) {
    for (int m = 0; m < n_mode; ++m) {
      RateReport rep;
      rep.P_t = spec.powers[p];
      rep.mode = spec.modes[m];
      rep.n_chan = spec.n_chan;
      std::vector<double> means;
      double lb_sum = 0, single_se = 0;
      for (int i = 0; i < spec.n_cov; ++i) {
        const SweepCell& cell = cells[std::size_t(i) * per_cov + p * n_mode + m];
        if (cell.failed) {
          ++rep.n_failed;
          continue;
        }
        means.push_back(cell.mc.mean);
        lb_sum += cell.lb_sum_rate;
        single_se = cell.mc.std_error;
      }
      rep.n_cov = int(means.size());
      if (!means.empty()) {
        const McEstimate outer = summarize(means);
        rep.mc_sum_rate_mean = outer.mean;
        rep.mc_sum_rate_stderr = means.size() > 1 ? outer.std_error : single_se;
        rep.lb_sum_rate = lb_sum / double(means.size());
      }
      out.reports.push_back(rep);
    }
  }
  for (std::size_t c = 0; c < cells.size(); ++c)
    if (!cells[c].failed) out.timings.push_back({cells[c].wall_time, cells[c].iterations, int(c)});
  out.cells = std::move(cells);
  return out;
}

std::vector<CdfPoint> runtime_cdf(std::span<const TimingSample> samples) {
  if (samples.size() < 2) throw std::invalid_argument("runtime_cdf: need at least two samples");
  std::vector<double> t;
  t.reserve(samples.size());
  for (const auto& s : samples) t.push_back(s.wall_time);
  std::sort(t.begin(), t.end());
  std::vector<CdfPoint> cdf;
  cdf.reserve(t.size());
  for (std::size_t i = 0; i < t.size(); ++i) cdf.push_back({t[i], double(i + 1) / double(t.size())});
  return cdf;
}

void write_rates_csv(std::ostream& os, std::span<const RateReport> reports) {
  os << "mode,P_t,lb_sum_rate,mc_sum_rate_mean,mc_sum_rate_stderr,n_cov,n_chan,n_failed\n";
  for (const auto& r : reports)
    os << to_string(r.mode) << ',' << fmt(r.P_t) << ',' << fmt(r.lb_sum_rate) << ',' << fmt(r.mc_sum_rate_mean)
       << ',' << fmt(r.mc_sum_rate_stderr) << ',' << r.n_cov << ',' << r.n_chan << ',' << r.n_failed << '\n';
}

std::vector<RateReport> read_rates_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "mode,P_t,lb_sum_rate,mc_sum_rate_mean,mc_sum_rate_stderr,n_cov,n_chan,n_failed")
    throw std::runtime_error("rates csv: unexpected header");
  std::vector<RateReport> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 8) throw std::runtime_error("rates csv: expected 8 fields");
    RateReport r;
    r.mode = parse_mode(f[0]);
    r.P_t = std::stod(f[1]);
    r.lb_sum_rate = std::stod(f[2]);
    r.mc_sum_rate_mean = std::stod(f[3]);
    r.mc_sum_rate_stderr = std::stod(f[4]);
    r.n_cov = std::stoi(f[5]);
    r.n_chan = std::stoi(f[6]);
    r.n_failed = std::stoi(f[7]);
    out.push_back(r);
  }
  return out;
}

void write_cdf_csv(std::ostream& os, std::span<const CdfPoint> cdf) {
  os << "run_time_sec,cdf\n";
  for (const auto& p : cdf) os << fmt(p.value) << ',' << fmt(p.fraction) << '\n';
}

std::vector<CdfPoint> read_cdf_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != "run_time_sec,cdf") throw std::runtime_error("cdf csv: unexpected header");
  std::vector<CdfPoint> out;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv(line);
    if (f.size() != 2) throw std::runtime_error("cdf csv: expected 2 fields");
    out.push_back({std::stod(f[0]), std::stod(f[1])});
  }
  return out;
}

void write_traces_csv(std::ostream& os, std::span<const SweepCell> cells) {
  os << "cov_index,power_index,mode,iteration,objective_bits,k_opt\n";
  for (const auto& c : cells)
    for (std::size_t it = 0; it < c.objective_trace.size(); ++it)
      os << c.cov_index << ',' << c.power_index << ',' << to_string(c.mode) << ',' << it << ','
         << fmt(c.objective_trace[it]) << ',' << c.k_trace[it] << '\n';
}

}  // namespace rsbp
