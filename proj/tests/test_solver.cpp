#include <cmath>

#include "doctest.h"
#include "oracles.hpp"

using namespace rsbp;

namespace {

// 1x1x1 cache with hand-picked scalars.
SinrTermCache scalar_cache(cd z, double Z, cd q, double Q) {
  SinrTermCache c;
  c.dims = {1, 1, 1};
  c.z = {CVector::Constant(1, z)};
  c.Zbig = {CMatrix::Constant(1, 1, Z)};
  c.q = {CVector::Constant(1, q)};
  c.Q = {{CMatrix::Constant(1, 1, Q)}};
  c.F_list = {CMatrix::Identity(1, 1)};
  c.Fbig = CMatrix::Identity(1, 1);
  return c;
}

TransformVector scalar_v(cd ac, cd a1) {
  CVector v(2);
  v << ac, a1;
  return TransformVector({1, 1, 1}, v);
}

// P2 objective for a fixed common user: sum of private rates plus that user's common rate, in nats.
double p2_nats(const TransformVector& v, const SinrTermCache& cache, int k_c) {
  const SinrTerms t = evaluate_sinr_terms(v, cache);
  double f = 0;
  for (double g : t.gamma_p) f += std::log1p(g);
  if (k_c >= 0) f += std::log1p(t.gamma_c[k_c]);
  return f;
}

AuxiliaryState fresh_aux(const TransformVector& v, const SinrTermCache& cache) {
  AuxiliaryState aux = update_lambdas(v, cache);
  update_betas(v, cache, aux);
  return aux;
}

}  // namespace

TEST_CASE("SINR bounds on hand-built scalars") {
  SUBCASE("private: |q^H a|^2 = 4, a^H Q a = 1 gives 2") {
    const auto c = scalar_cache(0.0, 0.0, 2.0, 1.0);
    CHECK(sinr_lb_private(scalar_v(0.0, 1.0), c, 0) == doctest::Approx(2.0).epsilon(1e-15));
  }
  SUBCASE("common: |z^H a_c|^2 = 3, a_c^H Z a_c = 2, no private part gives 1") {
    const auto c = scalar_cache(std::sqrt(3.0), 2.0, 0.0, 0.0);
    CHECK(sinr_lb_common(scalar_v(1.0, 0.0), c, 0) == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("common denominator carries the own private mean power") {
    const auto c = scalar_cache(2.0, 1.0, 1.0, 0.5);
    // |za|^2 = 4; denominator 1 + |qa|^2 + aQa + 1 = 1 + 1 + 0.5 + 1
    CHECK(sinr_lb_common(scalar_v(1.0, 1.0), c, 0) == doctest::Approx(4.0 / 3.5).epsilon(1e-15));
  }
  SUBCASE("zero vector") {
    Rng rng(31);
    const auto in = oracle::random_instance(3, 2, 1, rng);
    const auto v0 = TransformVector::zeros(in.dims);
    for (int k = 0; k < 2; ++k) {
      CHECK(sinr_lb_private(v0, in.cache, k) == 0.0);
      CHECK(sinr_lb_common(v0, in.cache, k) == 0.0);
    }
    CHECK(objective_lb(v0, in.cache) == 0.0);
  }
}

TEST_CASE("SINR bounds match a from-scratch recomputation") {
  Rng rng(32);
  const auto in = oracle::random_instance(3, 3, 2, rng);
  const auto v = oracle::random_transform(in.dims, rng);
  const int mkt = int(in.dims.mkt()), mt = int(in.dims.mt());
  // build every term straight from the covariances
  std::vector<CMatrix> cy;
  for (int k = 0; k < 3; ++k) cy.push_back(in.pilot.phi.adjoint() * in.cov.C[k] * in.pilot.phi + CMatrix::Identity(2, 2));
  const CVector ac = v.stacked().head(mkt);
  for (int k = 0; k < 3; ++k) {
    const CVector zk = oracle::dense_z(in.cov, in.pilot, k);
    const CMatrix Zk = oracle::kron(oracle::blkdiag(cy).transpose(), in.cov.C[k]);
    const CVector qk = oracle::vec(in.cov.C[k] * in.pilot.phi);
    const CVector ak = v.stacked().segment(mkt + k * mt, mt);
    double interf = 0;
    for (int j = 0; j < 3; ++j) {
      const CVector aj = v.stacked().segment(mkt + j * mt, mt);
      interf += aj.dot(oracle::kron(cy[j].transpose(), in.cov.C[k]) * aj).real();
    }
    const double qa2 = std::norm(qk.dot(ak));
    const double gp = qa2 / (interf + 1);
    const double gc = std::norm(zk.dot(ac)) / (ac.dot(Zk * ac).real() + qa2 + interf + 1);
    CHECK(oracle::rel_diff(sinr_lb_private(v, in.cache, k), gp) < 1e-10);
    CHECK(oracle::rel_diff(sinr_lb_common(v, in.cache, k), gc) < 1e-10);
  }
}

TEST_CASE("objective in bits") {
  SinrTerms t;
  t.gamma_p = {1, 1, 1, 1};
  t.gamma_c = {1, 1, 1, 1};
  CHECK(objective_lb(t) == doctest::Approx(5.0).epsilon(1e-15));
  t.gamma_c = {3, 1, 7, 15};
  CHECK(objective_lb(t) == doctest::Approx(5.0).epsilon(1e-15));  // min common term is log2(2)

  Rng rng(33);
  const auto in = oracle::random_instance(3, 2, 2, rng);
  auto v = oracle::random_transform(in.dims, rng);
  v.common().setZero();
  double priv = 0;
  for (int k = 0; k < 2; ++k) priv += std::log2(1 + sinr_lb_private(v, in.cache, k));
  CHECK(objective_lb(v, in.cache) == doctest::Approx(priv).epsilon(1e-14));
}

TEST_CASE("lambda and beta updates") {
  Rng rng(34);
  const auto in = oracle::random_instance(3, 2, 2, rng);

  SUBCASE("v = 0 gives zero auxiliaries") {
    const auto aux = fresh_aux(TransformVector::zeros(in.dims), in.cache);
    for (int k = 0; k < 2; ++k) {
      CHECK(aux.lambda_p[k] == 0.0);
      CHECK(aux.lambda_c[k] == 0.0);
      CHECK(aux.beta_p[k] == cd(0));
      CHECK(aux.beta_c[k] == cd(0));
    }
  }

  SUBCASE("lambdas are the SINRs and the update is idempotent") {
    const auto v = oracle::random_transform(in.dims, rng);
    const auto a1 = update_lambdas(v, in.cache), a2 = update_lambdas(v, in.cache);
    for (int k = 0; k < 2; ++k) {
      CHECK(a1.lambda_p[k] == sinr_lb_private(v, in.cache, k));
      CHECK(a1.lambda_c[k] == sinr_lb_common(v, in.cache, k));
      CHECK(a1.lambda_p[k] == a2.lambda_p[k]);
      CHECK(a1.lambda_c[k] == a2.lambda_c[k]);
    }
  }

  SUBCASE("K = 1: the beta term collapses to gamma") {
    const auto one = oracle::random_instance(3, 1, 2, rng);
    const auto v = oracle::random_transform(one.dims, rng);
    const auto aux = fresh_aux(v, one.cache);
    const SinrTerms t = evaluate_sinr_terms(v, one.cache);
    const double g = aux.lambda_p[0];
    const double den = std::norm(t.qa[0]) + t.interference[0] + 1;
    const double term = 2 * std::sqrt(1 + g) * (std::conj(aux.beta_p[0]) * t.qa[0]).real() - std::norm(aux.beta_p[0]) * den;
    CHECK(term == doctest::Approx(g).epsilon(1e-12));
  }
}

TEST_CASE("surrogate is tight after the auxiliary updates") {
  Rng rng(35);
  for (int rep = 0; rep < 20; ++rep) {
    const auto in = oracle::random_instance(8, 3, 2, rng, 3);
    const auto v = oracle::random_transform(in.dims, rng);
    const auto aux = fresh_aux(v, in.cache);
    for (int kc = -1; kc < 3; ++kc) CHECK(oracle::rel_diff(fp_surrogate(v, in.cache, aux, kc), p2_nats(v, in.cache, kc)) < 1e-10);
  }
}

TEST_CASE("closed-form betas are stationary maximizers of the surrogate") {
  Rng rng(36);
  for (int rep = 0; rep < 5; ++rep) {
    const auto in = oracle::random_instance(2, 2, 1, rng);
    const auto v = oracle::random_transform(in.dims, rng);
    const auto aux = fresh_aux(v, in.cache);
    for (int kc = 0; kc < 2; ++kc) {
      const double f0 = fp_surrogate(v, in.cache, aux, kc);
      for (int which = 0; which < 4; ++which) {
        for (const cd step : {cd(1e-6, 0), cd(-1e-6, 0), cd(0, 1e-6), cd(0, -1e-6)}) {
          AuxiliaryState p = aux;
          cd& b = which < 2 ? p.beta_p[which] : p.beta_c[which - 2];
          b += step;
          CHECK(fp_surrogate(v, in.cache, p, kc) <= f0 + 1e-14);
        }
      }
    }
  }
}

TEST_CASE("structured and dense v-solves agree") {
  Rng rng(37);
  for (auto [M, K, T] : {std::tuple{2, 2, 1}, {4, 3, 2}, {6, 2, 3}}) {
    const auto in = oracle::random_instance(M, K, T, rng);
    const auto v = oracle::random_transform(in.dims, rng);
    const auto aux = fresh_aux(v, in.cache);
    for (int kc = 0; kc < K; ++kc) {
      const auto s = solve_v_unscaled(aux, in.cache, kc, 10.0, Mode::RS, Kernel::Structured);
      const auto d = solve_v_unscaled(aux, in.cache, kc, 10.0, Mode::RS, Kernel::DenseReference);
      CHECK((s.stacked() - d.stacked()).norm() <= 1e-9 * d.stacked().norm());
      const LinearSystem sys = assemble_system(aux, in.cache, kc, 10.0, Mode::RS);
      CHECK((sys.Y * s.stacked() - sys.x).norm() <= 1e-8 * sys.x.norm());
    }
    const auto s = solve_v_unscaled(aux, in.cache, -1, 10.0, Mode::NoRS, Kernel::Structured);
    const auto d = solve_v_unscaled(aux, in.cache, -1, 10.0, Mode::NoRS, Kernel::DenseReference);
    CHECK((s.stacked() - d.stacked()).norm() <= 1e-9 * d.stacked().norm());
    CHECK(s.stacked().head(in.dims.mkt()).norm() == 0.0);
  }
}

TEST_CASE("dense Y against an independent assembly from selection matrices") {
  Rng rng(38);
  const auto in = oracle::random_instance(2, 2, 1, rng);
  const auto v = oracle::random_transform(in.dims, rng);
  const auto aux = fresh_aux(v, in.cache);
  const int n = int(in.dims.vdim()), mkt = int(in.dims.mkt()), mt = int(in.dims.mt()), K = 2;
  const double P = 7.0;
  auto D = [&](int i) {  // selection of a_i; i = -1 selects a_c
    CMatrix s = CMatrix::Zero(i < 0 ? mkt : mt, n);
    if (i < 0) s.block(0, 0, mkt, mkt).setIdentity();
    else s.block(0, mkt + i * mt, mt, mt).setIdentity();
    return s;
  };
  const CMatrix S = in.cache.dense_S();
  const int kc = 1;
  CMatrix Y = CMatrix::Zero(n, n);
  CVector x = CVector::Zero(n);
  for (int i = 0; i < K; ++i) {
    const double b2 = std::norm(aux.beta_p[i]);
    CMatrix inner = D(i).adjoint() * in.cache.q[i] * in.cache.q[i].adjoint() * D(i) + S / P;
    for (int j = 0; j < K; ++j) inner += D(j).adjoint() * in.cache.Q[j][i] * D(j);
    Y += b2 * inner;
    x += std::sqrt(1 + aux.lambda_p[i]) * aux.beta_p[i] * D(i).adjoint() * in.cache.q[i];
  }
  const double bc2 = std::norm(aux.beta_c[kc]);
  CMatrix inner = D(-1).adjoint() * in.cache.Zbig[kc] * D(-1) +
                  D(kc).adjoint() * in.cache.q[kc] * in.cache.q[kc].adjoint() * D(kc) +
                  D(-1).adjoint() * in.cache.z[kc] * in.cache.z[kc].adjoint() * D(-1) + S / P;
  for (int j = 0; j < K; ++j) inner += D(j).adjoint() * in.cache.Q[j][kc] * D(j);
  Y += bc2 * inner;
  x += std::sqrt(1 + aux.lambda_c[kc]) * aux.beta_c[kc] * D(-1).adjoint() * in.cache.z[kc];

  const LinearSystem sys = assemble_system(aux, in.cache, kc, P, Mode::RS);
  CHECK((sys.Y - Y).cwiseAbs().maxCoeff() <= 1e-12 * Y.cwiseAbs().maxCoeff());
  CHECK((sys.x - x).cwiseAbs().maxCoeff() <= 1e-12 * x.cwiseAbs().maxCoeff());
}

TEST_CASE("v-update: power equality and stationarity of the unscaled solve") {
  Rng rng(39);
  for (int rep = 0; rep < 10; ++rep) {
    const auto in = oracle::random_instance(2, 2, 1, rng);
    const auto v = rescale_to_power(oracle::random_transform(in.dims, rng), in.cache, 5.0);
    const auto aux = fresh_aux(v, in.cache);
    for (int kc = 0; kc < 2; ++kc) {
      const auto scaled = solve_v(aux, in.cache, kc, 5.0, Mode::RS);
      CHECK(std::abs(in.cache.power(scaled.stacked()) - 5.0) <= 1e-8 * 5.0);

      const LinearSystem sys = assemble_system(aux, in.cache, kc, 5.0, Mode::RS);
      const auto vp = solve_v_unscaled(aux, in.cache, kc, 5.0, Mode::RS);
      const double f0 = rescaled_surrogate(vp, sys);
      for (int d = 0; d < 8; ++d) {
        CVector dir = oracle::random_vector(int(in.dims.vdim()), rng);
        dir /= dir.norm();
        const double eps = 1e-6;
        const double fp = rescaled_surrogate(TransformVector(in.dims, vp.stacked() + eps * dir), sys);
        const double fm = rescaled_surrogate(TransformVector(in.dims, vp.stacked() - eps * dir), sys);
        CHECK(fp <= f0 + 1e-8);
        CHECK(fm <= f0 + 1e-8);
        CHECK(std::abs(fp - fm) / (2 * eps) <= 1e-5);
      }
    }
  }
}

TEST_CASE("a block-coordinate cycle with fixed k_c never lowers that k_c's objective") {
  Rng rng(40);
  for (int rep = 0; rep < 20; ++rep) {
    const auto in = oracle::random_instance(6, 3, 2, rng, 2);
    const double P = 10.0;
    for (int kc = -1; kc < 3; ++kc) {
      const Mode mode = kc < 0 ? Mode::NoRS : Mode::RS;
      TransformVector v = rescale_to_power(oracle::random_transform(in.dims, rng), in.cache, P);
      if (mode == Mode::NoRS) v = rescale_to_power(TransformVector(in.dims, [&] {
                                                     CVector s = v.stacked();
                                                     s.head(in.dims.mkt()).setZero();
                                                     return s;
                                                   }()),
                                                   in.cache, P);
      double prev = p2_nats(v, in.cache, kc);
      for (int it = 0; it < 10; ++it) {
        const auto aux = fresh_aux(v, in.cache);
        CHECK(fp_surrogate(v, in.cache, aux, kc) == doctest::Approx(prev).epsilon(1e-10));
        v = solve_v(aux, in.cache, kc, P, mode);
        const double next = p2_nats(v, in.cache, kc);
        CHECK(next >= prev - 1e-9);
        prev = next;
      }
    }
  }
}

TEST_CASE("the common block of each candidate lives on the k_c-th observation block") {
  Rng rng(41);
  const auto in = oracle::random_instance(4, 3, 2, rng);
  const auto v = initial_point(in.cache, Mode::RS, 10.0);
  const auto aux = fresh_aux(v, in.cache);
  for (int kc = 0; kc < 3; ++kc) {
    const auto c = solve_v(aux, in.cache, kc, 10.0, Mode::RS);
    for (int i = 0; i < 3; ++i) {
      const double n = c.stacked().segment(i * in.dims.mt(), in.dims.mt()).norm();
      if (i == kc) CHECK(n > 0);
      else CHECK(n == 0.0);
    }
  }
}

TEST_CASE("degenerate auxiliaries are reported") {
  Rng rng(42);
  const auto in = oracle::random_instance(3, 2, 1, rng);
  const auto aux = fresh_aux(TransformVector::zeros(in.dims), in.cache);
  CHECK_THROWS_AS(solve_v(aux, in.cache, 0, 1.0, Mode::RS), DegenerateIterate);
  CHECK_THROWS_AS(solve_v(aux, in.cache, -1, 1.0, Mode::NoRS), DegenerateIterate);
  CHECK_THROWS_AS(rescale_to_power(TransformVector::zeros(in.dims), in.cache, 1.0), DegenerateIterate);
}

TEST_CASE("k_opt selection") {
  Rng rng(43);
  SUBCASE("K = 1") {
    const auto in = oracle::random_instance(3, 1, 1, rng);
    const std::vector<TransformVector> c{oracle::random_transform(in.dims, rng)};
    CHECK(select_k_opt(c, in.cache).k_opt == 0);
  }
  SUBCASE("a dominating candidate wins wherever it sits") {
    const auto in = oracle::random_instance(3, 3, 1, rng);
    const auto weak = TransformVector::zeros(in.dims);
    const auto strong = initial_point(in.cache, Mode::RS, 100.0);
    for (int pos = 0; pos < 3; ++pos) {
      std::vector<TransformVector> c(3, weak);
      c[pos] = strong;
      const Selection s = select_k_opt(c, in.cache);
      CHECK(s.k_opt == pos);
      CHECK(s.objective_bits == objective_lb(strong, in.cache));
    }
  }
  SUBCASE("symmetric users tie and the smallest index is chosen") {
    auto in = oracle::random_instance(4, 3, 2, rng);
    in.cov.C = {in.cov.C[0], in.cov.C[0], in.cov.C[0]};
    in.cache = build_sinr_terms(in.cov, in.pilot);
    const auto v = initial_point(in.cache, Mode::RS, 10.0);
    const auto aux = fresh_aux(v, in.cache);
    std::vector<TransformVector> c;
    for (int kc = 0; kc < 3; ++kc) c.push_back(solve_v(aux, in.cache, kc, 10.0, Mode::RS));
    for (int kc = 1; kc < 3; ++kc)
      CHECK(std::abs(objective_lb(c[kc], in.cache) - objective_lb(c[0], in.cache)) <= 1e-9);
    CHECK(select_k_opt(c, in.cache).k_opt == 0);
  }
}

TEST_CASE("run: trace, power feasibility and termination") {
  Rng rng(44);
  for (int rep = 0; rep < 10; ++rep) {
    const auto in = oracle::scenario_instance(8, 3, 2, derive_seed(44, {std::uint64_t(rep)}));
    for (Mode mode : {Mode::RS, Mode::NoRS}) {
      SolverConfig cfg;
      cfg.total_power = 10.0;
      cfg.mode = mode;
      const SolverResult r = run(in.cache, cfg);
      for (std::size_t i = 1; i < r.objective_trace.size(); ++i)
        CHECK(r.objective_trace[i] >= r.objective_trace[i - 1] - 1e-9);
      CHECK(std::abs(in.cache.power(r.v_opt.stacked()) - 10.0) <= 1e-8 * 10.0);
      CHECK(r.objective_trace.back() == doctest::Approx(objective_lb(r.v_opt, in.cache)).epsilon(1e-14));
      CHECK(r.objective_trace.size() == r.k_trace.size());
      CHECK(r.wall_time > 0);
      if (mode == Mode::NoRS) {
        CHECK(r.k_opt == -1);
        CHECK(r.v_opt.common().norm() == 0.0);
      } else {
        CHECK(r.k_opt >= 0);
        CHECK(r.k_opt < 3);
      }
    }
  }
}

TEST_CASE("run: edge behaviour") {
  const auto in = oracle::scenario_instance(8, 3, 2, 45);
  SUBCASE("vanishing power") {
    SolverConfig cfg;
    cfg.total_power = 1e-6;
    CHECK(run(in.cache, cfg).objective_trace.back() < 1e-5);
  }
  SUBCASE("iteration cap") {
    SolverConfig cfg;
    cfg.total_power = 100;
    cfg.max_iter = 1;
    cfg.tol_rel = 1e-300;
    const SolverResult r = run(in.cache, cfg);
    CHECK(r.iterations == 1);
    CHECK(r.status != SolverStatus::Converged);
  }
  SUBCASE("invalid config") {
    SolverConfig cfg;
    cfg.total_power = 0;
    CHECK_THROWS_AS(run(in.cache, cfg), std::invalid_argument);
  }
  SUBCASE("trace export") {
    SolverConfig cfg;
    cfg.total_power = 10;
    const std::string csv = trace_csv(run(in.cache, cfg));
    CHECK(csv.rfind("iteration,objective_bits,k_opt\n0,", 0) == 0);
  }
}

TEST_CASE("run: warm starts") {
  for (int rep = 0; rep < 5; ++rep) {
    const auto in = oracle::scenario_instance(8, 3, 2, derive_seed(46, {std::uint64_t(rep)}));
    SolverConfig cfg;
    cfg.total_power = 10.0;
    cfg.mode = Mode::NoRS;
    const SolverResult nors = run(in.cache, cfg);

    SUBCASE("RS from the NoRS solution never does worse") {
      cfg.mode = Mode::RS;
      const SolverResult rs = run(in.cache, cfg, nors.v_opt);
      CHECK(rs.objective_trace.back() >= nors.objective_trace.back() - 1e-9);
    }
    SUBCASE("more power never hurts from a scaled warm start") {
      SolverConfig big = cfg;
      big.total_power = 100.0;
      const SolverResult r = run(in.cache, big, TransformVector(in.dims, std::sqrt(10.0) * nors.v_opt.stacked()));
      CHECK(std::abs(in.cache.power(r.v_opt.stacked()) - 100.0) <= 1e-8 * 100.0);
      CHECK(r.objective_trace.front() >= nors.objective_trace.back() - 1e-9);
      CHECK(r.objective_trace.back() >= nors.objective_trace.back() - 1e-9);
    }
  }
}

TEST_CASE("single user NoRS reaches the generalized Rayleigh quotient optimum") {
  Rng rng(47);
  for (int rep = 0; rep < 5; ++rep) {
    const auto in = oracle::random_instance(4, 1, 4, rng, 2);
    const double P = 10.0;
    SolverConfig cfg;
    cfg.total_power = P;
    cfg.mode = Mode::NoRS;
    const SolverResult r = run(in.cache, cfg);
    const CMatrix B = in.cache.Q[0][0] + in.cache.F_list[0] / P;
    Eigen::SelfAdjointEigenSolver<CMatrix> es(B);
    const CVector proj = es.eigenvectors().adjoint() * in.cache.q[0];
    double best = 0;
    for (int i = 0; i < proj.size(); ++i) best += std::norm(proj(i)) / es.eigenvalues()(i);
    CHECK(oracle::rel_diff(sinr_lb_private(r.v_opt, in.cache, 0), best) < 1e-6);
  }
}

TEST_CASE("serial and parallel runs are bit-identical") {
  const auto in = oracle::scenario_instance(8, 4, 2, 48);
  SolverConfig cfg;
  cfg.total_power = 100.0;
  const SolverResult a = run(in.cache, cfg, std::nullopt, Exec::Serial);
  const SolverResult b = run(in.cache, cfg, std::nullopt, Exec::Parallel);
  CHECK(a.objective_trace == b.objective_trace);
  CHECK(a.k_trace == b.k_trace);
  CHECK((a.v_opt.stacked() - b.v_opt.stacked()).norm() == 0.0);
}

TEST_CASE("mode names") {
  CHECK(parse_mode("RS") == Mode::RS);
  CHECK(parse_mode("NoRS") == Mode::NoRS);
  CHECK(to_string(Mode::NoRS) == "NoRS");
  CHECK_THROWS(parse_mode("rsma"));
}
