/**
 * @file matrix_kit.hpp
 * @brief Complex dense linear-algebra primitives shared by every module.
 *
 * All vectorization in this project is column-major: vec(A) stacks the
 * columns of A. The Kronecker identities used to build the SINR terms,
 *
 *     vec(A X B) = (B^T (x) A) vec(X),
 *
 * hold only under this convention, so every module goes through vec()/unvec()
 * from here instead of touching raw storage.
 */
#pragma once

#include <cmath>
#include <complex>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

namespace rsbp {

using cd = std::complex<double>;
using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using RVector = Eigen::VectorXd;

/// Thrown when a Hermitian system cannot be solved to the residual contract.
class LinalgError : public std::runtime_error {
 public:
  LinalgError(const std::string& what, double condition_estimate)
      : std::runtime_error(what), condition_(condition_estimate) {}
  double condition_estimate() const noexcept { return condition_; }

 private:
  double condition_;
};

/**
 * Seeded random stream. One instance per logical thread of execution;
 * independent streams come from derive_seed() over (master seed, coordinates).
 */
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  /// CN(0,1): independent real/imag parts, each of variance 1/2.
  cd complex_normal() {
    const double re = normal_(engine_);
    const double im = normal_(engine_);
    return {re, im};
  }
  double uniform(double lo, double hi) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double exponential() { return std::exponential_distribution<double>(1.0)(engine_); }
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, std::sqrt(0.5)};
};

/// splitmix64 finalizer chain over the coordinates; stable across platforms.
std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> coords);

CMatrix kron(const CMatrix& a, const CMatrix& b);

CVector vec(const CMatrix& a);
CMatrix unvec(const CVector& v, Eigen::Index rows, Eigen::Index cols);

CMatrix blkdiag(std::span<const CMatrix> blocks);

/// max |A - A^H| <= rel_tol * max |A|.
bool is_hermitian(const CMatrix& a, double rel_tol = 1e-10);
/// Hermitian and every eigenvalue >= -rel_tol * largest eigenvalue.
bool is_psd(const CMatrix& a, double rel_tol = 1e-9);

/// Ascending eigenvalues of the Hermitian part of `a`.
RVector hermitian_eigenvalues(const CMatrix& a);

/**
 * Factor L with L L^H = cov, built from an eigendecomposition with negative
 * eigenvalues clipped to zero. Rejects covariances with an eigenvalue below
 * -rel_tol * lambda_max.
 */
CMatrix psd_factor(const CMatrix& cov, double rel_tol = 1e-9);

/// Reusable N_C(0, cov) sampler; the factorization is done once.
class ComplexGaussianSampler {
 public:
  explicit ComplexGaussianSampler(const CMatrix& cov);
  CVector operator()(Rng& rng) const;
  const CMatrix& factor() const { return factor_; }

 private:
  CMatrix factor_;
};

CVector sample_complex_gaussian(const CMatrix& cov, Rng& rng);

/**
 * Solves y v = x for Hermitian positive definite y. Throws LinalgError when
 * y is indefinite or the residual exceeds 1e-8 ||x||.
 */
CVector hermitian_solve(const CMatrix& y, const CVector& x);

}  // namespace rsbp
