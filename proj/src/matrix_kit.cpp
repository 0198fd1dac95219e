#include "rsbp/matrix_kit.hpp"

#include <algorithm>
#include <limits>
#include <sstream>

namespace rsbp {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::initializer_list<std::uint64_t> coords) {
  std::uint64_t h = splitmix64(master);
  for (std::uint64_t c : coords) h = splitmix64(h ^ splitmix64(c + 0x632be59bd9b4e019ULL));
  return h;
}

CMatrix kron(const CMatrix& a, const CMatrix& b) {
  CMatrix out(a.rows() * b.rows(), a.cols() * b.cols());
  for (Eigen::Index j = 0; j < a.cols(); ++j)
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
  return out;
}

CVector vec(const CMatrix& a) {
  // Eigen's default storage is column-major, so this is a plain copy.
  return Eigen::Map<const CVector>(a.data(), a.size());
}

CMatrix unvec(const CVector& v, Eigen::Index rows, Eigen::Index cols) {
  if (v.size() != rows * cols) throw std::invalid_argument("unvec: length does not match rows*cols");
  return Eigen::Map<const CMatrix>(v.data(), rows, cols);
}

CMatrix blkdiag(std::span<const CMatrix> blocks) {
  Eigen::Index rows = 0, cols = 0;
  for (const auto& b : blocks) {
    rows += b.rows();
    cols += b.cols();
  }
  CMatrix out = CMatrix::Zero(rows, cols);
  Eigen::Index r = 0, c = 0;
  for (const auto& b : blocks) {
    out.block(r, c, b.rows(), b.cols()) = b;
    r += b.rows();
    c += b.cols();
  }
  return out;
}

bool is_hermitian(const CMatrix& a, double rel_tol) {
  if (a.rows() != a.cols()) return false;
  const double scale = a.size() == 0 ? 0.0 : a.cwiseAbs().maxCoeff();
  const double dev = a.size() == 0 ? 0.0 : (a - a.adjoint()).cwiseAbs().maxCoeff();
  return dev <= rel_tol * scale;
}

RVector hermitian_eigenvalues(const CMatrix& a) {
  const CMatrix herm = 0.5 * (a + a.adjoint());
  Eigen::SelfAdjointEigenSolver<CMatrix> es(herm, Eigen::EigenvaluesOnly);
  return es.eigenvalues();
}

bool is_psd(const CMatrix& a, double rel_tol) {
  if (!is_hermitian(a)) return false;
  if (a.size() == 0) return true;
  const RVector ev = hermitian_eigenvalues(a);
  const double top = std::max(ev.maxCoeff(), 0.0);
  return ev.minCoeff() >= -rel_tol * top;
}

CMatrix psd_factor(const CMatrix& cov, double rel_tol) {
  if (cov.rows() != cov.cols()) throw std::invalid_argument("psd_factor: covariance is not square");
  if (!is_hermitian(cov, 1e-10)) throw std::invalid_argument("psd_factor: covariance is not Hermitian");
  const Eigen::Index n = cov.rows();
  if (n == 0 || cov.cwiseAbs().maxCoeff() == 0.0) return CMatrix::Zero(n, n);
  Eigen::SelfAdjointEigenSolver<CMatrix> es(0.5 * (cov + cov.adjoint()));
  RVector ev = es.eigenvalues();
  const double top = std::max(ev.maxCoeff(), 0.0);
  if (ev.minCoeff() < -rel_tol * top) {
    std::ostringstream msg;
    msg << "psd_factor: covariance has eigenvalue " << ev.minCoeff() << " below tolerance";
    throw std::invalid_argument(msg.str());
  }
  ev = ev.cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * ev.asDiagonal();
}

ComplexGaussianSampler::ComplexGaussianSampler(const CMatrix& cov) : factor_(psd_factor(cov)) {}

CVector ComplexGaussianSampler::operator()(Rng& rng) const {
  CVector g(factor_.cols());
  for (Eigen::Index i = 0; i < g.size(); ++i) g(i) = rng.complex_normal();
  return factor_ * g;
}

CVector sample_complex_gaussian(const CMatrix& cov, Rng& rng) {
  return ComplexGaussianSampler(cov)(rng);
}

CVector hermitian_solve(const CMatrix& y, const CVector& x) {
  if (y.rows() != y.cols() || y.rows() != x.size())
    throw std::invalid_argument("hermitian_solve: dimension mismatch");
  auto condition = [&] {
    const RVector ev = hermitian_eigenvalues(y);
    const double lo = ev.minCoeff();
    return lo > 0.0 ? ev.maxCoeff() / lo : std::numeric_limits<double>::infinity();
  };
  Eigen::LLT<CMatrix> llt(y);
  if (llt.info() != Eigen::Success) {
    const double cond = condition();
    std::ostringstream msg;
    msg << "hermitian_solve: matrix is not positive definite (condition estimate " << cond << ")";
    throw LinalgError(msg.str(), cond);
  }
  CVector v = llt.solve(x);
  const double xn = x.norm();
  double res = (y * v - x).norm();
  if (res > 1e-8 * xn) {
    // one step of iterative refinement before giving up
    v += llt.solve(x - y * v);
    res = (y * v - x).norm();
    if (res > 1e-8 * xn) {
      const double cond = condition();
      std::ostringstream msg;
      msg << "hermitian_solve: residual " << res / xn << " exceeds tolerance (condition estimate "
          << cond << ")";
      throw LinalgError(msg.str(), cond);
    }
  }
  return v;
}

}  // namespace rsbp
