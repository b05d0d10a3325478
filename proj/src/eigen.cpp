#include <algorithm>
#include <cmath>
#include <functional>

#include "fedsense/errors.hpp"
#include "fedsense/features.hpp"

namespace fedsense::features {

namespace {

constexpr double kConvergence = 1e-12;
constexpr int kMaxSweeps = 100;

double off_diagonal_norm(const ComplexMatrix& a) {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.dim(); ++i) {
    for (std::size_t j = 0; j < a.dim(); ++j) {
      if (i != j) acc += std::norm(a(i, j));
    }
  }
  return std::sqrt(acc);
}

// A <- U^H A U for the unitary U that zeroes a(p, q). U acts on rows/cols p, q:
//   U = diag(1, e^{-i phi}) * [[c, s], [-s, c]],  phi = arg a(p, q).
void rotate(ComplexMatrix& a, std::size_t p, std::size_t q) {
  const Complex apq = a(p, q);
  const double magnitude = std::abs(apq);
  if (magnitude == 0.0) return;

  const Complex phase = apq / magnitude;  // e^{i phi}
  const double app = a(p, p).real();
  const double aqq = a(q, q).real();
  const double tau = (aqq - app) / (2.0 * magnitude);
  const double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
  const double c = 1.0 / std::sqrt(1.0 + t * t);
  const double s = t * c;

  const Complex u_pp = c;
  const Complex u_pq = s;
  const Complex u_qp = -s * std::conj(phase);
  const Complex u_qq = c * std::conj(phase);

  const std::size_t n = a.dim();
  for (std::size_t k = 0; k < n; ++k) {  // A U
    const Complex akp = a(k, p);
    const Complex akq = a(k, q);
    a(k, p) = akp * u_pp + akq * u_qp;
    a(k, q) = akp * u_pq + akq * u_qq;
  }
  for (std::size_t k = 0; k < n; ++k) {  // U^H (A U)
    const Complex apk = a(p, k);
    const Complex aqk = a(q, k);
    a(p, k) = std::conj(u_pp) * apk + std::conj(u_qp) * aqk;
    a(q, k) = std::conj(u_pq) * apk + std::conj(u_qq) * aqk;
  }
  a(p, q) = 0.0;
  a(q, p) = 0.0;
  a(p, p) = a(p, p).real();
  a(q, q) = a(q, q).real();
}

}  // namespace

std::vector<double> eigenvalues_hermitian(const ComplexMatrix& r) {
  if (r.dim() == 0) throw InvalidArgument("eigenvalues_hermitian: empty matrix");
  if (!is_hermitian(r)) throw InvalidArgument("eigenvalues_hermitian: matrix is not Hermitian");

  ComplexMatrix a = r;
  for (std::size_t i = 0; i < a.dim(); ++i) a(i, i) = a(i, i).real();

  const double scale = a.frobenius_norm();
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    if (off_diagonal_norm(a) <= kConvergence * scale) break;
    for (std::size_t p = 0; p + 1 < a.dim(); ++p) {
      for (std::size_t q = p + 1; q < a.dim(); ++q) rotate(a, p, q);
    }
  }

  std::vector<double> eigs(a.dim());
  for (std::size_t i = 0; i < a.dim(); ++i) eigs[i] = a(i, i).real();
  std::sort(eigs.begin(), eigs.end(), std::greater<>());
  return eigs;
}

}  // namespace fedsense::features
