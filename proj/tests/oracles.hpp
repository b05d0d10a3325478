#pragma once

// Reference computations that share no code with the library.

#include <algorithm>
#include <cmath>
#include <complex>
#include <functional>
#include <random>
#include <vector>

#include "fedsense/features.hpp"
#include "fedsense/model.hpp"

namespace fedsense::oracle {

using LComplex = std::complex<long double>;

/// Characteristic polynomial coefficients c[0..n] (c[n] = 1) of an n x n
/// matrix by the Faddeev-LeVerrier recursion.
inline std::vector<LComplex> characteristic_polynomial(const features::ComplexMatrix& a) {
  const std::size_t n = a.dim();
  std::vector<LComplex> c(n + 1);
  c[n] = 1.0L;
  std::vector<LComplex> m(n * n, 0.0L);  // M_0 = 0
  std::vector<LComplex> am(n * n);
  for (std::size_t k = 1; k <= n; ++k) {
    // M_k = A M_{k-1} + c_{n-k+1} I
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < n; ++j) {
        LComplex acc = 0.0L;
        for (std::size_t t = 0; t < n; ++t) acc += LComplex(a(i, t)) * m[t * n + j];
        am[i * n + j] = acc;
      }
    }
    for (std::size_t i = 0; i < n; ++i) am[i * n + i] += c[n - k + 1];
    m = am;
    // c_{n-k} = -tr(A M_k) / k
    LComplex tr = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t t = 0; t < n; ++t) tr += LComplex(a(i, t)) * m[t * n + i];
    }
    c[n - k] = -tr / static_cast<long double>(k);
  }
  return c;
}

inline LComplex horner(const std::vector<LComplex>& c, LComplex x) {
  LComplex acc = 0.0L;
  for (std::size_t i = c.size(); i-- > 0;) acc = acc * x + c[i];
  return acc;
}

/// Real roots of the characteristic polynomial of a Hermitian matrix,
/// descending: Durand-Kerner iteration followed by Newton polishing.
inline std::vector<double> charpoly_eigenvalues(const features::ComplexMatrix& a) {
  const std::size_t n = a.dim();
  const auto c = characteristic_polynomial(a);
  std::vector<long double> real_c(n + 1);
  for (std::size_t i = 0; i <= n; ++i) real_c[i] = c[i].real();

  long double bound = 0.0L;
  for (std::size_t i = 0; i < n; ++i) bound = std::max(bound, std::abs(c[i]));
  bound += 1.0L;

  std::vector<LComplex> z(n);
  const LComplex seed(0.4L, 0.9L);
  for (std::size_t i = 0; i < n; ++i) z[i] = bound * std::pow(seed, static_cast<long double>(i)) / std::abs(std::pow(seed, static_cast<long double>(i)));
  for (int iter = 0; iter < 2000; ++iter) {
    long double change = 0.0L;
    for (std::size_t i = 0; i < n; ++i) {
      LComplex denom = 1.0L;
      for (std::size_t j = 0; j < n; ++j) {
        if (j != i) denom *= z[i] - z[j];
      }
      if (std::abs(denom) == 0.0L) denom = 1e-30L;
      const LComplex step = horner(c, z[i]) / denom;
      z[i] -= step;
      change = std::max(change, std::abs(step));
    }
    if (change < 1e-18L * bound) break;
  }

  std::vector<double> roots;
  for (const LComplex& r : z) {
    long double x = r.real();
    for (int k = 0; k < 50; ++k) {
      long double p = 0.0L, dp = 0.0L;
      for (std::size_t i = n + 1; i-- > 0;) {
        dp = dp * x + p;
        p = p * x + real_c[i];
      }
      if (dp == 0.0L) break;
      const long double step = p / dp;
      x -= step;
      if (std::abs(step) < 1e-20L) break;
    }
    roots.push_back(static_cast<double>(x));
  }
  std::sort(roots.begin(), roots.end(), std::greater<>());
  return roots;
}

/// Random Hermitian matrix with standard normal entries.
template <typename Rng>
features::ComplexMatrix random_hermitian(std::size_t n, Rng& rng) {
  std::normal_distribution<double> g;
  features::ComplexMatrix a(n);
  for (std::size_t i = 0; i < n; ++i) {
    a(i, i) = g(rng);
    for (std::size_t j = i + 1; j < n; ++j) {
      a(i, j) = {g(rng), g(rng)};
      a(j, i) = std::conj(a(i, j));
    }
  }
  return a;
}

/// Central finite-difference gradient of model::loss with step h.
inline model::MlpCoefficients numeric_gradient(const model::MlpCoefficients& coeffs,
                                               std::span<const model::Sample> batch, double h = 1e-6) {
  model::MlpCoefficients out(coeffs.input_dim());
  model::MlpCoefficients probe = coeffs;
  for (std::size_t t = 0; t < model::MlpCoefficients::kTensorCount; ++t) {
    for (std::size_t i = 0; i < probe.tensor(t).size(); ++i) {
      const double orig = probe.tensor(t)[i];
      probe.tensor(t)[i] = orig + h;
      const double up = model::loss(probe, batch);
      probe.tensor(t)[i] = orig - h;
      const double down = model::loss(probe, batch);
      probe.tensor(t)[i] = orig;
      out.tensor(t)[i] = (up - down) / (2.0 * h);
    }
  }
  return out;
}

/// Largest |a - n| / max(|a|, |n|, floor) over all parameters.
inline double max_relative_error(const model::MlpCoefficients& analytic, const model::MlpCoefficients& numeric,
                                 double floor = 1e-6) {
  double worst = 0.0;
  for (std::size_t t = 0; t < model::MlpCoefficients::kTensorCount; ++t) {
    for (std::size_t i = 0; i < analytic.tensor(t).size(); ++i) {
      const double a = analytic.tensor(t)[i];
      const double n = numeric.tensor(t)[i];
      worst = std::max(worst, std::abs(a - n) / std::max({std::abs(a), std::abs(n), floor}));
    }
  }
  return worst;
}

/// Random coefficients with a batch of samples that keep every ReLU away
/// from its kink, so finite differences see a smooth function.
template <typename Rng>
std::pair<model::MlpCoefficients, std::vector<model::Sample>> random_smooth_problem(std::size_t dim, Rng& rng) {
  std::normal_distribution<double> g;
  std::uniform_int_distribution<int> coin(0, 1);
  for (;;) {
    model::MlpCoefficients c(dim);
    c.for_each([&](double& v) { v = 0.7 * g(rng); });
    std::vector<model::Sample> batch(1 + rng() % 8);
    for (auto& s : batch) {
      s.x.resize(dim);
      for (double& v : s.x) v = g(rng);
      s.label = coin(rng) ? Label::SignalPresent : Label::NoiseOnly;
    }
    // Reject draws with a pre-activation within 1e-3 of zero.
    bool smooth = true;
    for (const auto& s : batch) {
      std::vector<double> h1(model::kHidden), h2(model::kHidden);
      for (std::size_t r = 0; r < model::kHidden; ++r) {
        double z = c.tensor(model::MlpCoefficients::B1)[r];
        for (std::size_t k = 0; k < dim; ++k) z += c.tensor(model::MlpCoefficients::W1)[r * dim + k] * s.x[k];
        smooth = smooth && std::abs(z) > 1e-3;
        h1[r] = std::max(0.0, z);
      }
      for (std::size_t r = 0; r < model::kHidden; ++r) {
        double z = c.tensor(model::MlpCoefficients::B2)[r];
        for (std::size_t k = 0; k < model::kHidden; ++k) z += c.tensor(model::MlpCoefficients::W2)[r * model::kHidden + k] * h1[k];
        smooth = smooth && std::abs(z) > 1e-3;
      }
    }
    if (smooth) return {std::move(c), std::move(batch)};
  }
}

}  // namespace fedsense::oracle
