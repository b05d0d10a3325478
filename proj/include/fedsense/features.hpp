#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <vector>

#include "fedsense/signal.hpp"

namespace fedsense::features {

using signal::Complex;
using signal::IqFrame;

inline constexpr std::size_t kDefaultVectorLength = 32768;  // N
inline constexpr std::size_t kDefaultVectorCount = 8;       // L
inline constexpr double kDefaultBandwidthHz = 8e6;
inline constexpr std::size_t kFilterTaps = 129;

struct FeatureParams {
  std::size_t n = kDefaultVectorLength;
  std::size_t l = kDefaultVectorCount;
  // Useful-symbol length of the surrogate waveform, where the prefix repeats.
  std::size_t lag = signal::useful_symbol_length(signal::kDefaultSubcarriers);
  double bandwidth_hz = kDefaultBandwidthHz;

  void validate() const;
};

/// L rows of N consecutive samples each.
class SampleMatrix {
 public:
  SampleMatrix(std::size_t rows, std::size_t cols, std::vector<Complex> data);

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }
  std::span<const Complex> row(std::size_t r) const {
    return std::span<const Complex>(data_).subspan(r * cols_, cols_);
  }
  std::span<const Complex> data() const { return data_; }

 private:
  std::size_t rows_;
  std::size_t cols_;
  std::vector<Complex> data_;
};

/// Dense square complex matrix, row-major. Used for the L x L correlation matrix.
class ComplexMatrix {
 public:
  explicit ComplexMatrix(std::size_t dim) : dim_(dim), data_(dim * dim) {}

  std::size_t dim() const { return dim_; }
  Complex& operator()(std::size_t r, std::size_t c) { return data_[r * dim_ + c]; }
  const Complex& operator()(std::size_t r, std::size_t c) const { return data_[r * dim_ + c]; }
  double frobenius_norm() const;
  Complex trace() const;

  static ComplexMatrix identity(std::size_t dim);

 private:
  std::size_t dim_;
  std::vector<Complex> data_;
};

/// True when |a_ij - conj(a_ji)| <= rel_tol * ||A||_F for all i, j.
bool is_hermitian(const ComplexMatrix& m, double rel_tol = 1e-9);

/// Windowed-sinc (Hamming) low-pass prototype with unit DC gain.
/// `cutoff` is the one-sided cutoff in cycles per sample, in (0, 0.5].
std::vector<double> design_lowpass(double cutoff, std::size_t taps = kFilterTaps);

/// Complex-baseband band filter of two-sided width `bandwidth_hz` around DC.
/// Output has the input's length; the filter delay is compensated and edges
/// see zero padding.
IqFrame bandpass_filter(const IqFrame& frame, double bandwidth_hz);

/// First n*l samples, row-major into l rows of n.
SampleMatrix frame_samples(const IqFrame& frame, std::size_t n, std::size_t l);

double mean_power(const SampleMatrix& m);

/// R = X X^H / N.
ComplexMatrix correlation_matrix(const SampleMatrix& m);

/// Eigenvalues of a Hermitian matrix in descending order, by cyclic complex
/// Jacobi rotations. Throws InvalidArgument when the input is not Hermitian.
std::vector<double> eigenvalues_hermitian(const ComplexMatrix& r);

/// Largest over smallest eigenvalue. `eigs` sorted descending.
double decision_metric(std::span<const double> eigs);

/// |sum x[k] conj(x[k+lag])| / sum |x[k]|^2 over the overlap; 0 for a silent frame.
double autocorrelation(const IqFrame& frame, std::size_t lag);

struct FeatureRecord {
  std::vector<double> eigenvalues;  // descending
  double metric_t = 0.0;
  double mean_power = 0.0;
  double autocorr = 0.0;
  Label label = Label::NoiseOnly;

  friend bool operator==(const FeatureRecord&, const FeatureRecord&) = default;
};

/// Filter, frame, then mean power, correlation eigenvalues, T, and the
/// autocorrelation of the filtered frame.
FeatureRecord extract_features(const IqFrame& frame, const FeatureParams& params);

struct Normalizer {
  enum class Kind { MinMax, ZScore };

  Kind kind = Kind::ZScore;
  // MinMax: (min, max). ZScore: (mean, population std).
  double first = 0.0;
  double second = 1.0;

  static Normalizer fit(Kind kind, std::span<const double> values);
  double apply(double value) const;
};

struct NormalizerSet {
  std::vector<Normalizer> eigenvalues;
  Normalizer metric_t;
  Normalizer mean_power;
  Normalizer autocorr;

  std::size_t input_dim() const { return eigenvalues.size() + 3; }
};

/// z-score for every eigenvalue, T and mu; min-max for the autocorrelation.
/// Throws DegenerateData on fewer than two records or a zero-spread feature.
NormalizerSet fit_normalizers(std::span<const FeatureRecord> records);

/// Model input in the fixed order [g_0 .. g_{L-1}, T, mu, autocorr].
/// Min-max outputs are clamped to [0, 1].
std::vector<double> apply_normalizers(const NormalizerSet& norms, const FeatureRecord& record);

/// CSV with header g0..g{L-1},t,mu,ac,label (label 1 = signal present).
void write_feature_csv(std::ostream& out, std::span<const FeatureRecord> records);
std::vector<FeatureRecord> read_feature_csv(std::istream& in);

}  // namespace fedsense::features
