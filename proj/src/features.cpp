#include "fedsense/features.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>
#include <string>

#include "fedsense/errors.hpp"
#include "fedsense/format.hpp"

namespace fedsense::features {

void FeatureParams::validate() const {
  if (l < 2) throw InvalidArgument("features: l must be >= 2");
  if (n < l) throw InvalidArgument("features: n must be >= l");
  if (lag < 1) throw InvalidArgument("features: lag must be >= 1");
  if (!(bandwidth_hz > 0.0)) throw InvalidArgument("features: bandwidth must be positive");
}

SampleMatrix::SampleMatrix(std::size_t rows, std::size_t cols, std::vector<Complex> data)
    : rows_(rows), cols_(cols), data_(std::move(data)) {
  if (rows_ < 2 || cols_ < rows_) {
    throw InvalidArgument("SampleMatrix: need L >= 2 rows of N >= L samples");
  }
  if (data_.size() != rows_ * cols_) {
    throw InvalidArgument("SampleMatrix: data size does not match rows * cols");
  }
}

double ComplexMatrix::frobenius_norm() const {
  double acc = 0.0;
  for (const Complex& v : data_) acc += std::norm(v);
  return std::sqrt(acc);
}

Complex ComplexMatrix::trace() const {
  Complex acc{0.0, 0.0};
  for (std::size_t i = 0; i < dim_; ++i) acc += (*this)(i, i);
  return acc;
}

ComplexMatrix ComplexMatrix::identity(std::size_t dim) {
  ComplexMatrix m(dim);
  for (std::size_t i = 0; i < dim; ++i) m(i, i) = 1.0;
  return m;
}

bool is_hermitian(const ComplexMatrix& m, double rel_tol) {
  const double tol = rel_tol * m.frobenius_norm();
  for (std::size_t i = 0; i < m.dim(); ++i) {
    for (std::size_t j = i; j < m.dim(); ++j) {
      if (std::abs(m(i, j) - std::conj(m(j, i))) > tol) return false;
    }
  }
  return true;
}

// ---------------------------------------------------------------- filtering

std::vector<double> design_lowpass(double cutoff, std::size_t taps) {
  if (!(cutoff > 0.0) || cutoff > 0.5) {
    throw InvalidArgument("design_lowpass: cutoff must be in (0, 0.5]");
  }
  if (taps % 2 == 0) throw InvalidArgument("design_lowpass: tap count must be odd");
  const auto centre = static_cast<double>(taps / 2);
  std::vector<double> h(taps);
  for (std::size_t i = 0; i < taps; ++i) {
    const double m = static_cast<double>(i) - centre;
    const double sinc = m == 0.0 ? 2.0 * cutoff
                                 : std::sin(2.0 * std::numbers::pi * cutoff * m) / (std::numbers::pi * m);
    const double window =
        0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                               static_cast<double>(taps - 1));
    h[i] = sinc * window;
  }
  double sum = 0.0;
  for (double v : h) sum += v;
  for (double& v : h) v /= sum;
  return h;
}

IqFrame bandpass_filter(const IqFrame& frame, double bandwidth_hz) {
  if (!(bandwidth_hz > 0.0) || bandwidth_hz > frame.sample_rate_hz()) {
    throw InvalidArgument("bandpass_filter: bandwidth must be in (0, sample_rate]");
  }
  const auto h = design_lowpass(bandwidth_hz / (2.0 * frame.sample_rate_hz()));
  const auto in = frame.samples();
  const std::size_t n = in.size();
  const std::size_t half = h.size() / 2;

  std::vector<Complex> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    // out[i] = sum_k h[k] in[i + half - k]
    const std::size_t k_lo = i + half >= n ? i + half - (n - 1) : 0;
    const std::size_t k_hi = std::min(h.size() - 1, i + half);
    double re = 0.0;
    double im = 0.0;
    for (std::size_t k = k_lo; k <= k_hi; ++k) {
      const Complex& x = in[i + half - k];
      re += h[k] * x.real();
      im += h[k] * x.imag();
    }
    out[i] = {re, im};
  }
  return frame.with_samples(std::move(out));
}

// ---------------------------------------------------------------- detector statistics

SampleMatrix frame_samples(const IqFrame& frame, std::size_t n, std::size_t l) {
  if (n == 0 || l == 0 || frame.size() / n < l) {
    throw InvalidArgument("frame_samples: frame of " + std::to_string(frame.size()) +
                          " samples is shorter than n*l");
  }
  const auto in = frame.samples();
  return SampleMatrix(l, n, std::vector<Complex>(in.begin(), in.begin() + static_cast<long>(n * l)));
}

double mean_power(const SampleMatrix& m) { return signal::mean_square(m.data()); }

ComplexMatrix correlation_matrix(const SampleMatrix& m) {
  const std::size_t dim = m.rows();
  const double inv_n = 1.0 / static_cast<double>(m.cols());
  ComplexMatrix r(dim);
  for (std::size_t i = 0; i < dim; ++i) {
    const auto xi = m.row(i);
    for (std::size_t j = i; j < dim; ++j) {
      const auto xj = m.row(j);
      Complex acc{0.0, 0.0};
      for (std::size_t k = 0; k < xi.size(); ++k) acc += xi[k] * std::conj(xj[k]);
      acc *= inv_n;
      if (i == j) acc = acc.real();
      r(i, j) = acc;
      r(j, i) = std::conj(acc);
    }
  }
  return r;
}

double decision_metric(std::span<const double> eigs) {
  if (eigs.empty()) throw InvalidArgument("decision_metric: no eigenvalues");
  const auto [lo, hi] = std::minmax_element(eigs.begin(), eigs.end());
  if (!(*lo > 0.0)) {
    throw DegenerateInput("decision_metric: smallest eigenvalue is not positive (zero or rank-deficient frame)");
  }
  return *hi / *lo;
}

double autocorrelation(const IqFrame& frame, std::size_t lag) {
  const auto x = frame.samples();
  if (lag < 1 || lag >= x.size()) {
    throw InvalidArgument("autocorrelation: lag must be in [1, frame length)");
  }
  Complex cross{0.0, 0.0};
  double energy = 0.0;
  for (std::size_t k = 0; k + lag < x.size(); ++k) {
    cross += x[k] * std::conj(x[k + lag]);
    energy += std::norm(x[k]);
  }
  if (energy == 0.0) return 0.0;
  // |cross| <= sqrt(energy * energy_late), so the larger denominator keeps the ratio in [0, 1].
  double energy_late = 0.0;
  for (std::size_t k = lag; k < x.size(); ++k) energy_late += std::norm(x[k]);
  return std::abs(cross) / std::max(energy, std::sqrt(energy * energy_late));
}

FeatureRecord extract_features(const IqFrame& frame, const FeatureParams& params) {
  params.validate();
  const IqFrame filtered = bandpass_filter(frame, params.bandwidth_hz);
  const SampleMatrix m = frame_samples(filtered, params.n, params.l);

  FeatureRecord record;
  record.mean_power = mean_power(m);
  record.eigenvalues = eigenvalues_hermitian(correlation_matrix(m));
  record.metric_t = decision_metric(record.eigenvalues);
  record.autocorr = autocorrelation(filtered, params.lag);
  record.label = frame.label();
  return record;
}

// ---------------------------------------------------------------- normalization

Normalizer Normalizer::fit(Kind kind, std::span<const double> values) {
  if (values.size() < 2) throw DegenerateData("normalizer: need at least 2 values");
  const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
  if (!(*hi > *lo)) throw DegenerateData("normalizer: feature has zero spread");
  Normalizer norm;
  norm.kind = kind;
  if (kind == Kind::MinMax) {
    norm.first = *lo;
    norm.second = *hi;
  } else {
    double mean = 0.0;
    for (double v : values) mean += v;
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) var += (v - mean) * (v - mean);
    var /= static_cast<double>(values.size());
    const double sd = std::sqrt(var);
    if (!(sd > 0.0)) throw DegenerateData("normalizer: feature has zero spread");
    norm.first = mean;
    norm.second = sd;
  }
  return norm;
}

double Normalizer::apply(double value) const {
  if (kind == Kind::MinMax) {
    return std::clamp((value - first) / (second - first), 0.0, 1.0);
  }
  return (value - first) / second;
}

NormalizerSet fit_normalizers(std::span<const FeatureRecord> records) {
  if (records.size() < 2) throw DegenerateData("fit_normalizers: need at least 2 records");
  const std::size_t l = records.front().eigenvalues.size();
  for (const auto& r : records) {
    if (r.eigenvalues.size() != l) {
      throw InvalidArgument("fit_normalizers: records disagree on eigenvalue count");
    }
  }

  auto column = [&](auto&& pick) {
    std::vector<double> values;
    values.reserve(records.size());
    for (const auto& r : records) values.push_back(pick(r));
    return values;
  };
  using Kind = Normalizer::Kind;

  NormalizerSet set;
  for (std::size_t i = 0; i < l; ++i) {
    set.eigenvalues.push_back(
        Normalizer::fit(Kind::ZScore, column([i](const FeatureRecord& r) { return r.eigenvalues[i]; })));
  }
  set.metric_t = Normalizer::fit(Kind::ZScore, column([](const FeatureRecord& r) { return r.metric_t; }));
  set.mean_power =
      Normalizer::fit(Kind::ZScore, column([](const FeatureRecord& r) { return r.mean_power; }));
  set.autocorr = Normalizer::fit(Kind::MinMax, column([](const FeatureRecord& r) { return r.autocorr; }));
  return set;
}

std::vector<double> apply_normalizers(const NormalizerSet& norms, const FeatureRecord& record) {
  if (record.eigenvalues.size() != norms.eigenvalues.size()) {
    throw InvalidArgument("apply_normalizers: eigenvalue count does not match the fitted set");
  }
  std::vector<double> x;
  x.reserve(norms.input_dim());
  for (std::size_t i = 0; i < record.eigenvalues.size(); ++i) {
    x.push_back(norms.eigenvalues[i].apply(record.eigenvalues[i]));
  }
  x.push_back(norms.metric_t.apply(record.metric_t));
  x.push_back(norms.mean_power.apply(record.mean_power));
  x.push_back(norms.autocorr.apply(record.autocorr));
  return x;
}

// ---------------------------------------------------------------- CSV

void write_feature_csv(std::ostream& out, std::span<const FeatureRecord> records) {
  const std::size_t l =
      records.empty() ? kDefaultVectorCount : records.front().eigenvalues.size();
  for (std::size_t i = 0; i < l; ++i) out << 'g' << i << ',';
  out << "t,mu,ac,label\n";
  for (const auto& r : records) {
    if (r.eigenvalues.size() != l) {
      throw InvalidArgument("write_feature_csv: records disagree on eigenvalue count");
    }
    for (double g : r.eigenvalues) out << format_double(g) << ',';
    out << format_double(r.metric_t) << ',' << format_double(r.mean_power) << ','
        << format_double(r.autocorr) << ',' << (is_present(r.label) ? 1 : 0) << '\n';
  }
}

std::vector<FeatureRecord> read_feature_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw FormatError("feature CSV: missing header");
  const auto header = split_csv_line(line);
  if (header.size() < 6 || header[header.size() - 4] != "t" || header[header.size() - 3] != "mu" ||
      header[header.size() - 2] != "ac" || header.back() != "label") {
    throw FormatError("feature CSV: unexpected header '" + line + "'");
  }
  const std::size_t l = header.size() - 4;
  for (std::size_t i = 0; i < l; ++i) {
    if (header[i] != "g" + std::to_string(i)) {
      throw FormatError("feature CSV: unexpected column '" + header[i] + "'");
    }
  }

  std::vector<FeatureRecord> records;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw FormatError("feature CSV line " + std::to_string(line_no) + ": wrong column count");
    }
    FeatureRecord r;
    for (std::size_t i = 0; i < l; ++i) r.eigenvalues.push_back(parse_double(cells[i]));
    r.metric_t = parse_double(cells[l]);
    r.mean_power = parse_double(cells[l + 1]);
    r.autocorr = parse_double(cells[l + 2]);
    if (cells[l + 3] == "1") {
      r.label = Label::SignalPresent;
    } else if (cells[l + 3] == "0") {
      r.label = Label::NoiseOnly;
    } else {
      throw FormatError("feature CSV line " + std::to_string(line_no) + ": label must be 0 or 1");
    }
    records.push_back(std::move(r));
  }
  return records;
}

}  // namespace fedsense::features
