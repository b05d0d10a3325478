#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

#include "doctest.h"
#include "fedsense/errors.hpp"
#include "fedsense/features.hpp"
#include "oracles.hpp"

using namespace fedsense;
using namespace fedsense::features;
using signal::Complex;

namespace {

IqFrame noise_frame(std::vector<Complex> samples) {
  return IqFrame(std::move(samples), 1e6, Label::NoiseOnly, std::nullopt);
}

IqFrame tone(std::size_t n, double cycles_per_sample, double amplitude = 1.0) {
  std::vector<Complex> x(n);
  for (std::size_t k = 0; k < n; ++k) {
    x[k] = std::polar(amplitude, 2.0 * std::numbers::pi * cycles_per_sample * static_cast<double>(k));
  }
  return noise_frame(std::move(x));
}

// Power of the filtered frame away from the zero-padded edges.
double interior_power(const IqFrame& f) {
  double acc = 0.0;
  const std::size_t edge = kFilterTaps;
  for (std::size_t k = edge; k + edge < f.size(); ++k) acc += std::norm(f.samples()[k]);
  return acc / static_cast<double>(f.size() - 2 * edge);
}

}  // namespace

TEST_SUITE("features") {
  TEST_CASE("lowpass prototype has unit DC gain and symmetry") {
    const auto h = design_lowpass(0.2);
    REQUIRE(h.size() == kFilterTaps);
    double sum = 0.0;
    for (double v : h) sum += v;
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t i = 0; i < h.size(); ++i) CHECK(h[i] == doctest::Approx(h[h.size() - 1 - i]));
    CHECK_THROWS_AS(design_lowpass(0.0), InvalidArgument);
    CHECK_THROWS_AS(design_lowpass(0.6), InvalidArgument);
  }

  TEST_CASE("full-band filter passes the input") {
    const auto in = signal::generate_noise(4096, 0.0, 3, 1e6);
    const auto out = bandpass_filter(in, 1e6);
    REQUIRE(out.size() == in.size());
    double err = 0.0;
    for (std::size_t k = kFilterTaps; k + kFilterTaps < in.size(); ++k) {
      err = std::max(err, std::abs(out.samples()[k] - in.samples()[k]));
    }
    CHECK(err < 0.01);
  }

  TEST_CASE("filter keeps in-band tones and rejects out-of-band tones") {
    // 8 MHz two-sided bandwidth at 10 MHz sampling: passband edge 0.4 cycles/sample.
    // The tones are sampled at 1 MHz, so 0.8 MHz puts the edge at 0.4 cycles/sample.
    const double in_band = interior_power(bandpass_filter(tone(8192, 0.1), 8e5));
    CHECK(in_band == doctest::Approx(1.0).epsilon(0.05));
    const double near_edge = interior_power(bandpass_filter(tone(8192, -0.3), 8e5));
    CHECK(near_edge == doctest::Approx(1.0).epsilon(0.05));
    const double out_of_band = interior_power(bandpass_filter(tone(8192, 0.48), 8e5));
    CHECK(out_of_band < 0.01);
  }

  TEST_CASE("filter parameter checks") {
    const auto in = tone(256, 0.1);
    CHECK_THROWS_AS(bandpass_filter(in, 0.0), InvalidArgument);
    CHECK_THROWS_AS(bandpass_filter(in, 2e6), InvalidArgument);
  }

  TEST_CASE("frame_samples reshapes row-major") {
    const auto f = noise_frame({{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}, {5, 0}});
    const auto m = frame_samples(f, 3, 2);
    CHECK(m.rows() == 2);
    CHECK(m.cols() == 3);
    CHECK(m.row(0)[0] == Complex(0, 0));
    CHECK(m.row(0)[2] == Complex(2, 0));
    CHECK(m.row(1)[0] == Complex(3, 0));
    CHECK(m.row(1)[2] == Complex(5, 0));
    const auto short_frame = noise_frame({{0, 0}, {1, 0}, {2, 0}, {3, 0}, {4, 0}});
    CHECK_THROWS_AS(frame_samples(short_frame, 3, 2), InvalidArgument);
  }

  TEST_CASE("mean power") {
    CHECK(mean_power(SampleMatrix(2, 2, {{1, 0}, {0, 1}, {-1, 0}, {0, -1}})) == 1.0);
    CHECK(mean_power(SampleMatrix(2, 2, {{0, 0}, {0, 0}, {0, 0}, {0, 0}})) == 0.0);
    CHECK(mean_power(SampleMatrix(2, 2, {{2, 0}, {0, 2}, {-2, 0}, {0, -2}})) == 4.0);
  }

  TEST_CASE("correlation matrix of orthogonal rows is the identity") {
    // Rows are distinct DFT vectors: orthogonal with unit power.
    const std::size_t l = 4, n = 16;
    std::vector<Complex> data;
    for (std::size_t r = 0; r < l; ++r) {
      for (std::size_t k = 0; k < n; ++k) {
        data.push_back(std::polar(1.0, 2.0 * std::numbers::pi * static_cast<double>(r * k) / static_cast<double>(n)));
      }
    }
    const auto rm = correlation_matrix(SampleMatrix(l, n, data));
    for (std::size_t i = 0; i < l; ++i) {
      for (std::size_t j = 0; j < l; ++j) CHECK(std::abs(rm(i, j) - Complex(i == j ? 1.0 : 0.0)) < 1e-12);
    }
  }

  TEST_CASE("correlation matrix of identical rows is all ones") {
    std::vector<Complex> row{{1, 0}, {0, 1}, {-1, 0}, {0, -1}};
    std::vector<Complex> data;
    for (int r = 0; r < 3; ++r) data.insert(data.end(), row.begin(), row.end());
    const auto rm = correlation_matrix(SampleMatrix(3, 4, data));
    for (std::size_t i = 0; i < 3; ++i) {
      for (std::size_t j = 0; j < 3; ++j) CHECK(std::abs(rm(i, j) - Complex(1.0)) < 1e-15);
    }
    const auto zero = correlation_matrix(SampleMatrix(3, 4, std::vector<Complex>(12)));
    CHECK(zero.frobenius_norm() == 0.0);
  }

  TEST_CASE("correlation matrix is Hermitian PSD and eigenvalues sum to the trace") {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 50; ++trial) {
      const auto frame = signal::generate_noise(64 * 8, 0.0, rng());
      const auto rm = correlation_matrix(frame_samples(frame, 64, 8));
      CHECK(is_hermitian(rm));
      const auto eigs = eigenvalues_hermitian(rm);
      const double tr = rm.trace().real();
      CHECK(eigs.back() >= -1e-9 * tr);
      double sum = 0.0;
      for (double e : eigs) sum += e;
      CHECK(std::abs(sum - tr) <= 1e-9 * tr);
    }
  }

  TEST_CASE("eigenvalues of simple matrices") {
    const auto id = eigenvalues_hermitian(ComplexMatrix::identity(8));
    REQUIRE(id.size() == 8);
    for (double e : id) CHECK(e == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(decision_metric(id) == doctest::Approx(1.0));

    ComplexMatrix a(2);
    a(0, 0) = 2.0;
    a(0, 1) = 1.0;
    a(1, 0) = 1.0;
    a(1, 1) = 2.0;
    const auto e = eigenvalues_hermitian(a);
    CHECK(e[0] == doctest::Approx(3.0));
    CHECK(e[1] == doctest::Approx(1.0));

    ComplexMatrix b(2);
    b(0, 1) = Complex(0, 1);
    b(1, 0) = Complex(0, -1);
    const auto eb = eigenvalues_hermitian(b);
    CHECK(eb[0] == doctest::Approx(1.0));
    CHECK(eb[1] == doctest::Approx(-1.0));
  }

  TEST_CASE("non-Hermitian input is rejected") {
    ComplexMatrix a(2);
    a(0, 1) = 1.0;
    a(1, 0) = 2.0;
    CHECK_FALSE(is_hermitian(a));
    CHECK_THROWS_AS(eigenvalues_hermitian(a), InvalidArgument);
    ComplexMatrix c(2);
    c(0, 0) = Complex(1, 1);
    CHECK_THROWS_AS(eigenvalues_hermitian(c), InvalidArgument);
  }

  TEST_CASE("Jacobi agrees with the characteristic polynomial") {
    std::mt19937_64 rng(1234);
    double worst = 0.0;
    for (int trial = 0; trial < 1000; ++trial) {
      const std::size_t n = 1 + trial % 4;
      const auto a = oracle::random_hermitian(n, rng);
      const auto got = eigenvalues_hermitian(a);
      const auto want = oracle::charpoly_eigenvalues(a);
      for (std::size_t i = 0; i < n; ++i) worst = std::max(worst, std::abs(got[i] - want[i]));
    }
    CHECK(worst < 1e-8);
  }

  TEST_CASE("decision metric") {
    const std::vector<double> ones(5, 1.0);
    CHECK(decision_metric(ones) == 1.0);
    CHECK(decision_metric(std::vector<double>{4, 2, 1}) == 4.0);
    CHECK_THROWS_AS(decision_metric(std::vector<double>{1, 0}), DegenerateInput);
    CHECK_THROWS_AS(decision_metric(std::vector<double>{1, -0.5}), DegenerateInput);
  }

  TEST_CASE("T is scale invariant") {
    const auto frame = signal::apply_channel(signal::generate_signal(8192, 0.0, 48, 3), 1.0, 2.0, -10.0, 4);
    std::vector<Complex> scaled(frame.samples().begin(), frame.samples().end());
    for (auto& x : scaled) x *= Complex(0.3, -2.0);
    const auto t1 = decision_metric(eigenvalues_hermitian(correlation_matrix(frame_samples(frame, 1024, 8))));
    const auto t2 = decision_metric(
        eigenvalues_hermitian(correlation_matrix(frame_samples(frame.with_samples(scaled), 1024, 8))));
    CHECK(std::abs(t1 - t2) <= 1e-9 * t1);
  }

  TEST_CASE("autocorrelation") {
    const auto constant = noise_frame(std::vector<Complex>(100, Complex(0.5, -0.2)));
    CHECK(autocorrelation(constant, 1) == doctest::Approx(1.0));
    CHECK(autocorrelation(constant, 99) == doctest::Approx(1.0));
    CHECK_THROWS_AS(autocorrelation(constant, 100), InvalidArgument);
    CHECK_THROWS_AS(autocorrelation(constant, 0), InvalidArgument);
    CHECK(autocorrelation(noise_frame(std::vector<Complex>(10)), 3) == 0.0);

    const auto noise = signal::generate_noise(100000, 0.0, 17);
    CHECK(autocorrelation(noise, 1) <= 0.05);

    std::mt19937_64 rng(3);
    for (int trial = 0; trial < 100; ++trial) {
      const auto f = signal::generate_noise(64, 0.0, rng());
      const auto lag = 1 + rng() % 63;
      const double a = autocorrelation(f, lag);
      CHECK(a >= 0.0);
      CHECK(a <= 1.0);
      std::vector<Complex> scaled(f.samples().begin(), f.samples().end());
      for (auto& x : scaled) x *= 7.5;
      CHECK(autocorrelation(f.with_samples(scaled), lag) == doctest::Approx(a).epsilon(1e-12));
    }
  }

  TEST_CASE("surrogate signal correlates at the useful-symbol lag") {
    const auto frame = signal::generate_signal(8192, 0.0, 48, 4);
    CHECK(autocorrelation(frame, signal::useful_symbol_length(48)) > 0.9);
  }

  TEST_CASE("signal frames raise T above the noise baseline") {
    FeatureParams params;
    params.n = 1024;
    params.l = 8;
    std::vector<double> noise_t, signal_t;
    for (std::uint64_t s = 0; s < 20; ++s) {
      const auto n = signal::generate_noise(8192, 0.0, 1000 + s);
      noise_t.push_back(extract_features(n, params).metric_t);
      const auto x = signal::apply_channel(signal::generate_signal(8192, 10.0, 48, 2000 + s), 1.0, 2.0, 0.0, 3000 + s);
      signal_t.push_back(extract_features(x, params).metric_t);
    }
    std::sort(noise_t.begin(), noise_t.end());
    for (double t : signal_t) CHECK(t > noise_t[18]);
  }

  TEST_CASE("extract_features record") {
    FeatureParams params;
    params.n = 512;
    params.l = 8;
    const auto frame = signal::generate_noise(4096, 0.0, 5);
    const auto r = extract_features(frame, params);
    REQUIRE(r.eigenvalues.size() == 8);
    CHECK(std::is_sorted(r.eigenvalues.rbegin(), r.eigenvalues.rend()));
    CHECK(r.metric_t >= 1.0);
    CHECK(r.label == Label::NoiseOnly);
    CHECK(r.autocorr >= 0.0);
    CHECK(r.autocorr <= 1.0);
    CHECK(extract_features(frame, params) == r);

    params.n = 1024;
    CHECK_THROWS_AS(extract_features(frame, params), InvalidArgument);
  }

  TEST_CASE("feature params invariants") {
    FeatureParams p;
    CHECK_NOTHROW(p.validate());
    CHECK(p.n == 32768);
    CHECK(p.l == 8);
    p.l = 1;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
    p = {};
    p.n = 4;
    CHECK_THROWS_AS(p.validate(), InvalidArgument);
  }

  TEST_CASE("normalizer fitting") {
    const std::vector<double> ac{0.0, 5.0, 10.0};
    const auto mm = Normalizer::fit(Normalizer::Kind::MinMax, ac);
    CHECK(mm.first == 0.0);
    CHECK(mm.second == 10.0);
    CHECK(mm.apply(5.0) == 0.5);
    CHECK(mm.apply(12.0) == 1.0);
    CHECK(mm.apply(-1.0) == 0.0);

    const std::vector<double> t{1.0, 2.0, 3.0};
    const auto z = Normalizer::fit(Normalizer::Kind::ZScore, t);
    CHECK(z.first == doctest::Approx(2.0));
    CHECK(z.second == doctest::Approx(std::sqrt(2.0 / 3.0)));
    CHECK(z.apply(2.0) == 0.0);

    const std::vector<double> same{0.1, 0.1, 0.1};
    CHECK_THROWS_AS(Normalizer::fit(Normalizer::Kind::ZScore, same), DegenerateData);
    CHECK_THROWS_AS(Normalizer::fit(Normalizer::Kind::MinMax, same), DegenerateData);
    CHECK_THROWS_AS(Normalizer::fit(Normalizer::Kind::ZScore, std::vector<double>{1.0}), DegenerateData);
  }

  TEST_CASE("z-score refit on normalized data is the identity") {
    std::mt19937_64 rng(8);
    std::normal_distribution<double> g(3.0, 2.0);
    std::vector<double> v(500);
    for (double& x : v) x = g(rng);
    const auto z = Normalizer::fit(Normalizer::Kind::ZScore, v);
    for (double& x : v) x = z.apply(x);
    const auto again = Normalizer::fit(Normalizer::Kind::ZScore, v);
    CHECK(std::abs(again.first) < 1e-9);
    CHECK(std::abs(again.second - 1.0) < 1e-9);
  }

  TEST_CASE("normalizer set orders features and clamps autocorrelation") {
    std::vector<FeatureRecord> train;
    for (int i = 0; i < 4; ++i) {
      FeatureRecord r;
      r.eigenvalues = {3.0 + i, 2.0 + i, 1.0 + 0.5 * i};
      r.metric_t = 1.0 + i;
      r.mean_power = 0.5 * i;
      r.autocorr = 0.1 * i;
      train.push_back(r);
    }
    const auto norms = fit_normalizers(train);
    CHECK(norms.input_dim() == 6);

    FeatureRecord mean_record;
    mean_record.eigenvalues = {4.5, 3.5, 1.75};
    mean_record.metric_t = 2.5;
    mean_record.mean_power = 0.75;
    mean_record.autocorr = 0.9;
    const auto x = apply_normalizers(norms, mean_record);
    REQUIRE(x.size() == 6);
    for (std::size_t i = 0; i < 5; ++i) CHECK(x[i] == doctest::Approx(0.0));
    CHECK(x[5] == 1.0);

    for (const auto& r : train) {
      for (double v : apply_normalizers(norms, r)) CHECK(std::isfinite(v));
    }
    CHECK_THROWS_AS(fit_normalizers(std::span<const FeatureRecord>(train).first(1)), DegenerateData);
  }

  TEST_CASE("feature csv round trip") {
    FeatureParams params;
    params.n = 512;
    params.l = 8;
    std::vector<FeatureRecord> records;
    records.push_back(extract_features(signal::generate_noise(4096, 0.0, 1), params));
    records.push_back(
        extract_features(signal::apply_channel(signal::generate_signal(4096, 0.0, 48, 2), 1.0, 2.0, -10.0, 3), params));
    std::ostringstream out;
    write_feature_csv(out, records);
    const std::string text = out.str();
    CHECK(text.rfind("g0,g1,g2,g3,g4,g5,g6,g7,t,mu,ac,label\n", 0) == 0);
    std::istringstream in(text);
    CHECK(read_feature_csv(in) == records);

    std::istringstream bad("g0,g1,t,mu,ac,label\n1,2,3\n");
    CHECK_THROWS_AS(read_feature_csv(bad), FormatError);
  }
}
