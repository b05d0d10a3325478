#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "fedsense/types.hpp"

namespace fedsense::model {

inline constexpr std::size_t kHidden = 4;

/// Seed of the published default coefficients. A sensor without training
/// data is stuck with init_default(), so every run must agree on it.
inline constexpr std::uint64_t kDefaultInitSeed = 2024;

/// Weights and biases of the D-4-4-1 classifier; the unit exchanged between sensors.
///
/// Six tensors in a fixed order, weights row-major (output index major):
///   w1 4xD, b1 4, w2 4x4, b2 4, w3 1x4, b3 1.
class MlpCoefficients {
 public:
  static constexpr std::size_t kTensorCount = 6;
  enum Tensor : std::size_t { W1, B1, W2, B2, W3, B3 };

  /// All-zero coefficients for `input_dim` inputs.
  explicit MlpCoefficients(std::size_t input_dim);

  std::size_t input_dim() const { return input_dim_; }
  std::size_t parameter_count() const;

  std::span<double> tensor(std::size_t t) { return tensors_.at(t); }
  std::span<const double> tensor(std::size_t t) const { return tensors_.at(t); }
  static std::string_view tensor_name(std::size_t t);

  /// Visits every parameter in tensor order.
  template <typename F>
  void for_each(F&& f) {
    for (auto& t : tensors_)
      for (double& v : t) f(v);
  }
  template <typename F>
  void for_each(F&& f) const {
    for (const auto& t : tensors_)
      for (double v : t) f(v);
  }

  bool same_shape(const MlpCoefficients& other) const { return input_dim_ == other.input_dim_; }
  bool all_finite() const;

  friend bool operator==(const MlpCoefficients&, const MlpCoefficients&) = default;

 private:
  std::size_t input_dim_;
  std::array<std::vector<double>, kTensorCount> tensors_;
};

/// One normalized feature vector with its ground truth.
struct Sample {
  std::vector<double> x;
  Label label = Label::NoiseOnly;
};

struct TrainConfig {
  double learning_rate = 0.05;
  std::size_t epochs = 200;
  std::size_t batch_size = 16;
  std::uint64_t seed = 0;

  void validate() const;
};

struct ConfusionCounts {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  ConfusionCounts& operator+=(const ConfusionCounts& o) {
    tp += o.tp;
    fp += o.fp;
    tn += o.tn;
    fn += o.fn;
    return *this;
  }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Classification metrics; a metric with a zero denominator is absent.
struct Metrics {
  std::optional<double> accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
  std::optional<double> pd;
  std::optional<double> pfa;
};

/// Biases zero, weights uniform(-0.5, 0.5) drawn in tensor order.
MlpCoefficients init_random(std::size_t input_dim, std::uint64_t seed);
/// init_random with kDefaultInitSeed.
MlpCoefficients init_default(std::size_t input_dim);

/// Output-layer logit: w3 . relu(W2 relu(W1 x + b1) + b2) + b3.
double logit(const MlpCoefficients& coeffs, std::span<const double> x);
/// Sigmoid of the logit, kept strictly inside (0, 1).
double forward(const MlpCoefficients& coeffs, std::span<const double> x);
/// forward(x) >= threshold means signal present. threshold must lie in (0, 1).
Label classify(const MlpCoefficients& coeffs, std::span<const double> x, double threshold = 0.5);

/// Mean binary cross-entropy over the batch.
double loss(const MlpCoefficients& coeffs, std::span<const Sample> batch);
/// Analytic gradient of loss() by backpropagation; same shape as `coeffs`.
MlpCoefficients gradient(const MlpCoefficients& coeffs, std::span<const Sample> batch);

struct TrainResult {
  MlpCoefficients coeffs;
  double final_loss;  // mean loss over the last epoch
};

/// Mini-batch SGD on binary cross-entropy. Shuffling is seeded by cfg.seed.
/// Throws DegenerateData unless both classes are present.
TrainResult train(MlpCoefficients coeffs, std::span<const Sample> data, const TrainConfig& cfg);

struct Fold {
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> test;   // ascending
};

/// Stratified K-fold: each class is shuffled (seeded) and dealt round-robin,
/// continuing the deal across classes so fold sizes stay level.
std::vector<Fold> stratified_k_fold(std::span<const Label> labels, std::size_t k, std::uint64_t seed);

ConfusionCounts evaluate(const MlpCoefficients& coeffs, std::span<const Sample> records);
Metrics metrics(const ConfusionCounts& c);

/// Flat text snapshot: one line per tensor, row-major, space separated.
void write_coefficients(std::ostream& out, const MlpCoefficients& coeffs);
/// Throws FormatError on missing lines, bad numbers, or inconsistent shapes.
MlpCoefficients read_coefficients(std::istream& in);

}  // namespace fedsense::model
