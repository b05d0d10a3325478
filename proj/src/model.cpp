#include "fedsense/model.hpp"

#include <algorithm>
#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <random>
#include <sstream>
#include <string>

#include "fedsense/errors.hpp"
#include "fedsense/format.hpp"

namespace fedsense::model {

namespace {

constexpr std::size_t H = kHidden;

std::size_t tensor_size(std::size_t t, std::size_t input_dim) {
  switch (t) {
    case MlpCoefficients::W1: return H * input_dim;
    case MlpCoefficients::B1: return H;
    case MlpCoefficients::W2: return H * H;
    case MlpCoefficients::B2: return H;
    case MlpCoefficients::W3: return H;
    default: return 1;
  }
}

double relu(double v) { return v > 0.0 ? v : 0.0; }

double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

// log(1 + e^z) - y z without overflow.
double bce_from_logit(double z, double y) {
  return std::max(z, 0.0) - y * z + std::log1p(std::exp(-std::abs(z)));
}

double target(Label label) { return is_present(label) ? 1.0 : 0.0; }

// Hidden activations and output logit for one input.
struct Pass {
  std::array<double, H> z1{}, a1{}, z2{}, a2{};
  double z3 = 0.0;
};

Pass run(const MlpCoefficients& c, std::span<const double> x) {
  const std::size_t d = c.input_dim();
  const auto w1 = c.tensor(MlpCoefficients::W1);
  const auto b1 = c.tensor(MlpCoefficients::B1);
  const auto w2 = c.tensor(MlpCoefficients::W2);
  const auto b2 = c.tensor(MlpCoefficients::B2);
  const auto w3 = c.tensor(MlpCoefficients::W3);
  Pass p;
  for (std::size_t i = 0; i < H; ++i) {
    double acc = b1[i];
    for (std::size_t j = 0; j < d; ++j) acc += w1[i * d + j] * x[j];
    p.z1[i] = acc;
    p.a1[i] = relu(acc);
  }
  for (std::size_t i = 0; i < H; ++i) {
    double acc = b2[i];
    for (std::size_t j = 0; j < H; ++j) acc += w2[i * H + j] * p.a1[j];
    p.z2[i] = acc;
    p.a2[i] = relu(acc);
  }
  double acc = c.tensor(MlpCoefficients::B3)[0];
  for (std::size_t j = 0; j < H; ++j) acc += w3[j] * p.a2[j];
  p.z3 = acc;
  return p;
}

void check_input(const MlpCoefficients& c, std::span<const double> x) {
  if (x.size() != c.input_dim()) {
    throw InvalidArgument("model: input has " + std::to_string(x.size()) + " features, expected " +
                          std::to_string(c.input_dim()));
  }
}

// Adds scale * d(loss)/d(params) for one sample into `grad`; returns the sample loss.
double accumulate(const MlpCoefficients& c, const Sample& s, double scale, MlpCoefficients& grad) {
  check_input(c, s.x);
  const std::size_t d = c.input_dim();
  const Pass p = run(c, s.x);
  const double y = target(s.label);

  const double dz3 = (sigmoid(p.z3) - y) * scale;
  const auto w2 = c.tensor(MlpCoefficients::W2);
  const auto w3 = c.tensor(MlpCoefficients::W3);
  auto gw1 = grad.tensor(MlpCoefficients::W1);
  auto gb1 = grad.tensor(MlpCoefficients::B1);
  auto gw2 = grad.tensor(MlpCoefficients::W2);
  auto gb2 = grad.tensor(MlpCoefficients::B2);
  auto gw3 = grad.tensor(MlpCoefficients::W3);

  grad.tensor(MlpCoefficients::B3)[0] += dz3;
  std::array<double, H> dz2{};
  for (std::size_t j = 0; j < H; ++j) {
    gw3[j] += dz3 * p.a2[j];
    dz2[j] = p.z2[j] > 0.0 ? dz3 * w3[j] : 0.0;
  }
  std::array<double, H> dz1{};
  for (std::size_t i = 0; i < H; ++i) {
    gb2[i] += dz2[i];
    for (std::size_t j = 0; j < H; ++j) {
      gw2[i * H + j] += dz2[i] * p.a1[j];
      dz1[j] += dz2[i] * w2[i * H + j];
    }
  }
  for (std::size_t i = 0; i < H; ++i) {
    const double g = p.z1[i] > 0.0 ? dz1[i] : 0.0;
    gb1[i] += g;
    for (std::size_t j = 0; j < d; ++j) gw1[i * d + j] += g * s.x[j];
  }
  return bce_from_logit(p.z3, y);
}

}  // namespace

// ---------------------------------------------------------------- coefficients

MlpCoefficients::MlpCoefficients(std::size_t input_dim) : input_dim_(input_dim) {
  if (input_dim == 0) throw InvalidArgument("MlpCoefficients: input_dim must be >= 1");
  for (std::size_t t = 0; t < kTensorCount; ++t) tensors_[t].assign(tensor_size(t, input_dim), 0.0);
}

std::size_t MlpCoefficients::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.size();
  return n;
}

std::string_view MlpCoefficients::tensor_name(std::size_t t) {
  static constexpr std::string_view kNames[] = {"w1", "b1", "w2", "b2", "w3", "b3"};
  return kNames[t];
}

bool MlpCoefficients::all_finite() const {
  bool ok = true;
  for_each([&](double v) { ok = ok && std::isfinite(v); });
  return ok;
}

MlpCoefficients init_random(std::size_t input_dim, std::uint64_t seed) {
  MlpCoefficients c(input_dim);
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (auto t : {MlpCoefficients::W1, MlpCoefficients::W2, MlpCoefficients::W3}) {
    for (double& v : c.tensor(t)) v = u(rng);
  }
  return c;
}

MlpCoefficients init_default(std::size_t input_dim) { return init_random(input_dim, kDefaultInitSeed); }

// ---------------------------------------------------------------- inference

double logit(const MlpCoefficients& coeffs, std::span<const double> x) {
  check_input(coeffs, x);
  return run(coeffs, x).z3;
}

double forward(const MlpCoefficients& coeffs, std::span<const double> x) {
  static const double kLow = std::nextafter(0.0, 1.0);
  static const double kHigh = std::nextafter(1.0, 0.0);
  return std::clamp(sigmoid(logit(coeffs, x)), kLow, kHigh);
}

Label classify(const MlpCoefficients& coeffs, std::span<const double> x, double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) {
    throw InvalidArgument("classify: threshold must lie in (0, 1)");
  }
  return forward(coeffs, x) >= threshold ? Label::SignalPresent : Label::NoiseOnly;
}

// ---------------------------------------------------------------- training

double loss(const MlpCoefficients& coeffs, std::span<const Sample> batch) {
  if (batch.empty()) throw InvalidArgument("loss: empty batch");
  double acc = 0.0;
  for (const Sample& s : batch) acc += bce_from_logit(logit(coeffs, s.x), target(s.label));
  return acc / static_cast<double>(batch.size());
}

MlpCoefficients gradient(const MlpCoefficients& coeffs, std::span<const Sample> batch) {
  if (batch.empty()) throw InvalidArgument("gradient: empty batch");
  MlpCoefficients grad(coeffs.input_dim());
  const double scale = 1.0 / static_cast<double>(batch.size());
  for (const Sample& s : batch) accumulate(coeffs, s, scale, grad);
  return grad;
}

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) {
    throw InvalidArgument("train: learning_rate must be positive");
  }
  if (epochs == 0) throw InvalidArgument("train: epochs must be positive");
  if (batch_size == 0) throw InvalidArgument("train: batch_size must be positive");
}

TrainResult train(MlpCoefficients coeffs, std::span<const Sample> data, const TrainConfig& cfg) {
  cfg.validate();
  const bool has_pos = std::any_of(data.begin(), data.end(), [](const Sample& s) { return is_present(s.label); });
  const bool has_neg = std::any_of(data.begin(), data.end(), [](const Sample& s) { return !is_present(s.label); });
  if (!has_pos || !has_neg) throw DegenerateData("train: both classes must be present");

  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(cfg.seed);
  MlpCoefficients grad(coeffs.input_dim());
  double epoch_loss = 0.0;

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    epoch_loss = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t stop = std::min(order.size(), start + cfg.batch_size);
      const double scale = 1.0 / static_cast<double>(stop - start);
      grad.for_each([](double& v) { v = 0.0; });
      for (std::size_t i = start; i < stop; ++i) {
        epoch_loss += accumulate(coeffs, data[order[i]], scale, grad);
      }
      for (std::size_t t = 0; t < MlpCoefficients::kTensorCount; ++t) {
        auto w = coeffs.tensor(t);
        const auto g = grad.tensor(t);
        for (std::size_t i = 0; i < w.size(); ++i) w[i] -= cfg.learning_rate * g[i];
      }
    }
  }
  return {std::move(coeffs), epoch_loss / static_cast<double>(data.size())};
}

// ---------------------------------------------------------------- cross validation

std::vector<Fold> stratified_k_fold(std::span<const Label> labels, std::size_t k, std::uint64_t seed) {
  if (k < 2) throw InvalidArgument("stratified_k_fold: k must be >= 2");
  std::array<std::vector<std::size_t>, 2> classes;
  for (std::size_t i = 0; i < labels.size(); ++i) classes[is_present(labels[i]) ? 1 : 0].push_back(i);
  for (const auto& members : classes) {
    if (members.size() < k) {
      throw InvalidArgument("stratified_k_fold: a class has " + std::to_string(members.size()) +
                            " members, fewer than k = " + std::to_string(k));
    }
  }

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> fold_of(labels.size());
  std::size_t dealt = 0;
  for (auto& members : classes) {
    std::shuffle(members.begin(), members.end(), rng);
    for (std::size_t idx : members) fold_of[idx] = dealt++ % k;
  }

  std::vector<Fold> folds(k);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    for (std::size_t f = 0; f < k; ++f) (f == fold_of[i] ? folds[f].test : folds[f].train).push_back(i);
  }
  return folds;
}

ConfusionCounts evaluate(const MlpCoefficients& coeffs, std::span<const Sample> records) {
  ConfusionCounts c;
  for (const Sample& s : records) {
    const bool predicted = is_present(classify(coeffs, s.x));
    const bool actual = is_present(s.label);
    if (predicted && actual) ++c.tp;
    else if (predicted) ++c.fp;
    else if (actual) ++c.fn;
    else ++c.tn;
  }
  return c;
}

Metrics metrics(const ConfusionCounts& c) {
  auto ratio = [](std::size_t num, std::size_t den) -> std::optional<double> {
    if (den == 0) return std::nullopt;
    return static_cast<double>(num) / static_cast<double>(den);
  };
  Metrics m;
  m.accuracy = ratio(c.tp + c.tn, c.total());
  m.precision = ratio(c.tp, c.tp + c.fp);
  m.recall = ratio(c.tp, c.tp + c.fn);
  m.pd = m.recall;
  m.pfa = ratio(c.fp, c.fp + c.tn);
  // 2PR/(P+R) written over counts: equal wherever both are defined and P+R > 0,
  // and exactly 0 when tp = 0 against some fp or fn.
  m.f1 = ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn);
  return m;
}

// ---------------------------------------------------------------- snapshots

void write_coefficients(std::ostream& out, const MlpCoefficients& coeffs) {
  for (std::size_t t = 0; t < MlpCoefficients::kTensorCount; ++t) {
    const auto values = coeffs.tensor(t);
    for (std::size_t i = 0; i < values.size(); ++i) {
      if (i) out << ' ';
      out << format_double(values[i]);
    }
    out << '\n';
  }
}

MlpCoefficients read_coefficients(std::istream& in) {
  std::vector<std::vector<double>> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    std::istringstream fields(line);
    std::vector<double> values;
    std::string token;
    while (fields >> token) values.push_back(parse_double(token));
    lines.push_back(std::move(values));
  }
  if (lines.size() != MlpCoefficients::kTensorCount) {
    throw FormatError("coefficient snapshot: expected " + std::to_string(MlpCoefficients::kTensorCount) +
                      " tensor lines, found " + std::to_string(lines.size()));
  }
  if (lines[0].empty() || lines[0].size() % H != 0) {
    throw FormatError("coefficient snapshot: w1 must hold a multiple of " + std::to_string(H) + " values");
  }
  MlpCoefficients c(lines[0].size() / H);
  for (std::size_t t = 0; t < MlpCoefficients::kTensorCount; ++t) {
    auto dst = c.tensor(t);
    if (lines[t].size() != dst.size()) {
      throw FormatError("coefficient snapshot: tensor " + std::string(MlpCoefficients::tensor_name(t)) +
                        " has " + std::to_string(lines[t].size()) + " values, expected " +
                        std::to_string(dst.size()));
    }
    std::copy(lines[t].begin(), lines[t].end(), dst.begin());
  }
  if (!c.all_finite()) throw FormatError("coefficient snapshot: non-finite value");
  return c;
}

}  // namespace fedsense::model
