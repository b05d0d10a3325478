#include "fedsense/signal.hpp"

#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <random>
#include <string>

#include "fedsense/errors.hpp"
#include "fedsense/seed.hpp"

namespace fedsense::signal {

double dbm_to_linear(double dbm) { return std::pow(10.0, dbm / 10.0); }

double linear_to_dbm(double linear) { return 10.0 * std::log10(linear); }

IqFrame::IqFrame(std::vector<Complex> samples, double sample_rate_hz, Label label,
                 std::optional<double> tx_power_dbm)
    : samples_(std::move(samples)),
      sample_rate_hz_(sample_rate_hz),
      label_(label),
      tx_power_dbm_(tx_power_dbm) {
  if (samples_.empty()) {
    throw InvalidArgument("IqFrame: samples must be nonempty");
  }
  if (!(sample_rate_hz_ > 0.0) || !std::isfinite(sample_rate_hz_)) {
    throw InvalidArgument("IqFrame: sample rate must be positive");
  }
  if (tx_power_dbm_.has_value() != is_present(label_)) {
    throw InvalidArgument("IqFrame: tx power must be given exactly for signal-present frames");
  }
}

IqFrame IqFrame::with_samples(std::vector<Complex> samples) const {
  return IqFrame(std::move(samples), sample_rate_hz_, label_, tx_power_dbm_);
}

double mean_square(std::span<const Complex> samples) {
  if (samples.empty()) return 0.0;
  double acc = 0.0;
  for (const Complex& s : samples) acc += std::norm(s);
  return acc / static_cast<double>(samples.size());
}

// ---------------------------------------------------------------- topology

void Topology::validate() const {
  if (sensors.size() < 2) {
    throw InvalidArgument("topology: at least 2 sensors required");
  }
  auto finite = [](const Point& p) { return std::isfinite(p.x) && std::isfinite(p.y); };
  if (!finite(transmitter)) {
    throw InvalidArgument("topology: transmitter position must be finite");
  }
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    if (!finite(sensors[i])) {
      throw InvalidArgument("topology: sensor " + std::to_string(i) + " position must be finite");
    }
    if (!(distance(sensors[i], transmitter) > 0.0)) {
      throw InvalidArgument("topology: sensor " + std::to_string(i) +
                            " coincides with the transmitter");
    }
    for (std::size_t j = 0; j < i; ++j) {
      if (!(distance(sensors[i], sensors[j]) > 0.0)) {
        throw InvalidArgument("topology: sensors " + std::to_string(j) + " and " +
                              std::to_string(i) + " coincide");
      }
    }
  }
}

double Topology::sensor_distance(std::size_t a, std::size_t b) const {
  return distance(sensors.at(a), sensors.at(b));
}

double Topology::transmitter_distance(std::size_t sensor) const {
  return distance(sensors.at(sensor), transmitter);
}

Topology Topology::default_layout() {
  return Topology{{0.0, 0.0}, {{2.0, 1.0}, {3.0, -1.0}, {4.0, 2.0}, {5.0, 0.0}, {6.0, -2.0}}};
}

Topology Topology::uniform_layout() {
  constexpr double kRadius = 4.0;
  constexpr double kAnglesDeg[] = {0.0, 35.0, 90.0, 180.0, 250.0};
  Topology t;
  for (double deg : kAnglesDeg) {
    const double rad = deg * std::numbers::pi / 180.0;
    t.sensors.push_back({kRadius * std::cos(rad), kRadius * std::sin(rad)});
  }
  return t;
}

// ---------------------------------------------------------------- campaign config

void CampaignConfig::validate() const {
  if (runs_on < 1 || runs_off < 1) {
    throw InvalidArgument("campaign: runs_on and runs_off must be >= 1");
  }
  if (!std::isfinite(power_min_dbm) || !std::isfinite(power_max_dbm) ||
      power_min_dbm > power_max_dbm) {
    throw InvalidArgument("campaign: power_min_dbm must not exceed power_max_dbm");
  }
  if (!(power_step_dbm > 0.0)) {
    throw InvalidArgument("campaign: power_step_dbm must be positive");
  }
  if (samples_per_run < 1) {
    throw InvalidArgument("campaign: samples_per_run must be positive");
  }
  if (!std::isfinite(noise_power_dbm)) {
    throw InvalidArgument("campaign: noise_power_dbm must be finite");
  }
  if (!(path_loss_exponent > 0.0)) {
    throw InvalidArgument("campaign: path_loss_exponent must be positive");
  }
  if (!(sample_rate_hz > 0.0)) {
    throw InvalidArgument("campaign: sample_rate_hz must be positive");
  }
  if (num_subcarriers < 2 || num_subcarriers > samples_per_run) {
    throw InvalidArgument("campaign: num_subcarriers must be in [2, samples_per_run]");
  }
}

std::vector<double> CampaignConfig::power_levels() const {
  // Small slack so that e.g. -40..10 step 1 yields 51 levels despite rounding.
  const auto count =
      static_cast<std::size_t>(std::floor((power_max_dbm - power_min_dbm) / power_step_dbm + 1e-9)) +
      1;
  std::vector<double> levels(count);
  for (std::size_t i = 0; i < count; ++i) {
    levels[i] = power_min_dbm + static_cast<double>(i) * power_step_dbm;
  }
  return levels;
}

std::size_t CampaignConfig::frames_per_sensor() const {
  return runs_off + runs_on * power_levels().size();
}

// ---------------------------------------------------------------- generators

IqFrame generate_noise(std::size_t n, double noise_power_dbm, std::uint64_t seed,
                       double sample_rate_hz) {
  if (n == 0) throw InvalidArgument("generate_noise: n must be >= 1");
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> gauss(0.0, std::sqrt(dbm_to_linear(noise_power_dbm) / 2.0));
  std::vector<Complex> samples(n);
  for (Complex& s : samples) {
    const double re = gauss(rng);
    const double im = gauss(rng);
    s = {re, im};
  }
  return IqFrame(std::move(samples), sample_rate_hz, Label::NoiseOnly, std::nullopt);
}

namespace {

// Carrier slots per useful symbol (every 8th FFT bin); carriers fill <= 3/4 of them.
std::size_t carrier_slots(std::size_t num_subcarriers) {
  std::size_t slots = 2;
  while (4 * num_subcarriers > 3 * slots) slots *= 2;
  return slots;
}

}  // namespace

std::size_t useful_symbol_length(std::size_t num_subcarriers) {
  return 8 * carrier_slots(num_subcarriers);
}

IqFrame generate_signal(std::size_t n, double tx_power_dbm, std::size_t num_subcarriers,
                        std::uint64_t seed, double sample_rate_hz) {
  if (num_subcarriers < 2) {
    throw InvalidArgument("generate_signal: num_subcarriers must be >= 2");
  }
  if (n < num_subcarriers) {
    throw InvalidArgument("generate_signal: n must be >= num_subcarriers");
  }
  const std::size_t useful = useful_symbol_length(num_subcarriers);
  const std::size_t prefix = useful / 8;

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase(0.0, 2.0 * std::numbers::pi);
  std::vector<Complex> carriers(num_subcarriers);
  for (Complex& c : carriers) c = std::polar(1.0, phase(rng));

  // One useful symbol by direct inverse DFT over the occupied bins.
  const auto half = static_cast<long>(num_subcarriers / 2);
  std::vector<Complex> symbol(useful);
  for (std::size_t t = 0; t < useful; ++t) {
    Complex acc{0.0, 0.0};
    for (std::size_t j = 0; j < num_subcarriers; ++j) {
      const long bin = 8 * (static_cast<long>(j) - half);
      const double arg = 2.0 * std::numbers::pi * static_cast<double>(bin) *
                         static_cast<double>(t) / static_cast<double>(useful);
      acc += carriers[j] * Complex{std::cos(arg), std::sin(arg)};
    }
    symbol[t] = acc;
  }

  std::vector<Complex> samples;
  samples.reserve(n);
  while (samples.size() < n) {
    for (std::size_t t = useful - prefix; t < useful && samples.size() < n; ++t) {
      samples.push_back(symbol[t]);
    }
    for (std::size_t t = 0; t < useful && samples.size() < n; ++t) {
      samples.push_back(symbol[t]);
    }
  }

  const double scale = std::sqrt(dbm_to_linear(tx_power_dbm) / mean_square(samples));
  for (Complex& s : samples) s *= scale;
  return IqFrame(std::move(samples), sample_rate_hz, Label::SignalPresent, tx_power_dbm);
}

IqFrame apply_channel(const IqFrame& frame, double distance_m, double path_loss_exponent,
                      double noise_power_dbm, std::uint64_t seed) {
  if (!(distance_m > 0.0) || !std::isfinite(distance_m)) {
    throw InvalidArgument("apply_channel: distance must be positive");
  }
  const double loss_db = 10.0 * path_loss_exponent * std::log10(distance_m);
  const double gain = std::pow(10.0, -loss_db / 20.0);
  const IqFrame noise = generate_noise(frame.size(), noise_power_dbm, seed, frame.sample_rate_hz());

  std::vector<Complex> out(frame.size());
  const auto in = frame.samples();
  const auto w = noise.samples();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = gain * in[i] + w[i];
  return frame.with_samples(std::move(out));
}

// ---------------------------------------------------------------- campaign

std::vector<FrameSpec> campaign_plan(const CampaignConfig& config) {
  config.validate();
  const auto levels = config.power_levels();
  std::vector<FrameSpec> plan;
  plan.reserve(config.frames_per_sensor());
  for (std::size_t run = 0; run < config.runs_off; ++run) {
    plan.push_back({Label::NoiseOnly, std::nullopt, 0, run});
  }
  for (std::size_t level = 0; level < levels.size(); ++level) {
    for (std::size_t run = 0; run < config.runs_on; ++run) {
      plan.push_back({Label::SignalPresent, levels[level], level, run});
    }
  }
  return plan;
}

IqFrame campaign_frame(const CampaignConfig& config, const Topology& topology,
                       std::size_t sensor, std::size_t index) {
  const auto plan = campaign_plan(config);
  if (sensor >= topology.sensor_count() || index >= plan.size()) {
    throw InvalidArgument("campaign_frame: sensor or frame index out of range");
  }
  const FrameSpec& spec = plan[index];
  const std::uint64_t noise_seed = derive_seed(config.seed, "campaign.noise", {sensor, index});
  if (!is_present(spec.label)) {
    return generate_noise(config.samples_per_run, config.noise_power_dbm, noise_seed,
                          config.sample_rate_hz);
  }
  const IqFrame tx =
      generate_signal(config.samples_per_run, *spec.tx_power_dbm, config.num_subcarriers,
                      derive_seed(config.seed, "campaign.tx", {spec.level, spec.run}),
                      config.sample_rate_hz);
  return apply_channel(tx, topology.transmitter_distance(sensor), config.path_loss_exponent,
                       config.noise_power_dbm, noise_seed);
}

std::vector<std::vector<IqFrame>> run_campaign(const CampaignConfig& config,
                                               const Topology& topology) {
  config.validate();
  topology.validate();
  const std::size_t frames = config.frames_per_sensor();
  std::vector<std::vector<IqFrame>> out(topology.sensor_count());
  for (std::size_t s = 0; s < topology.sensor_count(); ++s) {
    out[s].reserve(frames);
    for (std::size_t i = 0; i < frames; ++i) out[s].push_back(campaign_frame(config, topology, s, i));
  }
  return out;
}

// ---------------------------------------------------------------- IQ files

namespace {

std::uint32_t to_little_endian(std::uint32_t v) {
  if constexpr (std::endian::native == std::endian::big) return __builtin_bswap32(v);
  return v;
}

}  // namespace

IqFrame load_iq_file(const std::filesystem::path& path, double sample_rate_hz, Label label,
                     std::optional<double> tx_power_dbm) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open IQ file " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("read failed for " + path.string());
  if (bytes.size() % 8 != 0) {
    throw FormatError(path.string() + ": size " + std::to_string(bytes.size()) +
                      " is not a whole number of float32 I/Q pairs");
  }
  if (bytes.empty()) throw FormatError(path.string() + ": empty IQ file");

  std::vector<Complex> samples(bytes.size() / 8);
  for (std::size_t i = 0; i < samples.size(); ++i) {
    std::uint32_t raw[2];
    std::memcpy(raw, bytes.data() + 8 * i, 8);
    const float re = std::bit_cast<float>(to_little_endian(raw[0]));
    const float im = std::bit_cast<float>(to_little_endian(raw[1]));
    samples[i] = {re, im};
  }
  return IqFrame(std::move(samples), sample_rate_hz, label, tx_power_dbm);
}

void save_iq_file(const std::filesystem::path& path, const IqFrame& frame) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot create IQ file " + path.string());
  std::vector<char> bytes(frame.size() * 8);
  const auto samples = frame.samples();
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const std::uint32_t raw[2] = {
        to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(samples[i].real()))),
        to_little_endian(std::bit_cast<std::uint32_t>(static_cast<float>(samples[i].imag())))};
    std::memcpy(bytes.data() + 8 * i, raw, 8);
  }
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw IoError("write failed for " + path.string());
}

}  // namespace fedsense::signal
