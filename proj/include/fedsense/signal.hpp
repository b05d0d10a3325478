#pragma once

#include <complex>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "fedsense/types.hpp"

namespace fedsense::signal {

using Complex = std::complex<double>;

inline constexpr double kDefaultSampleRateHz = 10e6;
inline constexpr std::size_t kDefaultSubcarriers = 48;

/// Power in dBm relative to the software reference: 0 dBm is a unit mean-square sample.
double dbm_to_linear(double dbm);
double linear_to_dbm(double linear);

/// Labeled block of complex baseband samples.
///
/// Invariants: samples nonempty, sample rate positive, and a transmit power
/// is attached exactly when the frame carries the signal.
class IqFrame {
 public:
  IqFrame(std::vector<Complex> samples, double sample_rate_hz, Label label,
          std::optional<double> tx_power_dbm);

  std::span<const Complex> samples() const { return samples_; }
  std::size_t size() const { return samples_.size(); }
  double sample_rate_hz() const { return sample_rate_hz_; }
  Label label() const { return label_; }
  std::optional<double> tx_power_dbm() const { return tx_power_dbm_; }

  // Same metadata, new samples.
  IqFrame with_samples(std::vector<Complex> samples) const;

  friend bool operator==(const IqFrame&, const IqFrame&) = default;

 private:
  std::vector<Complex> samples_;
  double sample_rate_hz_;
  Label label_;
  std::optional<double> tx_power_dbm_;
};

/// Empirical mean |x|^2.
double mean_square(std::span<const Complex> samples);

struct Topology {
  Point transmitter;
  std::vector<Point> sensors;

  /// At least two sensors, finite coordinates, no two sensors coincident and
  /// no sensor on top of the transmitter. Throws InvalidArgument.
  void validate() const;
  std::size_t sensor_count() const { return sensors.size(); }
  double sensor_distance(std::size_t a, std::size_t b) const;
  double transmitter_distance(std::size_t sensor) const;

  /// Room-scale layout: transmitter at the origin, five sensors at
  /// (2,1), (3,-1), (4,2), (5,0), (6,-2) m.
  static Topology default_layout();
  /// Five sensors on a 4 m circle around the transmitter at uneven angles, so
  /// every sensor sees the same path loss while sensor-to-sensor distances vary.
  static Topology uniform_layout();
};

struct CampaignConfig {
  std::size_t runs_on = 10;
  std::size_t runs_off = 10;
  double power_min_dbm = -20.0;
  double power_max_dbm = 10.0;
  double power_step_dbm = 5.0;
  std::size_t samples_per_run = std::size_t{1} << 18;
  double noise_power_dbm = 0.0;
  double path_loss_exponent = 2.0;
  double sample_rate_hz = kDefaultSampleRateHz;
  std::size_t num_subcarriers = kDefaultSubcarriers;
  std::uint64_t seed = 1;

  void validate() const;
  /// Transmit powers of the sweep, ascending, endpoints inclusive.
  std::vector<double> power_levels() const;
  std::size_t frames_per_sensor() const;
};

/// Circularly symmetric white Gaussian noise. Deterministic in `seed`.
IqFrame generate_noise(std::size_t n, double noise_power_dbm, std::uint64_t seed,
                       double sample_rate_hz = kDefaultSampleRateHz);

/// Useful-symbol length of the multicarrier surrogate for a carrier count.
std::size_t useful_symbol_length(std::size_t num_subcarriers);

/// Multicarrier surrogate of a broadcast OFDM signal.
///
/// `num_subcarriers` equal-amplitude carriers with random phases sit on every
/// 8th bin of a useful symbol of useful_symbol_length() samples, centred on DC
/// and filling at most 3/4 of the sample rate. Each symbol is prefixed with
/// its last 1/8. Phases are drawn once per frame, so the prefix joins the
/// symbols without phase jumps and the waveform is periodic in 1/8 of the
/// useful symbol. The result is rescaled to exactly the requested mean power.
IqFrame generate_signal(std::size_t n, double tx_power_dbm, std::size_t num_subcarriers,
                        std::uint64_t seed, double sample_rate_hz = kDefaultSampleRateHz);

/// Log-distance path loss (1 m reference) followed by additive white noise.
IqFrame apply_channel(const IqFrame& frame, double distance_m, double path_loss_exponent,
                      double noise_power_dbm, std::uint64_t seed);

/// What a campaign frame is, before any samples are drawn.
struct FrameSpec {
  Label label = Label::NoiseOnly;
  std::optional<double> tx_power_dbm;
  std::size_t level = 0;  // index into power_levels(); 0 for noise frames
  std::size_t run = 0;
};

/// Frame order for every sensor: runs_off noise frames, then runs_on frames
/// per power level in ascending power.
std::vector<FrameSpec> campaign_plan(const CampaignConfig& config);

/// Generates one campaign frame. Signal frames of the same (level, run) share
/// one transmitted waveform across sensors; receiver noise is per sensor.
IqFrame campaign_frame(const CampaignConfig& config, const Topology& topology,
                       std::size_t sensor, std::size_t index);

/// Whole campaign, one frame list per sensor.
std::vector<std::vector<IqFrame>> run_campaign(const CampaignConfig& config,
                                               const Topology& topology);

/// Reads raw interleaved little-endian float32 I/Q pairs (no header).
IqFrame load_iq_file(const std::filesystem::path& path, double sample_rate_hz, Label label,
                     std::optional<double> tx_power_dbm = std::nullopt);

/// Writes samples in the format load_iq_file reads.
void save_iq_file(const std::filesystem::path& path, const IqFrame& frame);

}  // namespace fedsense::signal
