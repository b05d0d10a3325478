#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "fedsense/features.hpp"
#include "fedsense/federation.hpp"
#include "fedsense/model.hpp"
#include "fedsense/signal.hpp"

namespace fedsense::experiment {

enum class Deprivation { None, RotateEach };
enum class Role { Deprived, Trained };

std::string_view to_string(Role role);
std::string_view to_string(Deprivation deprivation);

inline constexpr std::string_view kReferenceScenario = "reference";
inline constexpr std::string_view kFederatedScenario = "federated";

/// Metrics reported per cell, in report order.
inline constexpr std::string_view kMetricNames[] = {"pd", "pfa", "f1", "accuracy"};

struct ExperimentConfig {
  signal::CampaignConfig campaign;
  signal::Topology topology = signal::Topology::default_layout();
  features::FeatureParams features;
  std::vector<double> idw_exponents{0.0, 1.0, 2.0, 3.0};
  std::vector<std::size_t> neighbor_counts{1, 2, 3, 4};
  double own_weight_start = 0.8;
  double own_weight_end = 0.99;
  std::size_t rounds = 10;
  std::size_t k_folds = 10;
  model::TrainConfig train;
  Deprivation deprivation = Deprivation::RotateEach;
  std::uint64_t seed = 1;

  void validate() const;
  /// Fusion policy of one grid cell.
  federation::FusionPolicy policy(double idw_exponent, std::size_t neighbors) const;
  /// Every setting as ordered key=value lines; the input of config_hash().
  std::vector<std::pair<std::string, std::string>> canonical() const;
  /// FNV-1a over canonical(), as 16 hex digits.
  std::string config_hash() const;
};

/// Feature records of every sensor, in campaign frame order.
using SensorRecords = std::vector<features::FeatureRecord>;

/// Runs the campaign (seeded from cfg.seed) and extracts features frame by
/// frame without keeping the samples. `jobs` caps worker threads.
std::vector<SensorRecords> build_dataset(const ExperimentConfig& cfg, std::size_t jobs = 1);

/// One grid cell. The reference scenario has a single cell (0, 0).
struct CellKey {
  std::string scenario;
  double idw_p = 0.0;
  std::size_t neighbors = 0;

  friend auto operator<=>(const CellKey&, const CellKey&) = default;
};

struct Summary {
  double mean;
  double p10;
  double p90;
  std::size_t n;
};

/// Arithmetic mean with nearest-rank 10th and 90th percentiles.
Summary aggregate(std::span<const double> values);
/// Nearest-rank percentile: the ceil(q/100 * n)-th smallest value (q in (0, 100]).
double nearest_rank(std::span<const double> values, unsigned percent);

struct CdfStep {
  double value;
  double cumulative;
};

/// Empirical CDF with one step per distinct value; the last step is 1.
std::vector<CdfStep> f1_cdf(std::span<const double> values);

/// Per-sensor outcome of one deprivation configuration, confusion counts pooled over folds.
struct Observation {
  CellKey cell;
  std::optional<std::size_t> deprived;
  std::size_t sensor;
  Role role;
  model::ConfusionCounts counts;
  model::Metrics metrics;
};

struct SummaryRow {
  CellKey cell;
  Role role;
  std::string metric;
  Summary summary;
};

struct CdfRow {
  CellKey cell;
  CdfStep step;
};

/// One federated blend, tagged with where in the sweep it happened.
struct TraceRecord {
  CellKey cell;
  std::optional<std::size_t> deprived;
  std::size_t fold;
  federation::TraceRow row;
};

struct ExperimentReport {
  std::string scenario;
  std::vector<SummaryRow> rows;
  std::vector<CdfRow> cdf;
  /// Raw outcomes behind the summaries; kept in memory only.
  std::vector<Observation> observations;
  /// key=value metadata written to the manifest.
  std::vector<std::pair<std::string, std::string>> manifest;

  std::vector<CellKey> cells() const;
  /// Defined values of `metric` in a cell, optionally for one role only.
  std::vector<double> values(const CellKey& cell, std::string_view metric,
                             std::optional<Role> role = std::nullopt) const;
};

/// Local-only training. For each deprivation configuration and fold, sensors
/// with data train on their training split; the deprived sensor keeps
/// init_default(). Everyone is scored on their own held-out fold.
ExperimentReport run_reference(const ExperimentConfig& cfg, std::span<const SensorRecords> dataset,
                               std::size_t jobs = 1);
ExperimentReport run_reference(const ExperimentConfig& cfg, std::size_t jobs = 1);

/// Federated rounds for every (idw exponent, neighbor count) cell, with the
/// same folds and deprivation rotation as the reference run.
ExperimentReport run_federated(const ExperimentConfig& cfg, std::span<const SensorRecords> dataset,
                               std::size_t jobs = 1, std::vector<TraceRecord>* trace = nullptr);
ExperimentReport run_federated(const ExperimentConfig& cfg, std::size_t jobs = 1);

/// Width of the F1 CDF support (max - min) of one cell; 0 for an empty cell.
double f1_spread(const ExperimentReport& report, const CellKey& cell);

struct SpreadRow {
  double idw_p;
  std::size_t neighbors;
  double spread_a;
  double spread_b;
  double difference() const { return spread_b - spread_a; }
};

/// F1 spread of every cell, matched on (idw_p, neighbors). Throws
/// InvalidArgument unless both reports cover the same cells.
std::vector<SpreadRow> compare_spread(const ExperimentReport& a, const ExperimentReport& b);

/// Writes <scenario>_report.csv, <scenario>_cdf.csv and <scenario>_manifest.txt.
/// Existing files are replaced only when `overwrite` is set (IoError otherwise).
void emit_report(const ExperimentReport& report, const std::filesystem::path& dir, bool overwrite);
/// Reads back the summary and CDF tables and the manifest written by emit_report.
ExperimentReport read_report(const std::filesystem::path& dir, std::string_view scenario);

/// CSV: idw_p,neighbors,deprived,fold followed by the federation trace columns.
void write_trace_csv(std::ostream& out, std::span<const TraceRecord> records);

}  // namespace fedsense::experiment
