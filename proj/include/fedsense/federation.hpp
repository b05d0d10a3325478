#pragma once

#include <cstddef>
#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "fedsense/model.hpp"
#include "fedsense/types.hpp"

namespace fedsense::federation {

using model::MlpCoefficients;

struct FusionPolicy {
  double idw_exponent = 0.0;
  std::size_t neighbor_count = 3;
  double own_weight_start = 0.8;
  double own_weight_end = 0.99;
  std::size_t rounds = 10;

  /// 0 <= start <= end <= 1, exponent finite and >= 0, rounds >= 1,
  /// 1 <= neighbor_count <= sensor_count - 1.
  void validate(std::size_t sensor_count) const;
};

struct SensorState {
  std::size_t id = 0;
  MlpCoefficients coeffs{1};
  bool has_training_data = true;
  std::optional<double> last_accuracy;  // absent until the sensor has been evaluated
  Point position;
};

struct Neighbor {
  std::size_t id;
  double distance;
};

struct WeightedCoefficients {
  std::reference_wrapper<const MlpCoefficients> coeffs;
  double weight;
};

/// Local data of a sensor that can train: a training split and the held-out
/// split its per-round accuracy is measured on.
struct SensorData {
  std::vector<model::Sample> train;
  std::vector<model::Sample> validation;
};

/// One sensor's blend in one round, for audit.
struct TraceRow {
  std::size_t round;
  std::size_t sensor;
  double w_own;
  std::vector<std::size_t> neighbor_ids;
  std::vector<double> neighbor_weights;
  std::optional<double> last_accuracy;
};

/// Inverse distance weights d^-p normalized to sum to 1.
std::vector<double> idw_weights(std::span<const double> distances, double p);

/// Weight a sensor keeps on its own coefficients in `round`:
/// lerp(start, end, round / (rounds - 1)) scaled by the last accuracy, or 0
/// when the sensor has never been evaluated.
double own_weight(std::size_t round, const FusionPolicy& policy, std::optional<double> last_accuracy);

/// The k nearest other sensors, nearest first; equal distances go to the lower id.
std::vector<Neighbor> select_neighbors(const SensorState& state, std::span<const SensorState> all,
                                       std::size_t k);

/// w_own * own + (1 - w_own) * sum_i w_i * neighbor_i, element-wise.
/// Neighbor weights must sum to 1 (unless w_own is 1 and there are none).
MlpCoefficients blend(const MlpCoefficients& own, double w_own,
                      std::span<const WeightedCoefficients> neighbors);

/// One synchronous exchange round.
///
/// 1. Every sensor with data trains locally for `round_cfg.epochs` epochs and
///    records its accuracy on its validation split.
/// 2. All coefficients are snapshotted.
/// 3. Every sensor, data-deprived ones included, replaces its coefficients
///    with the blend of its snapshot and its neighbors' snapshots.
///
/// `datasets[i]` belongs to `sensors[i]` and must be present exactly when that
/// sensor has training data. Local training is seeded per (round, sensor id)
/// from round_cfg.seed, so the result does not depend on list order.
std::vector<SensorState> federated_round(std::span<const SensorState> sensors,
                                         const FusionPolicy& policy, std::size_t round,
                                         const model::TrainConfig& round_cfg,
                                         std::span<const std::optional<SensorData>> datasets,
                                         std::vector<TraceRow>* trace = nullptr);

/// CSV: round,sensor,w_own,neighbor_ids,neighbor_weights,last_accuracy with
/// ';'-joined lists and an empty field for an absent accuracy.
void write_trace_csv(std::ostream& out, std::span<const TraceRow> rows);

}  // namespace fedsense::federation
