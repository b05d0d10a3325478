#include "fedsense/federation.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "fedsense/errors.hpp"
#include "fedsense/format.hpp"
#include "fedsense/seed.hpp"

namespace fedsense::federation {

void FusionPolicy::validate(std::size_t sensor_count) const {
  if (!(idw_exponent >= 0.0) || !std::isfinite(idw_exponent)) {
    throw InvalidArgument("policy: idw_exponent must be a finite non-negative number");
  }
  if (!(own_weight_start >= 0.0 && own_weight_start <= own_weight_end && own_weight_end <= 1.0)) {
    throw InvalidArgument("policy: need 0 <= own_weight_start <= own_weight_end <= 1");
  }
  if (rounds < 1) throw InvalidArgument("policy: rounds must be >= 1");
  if (neighbor_count < 1 || neighbor_count + 1 > sensor_count) {
    throw InvalidArgument("policy: neighbor_count must be in [1, sensors - 1]");
  }
}

std::vector<double> idw_weights(std::span<const double> distances, double p) {
  if (distances.empty()) throw InvalidArgument("idw_weights: no distances");
  std::vector<double> w(distances.size());
  double total = 0.0;
  for (std::size_t i = 0; i < distances.size(); ++i) {
    if (!(distances[i] > 0.0) || !std::isfinite(distances[i])) {
      throw InvalidArgument("idw_weights: distances must be positive and finite");
    }
    w[i] = std::pow(distances[i], -p);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

double own_weight(std::size_t round, const FusionPolicy& policy, std::optional<double> last_accuracy) {
  if (round >= policy.rounds) throw InvalidArgument("own_weight: round out of range");
  const double progress =
      policy.rounds == 1 ? 0.0 : static_cast<double>(round) / static_cast<double>(policy.rounds - 1);
  // std::lerp is exact at both ends, so round 0 gives `start` and the last round `end`.
  const double base = std::lerp(policy.own_weight_start, policy.own_weight_end, progress);
  return base * last_accuracy.value_or(0.0);
}

std::vector<Neighbor> select_neighbors(const SensorState& state, std::span<const SensorState> all,
                                       std::size_t k) {
  std::vector<Neighbor> candidates;
  for (const SensorState& other : all) {
    if (other.id != state.id) candidates.push_back({other.id, distance(state.position, other.position)});
  }
  if (k > candidates.size()) {
    throw InvalidArgument("select_neighbors: k = " + std::to_string(k) + " exceeds the " +
                          std::to_string(candidates.size()) + " other sensors");
  }
  std::sort(candidates.begin(), candidates.end(), [](const Neighbor& a, const Neighbor& b) {
    return a.distance != b.distance ? a.distance < b.distance : a.id < b.id;
  });
  candidates.resize(k);
  return candidates;
}

MlpCoefficients blend(const MlpCoefficients& own, double w_own,
                      std::span<const WeightedCoefficients> neighbors) {
  if (!(w_own >= 0.0 && w_own <= 1.0)) throw InvalidArgument("blend: w_own must lie in [0, 1]");
  double total = 0.0;
  for (const auto& n : neighbors) {
    if (!own.same_shape(n.coeffs.get())) throw InvalidArgument("blend: coefficient shapes differ");
    if (!(n.weight >= 0.0)) throw InvalidArgument("blend: neighbor weights must be non-negative");
    total += n.weight;
  }
  if (neighbors.empty() ? w_own != 1.0 : std::abs(total - 1.0) > 1e-9) {
    throw InvalidArgument("blend: neighbor weights must sum to 1");
  }

  MlpCoefficients out = own;
  for (std::size_t t = 0; t < MlpCoefficients::kTensorCount; ++t) {
    auto dst = out.tensor(t);
    const auto mine = own.tensor(t);
    for (std::size_t i = 0; i < dst.size(); ++i) {
      double mix = 0.0;
      for (const auto& n : neighbors) mix += n.weight * n.coeffs.get().tensor(t)[i];
      dst[i] = w_own * mine[i] + (1.0 - w_own) * mix;
    }
  }
  return out;
}

std::vector<SensorState> federated_round(std::span<const SensorState> sensors,
                                         const FusionPolicy& policy, std::size_t round,
                                         const model::TrainConfig& round_cfg,
                                         std::span<const std::optional<SensorData>> datasets,
                                         std::vector<TraceRow>* trace) {
  policy.validate(sensors.size());
  if (round >= policy.rounds) throw InvalidArgument("federated_round: round out of range");
  if (datasets.size() != sensors.size()) {
    throw InvalidArgument("federated_round: one dataset slot per sensor required");
  }
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    if (sensors[i].has_training_data != datasets[i].has_value()) {
      throw InvalidArgument("federated_round: sensor " + std::to_string(sensors[i].id) +
                            " dataset presence does not match has_training_data");
    }
    if (!sensors[i].coeffs.same_shape(sensors.front().coeffs)) {
      throw InvalidArgument("federated_round: coefficient shapes differ");
    }
  }

  // Local training; its results are the round-start snapshot.
  std::vector<SensorState> snapshot(sensors.begin(), sensors.end());
  for (std::size_t i = 0; i < snapshot.size(); ++i) {
    if (!datasets[i]) continue;
    model::TrainConfig cfg = round_cfg;
    cfg.seed = derive_seed(round_cfg.seed, "federation.local", {round, snapshot[i].id});
    snapshot[i].coeffs = model::train(std::move(snapshot[i].coeffs), datasets[i]->train, cfg).coeffs;
    const auto m = model::metrics(model::evaluate(snapshot[i].coeffs, datasets[i]->validation));
    snapshot[i].last_accuracy = m.accuracy;
  }

  std::vector<SensorState> next = snapshot;
  for (std::size_t i = 0; i < snapshot.size(); ++i) {
    const SensorState& self = snapshot[i];
    const auto neighbors = select_neighbors(self, snapshot, policy.neighbor_count);
    std::vector<double> distances;
    for (const Neighbor& n : neighbors) distances.push_back(n.distance);
    const auto weights = idw_weights(distances, policy.idw_exponent);

    std::vector<WeightedCoefficients> mix;
    for (std::size_t j = 0; j < neighbors.size(); ++j) {
      const auto it = std::find_if(snapshot.begin(), snapshot.end(),
                                   [&](const SensorState& s) { return s.id == neighbors[j].id; });
      mix.push_back({std::cref(it->coeffs), weights[j]});
    }
    const double w_own = own_weight(round, policy, self.last_accuracy);
    next[i].coeffs = blend(self.coeffs, w_own, mix);

    if (trace) {
      TraceRow row{round, self.id, w_own, {}, weights, self.last_accuracy};
      for (const Neighbor& n : neighbors) row.neighbor_ids.push_back(n.id);
      trace->push_back(std::move(row));
    }
  }
  return next;
}

void write_trace_csv(std::ostream& out, std::span<const TraceRow> rows) {
  out << "round,sensor,w_own,neighbor_ids,neighbor_weights,last_accuracy\n";
  for (const TraceRow& r : rows) {
    out << r.round << ',' << r.sensor << ',' << format_double(r.w_own) << ',';
    for (std::size_t i = 0; i < r.neighbor_ids.size(); ++i) out << (i ? ";" : "") << r.neighbor_ids[i];
    out << ',';
    for (std::size_t i = 0; i < r.neighbor_weights.size(); ++i) {
      out << (i ? ";" : "") << format_double(r.neighbor_weights[i]);
    }
    out << ',';
    if (r.last_accuracy) out << format_double(*r.last_accuracy);
    out << '\n';
  }
}

}  // namespace fedsense::federation
