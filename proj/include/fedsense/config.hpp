#pragma once

#include <filesystem>
#include <string>

#include "fedsense/experiment.hpp"

namespace fedsense::config {

// JSON run configuration. Every key is optional and falls back to the
// ExperimentConfig default; unknown keys and wrong types raise ConfigError
// naming the offending key path (e.g. "campaign.runs_of"). Each section is
// validated on load; cross-section checks (enough frames per fold, N*L within
// a frame) are left to ExperimentConfig::validate() so that a campaign-only
// document still loads.
//
//   {
//     "seed": 1,
//     "campaign":   {"runs_on", "runs_off", "power_min_dbm", "power_max_dbm",
//                    "power_step_dbm", "samples_per_run", "noise_power_dbm",
//                    "path_loss_exponent", "sample_rate_hz", "num_subcarriers"},
//     "topology":   "default" | "uniform" | {"transmitter": [x, y], "sensors": [[x, y], ...]},
//     "features":   {"n", "l", "lag", "bandwidth_hz"},
//     "federation": {"idw_exponents": [...], "neighbor_counts": [...],
//                    "own_weight_start", "own_weight_end", "rounds"},
//     "k_folds": 10,
//     "train":      {"learning_rate", "epochs", "batch_size"},
//     "deprivation": "none" | "rotate_each"
//   }
experiment::ExperimentConfig parse_config(const std::string& text);
experiment::ExperimentConfig load_config(const std::filesystem::path& path);

/// Full document with every key spelled out; parse_config(to_json(c)) == c.
std::string to_json(const experiment::ExperimentConfig& cfg);

}  // namespace fedsense::config
