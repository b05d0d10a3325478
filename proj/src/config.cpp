#include "fedsense/config.hpp"

#include <fstream>
#include <initializer_list>
#include <sstream>
#include <string_view>

#include "fedsense/errors.hpp"
#include "json.hpp"

namespace fedsense::config {

using experiment::ExperimentConfig;
using Json = nlohmann::json;

namespace {

std::string join(const std::string& path, std::string_view key) {
  return path.empty() ? std::string(key) : path + "." + std::string(key);
}

void require_object(const Json& j, const std::string& path, std::initializer_list<std::string_view> allowed) {
  if (!j.is_object()) throw ConfigError("config: '" + (path.empty() ? "<root>" : path) + "' must be an object");
  for (const auto& [key, value] : j.items()) {
    bool known = false;
    for (std::string_view a : allowed) known = known || key == a;
    if (!known) throw ConfigError("config: unknown key '" + join(path, key) + "'");
  }
}

double as_real(const Json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError("config: '" + path + "' must be a number");
  return j.get<double>();
}

std::uint64_t as_uint(const Json& j, const std::string& path) {
  if (!j.is_number_unsigned()) throw ConfigError("config: '" + path + "' must be a non-negative integer");
  return j.get<std::uint64_t>();
}

std::string as_string(const Json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError("config: '" + path + "' must be a string");
  return j.get<std::string>();
}

template <typename T, typename Read>
void read(const Json& j, const std::string& path, std::string_view key, T& out, Read reader) {
  if (const auto it = j.find(std::string(key)); it != j.end()) {
    out = static_cast<T>(reader(*it, join(path, key)));
  }
}

void read_real(const Json& j, const std::string& path, std::string_view key, double& out) {
  read(j, path, key, out, as_real);
}

template <typename T>
void read_uint(const Json& j, const std::string& path, std::string_view key, T& out) {
  read(j, path, key, out, as_uint);
}

Point as_point(const Json& j, const std::string& path) {
  if (!j.is_array() || j.size() != 2) throw ConfigError("config: '" + path + "' must be [x, y]");
  return {as_real(j[0], path + "[0]"), as_real(j[1], path + "[1]")};
}

signal::Topology as_topology(const Json& j, const std::string& path) {
  if (j.is_string()) {
    const auto name = j.get<std::string>();
    if (name == "default") return signal::Topology::default_layout();
    if (name == "uniform") return signal::Topology::uniform_layout();
    throw ConfigError("config: '" + path + "' must be \"default\", \"uniform\" or an object");
  }
  require_object(j, path, {"transmitter", "sensors"});
  signal::Topology t{{0.0, 0.0}, {}};
  if (j.contains("transmitter")) t.transmitter = as_point(j["transmitter"], join(path, "transmitter"));
  if (!j.contains("sensors") || !j["sensors"].is_array()) {
    throw ConfigError("config: '" + join(path, "sensors") + "' must be a list of [x, y]");
  }
  const Json& sensors = j["sensors"];
  for (std::size_t i = 0; i < sensors.size(); ++i) {
    t.sensors.push_back(as_point(sensors[i], join(path, "sensors") + "[" + std::to_string(i) + "]"));
  }
  return t;
}

ExperimentConfig from_json(const Json& root) {
  ExperimentConfig cfg;
  require_object(root, "", {"seed", "campaign", "topology", "features", "federation", "k_folds", "train", "deprivation"});
  read_uint(root, "", "seed", cfg.seed);
  read_uint(root, "", "k_folds", cfg.k_folds);

  if (root.contains("campaign")) {
    const Json& c = root["campaign"];
    const std::string p = "campaign";
    require_object(c, p,
                   {"runs_on", "runs_off", "power_min_dbm", "power_max_dbm", "power_step_dbm", "samples_per_run",
                    "noise_power_dbm", "path_loss_exponent", "sample_rate_hz", "num_subcarriers"});
    read_uint(c, p, "runs_on", cfg.campaign.runs_on);
    read_uint(c, p, "runs_off", cfg.campaign.runs_off);
    read_real(c, p, "power_min_dbm", cfg.campaign.power_min_dbm);
    read_real(c, p, "power_max_dbm", cfg.campaign.power_max_dbm);
    read_real(c, p, "power_step_dbm", cfg.campaign.power_step_dbm);
    read_uint(c, p, "samples_per_run", cfg.campaign.samples_per_run);
    read_real(c, p, "noise_power_dbm", cfg.campaign.noise_power_dbm);
    read_real(c, p, "path_loss_exponent", cfg.campaign.path_loss_exponent);
    read_real(c, p, "sample_rate_hz", cfg.campaign.sample_rate_hz);
    read_uint(c, p, "num_subcarriers", cfg.campaign.num_subcarriers);
  }
  if (root.contains("topology")) cfg.topology = as_topology(root["topology"], "topology");

  if (root.contains("features")) {
    const Json& f = root["features"];
    require_object(f, "features", {"n", "l", "lag", "bandwidth_hz"});
    read_uint(f, "features", "n", cfg.features.n);
    read_uint(f, "features", "l", cfg.features.l);
    read_uint(f, "features", "lag", cfg.features.lag);
    read_real(f, "features", "bandwidth_hz", cfg.features.bandwidth_hz);
  }

  if (root.contains("federation")) {
    const Json& f = root["federation"];
    const std::string p = "federation";
    require_object(f, p, {"idw_exponents", "neighbor_counts", "own_weight_start", "own_weight_end", "rounds"});
    if (f.contains("idw_exponents")) {
      const Json& list = f["idw_exponents"];
      if (!list.is_array()) throw ConfigError("config: 'federation.idw_exponents' must be a list");
      cfg.idw_exponents.clear();
      for (std::size_t i = 0; i < list.size(); ++i) {
        cfg.idw_exponents.push_back(as_real(list[i], "federation.idw_exponents[" + std::to_string(i) + "]"));
      }
    }
    if (f.contains("neighbor_counts")) {
      const Json& list = f["neighbor_counts"];
      if (!list.is_array()) throw ConfigError("config: 'federation.neighbor_counts' must be a list");
      cfg.neighbor_counts.clear();
      for (std::size_t i = 0; i < list.size(); ++i) {
        cfg.neighbor_counts.push_back(as_uint(list[i], "federation.neighbor_counts[" + std::to_string(i) + "]"));
      }
    }
    read_real(f, p, "own_weight_start", cfg.own_weight_start);
    read_real(f, p, "own_weight_end", cfg.own_weight_end);
    read_uint(f, p, "rounds", cfg.rounds);
  }

  if (root.contains("train")) {
    const Json& t = root["train"];
    require_object(t, "train", {"learning_rate", "epochs", "batch_size"});
    read_real(t, "train", "learning_rate", cfg.train.learning_rate);
    read_uint(t, "train", "epochs", cfg.train.epochs);
    read_uint(t, "train", "batch_size", cfg.train.batch_size);
  }

  if (root.contains("deprivation")) {
    const auto d = as_string(root["deprivation"], "deprivation");
    if (d == "none") {
      cfg.deprivation = experiment::Deprivation::None;
    } else if (d == "rotate_each") {
      cfg.deprivation = experiment::Deprivation::RotateEach;
    } else {
      throw ConfigError("config: 'deprivation' must be \"none\" or \"rotate_each\"");
    }
  }

  try {
    cfg.campaign.validate();
    cfg.topology.validate();
    cfg.features.validate();
    cfg.train.validate();
    if (cfg.idw_exponents.empty() || cfg.neighbor_counts.empty()) {
      throw InvalidArgument("federation grids must be nonempty");
    }
    if (cfg.k_folds < 2) throw InvalidArgument("k_folds must be >= 2");
    for (double p : cfg.idw_exponents) {
      for (std::size_t k : cfg.neighbor_counts) cfg.policy(p, k).validate(cfg.topology.sensor_count());
    }
  } catch (const InvalidArgument& e) {
    throw ConfigError(std::string("config: ") + e.what());
  }
  return cfg;
}

}  // namespace

ExperimentConfig parse_config(const std::string& text) {
  Json root;
  try {
    root = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw ConfigError(std::string("config: not valid JSON: ") + e.what());
  }
  return from_json(root);
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  std::ostringstream text;
  text << in.rdbuf();
  return parse_config(text.str());
}

std::string to_json(const ExperimentConfig& cfg) {
  auto point = [](const Point& p) { return Json::array({p.x, p.y}); };
  Json sensors = Json::array();
  for (const Point& s : cfg.topology.sensors) sensors.push_back(point(s));

  Json root = {
      {"seed", cfg.seed},
      {"campaign",
       {{"runs_on", cfg.campaign.runs_on},
        {"runs_off", cfg.campaign.runs_off},
        {"power_min_dbm", cfg.campaign.power_min_dbm},
        {"power_max_dbm", cfg.campaign.power_max_dbm},
        {"power_step_dbm", cfg.campaign.power_step_dbm},
        {"samples_per_run", cfg.campaign.samples_per_run},
        {"noise_power_dbm", cfg.campaign.noise_power_dbm},
        {"path_loss_exponent", cfg.campaign.path_loss_exponent},
        {"sample_rate_hz", cfg.campaign.sample_rate_hz},
        {"num_subcarriers", cfg.campaign.num_subcarriers}}},
      {"topology", {{"transmitter", point(cfg.topology.transmitter)}, {"sensors", sensors}}},
      {"features",
       {{"n", cfg.features.n}, {"l", cfg.features.l}, {"lag", cfg.features.lag},
        {"bandwidth_hz", cfg.features.bandwidth_hz}}},
      {"federation",
       {{"idw_exponents", cfg.idw_exponents},
        {"neighbor_counts", cfg.neighbor_counts},
        {"own_weight_start", cfg.own_weight_start},
        {"own_weight_end", cfg.own_weight_end},
        {"rounds", cfg.rounds}}},
      {"k_folds", cfg.k_folds},
      {"train",
       {{"learning_rate", cfg.train.learning_rate},
        {"epochs", cfg.train.epochs},
        {"batch_size", cfg.train.batch_size}}},
      {"deprivation", std::string(experiment::to_string(cfg.deprivation))},
  };
  return root.dump(2) + "\n";
}

}  // namespace fedsense::config
