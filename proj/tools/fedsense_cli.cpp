#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "fedsense/config.hpp"
#include "fedsense/errors.hpp"
#include "fedsense/experiment.hpp"
#include "fedsense/features.hpp"
#include "fedsense/format.hpp"
#include "fedsense/model.hpp"
#include "fedsense/seed.hpp"
#include "fedsense/signal.hpp"

namespace fs = std::filesystem;
using namespace fedsense;

namespace {

// Exit codes: 0 success, 1 runtime failure, 2 bad configuration or usage.
constexpr int kRuntimeFailure = 1;
constexpr int kUsageFailure = 2;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Globals {
  std::optional<std::uint64_t> seed;
  std::size_t jobs = 1;
  std::string out;
  bool overwrite = false;
  bool dry_run = false;
};

std::size_t worker_count(std::size_t jobs) {
  if (jobs != 0) return jobs;
  return std::max(1u, std::thread::hardware_concurrency());
}

experiment::ExperimentConfig resolve_config(const std::string& path, const Globals& g, bool full) {
  auto cfg = path.empty() ? experiment::ExperimentConfig{} : config::load_config(path);
  if (g.seed) cfg.seed = *g.seed;
  if (full) {
    try {
      cfg.validate();
    } catch (const InvalidArgument& e) {
      throw ConfigError(std::string("config: ") + e.what());
    }
  }
  return cfg;
}

fs::path require_out(const Globals& g) {
  if (g.out.empty()) throw UsageError("--out is required");
  return g.out;
}

void write_text(const fs::path& path, const std::string& text, bool overwrite) {
  if (!overwrite && fs::exists(path)) throw IoError(path.string() + " exists (pass --overwrite to replace it)");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out || !(out << text) || !out.flush()) throw IoError("cannot write " + path.string());
}

void make_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

std::string frame_file_name(std::size_t sensor, std::size_t index) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "s%zu_f%05zu.iq", sensor, index);
  return buf;
}

// ---------------------------------------------------------------- campaign

int cmd_campaign(const std::string& config_path, const Globals& g) {
  const auto cfg = resolve_config(config_path, g, false);
  signal::CampaignConfig campaign = cfg.campaign;
  campaign.seed = derive_seed(cfg.seed, "campaign");
  const std::size_t sensors = cfg.topology.sensor_count();
  const std::size_t frames = campaign.frames_per_sensor();

  if (g.dry_run) {
    std::cout << "sensors=" << sensors << "\nframes_per_sensor=" << frames
              << "\nsamples_per_run=" << campaign.samples_per_run << "\ncampaign_seed=" << campaign.seed << '\n';
    return 0;
  }
  const fs::path dir = require_out(g);
  make_dir(dir);

  std::ostringstream manifest;
  manifest << "file,sensor,label,tx_power_dbm,sample_rate_hz\n";
  for (std::size_t s = 0; s < sensors; ++s) {
    for (std::size_t f = 0; f < frames; ++f) {
      const auto frame = signal::campaign_frame(campaign, cfg.topology, s, f);
      const auto name = frame_file_name(s, f);
      if (!g.overwrite && fs::exists(dir / name)) {
        throw IoError((dir / name).string() + " exists (pass --overwrite to replace it)");
      }
      signal::save_iq_file(dir / name, frame);
      manifest << name << ',' << s << ',' << (is_present(frame.label()) ? 1 : 0) << ',';
      if (frame.tx_power_dbm()) manifest << format_double(*frame.tx_power_dbm());
      manifest << ',' << format_double(frame.sample_rate_hz()) << '\n';
    }
  }
  write_text(dir / "manifest.csv", manifest.str(), g.overwrite);
  write_text(dir / "config.json", config::to_json(cfg), g.overwrite);
  return 0;
}

// ---------------------------------------------------------------- extract

struct FrameSource {
  fs::path path;
  double sample_rate_hz;
  Label label;
  std::optional<double> tx_power_dbm;
};

std::vector<FrameSource> read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.csv");
  if (!in) throw IoError("cannot read " + (dir / "manifest.csv").string());
  std::string line;
  if (!std::getline(in, line) || line != "file,sensor,label,tx_power_dbm,sample_rate_hz") {
    throw FormatError((dir / "manifest.csv").string() + ": unexpected header");
  }
  std::vector<FrameSource> out;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 5 || (c[2] != "0" && c[2] != "1")) {
      throw FormatError((dir / "manifest.csv").string() + ": bad row '" + line + "'");
    }
    const Label label = c[2] == "1" ? Label::SignalPresent : Label::NoiseOnly;
    std::optional<double> power;
    if (!c[3].empty()) power = parse_double(c[3]);
    out.push_back({dir / c[0], parse_double(c[4]), label, power});
  }
  return out;
}

struct ExtractOptions {
  std::vector<std::string> inputs;
  std::string config;
  std::optional<std::size_t> n, l, lag;
  std::optional<double> bandwidth_hz;
  double sample_rate_hz = signal::kDefaultSampleRateHz;
  std::string label;
  std::optional<double> tx_power_dbm;
};

std::vector<FrameSource> collect_sources(const ExtractOptions& o) {
  std::optional<Label> bare_label;
  if (o.label == "signal") bare_label = Label::SignalPresent;
  if (o.label == "noise") bare_label = Label::NoiseOnly;

  auto bare = [&](const fs::path& p) -> FrameSource {
    if (!bare_label) throw UsageError(p.string() + ": no manifest; pass --label noise|signal");
    if (is_present(*bare_label) != o.tx_power_dbm.has_value()) {
      throw UsageError("--tx-power-dbm is required with --label signal and not allowed with --label noise");
    }
    return {p, o.sample_rate_hz, *bare_label, o.tx_power_dbm};
  };

  std::vector<FrameSource> out;
  for (const fs::path input : o.inputs) {
    if (fs::is_directory(input)) {
      if (fs::exists(input / "manifest.csv")) {
        const auto listed = read_manifest(input);
        out.insert(out.end(), listed.begin(), listed.end());
        continue;
      }
      std::vector<fs::path> files;
      for (const auto& entry : fs::directory_iterator(input)) {
        if (entry.is_regular_file() && entry.path().extension() == ".iq") files.push_back(entry.path());
      }
      std::sort(files.begin(), files.end());
      for (const auto& f : files) out.push_back(bare(f));
    } else {
      out.push_back(bare(input));
    }
  }
  return out;
}

int cmd_extract(const ExtractOptions& o, const Globals& g) {
  features::FeatureParams params =
      o.config.empty() ? features::FeatureParams{} : config::load_config(o.config).features;
  if (o.n) params.n = *o.n;
  if (o.l) params.l = *o.l;
  if (o.lag) params.lag = *o.lag;
  if (o.bandwidth_hz) params.bandwidth_hz = *o.bandwidth_hz;
  try {
    params.validate();
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }

  const auto sources = collect_sources(o);
  if (g.dry_run) {
    for (const auto& s : sources) std::cout << s.path.string() << '\n';
    return 0;
  }

  std::vector<features::FeatureRecord> records;
  int failures = 0;
  for (const auto& s : sources) {
    try {
      const auto frame = signal::load_iq_file(s.path, s.sample_rate_hz, s.label, s.tx_power_dbm);
      records.push_back(features::extract_features(frame, params));
    } catch (const std::exception& e) {
      std::cerr << "error: " << s.path.string() << ": " << e.what() << '\n';
      ++failures;
    }
  }
  if (failures > 0) return kRuntimeFailure;

  std::ostringstream csv;
  features::write_feature_csv(csv, records);
  if (g.out.empty()) {
    std::cout << csv.str();
  } else {
    write_text(g.out, csv.str(), g.overwrite);
  }
  return 0;
}

// ---------------------------------------------------------------- experiment

int cmd_experiment(const std::string& config_path, const std::string& mode, bool trace, const Globals& g) {
  const auto cfg = resolve_config(config_path, g, true);
  const bool reference = mode == "reference" || mode == "both";
  const bool federated = mode == "federated" || mode == "both";

  if (g.dry_run) {
    std::cout << "mode=" << mode << "\nseed=" << cfg.seed << "\nconfig_hash=" << cfg.config_hash()
              << "\nsensors=" << cfg.topology.sensor_count()
              << "\nfolds=" << cfg.k_folds << "\ndeprivation=" << experiment::to_string(cfg.deprivation) << '\n';
    if (federated) {
      for (double p : cfg.idw_exponents) {
        for (std::size_t k : cfg.neighbor_counts) {
          std::cout << "cell idw_p=" << format_double(p) << " neighbors=" << k << '\n';
        }
      }
    }
    return 0;
  }

  const fs::path dir = require_out(g);
  make_dir(dir);
  const std::size_t jobs = worker_count(g.jobs);
  const auto dataset = experiment::build_dataset(cfg, jobs);
  if (reference) {
    experiment::emit_report(experiment::run_reference(cfg, dataset, jobs), dir, g.overwrite);
  }
  if (federated) {
    std::vector<experiment::TraceRecord> records;
    const auto report = experiment::run_federated(cfg, dataset, jobs, trace ? &records : nullptr);
    experiment::emit_report(report, dir, g.overwrite);
    if (trace) {
      std::ostringstream csv;
      experiment::write_trace_csv(csv, records);
      write_text(dir / "federated_trace.csv", csv.str(), g.overwrite);
    }
  }
  write_text(dir / "config.json", config::to_json(cfg), g.overwrite);
  return 0;
}

// ---------------------------------------------------------------- model

void emit_coefficients(const model::MlpCoefficients& coeffs, const Globals& g) {
  std::ostringstream text;
  model::write_coefficients(text, coeffs);
  if (g.out.empty()) {
    std::cout << text.str();
  } else {
    write_text(g.out, text.str(), g.overwrite);
  }
}

int cmd_model_dump(std::optional<std::size_t> input_dim, const std::string& config_path, const Globals& g) {
  std::size_t dim = features::kDefaultVectorCount + 3;
  if (!config_path.empty()) dim = config::load_config(config_path).features.l + 3;
  if (input_dim) dim = *input_dim;
  if (dim == 0) throw UsageError("--input-dim must be positive");
  if (g.dry_run) {
    std::cout << "input_dim=" << dim << "\nparameters=" << model::MlpCoefficients(dim).parameter_count() << '\n';
    return 0;
  }
  emit_coefficients(model::init_default(dim), g);
  return 0;
}

int cmd_model_restore(const std::string& path, std::optional<std::size_t> input_dim, const Globals& g) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path);
  const auto coeffs = model::read_coefficients(in);
  if (input_dim && coeffs.input_dim() != *input_dim) {
    throw FormatError(path + ": model has " + std::to_string(coeffs.input_dim()) + " inputs, expected " +
                      std::to_string(*input_dim));
  }
  if (g.dry_run) {
    std::cout << "input_dim=" << coeffs.input_dim() << "\nparameters=" << coeffs.parameter_count() << '\n';
    return 0;
  }
  emit_coefficients(coeffs, g);
  return 0;
}

std::string one_line(std::string text) {
  std::replace(text.begin(), text.end(), '\n', ' ');
  return text;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Federated spectrum sensing simulator"};
  app.require_subcommand(1);
  app.fallthrough();

  Globals g;
  app.add_option("--seed", g.seed, "Top-level seed (overrides the config)");
  app.add_option("--jobs", g.jobs, "Worker threads (0 = all cores)")->capture_default_str();
  app.add_option("--out", g.out, "Output directory or file");
  app.add_flag("--overwrite", g.overwrite, "Replace existing output files");
  app.add_flag("--dry-run", g.dry_run, "Print the resolved plan and exit");

  std::string config_path;

  auto* campaign = app.add_subcommand("campaign", "Synthesize labeled IQ files and a manifest");
  campaign->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);

  ExtractOptions ex;
  auto* extract = app.add_subcommand("extract", "Turn IQ files into a feature CSV");
  extract->add_option("inputs", ex.inputs, "IQ files or directories (with manifest.csv)")->required();
  extract->add_option("--config", ex.config, "Take feature parameters from this configuration")
      ->check(CLI::ExistingFile);
  extract->add_option("--n", ex.n, "Samples per vector");
  extract->add_option("--l", ex.l, "Vectors per frame");
  extract->add_option("--lag", ex.lag, "Autocorrelation lag in samples");
  extract->add_option("--bandwidth-hz", ex.bandwidth_hz, "Low-pass filter bandwidth");
  extract->add_option("--sample-rate-hz", ex.sample_rate_hz, "Sample rate of bare files")->capture_default_str();
  extract->add_option("--label", ex.label, "Label of bare files")->check(CLI::IsMember({"noise", "signal"}));
  extract->add_option("--tx-power-dbm", ex.tx_power_dbm, "Transmit power of bare signal files");

  std::string mode = "both";
  bool trace = false;
  auto* exp = app.add_subcommand("experiment", "Run reference and/or federated scenarios");
  exp->add_option("--config", config_path, "JSON run configuration")->check(CLI::ExistingFile);
  exp->add_option("--mode", mode, "Scenarios to run")
      ->check(CLI::IsMember({"reference", "federated", "both"}))
      ->capture_default_str();
  exp->add_flag("--trace", trace, "Also write federated_trace.csv");

  auto* mdl = app.add_subcommand("model", "Dump or restore model coefficients");
  mdl->require_subcommand(1);
  std::optional<std::size_t> input_dim;
  auto* dump = mdl->add_subcommand("dump", "Write the default model");
  dump->add_option("--input-dim", input_dim, "Model inputs (default: eigenvalue count + 3)");
  dump->add_option("--config", config_path, "Take the input size from this configuration")
      ->check(CLI::ExistingFile);
  std::string coeff_path;
  auto* restore = mdl->add_subcommand("restore", "Read a coefficient file and write it back");
  restore->add_option("file", coeff_path, "Coefficient file")->required();
  restore->add_option("--input-dim", input_dim, "Reject models with a different input size");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << one_line(e.what()) << '\n';
    return kUsageFailure;
  }

  try {
    if (*campaign) return cmd_campaign(config_path, g);
    if (*extract) return cmd_extract(ex, g);
    if (*exp) return cmd_experiment(config_path, mode, trace, g);
    if (*dump) return cmd_model_dump(input_dim, config_path, g);
    if (*restore) return cmd_model_restore(coeff_path, input_dim, g);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << one_line(e.what()) << '\n';
    return kUsageFailure;
  } catch (const UsageError& e) {
    std::cerr << "error: " << one_line(e.what()) << '\n';
    return kUsageFailure;
  } catch (const std::exception& e) {
    std::cerr << "error: " << one_line(e.what()) << '\n';
    return kRuntimeFailure;
  }
  return kUsageFailure;
}
