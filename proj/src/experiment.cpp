#include "fedsense/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <numeric>
#include <ostream>
#include <sstream>

#include "fedsense/errors.hpp"
#include "fedsense/format.hpp"
#include "fedsense/seed.hpp"
#include "parallel.hpp"

namespace fedsense::experiment {

using features::FeatureRecord;
using model::ConfusionCounts;
using model::MlpCoefficients;
using model::Sample;

std::string_view to_string(Role role) { return role == Role::Deprived ? "deprived" : "trained"; }

std::string_view to_string(Deprivation deprivation) {
  return deprivation == Deprivation::None ? "none" : "rotate_each";
}

// ---------------------------------------------------------------- configuration

void ExperimentConfig::validate() const {
  campaign.validate();
  topology.validate();
  features.validate();
  train.validate();
  if (features.n * features.l > campaign.samples_per_run) {
    throw InvalidArgument("experiment: n*l exceeds samples_per_run");
  }
  if (features.lag >= campaign.samples_per_run) {
    throw InvalidArgument("experiment: autocorrelation lag must be shorter than a frame");
  }
  if (features.bandwidth_hz > campaign.sample_rate_hz) {
    throw InvalidArgument("experiment: filter bandwidth exceeds the sample rate");
  }
  if (idw_exponents.empty() || neighbor_counts.empty()) {
    throw InvalidArgument("experiment: idw_exponents and neighbor_counts must be nonempty");
  }
  if (k_folds < 2) throw InvalidArgument("experiment: k_folds must be >= 2");
  if (campaign.runs_off < k_folds || campaign.runs_on * campaign.power_levels().size() < k_folds) {
    throw InvalidArgument("experiment: each class needs at least k_folds frames per sensor");
  }
  for (double p : idw_exponents) {
    for (std::size_t k : neighbor_counts) policy(p, k).validate(topology.sensor_count());
  }
}

federation::FusionPolicy ExperimentConfig::policy(double idw_exponent, std::size_t neighbors) const {
  return {idw_exponent, neighbors, own_weight_start, own_weight_end, rounds};
}

std::vector<std::pair<std::string, std::string>> ExperimentConfig::canonical() const {
  std::vector<std::pair<std::string, std::string>> kv;
  auto num = [](double v) { return format_double(v); };
  auto count = [](std::size_t v) { return std::to_string(v); };
  auto point = [&](const Point& p) { return num(p.x) + " " + num(p.y); };

  kv.emplace_back("seed", std::to_string(seed));
  kv.emplace_back("campaign.runs_on", count(campaign.runs_on));
  kv.emplace_back("campaign.runs_off", count(campaign.runs_off));
  kv.emplace_back("campaign.power_min_dbm", num(campaign.power_min_dbm));
  kv.emplace_back("campaign.power_max_dbm", num(campaign.power_max_dbm));
  kv.emplace_back("campaign.power_step_dbm", num(campaign.power_step_dbm));
  kv.emplace_back("campaign.samples_per_run", count(campaign.samples_per_run));
  kv.emplace_back("campaign.noise_power_dbm", num(campaign.noise_power_dbm));
  kv.emplace_back("campaign.path_loss_exponent", num(campaign.path_loss_exponent));
  kv.emplace_back("campaign.sample_rate_hz", num(campaign.sample_rate_hz));
  kv.emplace_back("campaign.num_subcarriers", count(campaign.num_subcarriers));
  kv.emplace_back("topology.transmitter", point(topology.transmitter));
  for (std::size_t i = 0; i < topology.sensors.size(); ++i) {
    kv.emplace_back("topology.sensor." + std::to_string(i), point(topology.sensors[i]));
  }
  kv.emplace_back("features.n", count(features.n));
  kv.emplace_back("features.l", count(features.l));
  kv.emplace_back("features.lag", count(features.lag));
  kv.emplace_back("features.bandwidth_hz", num(features.bandwidth_hz));
  std::string exps;
  for (double p : idw_exponents) exps += (exps.empty() ? "" : ";") + num(p);
  std::string counts;
  for (std::size_t k : neighbor_counts) counts += (counts.empty() ? "" : ";") + count(k);
  kv.emplace_back("federation.idw_exponents", exps);
  kv.emplace_back("federation.neighbor_counts", counts);
  kv.emplace_back("federation.own_weight_start", num(own_weight_start));
  kv.emplace_back("federation.own_weight_end", num(own_weight_end));
  kv.emplace_back("federation.rounds", count(rounds));
  kv.emplace_back("k_folds", count(k_folds));
  kv.emplace_back("train.learning_rate", num(train.learning_rate));
  kv.emplace_back("train.epochs", count(train.epochs));
  kv.emplace_back("train.batch_size", count(train.batch_size));
  kv.emplace_back("deprivation", std::string(to_string(deprivation)));
  return kv;
}

std::string ExperimentConfig::config_hash() const {
  std::string text;
  for (const auto& [k, v] : canonical()) text += k + "=" + v + "\n";
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(text)));
  return buf;
}

// ---------------------------------------------------------------- dataset

std::vector<SensorRecords> build_dataset(const ExperimentConfig& cfg, std::size_t jobs) {
  cfg.validate();
  signal::CampaignConfig campaign = cfg.campaign;
  campaign.seed = derive_seed(cfg.seed, "campaign");
  const std::size_t sensors = cfg.topology.sensor_count();
  const std::size_t frames = campaign.frames_per_sensor();

  std::vector<SensorRecords> out(sensors, SensorRecords(frames));
  detail::parallel_for(sensors * frames, jobs, [&](std::size_t job) {
    const std::size_t s = job / frames;
    const std::size_t f = job % frames;
    out[s][f] = features::extract_features(signal::campaign_frame(campaign, cfg.topology, s, f),
                                           cfg.features);
  });
  return out;
}

// ---------------------------------------------------------------- statistics

double nearest_rank(std::span<const double> values, unsigned percent) {
  if (values.empty()) throw InvalidArgument("nearest_rank: no values");
  if (percent == 0 || percent > 100) throw InvalidArgument("nearest_rank: percent must be in (0, 100]");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t rank = (percent * sorted.size() + 99) / 100;  // ceil(q n / 100)
  return sorted[rank - 1];
}

Summary aggregate(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("aggregate: no values");
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
  return {mean, nearest_rank(values, 10), nearest_rank(values, 90), values.size()};
}

std::vector<CdfStep> f1_cdf(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("f1_cdf: no values");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  std::vector<CdfStep> steps;
  const auto n = static_cast<double>(sorted.size());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    if (i + 1 < sorted.size() && sorted[i + 1] == sorted[i]) continue;
    steps.push_back({sorted[i], i + 1 == sorted.size() ? 1.0 : static_cast<double>(i + 1) / n});
  }
  return steps;
}

// ---------------------------------------------------------------- shared run machinery

namespace {

std::optional<double> metric_value(const model::Metrics& m, std::string_view name) {
  if (name == "pd") return m.pd;
  if (name == "pfa") return m.pfa;
  if (name == "f1") return m.f1;
  if (name == "accuracy") return m.accuracy;
  throw InvalidArgument("unknown metric '" + std::string(name) + "'");
}

struct FoldData {
  std::vector<Sample> train;
  std::vector<Sample> test;
};

// Per sensor, per fold: normalized samples. Normalizers are fitted on each
// sensor's own training split; fitting needs no labels, so a deprived sensor
// fits them on its own unlabeled frames as well.
struct Prepared {
  std::size_t sensors = 0;
  std::size_t input_dim = 0;
  std::vector<std::vector<FoldData>> folds;
};

Prepared prepare(const ExperimentConfig& cfg, std::span<const SensorRecords> dataset) {
  cfg.validate();
  if (dataset.size() != cfg.topology.sensor_count()) {
    throw InvalidArgument("experiment: dataset has " + std::to_string(dataset.size()) +
                          " sensors, topology has " + std::to_string(cfg.topology.sensor_count()));
  }
  Prepared p;
  p.sensors = dataset.size();
  p.folds.resize(p.sensors);
  for (std::size_t s = 0; s < p.sensors; ++s) {
    std::vector<Label> labels;
    for (const auto& r : dataset[s]) labels.push_back(r.label);
    const auto folds = model::stratified_k_fold(labels, cfg.k_folds, derive_seed(cfg.seed, "folds", {s}));
    for (const auto& fold : folds) {
      std::vector<FeatureRecord> train_records;
      for (std::size_t i : fold.train) train_records.push_back(dataset[s][i]);
      const auto norms = features::fit_normalizers(train_records);
      FoldData fd;
      for (std::size_t i : fold.train) fd.train.push_back({features::apply_normalizers(norms, dataset[s][i]), dataset[s][i].label});
      for (std::size_t i : fold.test) fd.test.push_back({features::apply_normalizers(norms, dataset[s][i]), dataset[s][i].label});
      p.input_dim = norms.input_dim();
      p.folds[s].push_back(std::move(fd));
    }
  }
  return p;
}

std::vector<std::optional<std::size_t>> rotations(const ExperimentConfig& cfg) {
  std::vector<std::optional<std::size_t>> out;
  if (cfg.deprivation == Deprivation::None) {
    out.emplace_back(std::nullopt);
  } else {
    for (std::size_t s = 0; s < cfg.topology.sensor_count(); ++s) out.emplace_back(s);
  }
  return out;
}

Role role_of(std::size_t sensor, std::optional<std::size_t> deprived) {
  return deprived == sensor ? Role::Deprived : Role::Trained;
}

void summarize(ExperimentReport& report, const std::vector<CellKey>& cells) {
  for (const CellKey& cell : cells) {
    for (Role role : {Role::Deprived, Role::Trained}) {
      const bool any = std::any_of(report.observations.begin(), report.observations.end(),
                                   [&](const Observation& o) { return o.cell == cell && o.role == role; });
      if (!any) continue;
      for (std::string_view metric : kMetricNames) {
        const auto v = report.values(cell, metric, role);
        const Summary s = v.empty() ? Summary{std::nan(""), std::nan(""), std::nan(""), 0} : aggregate(v);
        report.rows.push_back({cell, role, std::string(metric), s});
      }
    }
    const auto f1 = report.values(cell, "f1");
    if (!f1.empty()) {
      for (const CdfStep& step : f1_cdf(f1)) report.cdf.push_back({cell, step});
    }
  }
}

void add_manifest(ExperimentReport& report, const ExperimentConfig& cfg) {
  report.manifest.emplace_back("scenario", report.scenario);
  report.manifest.emplace_back("seed", std::to_string(cfg.seed));
  report.manifest.emplace_back("config_hash", cfg.config_hash());
  report.manifest.emplace_back("campaign_seed", std::to_string(derive_seed(cfg.seed, "campaign")));
  report.manifest.emplace_back("deprivation_configurations", std::to_string(rotations(cfg).size()));
  for (const auto& [k, v] : cfg.canonical()) report.manifest.emplace_back("config." + k, v);
}

}  // namespace

std::vector<CellKey> ExperimentReport::cells() const {
  std::vector<CellKey> out;
  auto add = [&](const CellKey& c) {
    if (std::find(out.begin(), out.end(), c) == out.end()) out.push_back(c);
  };
  for (const auto& o : observations) add(o.cell);
  for (const auto& r : rows) add(r.cell);
  for (const auto& r : cdf) add(r.cell);
  return out;
}

std::vector<double> ExperimentReport::values(const CellKey& cell, std::string_view metric,
                                             std::optional<Role> role) const {
  std::vector<double> out;
  for (const auto& o : observations) {
    if (o.cell != cell || (role && o.role != *role)) continue;
    if (const auto v = metric_value(o.metrics, metric)) out.push_back(*v);
  }
  return out;
}

// ---------------------------------------------------------------- scenarios

ExperimentReport run_reference(const ExperimentConfig& cfg, std::span<const SensorRecords> dataset,
                               std::size_t jobs) {
  const Prepared prep = prepare(cfg, dataset);
  const std::size_t k = cfg.k_folds;
  const MlpCoefficients defaults = model::init_default(prep.input_dim);

  // A trained sensor's model depends only on (sensor, fold), not on who is deprived.
  std::vector<ConfusionCounts> trained(prep.sensors * k);
  std::vector<ConfusionCounts> untrained(prep.sensors * k);
  detail::parallel_for(prep.sensors * k, jobs, [&](std::size_t job) {
    const std::size_t s = job / k;
    const std::size_t f = job % k;
    const FoldData& fd = prep.folds[s][f];
    model::TrainConfig tc = cfg.train;
    tc.seed = derive_seed(cfg.seed, "reference.train", {s, f});
    trained[job] = model::evaluate(model::train(defaults, fd.train, tc).coeffs, fd.test);
    untrained[job] = model::evaluate(defaults, fd.test);
  });

  ExperimentReport report;
  report.scenario = std::string(kReferenceScenario);
  const CellKey cell{report.scenario, 0.0, 0};
  for (const auto& deprived : rotations(cfg)) {
    for (std::size_t s = 0; s < prep.sensors; ++s) {
      const Role role = role_of(s, deprived);
      ConfusionCounts pooled;
      for (std::size_t f = 0; f < k; ++f) pooled += (role == Role::Deprived ? untrained : trained)[s * k + f];
      report.observations.push_back({cell, deprived, s, role, pooled, model::metrics(pooled)});
    }
  }
  summarize(report, {cell});
  add_manifest(report, cfg);
  return report;
}

ExperimentReport run_reference(const ExperimentConfig& cfg, std::size_t jobs) {
  return run_reference(cfg, build_dataset(cfg, jobs), jobs);
}

ExperimentReport run_federated(const ExperimentConfig& cfg, std::span<const SensorRecords> dataset,
                               std::size_t jobs, std::vector<TraceRecord>* trace) {
  const Prepared prep = prepare(cfg, dataset);
  const std::size_t k = cfg.k_folds;
  const MlpCoefficients defaults = model::init_default(prep.input_dim);
  const auto rots = rotations(cfg);

  ExperimentReport report;
  report.scenario = std::string(kFederatedScenario);
  std::vector<CellKey> cells;
  for (double p : cfg.idw_exponents) {
    for (std::size_t n : cfg.neighbor_counts) cells.push_back({report.scenario, p, n});
  }

  model::TrainConfig base_round_cfg = cfg.train;
  base_round_cfg.epochs = std::max<std::size_t>(1, cfg.train.epochs / cfg.rounds);

  struct JobResult {
    std::vector<Observation> observations;
    std::vector<TraceRecord> trace;
  };
  std::vector<JobResult> results(cells.size() * rots.size());
  detail::parallel_for(results.size(), jobs, [&](std::size_t job) {
    const CellKey& cell = cells[job / rots.size()];
    const auto deprived = rots[job % rots.size()];
    const auto policy = cfg.policy(cell.idw_p, cell.neighbors);
    const std::uint64_t rotation_tag = deprived.value_or(prep.sensors);
    model::TrainConfig round_cfg = base_round_cfg;

    std::vector<ConfusionCounts> pooled(prep.sensors);
    for (std::size_t f = 0; f < k; ++f) {
      std::vector<federation::SensorState> states;
      std::vector<std::optional<federation::SensorData>> data;
      for (std::size_t s = 0; s < prep.sensors; ++s) {
        const bool has_data = role_of(s, deprived) == Role::Trained;
        states.push_back({s, defaults, has_data, std::nullopt, cfg.topology.sensors[s]});
        if (has_data) {
          data.emplace_back(federation::SensorData{prep.folds[s][f].train, prep.folds[s][f].test});
        } else {
          data.emplace_back(std::nullopt);
        }
      }
      // Same seeds in every cell, so cells differ only by their policy.
      round_cfg.seed = derive_seed(cfg.seed, "federated.train", {rotation_tag, f});
      std::vector<federation::TraceRow> rows;
      for (std::size_t r = 0; r < cfg.rounds; ++r) {
        states = federation::federated_round(states, policy, r, round_cfg, data, trace ? &rows : nullptr);
      }
      for (std::size_t s = 0; s < prep.sensors; ++s) {
        pooled[s] += model::evaluate(states[s].coeffs, prep.folds[s][f].test);
      }
      for (auto& row : rows) results[job].trace.push_back({cell, deprived, f, std::move(row)});
    }
    for (std::size_t s = 0; s < prep.sensors; ++s) {
      results[job].observations.push_back(
          {cell, deprived, s, role_of(s, deprived), pooled[s], model::metrics(pooled[s])});
    }
  });

  for (auto& r : results) {
    report.observations.insert(report.observations.end(), r.observations.begin(), r.observations.end());
    if (trace) trace->insert(trace->end(), r.trace.begin(), r.trace.end());
  }
  summarize(report, cells);
  add_manifest(report, cfg);
  return report;
}

ExperimentReport run_federated(const ExperimentConfig& cfg, std::size_t jobs) {
  return run_federated(cfg, build_dataset(cfg, jobs), jobs);
}

// ---------------------------------------------------------------- spread

double f1_spread(const ExperimentReport& report, const CellKey& cell) {
  double lo = INFINITY;
  double hi = -INFINITY;
  for (const CdfRow& r : report.cdf) {
    if (r.cell != cell) continue;
    lo = std::min(lo, r.step.value);
    hi = std::max(hi, r.step.value);
  }
  return hi >= lo ? hi - lo : 0.0;
}

std::vector<SpreadRow> compare_spread(const ExperimentReport& a, const ExperimentReport& b) {
  auto grid = [](const ExperimentReport& r) {
    std::vector<std::pair<double, std::size_t>> g;
    for (const CellKey& c : r.cells()) g.emplace_back(c.idw_p, c.neighbors);
    std::sort(g.begin(), g.end());
    return g;
  };
  const auto ga = grid(a);
  if (ga != grid(b)) throw InvalidArgument("compare_spread: reports cover different grid cells");

  std::vector<SpreadRow> out;
  for (const auto& [p, n] : ga) {
    out.push_back({p, n, f1_spread(a, {a.scenario, p, n}), f1_spread(b, {b.scenario, p, n})});
  }
  return out;
}

// ---------------------------------------------------------------- files

namespace {

std::filesystem::path report_path(const std::filesystem::path& dir, std::string_view scenario,
                                  std::string_view suffix) {
  return dir / (std::string(scenario) + std::string(suffix));
}

std::ofstream open_for_write(const std::filesystem::path& path, bool overwrite) {
  if (!overwrite && std::filesystem::exists(path)) {
    throw IoError(path.string() + " exists (pass --overwrite to replace it)");
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

std::ifstream open_for_read(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  return in;
}

constexpr std::string_view kReportHeader = "scenario,idw_p,neighbors,role,metric,mean,p10,p90,n";
constexpr std::string_view kCdfHeader = "scenario,idw_p,neighbors,f1,cum_frac";

Role parse_role(const std::string& text) {
  if (text == "deprived") return Role::Deprived;
  if (text == "trained") return Role::Trained;
  throw FormatError("report: unknown role '" + text + "'");
}

std::size_t parse_count(const std::string& text) {
  std::size_t pos = 0;
  try {
    const auto v = std::stoull(text, &pos);
    if (pos == text.size()) return static_cast<std::size_t>(v);
  } catch (const std::exception&) {
  }
  throw FormatError("report: not a count: '" + text + "'");
}

}  // namespace

void emit_report(const ExperimentReport& report, const std::filesystem::path& dir, bool overwrite) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  const auto report_file = report_path(dir, report.scenario, "_report.csv");
  const auto cdf_file = report_path(dir, report.scenario, "_cdf.csv");
  const auto manifest_file = report_path(dir, report.scenario, "_manifest.txt");
  if (!overwrite) {
    for (const auto& p : {report_file, cdf_file, manifest_file}) {
      if (std::filesystem::exists(p)) throw IoError(p.string() + " exists (pass --overwrite to replace it)");
    }
  }

  auto rows = open_for_write(report_file, overwrite);
  rows << kReportHeader << '\n';
  for (const SummaryRow& r : report.rows) {
    rows << r.cell.scenario << ',' << format_double(r.cell.idw_p) << ',' << r.cell.neighbors << ','
         << to_string(r.role) << ',' << r.metric << ',' << format_double(r.summary.mean) << ','
         << format_double(r.summary.p10) << ',' << format_double(r.summary.p90) << ',' << r.summary.n
         << '\n';
  }
  if (!rows.flush()) throw IoError("write failed for " + report_file.string());

  auto cdf = open_for_write(cdf_file, overwrite);
  cdf << kCdfHeader << '\n';
  for (const CdfRow& r : report.cdf) {
    cdf << r.cell.scenario << ',' << format_double(r.cell.idw_p) << ',' << r.cell.neighbors << ','
        << format_double(r.step.value) << ',' << format_double(r.step.cumulative) << '\n';
  }
  if (!cdf.flush()) throw IoError("write failed for " + cdf_file.string());

  auto manifest = open_for_write(manifest_file, overwrite);
  for (const auto& [k, v] : report.manifest) manifest << k << '=' << v << '\n';
  if (!manifest.flush()) throw IoError("write failed for " + manifest_file.string());
}

ExperimentReport read_report(const std::filesystem::path& dir, std::string_view scenario) {
  ExperimentReport report;
  report.scenario = std::string(scenario);
  std::string line;

  auto rows = open_for_read(report_path(dir, scenario, "_report.csv"));
  if (!std::getline(rows, line) || line != kReportHeader) throw FormatError("report: bad header");
  while (std::getline(rows, line)) {
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 9) throw FormatError("report: wrong column count in '" + line + "'");
    report.rows.push_back({{c[0], parse_double(c[1]), parse_count(c[2])},
                           parse_role(c[3]),
                           c[4],
                           {parse_double(c[5]), parse_double(c[6]), parse_double(c[7]), parse_count(c[8])}});
  }

  auto cdf = open_for_read(report_path(dir, scenario, "_cdf.csv"));
  if (!std::getline(cdf, line) || line != kCdfHeader) throw FormatError("cdf: bad header");
  while (std::getline(cdf, line)) {
    if (line.empty()) continue;
    const auto c = split_csv_line(line);
    if (c.size() != 5) throw FormatError("cdf: wrong column count in '" + line + "'");
    report.cdf.push_back({{c[0], parse_double(c[1]), parse_count(c[2])}, {parse_double(c[3]), parse_double(c[4])}});
  }

  auto manifest = open_for_read(report_path(dir, scenario, "_manifest.txt"));
  while (std::getline(manifest, line)) {
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw FormatError("manifest: expected key=value, got '" + line + "'");
    report.manifest.emplace_back(line.substr(0, eq), line.substr(eq + 1));
  }
  return report;
}

void write_trace_csv(std::ostream& out, std::span<const TraceRecord> records) {
  std::vector<federation::TraceRow> rows;
  for (const auto& r : records) rows.push_back(r.row);
  std::ostringstream body;
  federation::write_trace_csv(body, rows);

  std::istringstream lines(body.str());
  std::string line;
  std::getline(lines, line);
  out << "idw_p,neighbors,deprived,fold," << line << '\n';
  for (const auto& r : records) {
    std::getline(lines, line);
    out << format_double(r.cell.idw_p) << ',' << r.cell.neighbors << ',';
    if (r.deprived) out << *r.deprived;
    out << ',' << r.fold << ',' << line << '\n';
  }
}

}  // namespace fedsense::experiment
