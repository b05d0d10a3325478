#include <sys/wait.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <string>

#include "doctest.h"
#include "fedsense/experiment.hpp"
#include "fedsense/format.hpp"
#include "test_util.hpp"

using namespace fedsense;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code;
  std::string output;  // stdout and stderr interleaved
};

Run run(const std::string& args) {
  const std::string cmd = std::string(FEDSENSE_CLI) + " " + args + " 2>&1";
  FILE* pipe = ::popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::string out;
  std::array<char, 4096> buf{};
  while (std::fgets(buf.data(), buf.size(), pipe)) out += buf.data();
  const int status = ::pclose(pipe);
  return {WIFEXITED(status) ? WEXITSTATUS(status) : -1, out};
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

const char* kSmallCampaign = R"({
  "campaign": {"runs_on": 1, "runs_off": 2, "power_min_dbm": 0, "power_max_dbm": 5,
               "samples_per_run": 2048},
  "features": {"n": 256, "l": 8}
})";

std::size_t count_lines(const std::string& text) {
  return static_cast<std::size_t>(std::count(text.begin(), text.end(), '\n'));
}

std::string manifest_value(const fs::path& file, const std::string& key) {
  const std::string text = test::read_text(file);
  const auto at = text.find(key + "=");
  if (at == std::string::npos) return "";
  const auto start = at + key.size() + 1;
  return text.substr(start, text.find('\n', start) - start);
}

}  // namespace

TEST_SUITE("cli") {
  TEST_CASE("campaign writes one file per frame plus a manifest") {
    test::TempDir dir;
    test::write_text(dir.path() / "c.json", kSmallCampaign);
    const auto r = run("campaign --config " + q(dir.path() / "c.json") + " --out " + q(dir.path() / "iq"));
    REQUIRE(r.code == 0);
    std::size_t iq = 0;
    for (const auto& e : fs::directory_iterator(dir.path() / "iq")) iq += e.path().extension() == ".iq";
    CHECK(iq == 5 * 4);
    const auto manifest = test::read_text(dir.path() / "iq" / "manifest.csv");
    CHECK(manifest.rfind("file,sensor,label,tx_power_dbm,sample_rate_hz\n", 0) == 0);
    CHECK(count_lines(manifest) == 21);
    CHECK(fs::file_size(dir.path() / "iq" / "s0_f00000.iq") == 2048 * 8);

    // Same seed again: identical bytes.
    const auto again = run("campaign --config " + q(dir.path() / "c.json") + " --out " + q(dir.path() / "iq2"));
    REQUIRE(again.code == 0);
    for (const auto& e : fs::directory_iterator(dir.path() / "iq")) {
      CHECK(test::read_text(e.path()) == test::read_text(dir.path() / "iq2" / e.path().filename()));
    }

    // A different seed changes the samples.
    REQUIRE(run("campaign --seed 99 --config " + q(dir.path() / "c.json") + " --out " + q(dir.path() / "iq3")).code == 0);
    CHECK(test::read_text(dir.path() / "iq" / "s1_f00003.iq") != test::read_text(dir.path() / "iq3" / "s1_f00003.iq"));

    // Existing output is kept without --overwrite.
    const auto clash = run("campaign --config " + q(dir.path() / "c.json") + " --out " + q(dir.path() / "iq"));
    CHECK(clash.code == 1);
    CHECK(clash.output.rfind("error:", 0) == 0);
    CHECK(run("campaign --overwrite --config " + q(dir.path() / "c.json") + " --out " + q(dir.path() / "iq")).code == 0);
  }

  TEST_CASE("bad config key exits 2 and names the key") {
    test::TempDir dir;
    test::write_text(dir.path() / "bad.json", R"({"campaign": {"runs_of": 3}})");
    const auto r = run("campaign --config " + q(dir.path() / "bad.json") + " --out " + q(dir.path() / "x"));
    CHECK(r.code == 2);
    CHECK(r.output.rfind("error:", 0) == 0);
    CHECK(r.output.find("campaign.runs_of") != std::string::npos);
    CHECK(count_lines(r.output) == 1);
    CHECK_FALSE(fs::exists(dir.path() / "x"));
  }

  TEST_CASE("usage errors exit 2") {
    const auto r = run("frobnicate");
    CHECK(r.code == 2);
    CHECK(r.output.rfind("error:", 0) == 0);
    CHECK(run("experiment --mode sideways --dry-run").code == 2);
    CHECK(run("campaign").code == 2);
  }

  TEST_CASE("extract turns frames into feature rows") {
    test::TempDir dir;
    test::write_text(dir.path() / "c.json", R"({
      "campaign": {"runs_on": 1, "runs_off": 2, "power_min_dbm": 0, "power_max_dbm": 0, "samples_per_run": 2048},
      "topology": {"sensors": [[1, 0], [0, 1]]},
      "federation": {"neighbor_counts": [1]}
    })");
    REQUIRE(run("campaign --config " + q(dir.path() / "c.json") + " --out " + q(dir.path() / "iq")).code == 0);
    const auto r = run("extract " + q(dir.path() / "iq") + " --n 256 --l 8 --out " + q(dir.path() / "f.csv"));
    REQUIRE(r.code == 0);
    const auto csv = test::read_text(dir.path() / "f.csv");
    CHECK(csv.rfind("g0,g1,g2,g3,g4,g5,g6,g7,t,mu,ac,label\n", 0) == 0);
    CHECK(count_lines(csv) == 1 + 6);
    CHECK(csv.find(",1\n") != std::string::npos);

    // Bare files need a label.
    const auto bare = dir.path() / "iq" / "s0_f00000.iq";
    CHECK(run("extract " + q(bare) + " --n 256 --l 8").code == 2);
    const auto labeled = run("extract " + q(bare) + " --n 256 --l 8 --label noise");
    CHECK(labeled.code == 0);
    CHECK(count_lines(labeled.output) == 2);

    // N*L beyond the frame: the error names the file.
    const auto too_long = run("extract " + q(bare) + " --n 1024 --l 8 --label noise");
    CHECK(too_long.code == 1);
    CHECK(too_long.output.rfind("error:", 0) == 0);
    CHECK(too_long.output.find("s0_f00000.iq") != std::string::npos);
  }

  TEST_CASE("malformed IQ files fail per file") {
    test::TempDir dir;
    const float three[3] = {1.0f, 2.0f, 3.0f};
    test::write_bytes(dir.path() / "bad.iq", three, sizeof(three));
    const auto r = run("extract " + q(dir.path() / "bad.iq") + " --label noise --n 4 --l 2 --lag 1");
    CHECK(r.code == 1);
    CHECK(r.output.find("bad.iq") != std::string::npos);
    CHECK(r.output.rfind("error:", 0) == 0);
  }

  TEST_CASE("experiment dry run prints the grid") {
    const auto r = run("experiment --dry-run --config " + q(fs::path(FEDSENSE_SOURCE_DIR) / "configs" / "operating_point.json"));
    CHECK(r.code == 0);
    CHECK(r.output.find("cell idw_p=0 neighbors=1") != std::string::npos);
    CHECK(r.output.find("cell idw_p=3 neighbors=3") != std::string::npos);
  }

  TEST_CASE("experiment in both modes") {
    test::TempDir dir;
    const auto cfg = fs::path(FEDSENSE_SOURCE_DIR) / "configs" / "operating_point.json";
    const auto out = dir.path() / "run";
    const auto r = run("experiment --mode both --trace --seed 5 --config " + q(cfg) + " --out " + q(out));
    REQUIRE(r.code == 0);
    for (const char* f : {"reference_report.csv", "reference_cdf.csv", "reference_manifest.txt", "federated_report.csv",
                          "federated_cdf.csv", "federated_manifest.txt", "federated_trace.csv", "config.json"}) {
      CHECK(fs::exists(out / f));
    }
    CHECK(manifest_value(out / "reference_manifest.txt", "seed") == "5");
    CHECK(manifest_value(out / "federated_manifest.txt", "seed") == "5");
    CHECK(manifest_value(out / "reference_manifest.txt", "config_hash") ==
          manifest_value(out / "federated_manifest.txt", "config_hash"));

    const auto ref = experiment::read_report(out, "reference");
    const auto fed = experiment::read_report(out, "federated");
    auto deprived_pd = [](const experiment::ExperimentReport& rep) {
      double sum = 0.0;
      int n = 0;
      for (const auto& row : rep.rows) {
        if (row.role == experiment::Role::Deprived && row.metric == "pd") {
          sum += row.summary.mean;
          ++n;
        }
      }
      return sum / n;
    };
    CHECK(deprived_pd(fed) > deprived_pd(ref));

    // The copied config reproduces the run bit for bit.
    const auto rerun = run("experiment --mode reference --config " + q(out / "config.json") + " --out " + q(dir.path() / "rerun"));
    REQUIRE(rerun.code == 0);
    CHECK(test::read_text(dir.path() / "rerun" / "reference_report.csv") == test::read_text(out / "reference_report.csv"));
  }

  TEST_CASE("model dump and restore") {
    test::TempDir dir;
    const auto a = run("model dump --out " + q(dir.path() / "m.txt"));
    REQUIRE(a.code == 0);
    CHECK(count_lines(test::read_text(dir.path() / "m.txt")) == 6);
    const auto restored = run("model restore " + q(dir.path() / "m.txt"));
    REQUIRE(restored.code == 0);
    CHECK(restored.output == test::read_text(dir.path() / "m.txt"));
    CHECK(run("model dump").output == restored.output);

    const auto text = test::read_text(dir.path() / "m.txt");
    test::write_text(dir.path() / "t.txt", text.substr(0, text.find('\n') + 1));
    const auto truncated = run("model restore " + q(dir.path() / "t.txt"));
    CHECK(truncated.code == 1);
    CHECK(truncated.output.rfind("error:", 0) == 0);

    const auto mismatch = run("model restore " + q(dir.path() / "m.txt") + " --input-dim 5");
    CHECK(mismatch.code == 1);
    CHECK(mismatch.output.find("expected 5") != std::string::npos);
  }
}
