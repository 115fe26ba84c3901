// Copyright 2026 The bohmflux Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <gtest/gtest.h>

#include "bohmflux/experiment.hpp"

namespace bf = bohmflux;
namespace fs = std::filesystem;
using bf::json;

namespace {

json small_config() {
  return json::parse(R"({
    "name": "small_qp",
    "hamiltonian": {"preset": "quadratic_pair"},
    "grid": {"points": 64, "half_width": 8.0},
    "plan": {"dt": 0.01, "t_final": 0.4, "snapshot_stride": 5},
    "ensemble": {"mode": "monte_carlo", "n": 24, "master_seed": 7, "tracked": [[1.0, 1.0]]},
    "outputs": {"snapshots": true}
  })");
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("bohmflux_test_" + name);
  fs::remove_all(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

int cli(const std::string& args) {
  const std::string cmd = std::string(BOHMFLUX_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST(ExperimentConfig, ParsesBundledConfigs) {
  for (const char* name : {"fig1_quadratic_pair", "fig2_energy_components", "fig3_variance", "fig4_pp",
                           "fig5_steering", "oracle_suites"}) {
    const auto cfg = bf::ExperimentConfig::load(fs::path(BOHMFLUX_CONFIG_DIR) / (std::string(name) + ".json"));
    EXPECT_EQ(cfg.name, name);
  }
  const auto fig5 = bf::ExperimentConfig::load(fs::path(BOHMFLUX_CONFIG_DIR) / "fig5_steering.json");
  EXPECT_EQ(fig5.hamiltonian.preset, bf::HamiltonianPreset::kSpinSteering);
  EXPECT_EQ(fig5.ensemble.n, 10000u);
  EXPECT_EQ(fig5.grid.y.half_width, 16.0);
}

TEST(ExperimentConfig, RejectsInvalidDocuments) {
  auto bad = [](auto edit) {
    json doc = small_config();
    edit(doc);
    return doc;
  };
  EXPECT_THROW(bf::ExperimentConfig::from_json(bad([](json& d) { d["extra"] = 1; })), bf::ConfigError);
  EXPECT_THROW(bf::ExperimentConfig::from_json(bad([](json& d) { d["ensemble"].erase("master_seed"); })),
               bf::ConfigError);
  EXPECT_THROW(bf::ExperimentConfig::from_json(bad([](json& d) { d["hamiltonian"]["v_int"] = "x*y"; })),
               bf::ConfigError);
  EXPECT_THROW(bf::ExperimentConfig::from_json(bad([](json& d) { d["grid"]["points"] = 48; })), bf::ConfigError);
  EXPECT_THROW(bf::ExperimentConfig::from_json(bad([](json& d) { d["plan"]["dt"] = -0.1; })), bf::ConfigError);
  EXPECT_THROW(bf::ExperimentConfig::from_json(bad([](json& d) { d["ensemble"]["mode"] = "grid"; })),
               bf::ConfigError);
  EXPECT_THROW(bf::ExperimentConfig::from_json(bad([](json& d) { d["hamiltonian"]["preset"] = "spin_steering"; })),
               bf::ConfigError);
  EXPECT_THROW(bf::ExperimentConfig::from_json(bad([](json& d) { d["comparison"] = {{"tolerances", {{"x", 0}}}}; })),
               bf::ConfigError);
  EXPECT_THROW(bf::ExperimentConfig::load("/nonexistent/config.json"), bf::ConfigError);
}

TEST(ExperimentConfig, CustomHamiltonian) {
  json doc = small_config();
  doc["hamiltonian"] = {{"preset", "custom"}, {"v_system", "x^2/4"}, {"p_coupling", 0.5}};
  const auto cfg = bf::ExperimentConfig::from_json(doc);
  EXPECT_EQ(cfg.hamiltonian.p_coupling, 0.5);
  EXPECT_TRUE(cfg.hamiltonian.has_momentum_coupling());
  doc["hamiltonian"]["v_int"] = "-x*y/2";
  EXPECT_THROW(bf::ExperimentConfig::from_json(doc), bf::ConfigError);
}

TEST(Runner, OutputDirectoryPrecedence) {
  auto cfg = bf::ExperimentConfig::from_json(small_config());
  ::unsetenv(bf::kOutputDirEnv);
  EXPECT_EQ(bf::resolve_output_dir(cfg, {}), fs::path("bohmflux-output/small_qp"));
  ::setenv(bf::kOutputDirEnv, "/tmp/envroot", 1);
  EXPECT_EQ(bf::resolve_output_dir(cfg, {}), fs::path("/tmp/envroot/small_qp"));
  cfg.outputs.directory = "/tmp/from_config";
  EXPECT_EQ(bf::resolve_output_dir(cfg, {}), fs::path("/tmp/from_config"));
  bf::RunOptions opt;
  opt.output_dir = "/tmp/from_option";
  EXPECT_EQ(bf::resolve_output_dir(cfg, opt), fs::path("/tmp/from_option"));
  ::unsetenv(bf::kOutputDirEnv);
}

TEST(Runner, ManifestDigestsMatchAndRerunsAreIdentical) {
  const auto cfg = bf::ExperimentConfig::from_json(small_config());
  const fs::path a = scratch("run_a"), b = scratch("run_b");
  const auto ma = bf::run_experiment(cfg, {.output_dir = a, .threads = 1});
  const auto mb = bf::run_experiment(cfg, {.output_dir = b, .threads = 1});
  for (const char* f : {"trajectories.csv", "ledgers.csv", "report.csv", "report.json", "observables.csv",
                        "u_of_y.csv", "oracle_comparison.json", "manifest.json", "snapshots/index.json"}) {
    EXPECT_TRUE(fs::exists(a / f)) << f;
  }
  const json& files = ma.document.at("files");
  ASSERT_FALSE(files.empty());
  for (const auto& entry : files) {
    const fs::path rel = entry.at("path").get<std::string>();
    EXPECT_EQ(entry.at("sha256").get<std::string>(), bf::sha256_file(a / rel)) << rel;
    EXPECT_EQ(slurp(a / rel), slurp(b / rel)) << rel;
  }
  EXPECT_EQ(ma.document.at("master_seed"), 7);
  EXPECT_EQ(ma.document.at("config_sha256"), mb.document.at("config_sha256"));
  EXPECT_EQ(ma.document.at("files"), mb.document.at("files"));
  EXPECT_LT(ma.document.at("norm_drift").get<double>(), 1e-9);
  EXPECT_FALSE(ma.document.at("checks").empty());

  const std::string header = slurp(a / "ledgers.csv").substr(0, 80);
  EXPECT_EQ(header.rfind("sample_id,t,u,du_ext,du_int,du_ent,cum_ext,cum_int,cum_ent,closure_residual", 0), 0u);
  const json snaps = json::parse(slurp(a / "snapshots/index.json"));
  const auto first = bf::read_snapshot(a / snaps.at("snapshots")[0].at("file").get<std::string>());
  EXPECT_EQ(first.time(), 0.0);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Runner, SeedOverrideChangesTheSample) {
  const auto cfg = bf::ExperimentConfig::from_json(small_config());
  const fs::path a = scratch("seed_a"), b = scratch("seed_b");
  bf::run_experiment(cfg, {.output_dir = a, .threads = 1});
  const auto mb = bf::run_experiment(cfg, {.output_dir = b, .seed_override = 8, .threads = 1});
  EXPECT_EQ(mb.document.at("master_seed"), 8);
  EXPECT_NE(slurp(a / "trajectories.csv"), slurp(b / "trajectories.csv"));
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Runner, OracleCheckPasses) {
  const auto cfg = bf::ExperimentConfig::load(fs::path(BOHMFLUX_CONFIG_DIR) / "oracle_suites.json");
  bool passed = false;
  const json doc = bf::oracle_check(cfg, &passed);
  EXPECT_TRUE(passed);
  EXPECT_EQ(doc.at("suites").size(), 3u);
}

TEST(Cli, ExitCodes) {
  EXPECT_EQ(cli("--version"), 0);
  EXPECT_EQ(cli("presets"), 0);
  EXPECT_EQ(cli("oracle --config " + std::string(BOHMFLUX_CONFIG_DIR) + "/oracle_suites.json"), 0);
  EXPECT_EQ(cli("run --config /nonexistent.json"), 2);
  EXPECT_EQ(cli("run"), 2);
  EXPECT_EQ(cli("frobnicate"), 2);

  const fs::path dir = scratch("cli");
  fs::create_directories(dir);
  json doc = small_config();
  doc["grid"]["half_width"] = 2.0;  // too small for the initial state
  std::ofstream(dir / "narrow.json") << doc.dump();
  EXPECT_EQ(cli("run --config " + (dir / "narrow.json").string() + " --output-dir " + (dir / "out").string()), 2);

  std::ofstream(dir / "broken.json") << "{ not json";
  EXPECT_EQ(cli("run --config " + (dir / "broken.json").string()), 2);

  doc = small_config();
  doc["ensemble"]["tracked"] = {{7.9, 0.0}};  // starts inside the boundary band
  doc["ensemble"]["n"] = 1;
  std::ofstream(dir / "edge.json") << doc.dump();
  const int edge = cli("run --config " + (dir / "edge.json").string() + " --output-dir " + (dir / "out2").string());
  EXPECT_EQ(edge, 3);
  fs::remove_all(dir);
}
