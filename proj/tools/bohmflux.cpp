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

// bohmflux command line: run experiments from JSON configs, run the oracle
// self-consistency suites, list presets.

#include <cstdint>
#include <cstdio>
#include <iostream>
#include <optional>
#include <string>

#include <CLI/CLI11.hpp>

#include "bohmflux/error.hpp"
#include "bohmflux/experiment.hpp"

namespace {

enum ExitCode : int {
  kPass = 0,
  kConfigError = 2,
  kNumericalAbort = 3,
  kAcceptanceFailure = 4,
};

int run_oracle(const std::string& config) {
  const auto cfg = bohmflux::ExperimentConfig::load(config);
  bool passed = false;
  const auto report = bohmflux::oracle_check(cfg, &passed);
  std::cout << report.dump(2) << '\n';
  return passed ? kPass : kAcceptanceFailure;
}

int run_experiment(const std::string& config, const std::optional<std::string>& output_dir,
                   const std::optional<std::uint64_t>& seed, std::size_t threads, bool oracle_only) {
  if (oracle_only) return run_oracle(config);
  const auto cfg = bohmflux::ExperimentConfig::load(config);
  bohmflux::RunOptions opt;
  if (output_dir) opt.output_dir = *output_dir;
  opt.seed_override = seed;
  opt.threads = threads;
  const auto manifest = bohmflux::run_experiment(cfg, opt);
  for (const auto& c : manifest.document.at("checks")) {
    std::printf("%-4s %-40s %s\n", c.at("passed").get<bool>() ? "PASS" : "FAIL",
                c.at("name").get<std::string>().c_str(), c.at("value").dump().c_str());
  }
  std::printf("output: %s\n", manifest.directory.string().c_str());
  return manifest.passed ? kPass : kAcceptanceFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"bohmflux: conditional energy flows along Bohmian trajectories"};
  app.set_version_flag("--version", std::string(BOHMFLUX_VERSION));
  app.require_subcommand(1);

  std::string config;
  std::optional<std::string> output_dir;
  std::optional<std::uint64_t> seed;
  std::size_t threads = 0;
  bool oracle_only = false;

  auto* run = app.add_subcommand("run", "Run an experiment config");
  run->add_option("--config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--output-dir", output_dir, "Output directory");
  run->add_option("--seed-override", seed, "Replace the config's master seed");
  run->add_option("--threads", threads, "Worker threads (0 = hardware concurrency)");
  run->add_flag("--oracle-only", oracle_only, "Only run the oracle self-consistency suites");

  std::string oracle_config;
  auto* oracle = app.add_subcommand("oracle", "Run the oracle self-consistency suites");
  oracle->add_option("--config", oracle_config, "Experiment config (JSON)")
      ->required()
      ->check(CLI::ExistingFile);

  auto* presets = app.add_subcommand("presets", "List the Hamiltonian presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kConfigError;
  }

  try {
    if (*presets) {
      std::cout << bohmflux::list_presets();
      return kPass;
    }
    if (*oracle) return run_oracle(oracle_config);
    return run_experiment(config, output_dir, seed, threads, oracle_only);
  } catch (const bohmflux::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kConfigError;
  } catch (const bohmflux::NumericalAbort& e) {
    std::cerr << "numerical abort: " << e.what() << '\n';
    return kNumericalAbort;
  } catch (const bohmflux::DomainError& e) {
    std::cerr << "numerical abort (domain): " << e.what() << '\n';
    return kNumericalAbort;
  } catch (const bohmflux::DegenerateSliceError& e) {
    std::cerr << "numerical abort (degenerate slice): " << e.what() << '\n';
    return kNumericalAbort;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
