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

// Streaming propagate -> integrate -> condition pipeline. Only the two
// snapshots bracketing the current trajectory step are kept in memory.

#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "bohmflux/conditional.hpp"
#include "bohmflux/ensemble_stats.hpp"
#include "bohmflux/error.hpp"
#include "bohmflux/hamiltonian.hpp"
#include "bohmflux/propagator.hpp"
#include "bohmflux/spectral_field.hpp"
#include "bohmflux/trajectories.hpp"

namespace bohmflux {

struct EnsembleInput {
  std::string label;
  std::vector<InitialSample> samples;
  std::vector<double> weights;
  bool monte_carlo = false;
  bool ledgers = true;
  bool equivariance = false;
};

struct EnsembleRun {
  std::string label;
  bool monte_carlo = false;
  TrajectorySet trajectories;
  // [trajectory][time]; NaN where the slice was degenerate or the trajectory excluded.
  std::vector<std::vector<double>> u;
  std::vector<std::vector<FlowTerms>> flows;
  std::vector<EnergyLedger> ledgers;  // empty ledger for incomplete series
  std::vector<EquivarianceResult> equivariance;
  std::size_t degenerate_slices = 0;
};

struct PipelineResult {
  std::vector<double> times;
  EvolutionStats evolution;
  std::vector<SnapshotObservables> observables;
  std::vector<UOfYTable> u_of_y;
  std::vector<EnsembleRun> ensembles;
};

struct PipelineOptions {
  std::size_t threads = 0;
  bool keep_u_of_y = true;
  std::function<void(const JointWaveFunction&, const SpectralField&)> on_snapshot;
};

/// Rejects drive windows that end strictly inside a trajectory step.
inline void validate_drive_alignment(const HamiltonianSpec& h, const PropagationPlan& plan) {
  if (!h.spin_drive || h.spin_drive->duration >= plan.t_final) return;
  const double r = h.spin_drive->duration / plan.snapshot_interval();
  if (std::abs(r - std::round(r)) > 1e-9 * std::max(1.0, r)) {
    throw ConfigError("spin drive duration must be a multiple of the snapshot interval");
  }
}

inline PipelineResult run_pipeline(const JointWaveFunction& psi0, const HamiltonianSpec& h,
                                   const PropagationPlan& plan, std::vector<EnsembleInput> inputs,
                                   const PipelineOptions& options = {}) {
  plan.validate();
  h.validate();
  validate_drive_alignment(h, plan);
  PipelineResult result;
  const std::size_t T = plan.snapshot_count();

  std::vector<TrajectoryIntegrator> integrators;
  for (auto& in : inputs) {
    EnsembleRun run;
    run.label = in.label;
    run.monte_carlo = in.monte_carlo;
    const std::size_t n = in.samples.size();
    if (in.ledgers) {
      run.u.assign(n, std::vector<double>(T, std::numeric_limits<double>::quiet_NaN()));
      run.flows.assign(n, std::vector<FlowTerms>(T));
    }
    result.ensembles.push_back(std::move(run));
    integrators.emplace_back(std::move(in.samples), std::move(in.weights), h, psi0.grid(),
                             plan.snapshot_interval(), options.threads);
  }

  std::optional<SpectralField> prev;
  std::size_t k = 0;
  result.evolution = evolve(psi0, h, plan, [&](const JointWaveFunction& psi) {
    SpectralField field(psi);
    result.times.push_back(psi.time());
    UOfYTable table = u_of_y_table(field, h);
    result.observables.push_back(snapshot_observables(psi, field, h, &table));

    for (std::size_t e = 0; e < inputs.size(); ++e) {
      auto& integ = integrators[e];
      if (!prev) integ.begin(field);
      else integ.advance(*prev, field);
      const TrajectorySet& set = integ.result();
      EnsembleRun& run = result.ensembles[e];
      if (inputs[e].ledgers) {
        std::vector<char> degenerate(set.size(), 0);
        parallel_for(set.size(), options.threads, [&](std::size_t i) {
          if (set.excluded[i]) return;
          const double Y = set.positions[i][k][1], vy = set.velocities[i][k][1];
          try {
            const SliceMoments m = slice_moments(field, Y, vy, h);
            run.u[i][k] = m.u();
            run.flows[i][k] = m.flows();
          } catch (const DegenerateSliceError&) {
            degenerate[i] = 1;
          }
        });
        for (char d : degenerate) run.degenerate_slices += static_cast<std::size_t>(d);
      }
      if (inputs[e].equivariance) {
        run.equivariance.push_back(equivariance_statistic(set, k, field, k > 0));
      }
    }
    if (options.on_snapshot) options.on_snapshot(psi, field);
    if (options.keep_u_of_y) result.u_of_y.push_back(std::move(table));
    prev.emplace(std::move(field));
    ++k;
  });

  for (std::size_t e = 0; e < inputs.size(); ++e) {
    EnsembleRun& run = result.ensembles[e];
    run.trajectories = integrators[e].take();
    if (!inputs[e].ledgers) continue;
    run.ledgers.resize(run.trajectories.size());
    for (std::size_t i = 0; i < run.trajectories.size(); ++i) {
      bool complete = !run.trajectories.excluded[i];
      for (double x : run.u[i]) complete = complete && std::isfinite(x);
      if (!complete) continue;
      run.ledgers[i] = accumulate_ledger(result.times, run.u[i], run.flows[i],
                                         static_cast<std::int64_t>(i));
    }
  }
  return result;
}

/// Ensemble report of one pipeline ensemble with the snapshot identities attached.
inline EnsembleReport ensemble_report(const PipelineResult& r, std::size_t ensemble) {
  const EnsembleRun& run = r.ensembles.at(ensemble);
  EnsembleReport rep = aggregate(run.ledgers, run.trajectories.weights, run.monte_carlo);
  attach_observables(rep, r.observables);
  return rep;
}

}  // namespace bohmflux
