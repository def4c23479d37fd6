// Licensed under the Apache License, Version 2.0 (the "License"); you
// may not use this file except in compliance with the License.  You
// may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
// implied.  See the License for the specific language governing
// permissions and limitations under the License.

#pragma once

#include "checkpoint.hpp"
#include "config.hpp"
#include "koh.hpp"
#include "svi.hpp"
#include "trainer.hpp"

#include <cstdint>
#include <optional>
#include <string>

namespace vcal::run {

// Writes field.csv, sim.csv and truth.csv for a named benchmark problem.
// Non-positive n / n_sim select the problem's defaults.
void generate(const std::string& problem, int64_t n, int64_t n_sim, uint64_t seed,
              const std::string& out_dir);

// A configured calibration: dataset, model, schedule and (possibly resumed)
// training state.
struct CalibrateRun {
    io::RunConfig config;
    koh::CalibrationDataset data;
    koh::CalibrationModel model;
    svi::Priors priors;
    std::vector<train::StageSpec> schedule;
    std::optional<train::TrainState> resume_state;
    bool finished = false;
    int64_t total_iterations = 0;
};

CalibrateRun create_run(const std::string& config_path);

// Loads a checkpoint and validates it against the run's configuration.
void resume_run(CalibrateRun& run, const std::string& checkpoint_path);

// Trains (to completion or to stop_after_iterations), writing the trace,
// checkpoint and posterior samples into config.out_dir. Returns true when the
// whole schedule has finished. Divergence still flushes the trace before the
// error propagates.
bool execute_run(CalibrateRun& run, int64_t stop_after_iterations = 0);

// Posterior metrics: mse under the sampled posterior, per-dimension posterior
// mean/std, absolute error to the truth, and optionally the total-variation
// distance to the analytic grid posterior (illustrative problem only).
void evaluate(const std::string& posterior_csv, const std::string& dataset_dir,
              const std::string& truth_csv, bool with_oracle, const std::string& out_csv);

} // namespace vcal::run
