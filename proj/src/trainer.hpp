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

#include "errors.hpp"
#include "grad.hpp"
#include "koh.hpp"
#include "rng.hpp"
#include "svi.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace vcal::train {

// One optimization stage: which parameter blocks move, at what rate, for how
// many iterations, with what minibatch/Monte Carlo settings.
struct StageSpec {
    std::string name;
    std::vector<std::string> trainable_blocks;
    double learning_rate = 1e-2;
    int64_t iterations = 2000;
    int64_t minibatch_field = 256; // clamped to the dataset size at run time
    int64_t minibatch_sim = 1024;  // likewise
    int n_mc = 1;
};

struct TraceRecord {
    int64_t iteration = 0; // global, 1-based after the first step
    std::string stage;
    double elbo = 0.0;
    double kl = 0.0;
    int64_t wall_ms = 0;
};

struct TrainState {
    grad::ParamVector params;
    Eigen::VectorXd m; // first moment, aligned with params
    Eigen::VectorXd v; // second moment
    int64_t adam_step = 0; // within the current stage
    int64_t iteration = 0; // global iteration counter
    int completed_stages = 0;
    int64_t iter_in_stage = 0;
    std::vector<TraceRecord> trace;
};

// Raised after ten consecutive non-finite objective evaluations; carries the
// trace collected so far.
class DivergenceError : public Error {
public:
    DivergenceError(const std::string& message, std::vector<TraceRecord> trace_so_far)
        : Error(message), trace(std::move(trace_so_far)) {}

    std::vector<TraceRecord> trace;
};

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
};

// Bias-corrected adaptive-moment ascent step on the masked coordinates.
void adam_ascend(Eigen::VectorXd& params, Eigen::VectorXd& m, Eigen::VectorXd& v,
                 const Eigen::VectorXd& grad, const std::vector<uint8_t>& mask, int64_t step,
                 double learning_rate, const AdamParams& adam = {});

struct ScheduleOptions {
    double learning_rate = 1e-2; // phase-two rate is this / 10
    int64_t iterations = 2000;   // per phase
    int64_t minibatch_field = 256;
    int64_t minibatch_sim = 1024;
    int n_mc = 1;
};

// Two-stage, two-phase schedule: first the blocks driving the simulator
// response (emulator weight factors, then also sigma_z and emulator kernels at
// a tenth of the rate), then everything that remains for the field data and
// theta jointly.
std::vector<StageSpec> default_schedule(const koh::CalibrationModel& model,
                                        const ScheduleOptions& options = {});

// Variational factors copied from the priors (theta from its prior, weights
// standard normal); hyperparameters from the model's configured values.
grad::ParamVector init_from_priors(const koh::CalibrationModel& model, const svi::Priors& priors);

// Objective abstraction: the ELBO in production, anything differentiable in
// tests. The Rng is this iteration's private stream.
using Objective = std::function<grad::GradResult(const grad::ParamVector&, util::Rng&)>;

Objective elbo_objective(const koh::CalibrationModel& model, const koh::CalibrationDataset& data,
                         const svi::Priors& priors, const StageSpec& spec);

struct RunHooks {
    int64_t checkpoint_every = 0; // 0 disables periodic checkpoints
    std::function<void(const TrainState&)> on_checkpoint;
};

// Runs one stage (or the remainder of it when resuming mid-stage). Masked-out
// coordinates are never touched. Deterministic given (seed, state). A nonzero
// stop_after_global pauses once the global iteration counter reaches it.
void run_stage(TrainState& state, const StageSpec& spec, const Objective& objective,
               uint64_t seed, const RunHooks* hooks = nullptr, int64_t stop_after_global = 0);

// ELBO-objective convenience wrapper.
void run_stage(TrainState& state, const StageSpec& spec, const koh::CalibrationModel& model,
               const koh::CalibrationDataset& data, const svi::Priors& priors, uint64_t seed,
               const RunHooks* hooks = nullptr);

struct CalibrationResult {
    svi::VariationalPosterior posterior;
    koh::Hyperparameters hypers;
    std::vector<TraceRecord> trace;
    TrainState state;
};

// init_from_priors then run_stage over the schedule. Pass resume_from to
// continue from a checkpointed state; already-finished stages are skipped.
CalibrationResult calibrate(const koh::CalibrationModel& model,
                            const koh::CalibrationDataset& data,
                            const std::vector<StageSpec>& schedule, uint64_t seed,
                            const svi::Priors& priors, const RunHooks* hooks = nullptr,
                            const TrainState* resume_from = nullptr,
                            int64_t stop_after_iterations = 0);

} // namespace vcal::train
