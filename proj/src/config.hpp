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

#include "koh.hpp"
#include "svi.hpp"
#include "trainer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace vcal::io {

// Parsed calibration run configuration. The file format is a flat sectioned
// key-value text file; unknown sections or keys are rejected outright.
struct RunConfig {
    // [model]
    int d1 = 0; // required
    int d2 = 0; // required
    int d_out = 1;
    int n_rf = 100;
    std::string discrepancy = "additive"; // none | additive | general
    std::vector<int> hidden_dims;          // empty = shallow emulator
    bool concat_input = false;
    uint64_t model_seed = 1;

    // [prior] — defaults follow the standard preset; theta entries are
    // mandatory unless `preset = default` is given.
    bool preset_applied = false;
    std::vector<double> theta_mean;
    std::vector<double> theta_var;
    double sigma_y = 1e-2;
    double sigma_z = 1e-3;
    double sigma_eta = 1.0;
    double a_eta = 20.0;
    double sigma_delta = 0.1;
    double a_delta = 20.0;
    double sigma_layer = 1.0;
    double a_layer = 2.0;

    // [training]
    uint64_t seed = 1;
    double learning_rate = 1e-2;
    int64_t iterations = 2000; // per schedule phase
    int64_t minibatch_field = 256;
    int64_t minibatch_sim = 1024;
    int n_mc = 1;
    int64_t checkpoint_every = 0;
    bool standardize_outputs = false;
    int64_t posterior_samples = 5000;

    // [io]
    std::string dataset_dir; // required
    std::string out_dir;     // required
};

RunConfig parse_run_config(const std::string& path);

// Stable content hash used to pair checkpoints with their configuration.
uint64_t config_hash(const RunConfig& config);

koh::ModelSpec model_spec_from(const RunConfig& config);
svi::Priors priors_from(const RunConfig& config);
std::vector<train::StageSpec> schedule_from(const RunConfig& config,
                                            const koh::CalibrationModel& model);

} // namespace vcal::io
