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

#include "trainer.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace vcal::io {

// Binary training snapshot. Floats are stored bit-exactly; random-feature
// layers are recorded as seeds and regenerated, never as matrices.
struct Checkpoint {
    static constexpr uint32_t kVersion = 1;

    uint64_t config_hash = 0;
    uint64_t train_seed = 0;
    int64_t iteration = 0;
    int32_t completed_stages = 0;
    int64_t iter_in_stage = 0;
    int64_t adam_step = 0;
    bool finished = false;
    Eigen::VectorXd params;
    Eigen::VectorXd m;
    Eigen::VectorXd v;
    std::vector<uint64_t> layer_seeds; // emulator layers, then discrepancy layer
};

std::string encode_checkpoint(const Checkpoint& checkpoint);
Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin);

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint);
Checkpoint load_checkpoint(const std::string& path);

// Snapshot of a training state (trace excluded; it lives in the trace CSV).
Checkpoint checkpoint_from_state(const train::TrainState& state, uint64_t config_hash,
                                 uint64_t train_seed, const std::vector<uint64_t>& layer_seeds,
                                 bool finished);

} // namespace vcal::io
