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

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <vector>

namespace vcal::util {

// All randomness in the library flows through this generator so that results
// are reproducible bit-for-bit across runs and platforms. Streams are derived
// from (seed, tags...) counters rather than from mutable global state, which
// is what makes checkpoint-resume exact: an iteration's draws depend only on
// its coordinates, not on how many draws happened before it.
uint64_t splitmix64(uint64_t& state);

// Mixes a seed with a tag sequence into a single stream key.
uint64_t mix_key(uint64_t seed, std::initializer_list<uint64_t> tags);

class Rng {
public:
    explicit Rng(uint64_t seed);

    // Stream keyed by (seed, tags...). Distinct tag sequences give
    // statistically independent streams.
    static Rng keyed(uint64_t seed, std::initializer_list<uint64_t> tags);

    uint64_t next_u64();
    double uniform();     // [0, 1)
    double uniform_pos(); // (0, 1]
    double normal();      // standard normal (Box-Muller, pair-cached)

    Eigen::VectorXd normal_vector(Eigen::Index n);
    Eigen::MatrixXd normal_matrix(Eigen::Index rows, Eigen::Index cols);

    // k distinct indices drawn uniformly from [0, n), in draw order.
    std::vector<int64_t> sample_without_replacement(int64_t n, int64_t k);

private:
    std::array<uint64_t, 4> state_{};
    double cached_normal_ = 0.0;
    bool has_cached_normal_ = false;
};

// Thread cap from VCAL_THREADS (>= 1); defaults to the hardware concurrency.
int thread_cap();

// Runs fn(i) for i in [0, n). Each index writes only its own outputs, so the
// result is identical for any thread count.
void parallel_for(int64_t n, const std::function<void(int64_t)>& fn);

} // namespace vcal::util
