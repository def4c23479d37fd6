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

#include "rng.hpp"

#include "errors.hpp"

#include <cmath>
#include <cstdlib>
#include <numbers>
#include <thread>

namespace vcal::util {

uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

uint64_t mix_key(uint64_t seed, std::initializer_list<uint64_t> tags) {
    uint64_t s = seed;
    uint64_t key = splitmix64(s);
    for (uint64_t tag : tags) {
        s = key ^ (tag + 0x9e3779b97f4a7c15ULL);
        key = splitmix64(s);
    }
    return key;
}

Rng::Rng(uint64_t seed) {
    // Expand the seed into xoshiro256++ state via splitmix64.
    uint64_t s = seed;
    for (auto& word : state_) {
        word = splitmix64(s);
    }
}

Rng Rng::keyed(uint64_t seed, std::initializer_list<uint64_t> tags) {
    return Rng(mix_key(seed, tags));
}

namespace {
inline uint64_t rotl(uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
}
} // namespace

uint64_t Rng::next_u64() {
    // xoshiro256++
    const uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
    const uint64_t t = state_[1] << 17;
    state_[2] ^= state_[0];
    state_[3] ^= state_[1];
    state_[1] ^= state_[2];
    state_[0] ^= state_[3];
    state_[2] ^= t;
    state_[3] = rotl(state_[3], 45);
    return result;
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform_pos() {
    return (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
}

double Rng::normal() {
    if (has_cached_normal_) {
        has_cached_normal_ = false;
        return cached_normal_;
    }
    const double u1 = uniform_pos();
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    cached_normal_ = radius * std::sin(angle);
    has_cached_normal_ = true;
    return radius * std::cos(angle);
}

Eigen::VectorXd Rng::normal_vector(Eigen::Index n) {
    Eigen::VectorXd out(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        out[i] = normal();
    }
    return out;
}

Eigen::MatrixXd Rng::normal_matrix(Eigen::Index rows, Eigen::Index cols) {
    Eigen::MatrixXd out(rows, cols);
    // Row-major fill order so a matrix draw is independent of storage order.
    for (Eigen::Index r = 0; r < rows; ++r) {
        for (Eigen::Index c = 0; c < cols; ++c) {
            out(r, c) = normal();
        }
    }
    return out;
}

std::vector<int64_t> Rng::sample_without_replacement(int64_t n, int64_t k) {
    if (k < 1 || k > n) {
        throw ValidationError("sample_without_replacement: need 1 <= k <= n, got k=" +
                              std::to_string(k) + ", n=" + std::to_string(n));
    }
    std::vector<int64_t> pool(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        pool[static_cast<size_t>(i)] = i;
    }
    std::vector<int64_t> out(static_cast<size_t>(k));
    for (int64_t i = 0; i < k; ++i) {
        // Uniform index in [i, n) without modulo bias worth worrying about at
        // these sizes; 53-bit uniform scaled to the range.
        const auto span = static_cast<double>(n - i);
        auto j = i + static_cast<int64_t>(uniform() * span);
        if (j >= n) {
            j = n - 1;
        }
        std::swap(pool[static_cast<size_t>(i)], pool[static_cast<size_t>(j)]);
        out[static_cast<size_t>(i)] = pool[static_cast<size_t>(i)];
    }
    return out;
}

int thread_cap() {
    if (const char* env = std::getenv("VCAL_THREADS")) {
        const int v = std::atoi(env);
        if (v >= 1) {
            return v;
        }
    }
    const unsigned hw = std::thread::hardware_concurrency();
    return hw > 0 ? static_cast<int>(hw) : 1;
}

void parallel_for(int64_t n, const std::function<void(int64_t)>& fn) {
    const int threads = std::min<int64_t>(thread_cap(), n);
    if (threads <= 1) {
        for (int64_t i = 0; i < n; ++i) {
            fn(i);
        }
        return;
    }
    std::vector<std::thread> pool;
    pool.reserve(static_cast<size_t>(threads));
    for (int t = 0; t < threads; ++t) {
        pool.emplace_back([&, t] {
            for (int64_t i = t; i < n; i += threads) {
                fn(i);
            }
        });
    }
    for (auto& th : pool) {
        th.join();
    }
}

} // namespace vcal::util
