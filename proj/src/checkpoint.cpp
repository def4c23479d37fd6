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

#include "checkpoint.hpp"

#include "errors.hpp"
#include "io.hpp"

#include <cstring>
#include <fstream>

namespace vcal::io {

namespace {

constexpr char kMagic[8] = {'V', 'C', 'A', 'L', 'C', 'K', 'P', 'T'};

void put_u32(std::string& out, uint32_t value) {
    for (int b = 0; b < 4; ++b) {
        out.push_back(static_cast<char>((value >> (8 * b)) & 0xff));
    }
}

void put_u64(std::string& out, uint64_t value) {
    for (int b = 0; b < 8; ++b) {
        out.push_back(static_cast<char>((value >> (8 * b)) & 0xff));
    }
}

void put_double(std::string& out, double value) {
    uint64_t bits = 0;
    std::memcpy(&bits, &value, sizeof(bits));
    put_u64(out, bits);
}

void put_vector(std::string& out, const Eigen::VectorXd& v) {
    put_u64(out, static_cast<uint64_t>(v.size()));
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        put_double(out, v[i]);
    }
}

class Reader {
public:
    Reader(const std::string& bytes, const std::string& origin)
        : bytes_(bytes), origin_(origin) {}

    uint32_t u32() {
        need(4);
        uint32_t value = 0;
        for (int b = 0; b < 4; ++b) {
            value |= static_cast<uint32_t>(static_cast<unsigned char>(bytes_[pos_ + b]))
                     << (8 * b);
        }
        pos_ += 4;
        return value;
    }

    uint64_t u64() {
        need(8);
        uint64_t value = 0;
        for (int b = 0; b < 8; ++b) {
            value |= static_cast<uint64_t>(static_cast<unsigned char>(bytes_[pos_ + b]))
                     << (8 * b);
        }
        pos_ += 8;
        return value;
    }

    double f64() {
        const uint64_t bits = u64();
        double value = 0.0;
        std::memcpy(&value, &bits, sizeof(value));
        return value;
    }

    Eigen::VectorXd vec() {
        const uint64_t count = u64();
        if (count > (bytes_.size() - pos_) / 8) {
            fail("truncated vector");
        }
        Eigen::VectorXd out(static_cast<Eigen::Index>(count));
        for (uint64_t i = 0; i < count; ++i) {
            out[static_cast<Eigen::Index>(i)] = f64();
        }
        return out;
    }

    void expect_magic() {
        need(sizeof(kMagic));
        if (std::memcmp(bytes_.data() + pos_, kMagic, sizeof(kMagic)) != 0) {
            fail("not a checkpoint file");
        }
        pos_ += sizeof(kMagic);
    }

    void expect_end() {
        if (pos_ != bytes_.size()) {
            fail("trailing bytes");
        }
    }

    [[noreturn]] void fail(const char* what) const {
        throw IoError(origin_ + ": " + what);
    }

private:
    void need(size_t count) {
        if (bytes_.size() - pos_ < count) {
            fail("truncated checkpoint");
        }
    }

    const std::string& bytes_;
    std::string origin_;
    size_t pos_ = 0;
};

} // namespace

std::string encode_checkpoint(const Checkpoint& checkpoint) {
    std::string out;
    out.append(kMagic, sizeof(kMagic));
    put_u32(out, Checkpoint::kVersion);
    put_u64(out, checkpoint.config_hash);
    put_u64(out, checkpoint.train_seed);
    put_u64(out, static_cast<uint64_t>(checkpoint.iteration));
    put_u32(out, static_cast<uint32_t>(checkpoint.completed_stages));
    put_u64(out, static_cast<uint64_t>(checkpoint.iter_in_stage));
    put_u64(out, static_cast<uint64_t>(checkpoint.adam_step));
    put_u32(out, checkpoint.finished ? 1 : 0);
    put_vector(out, checkpoint.params);
    put_vector(out, checkpoint.m);
    put_vector(out, checkpoint.v);
    put_u32(out, static_cast<uint32_t>(checkpoint.layer_seeds.size()));
    for (uint64_t seed : checkpoint.layer_seeds) {
        put_u64(out, seed);
    }
    return out;
}

Checkpoint decode_checkpoint(const std::string& bytes, const std::string& origin) {
    Reader reader(bytes, origin);
    reader.expect_magic();
    const uint32_t version = reader.u32();
    if (version != Checkpoint::kVersion) {
        throw IoError(origin + ": checkpoint format version " + std::to_string(version) +
                      " is not supported (this build reads version " +
                      std::to_string(Checkpoint::kVersion) +
                      "); re-create the checkpoint with a matching build");
    }
    Checkpoint checkpoint;
    checkpoint.config_hash = reader.u64();
    checkpoint.train_seed = reader.u64();
    checkpoint.iteration = static_cast<int64_t>(reader.u64());
    checkpoint.completed_stages = static_cast<int32_t>(reader.u32());
    checkpoint.iter_in_stage = static_cast<int64_t>(reader.u64());
    checkpoint.adam_step = static_cast<int64_t>(reader.u64());
    checkpoint.finished = reader.u32() != 0;
    checkpoint.params = reader.vec();
    checkpoint.m = reader.vec();
    checkpoint.v = reader.vec();
    const uint32_t n_seeds = reader.u32();
    checkpoint.layer_seeds.resize(n_seeds);
    for (uint32_t i = 0; i < n_seeds; ++i) {
        checkpoint.layer_seeds[i] = reader.u64();
    }
    reader.expect_end();
    return checkpoint;
}

void save_checkpoint(const std::string& path, const Checkpoint& checkpoint) {
    write_bytes_atomic(path, encode_checkpoint(checkpoint));
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw IoError("cannot open checkpoint " + path);
    }
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return decode_checkpoint(bytes, path);
}

Checkpoint checkpoint_from_state(const train::TrainState& state, uint64_t config_hash,
                                 uint64_t train_seed, const std::vector<uint64_t>& layer_seeds,
                                 bool finished) {
    Checkpoint checkpoint;
    checkpoint.config_hash = config_hash;
    checkpoint.train_seed = train_seed;
    checkpoint.iteration = state.iteration;
    checkpoint.completed_stages = state.completed_stages;
    checkpoint.iter_in_stage = state.iter_in_stage;
    checkpoint.adam_step = state.adam_step;
    checkpoint.finished = finished;
    checkpoint.params = state.params.values;
    checkpoint.m = state.m;
    checkpoint.v = state.v;
    checkpoint.layer_seeds = layer_seeds;
    return checkpoint;
}

} // namespace vcal::io
