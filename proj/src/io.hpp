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

#include <Eigen/Dense>

#include <cstdint>
#include <string>
#include <vector>

namespace vcal::io {

// Numeric CSV with a mandatory header row; strict parsing, '.' decimal,
// row-major values.
struct CsvTable {
    std::vector<std::string> header;
    Eigen::MatrixXd values;
};

CsvTable read_csv(const std::string& path);

// Writes atomically (temp file + rename) with round-trip float formatting.
void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& values);

void write_text_atomic(const std::string& path, const std::string& content);
void write_bytes_atomic(const std::string& path, const std::string& bytes);

// field.csv: x_1..x_d1, y_1..y_dout; sim.csv: x_1..x_d1, t_1..t_d2, z_1..z_dout.
koh::CalibrationDataset load_dataset(const std::string& dir);
void save_dataset(const std::string& dir, const koh::CalibrationDataset& data);

// Generated-problem provenance: which benchmark and seed produced a dataset,
// and the true calibration value, so evaluation can rebuild the simulator.
struct TruthInfo {
    std::string problem;
    uint64_t seed = 0;
    Eigen::VectorXd theta_true;
};

void write_truth(const std::string& path, const TruthInfo& truth);
TruthInfo read_truth(const std::string& path);

std::string format_double(double value); // shortest round-trip decimal form

} // namespace vcal::io
