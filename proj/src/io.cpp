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

#include "io.hpp"

#include "errors.hpp"

#include <cerrno>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace vcal::io {

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string field;
    std::stringstream stream(line);
    while (std::getline(stream, field, ',')) {
        out.push_back(field);
    }
    if (!line.empty() && line.back() == ',') {
        out.emplace_back();
    }
    return out;
}

double parse_double(const std::string& text, const std::string& path, size_t row, size_t col) {
    errno = 0;
    char* end = nullptr;
    const double value = std::strtod(text.c_str(), &end);
    if (end == text.c_str() || *end != '\0' || errno == ERANGE) {
        throw IoError(path + ": row " + std::to_string(row) + ", column " + std::to_string(col + 1) +
                      ": cannot parse '" + text + "' as a number");
    }
    return value;
}

// Column names col_prefix1..col_prefixK starting at `start`; returns K.
size_t count_prefixed(const std::vector<std::string>& header, size_t start,
                      const std::string& prefix) {
    size_t count = 0;
    while (start + count < header.size()) {
        const std::string expected = prefix + std::to_string(count + 1);
        if (header[start + count] != expected) {
            break;
        }
        ++count;
    }
    return count;
}

} // namespace

std::string format_double(double value) {
    char buffer[64];
    // Shortest representation that round-trips a double exactly.
    for (int precision = 15; precision <= 17; ++precision) {
        std::snprintf(buffer, sizeof(buffer), "%.*g", precision, value);
        if (std::strtod(buffer, nullptr) == value) {
            return buffer;
        }
    }
    std::snprintf(buffer, sizeof(buffer), "%.17g", value);
    return buffer;
}

CsvTable read_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    std::string line;
    if (!std::getline(in, line)) {
        throw IoError(path + ": empty file, header row required");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    CsvTable table;
    table.header = split_line(line);
    if (table.header.empty()) {
        throw IoError(path + ": empty header row");
    }
    const size_t cols = table.header.size();

    std::vector<double> data;
    size_t rows = 0;
    while (std::getline(in, line)) {
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        const auto fields = split_line(line);
        ++rows;
        if (fields.size() != cols) {
            throw IoError(path + ": row " + std::to_string(rows) + " has " +
                          std::to_string(fields.size()) + " columns, expected " +
                          std::to_string(cols));
        }
        for (size_t c = 0; c < cols; ++c) {
            data.push_back(parse_double(fields[c], path, rows, c));
        }
    }
    table.values.resize(rows, cols);
    for (size_t r = 0; r < rows; ++r) {
        for (size_t c = 0; c < cols; ++c) {
            table.values(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
                data[r * cols + c];
        }
    }
    return table;
}

void write_bytes_atomic(const std::string& path, const std::string& bytes) {
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw IoError("cannot open " + tmp + " for writing");
        }
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) {
            throw IoError("write failed for " + tmp);
        }
    }
    std::error_code ec;
    std::filesystem::rename(tmp, path, ec);
    if (ec) {
        throw IoError("cannot rename " + tmp + " to " + path + ": " + ec.message());
    }
}

void write_text_atomic(const std::string& path, const std::string& content) {
    write_bytes_atomic(path, content);
}

void write_csv(const std::string& path, const std::vector<std::string>& header,
               const Eigen::MatrixXd& values) {
    if (header.size() != static_cast<size_t>(values.cols())) {
        throw ShapeError("write_csv: header has " + std::to_string(header.size()) +
                         " names for " + std::to_string(values.cols()) + " columns");
    }
    std::string out;
    for (size_t c = 0; c < header.size(); ++c) {
        if (c > 0) {
            out += ',';
        }
        out += header[c];
    }
    out += '\n';
    for (Eigen::Index r = 0; r < values.rows(); ++r) {
        for (Eigen::Index c = 0; c < values.cols(); ++c) {
            if (c > 0) {
                out += ',';
            }
            out += format_double(values(r, c));
        }
        out += '\n';
    }
    write_text_atomic(path, out);
}

koh::CalibrationDataset load_dataset(const std::string& dir) {
    const std::string field_path = dir + "/field.csv";
    const std::string sim_path = dir + "/sim.csv";
    CsvTable field = read_csv(field_path);
    CsvTable sim = read_csv(sim_path);

    const size_t d1 = count_prefixed(field.header, 0, "x_");
    if (d1 == 0) {
        throw IoError(field_path + ": header must start with x_1");
    }
    const size_t d_out = count_prefixed(field.header, d1, "y_");
    if (d1 + d_out != field.header.size() || d_out == 0) {
        throw IoError(field_path + ": expected columns x_1..x_" + std::to_string(d1) +
                      ", y_1..y_k; got " + std::to_string(field.header.size()) + " columns");
    }
    const size_t sim_d1 = count_prefixed(sim.header, 0, "x_");
    const size_t d2 = count_prefixed(sim.header, sim_d1, "t_");
    const size_t sim_d_out = count_prefixed(sim.header, sim_d1 + d2, "z_");
    if (sim_d1 == 0 || d2 == 0 || sim_d_out == 0 ||
        sim_d1 + d2 + sim_d_out != sim.header.size()) {
        throw IoError(sim_path + ": expected columns x_1.., t_1.., z_1..; got " +
                      std::to_string(sim.header.size()) + " columns");
    }
    if (sim_d1 != d1) {
        throw IoError(sim_path + ": has " + std::to_string(sim_d1) + " x-columns but " +
                      field_path + " has " + std::to_string(d1));
    }
    if (sim_d_out != d_out) {
        throw IoError(sim_path + ": has " + std::to_string(sim_d_out) + " z-columns but " +
                      field_path + " has " + std::to_string(d_out) + " y-columns");
    }

    koh::CalibrationDataset data;
    data.X = field.values.leftCols(static_cast<Eigen::Index>(d1));
    data.Y = field.values.rightCols(static_cast<Eigen::Index>(d_out));
    data.Xstar = sim.values.leftCols(static_cast<Eigen::Index>(d1));
    data.T = sim.values.middleCols(static_cast<Eigen::Index>(d1), static_cast<Eigen::Index>(d2));
    data.Z = sim.values.rightCols(static_cast<Eigen::Index>(d_out));
    data.validate();
    return data;
}

void save_dataset(const std::string& dir, const koh::CalibrationDataset& data) {
    data.validate();
    std::filesystem::create_directories(dir);

    std::vector<std::string> field_header;
    for (int c = 1; c <= data.d1(); ++c) {
        field_header.push_back("x_" + std::to_string(c));
    }
    for (int c = 1; c <= data.d_out(); ++c) {
        field_header.push_back("y_" + std::to_string(c));
    }
    Eigen::MatrixXd field(data.n_field(), data.d1() + data.d_out());
    field << data.X, data.Y;
    write_csv(dir + "/field.csv", field_header, field);

    std::vector<std::string> sim_header;
    for (int c = 1; c <= data.d1(); ++c) {
        sim_header.push_back("x_" + std::to_string(c));
    }
    for (int c = 1; c <= data.d2(); ++c) {
        sim_header.push_back("t_" + std::to_string(c));
    }
    for (int c = 1; c <= data.d_out(); ++c) {
        sim_header.push_back("z_" + std::to_string(c));
    }
    Eigen::MatrixXd sim(data.n_sim(), data.d1() + data.d2() + data.d_out());
    sim << data.Xstar, data.T, data.Z;
    write_csv(dir + "/sim.csv", sim_header, sim);
}

void write_truth(const std::string& path, const TruthInfo& truth) {
    std::string out = "problem,seed";
    for (Eigen::Index d = 0; d < truth.theta_true.size(); ++d) {
        out += ",theta_" + std::to_string(d + 1);
    }
    out += '\n';
    out += truth.problem + ',' + std::to_string(truth.seed);
    for (Eigen::Index d = 0; d < truth.theta_true.size(); ++d) {
        out += ',' + format_double(truth.theta_true[d]);
    }
    out += '\n';
    write_text_atomic(path, out);
}

TruthInfo read_truth(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open " + path);
    }
    std::string header_line, data_line;
    if (!std::getline(in, header_line) || !std::getline(in, data_line)) {
        throw IoError(path + ": expected a header row and one data row");
    }
    if (!header_line.empty() && header_line.back() == '\r') {
        header_line.pop_back();
    }
    if (!data_line.empty() && data_line.back() == '\r') {
        data_line.pop_back();
    }
    const auto header = split_line(header_line);
    const auto fields = split_line(data_line);
    if (header.size() < 3 || header[0] != "problem" || header[1] != "seed") {
        throw IoError(path + ": header must be problem,seed,theta_1,...");
    }
    if (fields.size() != header.size()) {
        throw IoError(path + ": row has " + std::to_string(fields.size()) +
                      " fields, header has " + std::to_string(header.size()));
    }
    TruthInfo truth;
    truth.problem = fields[0];
    try {
        truth.seed = std::stoull(fields[1]);
    } catch (const std::exception&) {
        throw IoError(path + ": cannot parse seed '" + fields[1] + "'");
    }
    truth.theta_true.resize(static_cast<Eigen::Index>(header.size() - 2));
    for (size_t d = 2; d < header.size(); ++d) {
        truth.theta_true[static_cast<Eigen::Index>(d - 2)] = parse_double(fields[d], path, 1, d);
    }
    return truth;
}

} // namespace vcal::io
