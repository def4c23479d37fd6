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

#include "rff.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace vcal::koh {

// Field observations (X, Y) and simulator runs (Xstar, T, Z).
struct CalibrationDataset {
    Eigen::MatrixXd X;     // n x d1
    Eigen::MatrixXd Y;     // n x d_out
    Eigen::MatrixXd Xstar; // N x d1
    Eigen::MatrixXd T;     // N x d2
    Eigen::MatrixXd Z;     // N x d_out

    int64_t n_field() const { return X.rows(); }
    int64_t n_sim() const { return Xstar.rows(); }
    int d1() const { return static_cast<int>(X.cols()); }
    int d2() const { return static_cast<int>(T.cols()); }
    int d_out() const { return static_cast<int>(Y.cols()); }

    void validate() const;
};

struct NoiseParams {
    double sigma_y = 1e-2;
    double sigma_z = 1e-3;

    void validate() const;
};

enum class DiscrepancyKind {
    None,     // field response is the emulator alone
    Additive, // emulator + GP on x
    General,  // warped emulator: identity skip on eta + GP on (eta, x)
};

const char* to_string(DiscrepancyKind kind);

// Emulator (possibly deep) + discrepancy structure + likelihood noise.
struct CalibrationModel {
    int d1 = 1;
    int d2 = 1;
    int d_out = 1;
    rff::DeepEmulatorConfig emulator;
    std::vector<rff::RandomFeatureLayer> emulator_layers;
    DiscrepancyKind discrepancy = DiscrepancyKind::None;
    std::optional<rff::RandomFeatureLayer> disc_layer;
    NoiseParams noise;

    int emulator_input_dim() const { return d1 + d2; }
    int disc_input_dim() const;
    size_t n_weight_matrices() const;

    void validate() const;
};

// Structural description from which a model is built. Layer frequency seeds
// derive deterministically from `seed` and the layer index.
struct ModelSpec {
    int d1 = 1;
    int d2 = 1;
    int d_out = 1;
    int n_rf = 100;
    DiscrepancyKind discrepancy = DiscrepancyKind::Additive;
    std::vector<int> hidden_dims;                 // empty = shallow emulator
    bool concat_input = false;
    rff::KernelParams emulator_kernel;            // first-layer kernel over (x, theta)
    std::optional<rff::KernelParams> layer_kernel; // hidden layers (deep only)
    rff::KernelParams disc_kernel;                // over x (Additive) or (eta, x) (General)
    NoiseParams noise;
    uint64_t seed = 1;
};

CalibrationModel build_model(const ModelSpec& spec);

// Per-layer frequency seed derivation shared by model building and
// checkpoint regeneration.
uint64_t layer_seed(uint64_t model_seed, size_t layer_index);
uint64_t disc_layer_seed(uint64_t model_seed);

using WeightList = std::vector<Eigen::MatrixXd>;

// Emulator output at field or simulator inputs: deep_forward on [x; theta].
Eigen::VectorXd emulator_eval(const CalibrationModel& model, const WeightList& w_eta,
                              const Eigen::VectorXd& x, const Eigen::VectorXd& theta);

// Field-process response: emulator plus the configured discrepancy. w_disc is
// the additive or warp weight matrix; ignored when discrepancy is None.
Eigen::VectorXd field_eval(const CalibrationModel& model, const WeightList& w_eta,
                           const Eigen::MatrixXd& w_disc, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& theta);

// Sum over dimensions of the Gaussian log-density of y given mean f.
double log_lik_field(const Eigen::VectorXd& y, const Eigen::VectorXd& f, double sigma_y);
double log_lik_sim(const Eigen::VectorXd& z, const Eigen::VectorXd& eta_star, double sigma_z);

// Analytic Jacobian of the warp with respect to the emulator output, at
// (eta_value, x). Only valid in General mode.
Eigen::MatrixXd warp_derivative(const CalibrationModel& model, const Eigen::MatrixXd& w_g,
                                const Eigen::VectorXd& x, const Eigen::VectorXd& eta_value);

// Point-estimated hyperparameters: likelihood noise plus per-layer kernels.
struct Hyperparameters {
    double sigma_y = 1e-2;
    double sigma_z = 1e-3;
    std::vector<rff::KernelParams> emulator_kernels;
    std::optional<rff::KernelParams> disc_kernel;
};

Hyperparameters hypers_of(const CalibrationModel& model);
void apply_hypers(CalibrationModel& model, const Hyperparameters& hypers);

// Output standardization: shifts and scales Y and Z in place using the
// simulator block's per-column mean and standard deviation.
struct OutputStandardization {
    Eigen::VectorXd mean;
    Eigen::VectorXd std;
};

OutputStandardization standardize_outputs(CalibrationDataset& data);

} // namespace vcal::koh
