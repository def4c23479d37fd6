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

#include <cstdint>
#include <optional>
#include <vector>

namespace vcal::rff {

// Hyperparameters of one Gaussian-covariance GP approximation: marginal
// standard deviation and the diagonal of the precision matrix (one entry per
// input dimension).
struct KernelParams {
    double sigma = 1.0;
    Eigen::VectorXd precision_diag;

    static KernelParams isotropic(double sigma, double precision, int input_dim);

    // Throws ValidationError unless sigma > 0, every precision entry > 0 and
    // the diagonal length equals input_dim.
    void validate(int input_dim) const;
};

// Random-feature approximation of a zero-mean GP layer. Base frequencies are
// standard-normal draws fixed at construction; the kernel acts through a
// deterministic row-wise rescaling by sqrt(precision_diag), so hyperparameter
// changes never resample.
class RandomFeatureLayer {
public:
    // n_rf must be even: the layer draws n_rf/2 frequency rows and emits one
    // cosine and one sine feature per row, scaled by sigma * sqrt(2/n_rf).
    static RandomFeatureLayer build(int input_dim, int n_rf, const KernelParams& kernel,
                                    uint64_t seed);

    // Layer with explicit base frequencies (rows = n_rf/2). Such a layer has
    // no seed and cannot be checkpointed.
    static RandomFeatureLayer from_base_freqs(const Eigen::MatrixXd& base_freqs,
                                              const KernelParams& kernel);

    int input_dim() const { return static_cast<int>(base_freqs_.cols()); }
    int n_rf() const { return static_cast<int>(2 * base_freqs_.rows()); }
    const Eigen::MatrixXd& base_freqs() const { return base_freqs_; }
    const KernelParams& kernel() const { return kernel_; }
    const std::optional<uint64_t>& seed() const { return seed_; }

    // Copy with different kernel hyperparameters; base frequencies and seed
    // are retained.
    RandomFeatureLayer with_kernel(const KernelParams& kernel) const;

    // Effective frequency matrix base_freqs * diag(sqrt(precision_diag)). Each
    // row is then distributed N(0, A).
    Eigen::MatrixXd effective_freqs() const { return effective_freqs(kernel_); }
    Eigen::MatrixXd effective_freqs(const KernelParams& kernel) const;

    // Feature map: [cos block | sin block] of the effective frequencies times
    // the input, scaled so that the squared norm is exactly sigma^2.
    Eigen::VectorXd features(const Eigen::VectorXd& input) const;
    Eigen::VectorXd features(const KernelParams& kernel, const Eigen::VectorXd& input) const;

private:
    RandomFeatureLayer(Eigen::MatrixXd base_freqs, KernelParams kernel,
                       std::optional<uint64_t> seed);

    Eigen::MatrixXd base_freqs_; // (n_rf/2) x input_dim, immutable
    KernelParams kernel_;
    std::optional<uint64_t> seed_;
};

// features(input)^T * weights; weights must have n_rf rows.
Eigen::VectorXd layer_output(const RandomFeatureLayer& layer, const Eigen::VectorXd& input,
                             const Eigen::MatrixXd& weights);

// Monte Carlo kernel estimate features(x)^T features(x2).
double empirical_kernel(const RandomFeatureLayer& layer, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& x2);

// Stack of GP layers; hidden_dim of the final layer is the output dimension.
// With concat_input, every layer past the first sees [previous output; input].
struct DeepEmulatorConfig {
    struct Layer {
        int hidden_dim = 1;
        KernelParams kernel;
    };
    std::vector<Layer> layers;
    bool concat_input = false;

    void validate(int input_dim, int output_dim) const;

    // Input dimension of layer index, given the stack's original input width.
    int layer_input_dim(size_t index, int input_dim) const;
};

// Sequential composition of layer_output through the stack.
Eigen::VectorXd deep_forward(const DeepEmulatorConfig& config,
                             const std::vector<RandomFeatureLayer>& layers,
                             const std::vector<Eigen::MatrixXd>& weights,
                             const Eigen::VectorXd& input);

} // namespace vcal::rff
