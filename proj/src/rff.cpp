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

#include "rff.hpp"

#include "errors.hpp"
#include "rng.hpp"

#include <cmath>
#include <string>

namespace vcal::rff {

KernelParams KernelParams::isotropic(double sigma, double precision, int input_dim) {
    KernelParams k;
    k.sigma = sigma;
    k.precision_diag = Eigen::VectorXd::Constant(input_dim, precision);
    return k;
}

void KernelParams::validate(int input_dim) const {
    if (!(sigma > 0.0)) {
        throw ValidationError("KernelParams: sigma must be > 0, got " + std::to_string(sigma));
    }
    if (precision_diag.size() != input_dim) {
        throw ValidationError("KernelParams: precision_diag has length " +
                              std::to_string(precision_diag.size()) + ", expected " +
                              std::to_string(input_dim));
    }
    for (Eigen::Index i = 0; i < precision_diag.size(); ++i) {
        if (!(precision_diag[i] > 0.0)) {
            throw ValidationError("KernelParams: precision_diag[" + std::to_string(i) +
                                  "] must be > 0, got " + std::to_string(precision_diag[i]));
        }
    }
}

RandomFeatureLayer::RandomFeatureLayer(Eigen::MatrixXd base_freqs, KernelParams kernel,
                                       std::optional<uint64_t> seed)
    : base_freqs_(std::move(base_freqs)), kernel_(std::move(kernel)), seed_(seed) {}

RandomFeatureLayer RandomFeatureLayer::build(int input_dim, int n_rf, const KernelParams& kernel,
                                             uint64_t seed) {
    if (input_dim < 1) {
        throw ConfigError("build_layer: input_dim must be >= 1, got " + std::to_string(input_dim));
    }
    if (n_rf < 2) {
        throw ConfigError("build_layer: n_rf must be >= 2, got " + std::to_string(n_rf));
    }
    if (n_rf % 2 != 0) {
        throw ConfigError("build_layer: n_rf must be even, got " + std::to_string(n_rf));
    }
    kernel.validate(input_dim);
    util::Rng rng(seed);
    Eigen::MatrixXd base = rng.normal_matrix(n_rf / 2, input_dim);
    return RandomFeatureLayer(std::move(base), kernel, seed);
}

RandomFeatureLayer RandomFeatureLayer::from_base_freqs(const Eigen::MatrixXd& base_freqs,
                                                       const KernelParams& kernel) {
    if (base_freqs.rows() < 1 || base_freqs.cols() < 1) {
        throw ConfigError("from_base_freqs: base frequency matrix must be non-empty");
    }
    kernel.validate(static_cast<int>(base_freqs.cols()));
    return RandomFeatureLayer(base_freqs, kernel, std::nullopt);
}

RandomFeatureLayer RandomFeatureLayer::with_kernel(const KernelParams& kernel) const {
    kernel.validate(input_dim());
    RandomFeatureLayer out(*this);
    out.kernel_ = kernel;
    return out;
}

Eigen::MatrixXd RandomFeatureLayer::effective_freqs(const KernelParams& kernel) const {
    kernel.validate(input_dim());
    return base_freqs_ * kernel.precision_diag.cwiseSqrt().asDiagonal();
}

Eigen::VectorXd RandomFeatureLayer::features(const Eigen::VectorXd& input) const {
    return features(kernel_, input);
}

Eigen::VectorXd RandomFeatureLayer::features(const KernelParams& kernel,
                                             const Eigen::VectorXd& input) const {
    if (input.size() != input_dim()) {
        throw ShapeError("features: input has length " + std::to_string(input.size()) +
                         ", layer expects " + std::to_string(input_dim()));
    }
    kernel.validate(input_dim());
    const Eigen::Index half = base_freqs_.rows();
    // pre = base_freqs * (sqrt(A) .* input); equivalent to effective_freqs * input
    // but avoids forming the scaled matrix.
    Eigen::VectorXd scaled = kernel.precision_diag.cwiseSqrt().cwiseProduct(input);
    Eigen::VectorXd pre = base_freqs_ * scaled;
    const double scale = kernel.sigma * std::sqrt(2.0 / static_cast<double>(2 * half));
    Eigen::VectorXd out(2 * half);
    out.head(half) = scale * pre.array().cos();
    out.tail(half) = scale * pre.array().sin();
    return out;
}

Eigen::VectorXd layer_output(const RandomFeatureLayer& layer, const Eigen::VectorXd& input,
                             const Eigen::MatrixXd& weights) {
    if (weights.rows() != layer.n_rf()) {
        throw ShapeError("layer_output: weights have " + std::to_string(weights.rows()) +
                         " rows, layer emits " + std::to_string(layer.n_rf()) + " features");
    }
    return weights.transpose() * layer.features(input);
}

double empirical_kernel(const RandomFeatureLayer& layer, const Eigen::VectorXd& x,
                        const Eigen::VectorXd& x2) {
    return layer.features(x).dot(layer.features(x2));
}

void DeepEmulatorConfig::validate(int input_dim, int output_dim) const {
    if (layers.empty()) {
        throw ConfigError("DeepEmulatorConfig: needs at least one layer");
    }
    for (size_t i = 0; i < layers.size(); ++i) {
        if (layers[i].hidden_dim < 1) {
            throw ConfigError("DeepEmulatorConfig: layer " + std::to_string(i) +
                              " hidden_dim must be >= 1");
        }
        layers[i].kernel.validate(layer_input_dim(i, input_dim));
    }
    if (layers.back().hidden_dim != output_dim) {
        throw ConfigError("DeepEmulatorConfig: final hidden_dim " +
                          std::to_string(layers.back().hidden_dim) +
                          " must equal output dimension " + std::to_string(output_dim));
    }
}

int DeepEmulatorConfig::layer_input_dim(size_t index, int input_dim) const {
    if (index == 0) {
        return input_dim;
    }
    const int prev = layers[index - 1].hidden_dim;
    return concat_input ? prev + input_dim : prev;
}

Eigen::VectorXd deep_forward(const DeepEmulatorConfig& config,
                             const std::vector<RandomFeatureLayer>& layers,
                             const std::vector<Eigen::MatrixXd>& weights,
                             const Eigen::VectorXd& input) {
    if (layers.size() != config.layers.size() || weights.size() != config.layers.size()) {
        throw ShapeError("deep_forward: expected " + std::to_string(config.layers.size()) +
                         " layers and weight matrices, got " + std::to_string(layers.size()) +
                         " / " + std::to_string(weights.size()));
    }
    Eigen::VectorXd current = input;
    for (size_t i = 0; i < layers.size(); ++i) {
        Eigen::VectorXd layer_in;
        if (i == 0) {
            layer_in = current;
        } else if (config.concat_input) {
            layer_in.resize(current.size() + input.size());
            layer_in << current, input;
        } else {
            layer_in = current;
        }
        if (layer_in.size() != layers[i].input_dim()) {
            throw ShapeError("deep_forward: layer " + std::to_string(i) + " expects input of " +
                             std::to_string(layers[i].input_dim()) + ", chain provides " +
                             std::to_string(layer_in.size()));
        }
        if (weights[i].cols() != config.layers[i].hidden_dim) {
            throw ShapeError("deep_forward: layer " + std::to_string(i) + " weights have " +
                             std::to_string(weights[i].cols()) + " columns, expected " +
                             std::to_string(config.layers[i].hidden_dim));
        }
        current = layer_output(layers[i], layer_in, weights[i]);
    }
    return current;
}

} // namespace vcal::rff
