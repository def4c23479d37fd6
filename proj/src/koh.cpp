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

#include "koh.hpp"

#include "errors.hpp"
#include "rng.hpp"

#include <cmath>
#include <numbers>
#include <string>

namespace vcal::koh {

void CalibrationDataset::validate() const {
    if (X.rows() < 1) {
        throw ValidationError("dataset: needs at least one field observation");
    }
    if (Xstar.rows() < 1) {
        throw ValidationError("dataset: needs at least one simulator run");
    }
    if (Y.rows() != X.rows()) {
        throw ValidationError("dataset: X has " + std::to_string(X.rows()) + " rows but Y has " +
                              std::to_string(Y.rows()));
    }
    if (T.rows() != Xstar.rows() || Z.rows() != Xstar.rows()) {
        throw ValidationError("dataset: Xstar/T/Z row counts differ (" +
                              std::to_string(Xstar.rows()) + "/" + std::to_string(T.rows()) + "/" +
                              std::to_string(Z.rows()) + ")");
    }
    if (Xstar.cols() != X.cols()) {
        throw ValidationError("dataset: field inputs have " + std::to_string(X.cols()) +
                              " columns but simulator inputs have " + std::to_string(Xstar.cols()));
    }
    if (Z.cols() != Y.cols()) {
        throw ValidationError("dataset: Y has " + std::to_string(Y.cols()) +
                              " output columns but Z has " + std::to_string(Z.cols()));
    }
    if (Y.cols() < 1) {
        throw ValidationError("dataset: output dimension must be >= 1");
    }
    if (T.cols() < 1) {
        throw ValidationError("dataset: calibration-input dimension must be >= 1");
    }
}

void NoiseParams::validate() const {
    if (!(sigma_y > 0.0)) {
        throw ValidationError("NoiseParams: sigma_y must be > 0, got " + std::to_string(sigma_y));
    }
    if (!(sigma_z > 0.0)) {
        throw ValidationError("NoiseParams: sigma_z must be > 0, got " + std::to_string(sigma_z));
    }
}

const char* to_string(DiscrepancyKind kind) {
    switch (kind) {
    case DiscrepancyKind::None:
        return "none";
    case DiscrepancyKind::Additive:
        return "additive";
    case DiscrepancyKind::General:
        return "general";
    }
    return "?";
}

int CalibrationModel::disc_input_dim() const {
    switch (discrepancy) {
    case DiscrepancyKind::None:
        return 0;
    case DiscrepancyKind::Additive:
        return d1;
    case DiscrepancyKind::General:
        return d_out + d1;
    }
    return 0;
}

size_t CalibrationModel::n_weight_matrices() const {
    return emulator_layers.size() + (discrepancy == DiscrepancyKind::None ? 0 : 1);
}

void CalibrationModel::validate() const {
    if (d1 < 1 || d2 < 1 || d_out < 1) {
        throw ConfigError("model: d1, d2 and d_out must all be >= 1");
    }
    emulator.validate(emulator_input_dim(), d_out);
    if (emulator_layers.size() != emulator.layers.size()) {
        throw ConfigError("model: emulator has " + std::to_string(emulator_layers.size()) +
                          " layers but the config describes " +
                          std::to_string(emulator.layers.size()));
    }
    for (size_t i = 0; i < emulator_layers.size(); ++i) {
        if (emulator_layers[i].input_dim() != emulator.layer_input_dim(i, emulator_input_dim())) {
            throw ConfigError("model: emulator layer " + std::to_string(i) +
                              " input width does not match the stack");
        }
    }
    if (discrepancy == DiscrepancyKind::None) {
        if (disc_layer.has_value()) {
            throw ConfigError("model: discrepancy layer present but mode is none");
        }
    } else {
        if (!disc_layer.has_value()) {
            throw ConfigError("model: discrepancy mode set but no layer present");
        }
        if (disc_layer->input_dim() != disc_input_dim()) {
            throw ConfigError("model: discrepancy layer input width " +
                              std::to_string(disc_layer->input_dim()) + ", expected " +
                              std::to_string(disc_input_dim()));
        }
    }
    noise.validate();
}

uint64_t layer_seed(uint64_t model_seed, size_t layer_index) {
    return util::mix_key(model_seed, {0xe7a0ULL, layer_index});
}

uint64_t disc_layer_seed(uint64_t model_seed) {
    return util::mix_key(model_seed, {0xd15cULL});
}

CalibrationModel build_model(const ModelSpec& spec) {
    CalibrationModel model;
    model.d1 = spec.d1;
    model.d2 = spec.d2;
    model.d_out = spec.d_out;
    model.noise = spec.noise;
    model.discrepancy = spec.discrepancy;

    rff::DeepEmulatorConfig config;
    config.concat_input = spec.concat_input;
    const int in_dim = spec.d1 + spec.d2;
    config.layers.push_back({spec.hidden_dims.empty() ? spec.d_out : spec.hidden_dims.front(),
                             spec.emulator_kernel});
    for (size_t i = 1; i < spec.hidden_dims.size(); ++i) {
        rff::KernelParams k = spec.layer_kernel.value_or(rff::KernelParams::isotropic(1.0, 2.0, 1));
        k.precision_diag =
            Eigen::VectorXd::Constant(config.layer_input_dim(i, in_dim), k.precision_diag[0]);
        config.layers.push_back({spec.hidden_dims[i], k});
    }
    if (!spec.hidden_dims.empty()) {
        // The listed dims are hidden widths; the stack still has to end in d_out.
        rff::KernelParams k = spec.layer_kernel.value_or(rff::KernelParams::isotropic(1.0, 2.0, 1));
        k.precision_diag = Eigen::VectorXd::Constant(
            config.layer_input_dim(config.layers.size(), in_dim), k.precision_diag[0]);
        config.layers.push_back({spec.d_out, k});
    }
    model.emulator = config;

    for (size_t i = 0; i < config.layers.size(); ++i) {
        model.emulator_layers.push_back(
            rff::RandomFeatureLayer::build(config.layer_input_dim(i, in_dim), spec.n_rf,
                                           config.layers[i].kernel, layer_seed(spec.seed, i)));
    }
    if (spec.discrepancy != DiscrepancyKind::None) {
        model.disc_layer = rff::RandomFeatureLayer::build(
            model.disc_input_dim(), spec.n_rf, spec.disc_kernel, disc_layer_seed(spec.seed));
    }
    model.validate();
    return model;
}

Eigen::VectorXd emulator_eval(const CalibrationModel& model, const WeightList& w_eta,
                              const Eigen::VectorXd& x, const Eigen::VectorXd& theta) {
    if (x.size() != model.d1 || theta.size() != model.d2) {
        throw ShapeError("emulator_eval: input sizes (" + std::to_string(x.size()) + ", " +
                         std::to_string(theta.size()) + ") do not match model (d1=" +
                         std::to_string(model.d1) + ", d2=" + std::to_string(model.d2) + ")");
    }
    Eigen::VectorXd joint(model.d1 + model.d2);
    joint << x, theta;
    return rff::deep_forward(model.emulator, model.emulator_layers, w_eta, joint);
}

Eigen::VectorXd field_eval(const CalibrationModel& model, const WeightList& w_eta,
                           const Eigen::MatrixXd& w_disc, const Eigen::VectorXd& x,
                           const Eigen::VectorXd& theta) {
    Eigen::VectorXd eta = emulator_eval(model, w_eta, x, theta);
    switch (model.discrepancy) {
    case DiscrepancyKind::None:
        return eta;
    case DiscrepancyKind::Additive:
        return eta + rff::layer_output(*model.disc_layer, x, w_disc);
    case DiscrepancyKind::General: {
        Eigen::VectorXd warp_in(eta.size() + x.size());
        warp_in << eta, x;
        return eta + rff::layer_output(*model.disc_layer, warp_in, w_disc);
    }
    }
    return eta;
}

namespace {
double gaussian_loglik(const Eigen::VectorXd& observed, const Eigen::VectorXd& mean, double sigma,
                       const char* what) {
    if (observed.size() != mean.size()) {
        throw ShapeError(std::string(what) + ": observation has length " +
                         std::to_string(observed.size()) + ", mean has " +
                         std::to_string(mean.size()));
    }
    if (observed.size() == 0) {
        throw ValidationError(std::string(what) + ": empty observation vector");
    }
    if (!(sigma > 0.0)) {
        throw ValidationError(std::string(what) + ": sigma must be > 0, got " +
                              std::to_string(sigma));
    }
    constexpr double half_log_two_pi = 0.9189385332046727;
    const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
    double total = 0.0;
    for (Eigen::Index k = 0; k < observed.size(); ++k) {
        const double r = observed[k] - mean[k];
        total += -half_log_two_pi - std::log(sigma) - r * r * inv_two_var;
    }
    return total;
}
} // namespace

double log_lik_field(const Eigen::VectorXd& y, const Eigen::VectorXd& f, double sigma_y) {
    return gaussian_loglik(y, f, sigma_y, "log_lik_field");
}

double log_lik_sim(const Eigen::VectorXd& z, const Eigen::VectorXd& eta_star, double sigma_z) {
    return gaussian_loglik(z, eta_star, sigma_z, "log_lik_sim");
}

Eigen::MatrixXd warp_derivative(const CalibrationModel& model, const Eigen::MatrixXd& w_g,
                                const Eigen::VectorXd& x, const Eigen::VectorXd& eta_value) {
    if (model.discrepancy != DiscrepancyKind::General) {
        throw ValidationError("warp_derivative: model discrepancy mode is " +
                              std::string(to_string(model.discrepancy)) + ", expected general");
    }
    if (x.size() != model.d1 || eta_value.size() != model.d_out) {
        throw ShapeError("warp_derivative: argument sizes do not match model");
    }
    const auto& layer = *model.disc_layer;
    if (w_g.rows() != layer.n_rf() || w_g.cols() != model.d_out) {
        throw ShapeError("warp_derivative: weights must be n_rf x d_out");
    }
    Eigen::VectorXd warp_in(eta_value.size() + x.size());
    warp_in << eta_value, x;

    const Eigen::MatrixXd omega = layer.effective_freqs();
    const Eigen::Index half = omega.rows();
    Eigen::VectorXd pre = omega * warp_in;
    const double scale = layer.kernel().sigma * std::sqrt(2.0 / static_cast<double>(2 * half));

    // d f_a / d eta_b = delta_ab
    //   + sum_k omega(k, b) * scale * (-sin(pre_k) W(k, a) + cos(pre_k) W(half+k, a))
    Eigen::VectorXd dcos = -scale * pre.array().sin();
    Eigen::VectorXd dsin = scale * pre.array().cos();
    Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(model.d_out, model.d_out);
    for (int a = 0; a < model.d_out; ++a) {
        Eigen::VectorXd per_freq =
            dcos.cwiseProduct(w_g.col(a).head(half)) + dsin.cwiseProduct(w_g.col(a).tail(half));
        for (int b = 0; b < model.d_out; ++b) {
            jac(a, b) += omega.col(b).dot(per_freq);
        }
    }
    return jac;
}

Hyperparameters hypers_of(const CalibrationModel& model) {
    Hyperparameters h;
    h.sigma_y = model.noise.sigma_y;
    h.sigma_z = model.noise.sigma_z;
    for (const auto& layer : model.emulator.layers) {
        h.emulator_kernels.push_back(layer.kernel);
    }
    if (model.disc_layer.has_value()) {
        h.disc_kernel = model.disc_layer->kernel();
    }
    return h;
}

void apply_hypers(CalibrationModel& model, const Hyperparameters& hypers) {
    if (hypers.emulator_kernels.size() != model.emulator.layers.size()) {
        throw ShapeError("apply_hypers: kernel count does not match emulator depth");
    }
    model.noise.sigma_y = hypers.sigma_y;
    model.noise.sigma_z = hypers.sigma_z;
    model.noise.validate();
    for (size_t i = 0; i < model.emulator_layers.size(); ++i) {
        model.emulator.layers[i].kernel = hypers.emulator_kernels[i];
        model.emulator_layers[i] = model.emulator_layers[i].with_kernel(hypers.emulator_kernels[i]);
    }
    if (model.disc_layer.has_value()) {
        if (!hypers.disc_kernel.has_value()) {
            throw ShapeError("apply_hypers: model has a discrepancy layer but no kernel given");
        }
        model.disc_layer = model.disc_layer->with_kernel(*hypers.disc_kernel);
    }
}

OutputStandardization standardize_outputs(CalibrationDataset& data) {
    data.validate();
    OutputStandardization st;
    st.mean = data.Z.colwise().mean();
    Eigen::MatrixXd centered = data.Z.rowwise() - st.mean.transpose();
    st.std = (centered.array().square().colwise().sum() /
              static_cast<double>(std::max<int64_t>(data.n_sim() - 1, 1)))
                 .sqrt();
    for (Eigen::Index c = 0; c < st.std.size(); ++c) {
        if (!(st.std[c] > 0.0)) {
            throw ValidationError("standardize_outputs: simulator output column " +
                                  std::to_string(c) + " is constant");
        }
    }
    data.Z = (data.Z.rowwise() - st.mean.transpose()).array().rowwise() /
             st.std.transpose().array();
    data.Y = (data.Y.rowwise() - st.mean.transpose()).array().rowwise() /
             st.std.transpose().array();
    return st;
}

} // namespace vcal::koh
