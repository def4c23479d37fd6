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

#include "grad.hpp"

#include "errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace vcal::grad {

namespace {

std::string eta_factor_name(size_t layer) {
    return "q_w_eta" + std::to_string(layer);
}

std::string disc_factor_name(const koh::CalibrationModel& model) {
    return model.discrepancy == koh::DiscrepancyKind::General ? "q_w_g" : "q_w_delta";
}

std::string disc_hyper_name(const koh::CalibrationModel& model) {
    return model.discrepancy == koh::DiscrepancyKind::General ? "g" : "delta";
}

} // namespace

std::shared_ptr<const ParamLayout> ParamLayout::for_model(const koh::CalibrationModel& model) {
    model.validate();
    auto layout = std::make_shared<ParamLayout>();
    Eigen::Index offset = 0;
    auto add = [&](const std::string& name, Eigen::Index len) {
        layout->blocks.push_back({name, offset, len});
        offset += len;
    };

    add("q_theta.mean", model.d2);
    add("q_theta.log_std", model.d2);
    for (size_t l = 0; l < model.emulator_layers.size(); ++l) {
        const Eigen::Index len = static_cast<Eigen::Index>(model.emulator_layers[l].n_rf()) *
                                 model.emulator.layers[l].hidden_dim;
        add(eta_factor_name(l) + ".mean", len);
        add(eta_factor_name(l) + ".log_std", len);
    }
    if (model.discrepancy != koh::DiscrepancyKind::None) {
        const Eigen::Index len =
            static_cast<Eigen::Index>(model.disc_layer->n_rf()) * model.d_out;
        add(disc_factor_name(model) + ".mean", len);
        add(disc_factor_name(model) + ".log_std", len);
    }
    add("log_sigma_y", 1);
    add("log_sigma_z", 1);
    for (size_t l = 0; l < model.emulator_layers.size(); ++l) {
        add("eta" + std::to_string(l) + ".log_sigma", 1);
        add("eta" + std::to_string(l) + ".log_precision", model.emulator_layers[l].input_dim());
    }
    if (model.discrepancy != koh::DiscrepancyKind::None) {
        add(disc_hyper_name(model) + ".log_sigma", 1);
        add(disc_hyper_name(model) + ".log_precision", model.disc_layer->input_dim());
    }
    layout->total = offset;
    return layout;
}

const ParamLayout::Block& ParamLayout::block(const std::string& name) const {
    for (const auto& b : blocks) {
        if (b.name == name) {
            return b;
        }
    }
    throw ConfigError("parameter layout has no block named '" + name + "'");
}

bool ParamLayout::has(const std::string& name) const {
    return std::any_of(blocks.begin(), blocks.end(),
                       [&](const Block& b) { return b.name == name; });
}

std::vector<std::string> ParamLayout::names() const {
    std::vector<std::string> out;
    out.reserve(blocks.size());
    for (const auto& b : blocks) {
        out.push_back(b.name);
    }
    return out;
}

const ParamLayout::Block& ParamLayout::block_at(Eigen::Index coordinate) const {
    for (const auto& b : blocks) {
        if (coordinate >= b.offset && coordinate < b.offset + b.len) {
            return b;
        }
    }
    throw ConfigError("parameter coordinate " + std::to_string(coordinate) + " out of layout");
}

Eigen::VectorBlock<Eigen::VectorXd> ParamVector::segment(const std::string& block_name) {
    const auto& b = layout->block(block_name);
    return values.segment(b.offset, b.len);
}

Eigen::VectorXd ParamVector::segment(const std::string& block_name) const {
    const auto& b = layout->block(block_name);
    return values.segment(b.offset, b.len);
}

ParamVector pack(const koh::CalibrationModel& model, const svi::VariationalPosterior& posterior) {
    posterior.validate_for(model);
    ParamVector pv;
    pv.layout = ParamLayout::for_model(model);
    pv.values.setZero(pv.layout->total);

    pv.segment("q_theta.mean") = posterior.q_theta.mean;
    pv.segment("q_theta.log_std") = posterior.q_theta.log_std;
    for (size_t l = 0; l < model.emulator_layers.size(); ++l) {
        pv.segment(eta_factor_name(l) + ".mean") = posterior.q_weights[l].mean;
        pv.segment(eta_factor_name(l) + ".log_std") = posterior.q_weights[l].log_std;
    }
    if (model.discrepancy != koh::DiscrepancyKind::None) {
        const auto& factor = posterior.q_weights.back();
        pv.segment(disc_factor_name(model) + ".mean") = factor.mean;
        pv.segment(disc_factor_name(model) + ".log_std") = factor.log_std;
    }
    pv.segment("log_sigma_y")[0] = std::log(model.noise.sigma_y);
    pv.segment("log_sigma_z")[0] = std::log(model.noise.sigma_z);
    for (size_t l = 0; l < model.emulator_layers.size(); ++l) {
        const auto& kernel = model.emulator.layers[l].kernel;
        pv.segment("eta" + std::to_string(l) + ".log_sigma")[0] = std::log(kernel.sigma);
        pv.segment("eta" + std::to_string(l) + ".log_precision") =
            kernel.precision_diag.array().log();
    }
    if (model.discrepancy != koh::DiscrepancyKind::None) {
        const auto& kernel = model.disc_layer->kernel();
        pv.segment(disc_hyper_name(model) + ".log_sigma")[0] = std::log(kernel.sigma);
        pv.segment(disc_hyper_name(model) + ".log_precision") =
            kernel.precision_diag.array().log();
    }
    return pv;
}

void unpack(const ParamVector& params, const koh::CalibrationModel& model,
            svi::VariationalPosterior* posterior, koh::Hyperparameters* hypers) {
    if (!params.layout) {
        throw ConfigError("unpack: parameter vector has no layout");
    }
    if (params.values.size() != params.layout->total) {
        throw ShapeError("unpack: value length does not match layout");
    }
    if (posterior != nullptr) {
        posterior->q_theta.mean = params.segment("q_theta.mean");
        posterior->q_theta.log_std = params.segment("q_theta.log_std");
        posterior->q_weights.clear();
        for (size_t l = 0; l < model.emulator_layers.size(); ++l) {
            svi::GaussianFactor f;
            f.mean = params.segment(eta_factor_name(l) + ".mean");
            f.log_std = params.segment(eta_factor_name(l) + ".log_std");
            posterior->q_weights.push_back(std::move(f));
        }
        if (model.discrepancy != koh::DiscrepancyKind::None) {
            svi::GaussianFactor f;
            f.mean = params.segment(disc_factor_name(model) + ".mean");
            f.log_std = params.segment(disc_factor_name(model) + ".log_std");
            posterior->q_weights.push_back(std::move(f));
        }
    }
    if (hypers != nullptr) {
        hypers->sigma_y = std::exp(params.segment("log_sigma_y")[0]);
        hypers->sigma_z = std::exp(params.segment("log_sigma_z")[0]);
        hypers->emulator_kernels.clear();
        for (size_t l = 0; l < model.emulator_layers.size(); ++l) {
            rff::KernelParams k;
            k.sigma = std::exp(params.segment("eta" + std::to_string(l) + ".log_sigma")[0]);
            k.precision_diag =
                params.segment("eta" + std::to_string(l) + ".log_precision").array().exp();
            hypers->emulator_kernels.push_back(std::move(k));
        }
        hypers->disc_kernel.reset();
        if (model.discrepancy != koh::DiscrepancyKind::None) {
            rff::KernelParams k;
            k.sigma = std::exp(params.segment(disc_hyper_name(model) + ".log_sigma")[0]);
            k.precision_diag =
                params.segment(disc_hyper_name(model) + ".log_precision").array().exp();
            hypers->disc_kernel = std::move(k);
        }
    }
}

namespace detail {

namespace {

constexpr double kHalfLogTwoPi = 0.9189385332046727;

struct LayerContext {
    Eigen::MatrixXd omega; // effective frequencies, (n_rf/2) x in_dim
    double scale = 1.0;    // sigma * sqrt(2 / n_rf)
};

LayerContext make_context(const rff::RandomFeatureLayer& layer, const rff::KernelParams& kernel) {
    LayerContext ctx;
    ctx.omega = layer.effective_freqs(kernel);
    ctx.scale = kernel.sigma * std::sqrt(2.0 / static_cast<double>(layer.n_rf()));
    return ctx;
}

// Feature map through one precomputed layer context.
Eigen::VectorXd rff_forward(const LayerContext& ctx, const Eigen::VectorXd& input) {
    const Eigen::Index half = ctx.omega.rows();
    Eigen::VectorXd pre = ctx.omega * input;
    Eigen::VectorXd phi(2 * half);
    phi.head(half) = ctx.scale * pre.array().cos();
    phi.tail(half) = ctx.scale * pre.array().sin();
    return phi;
}

// Accumulated gradients for one RFF layer (hyperparameters are shared across
// Monte Carlo samples, so these live outside the per-sample loop).
struct LayerGradAcc {
    double dlog_sigma = 0.0;
    Eigen::VectorXd dlog_precision;

    void init(Eigen::Index in_dim) {
        dlog_sigma = 0.0;
        dlog_precision.setZero(in_dim);
    }
};

// Reverse pass through one RFF layer application. Adds the weight-matrix
// gradient into dW, hyperparameter gradients into hyper, and returns the
// gradient with respect to the layer input.
//
// The trig derivatives reuse the stored features: the scaled d(cos)/d(pre)
// is -phi_sin and the scaled d(sin)/d(pre) is phi_cos.
Eigen::VectorXd rff_backward(const LayerContext& ctx, const Eigen::VectorXd& input,
                             const Eigen::VectorXd& phi, const Eigen::MatrixXd& weights,
                             const Eigen::VectorXd& g_out, Eigen::MatrixXd& dW,
                             LayerGradAcc& hyper) {
    const Eigen::Index half = ctx.omega.rows();
    dW.noalias() += phi * g_out.transpose();
    Eigen::VectorXd g_phi = weights * g_out;
    hyper.dlog_sigma += g_phi.dot(phi);
    Eigen::VectorXd g_pre = phi.head(half).cwiseProduct(g_phi.tail(half)) -
                            phi.tail(half).cwiseProduct(g_phi.head(half));
    Eigen::VectorXd g_in = ctx.omega.transpose() * g_pre;
    hyper.dlog_precision += 0.5 * input.cwiseProduct(g_in);
    return g_in;
}

struct EmulatorScratch {
    std::vector<Eigen::VectorXd> layer_in;
    std::vector<Eigen::VectorXd> layer_phi;
};

// Deep emulator forward on a joined input [x; theta]; caches layer inputs and
// features when scratch != nullptr. Arithmetic is identical either way.
Eigen::VectorXd emulator_forward(const koh::CalibrationModel& model,
                                 const std::vector<LayerContext>& ctx,
                                 const koh::WeightList& weights, const Eigen::VectorXd& joint,
                                 EmulatorScratch* scratch) {
    Eigen::VectorXd current = joint;
    for (size_t l = 0; l < ctx.size(); ++l) {
        Eigen::VectorXd layer_in;
        if (l == 0 || !model.emulator.concat_input) {
            layer_in = std::move(current);
        } else {
            layer_in.resize(current.size() + joint.size());
            layer_in << current, joint;
        }
        Eigen::VectorXd phi = rff_forward(ctx[l], layer_in);
        current = weights[l].transpose() * phi;
        if (scratch != nullptr) {
            scratch->layer_in[l] = std::move(layer_in);
            scratch->layer_phi[l] = std::move(phi);
        }
    }
    return current;
}

double point_loglik(const Eigen::VectorXd& observed, const Eigen::VectorXd& mean, double sigma) {
    const double inv_two_var = 1.0 / (2.0 * sigma * sigma);
    const double log_sigma = std::log(sigma);
    double total = 0.0;
    for (Eigen::Index k = 0; k < observed.size(); ++k) {
        const double r = observed[k] - mean[k];
        total += -kHalfLogTwoPi - log_sigma - r * r * inv_two_var;
    }
    return total;
}

void check_indices(std::span<const int64_t> idx, int64_t bound, const char* what) {
    if (idx.empty()) {
        throw ValidationError(std::string(what) + ": index set must be non-empty");
    }
    for (int64_t i : idx) {
        if (i < 0 || i >= bound) {
            throw ValidationError(std::string(what) + ": index " + std::to_string(i) +
                                  " out of range [0, " + std::to_string(bound) + ")");
        }
    }
}

} // namespace

double sample_loglik(const koh::CalibrationModel& model, const koh::Hyperparameters& hypers,
                     const koh::CalibrationDataset& data, const svi::ParameterSample& sample,
                     std::span<const int64_t> field_idx, std::span<const int64_t> sim_idx) {
    check_indices(field_idx, data.n_field(), "minibatch_loglik(field)");
    check_indices(sim_idx, data.n_sim(), "minibatch_loglik(sim)");

    std::vector<LayerContext> ctx;
    ctx.reserve(model.emulator_layers.size());
    for (size_t l = 0; l < model.emulator_layers.size(); ++l) {
        ctx.push_back(make_context(model.emulator_layers[l], hypers.emulator_kernels[l]));
    }
    LayerContext disc_ctx;
    if (model.discrepancy != koh::DiscrepancyKind::None) {
        disc_ctx = make_context(*model.disc_layer, *hypers.disc_kernel);
    }

    double field_sum = 0.0;
    Eigen::VectorXd joint(model.d1 + model.d2);
    for (int64_t j : field_idx) {
        joint << data.X.row(j).transpose(), sample.theta;
        Eigen::VectorXd eta =
            emulator_forward(model, ctx, sample.emulator_weights, joint, nullptr);
        Eigen::VectorXd f = eta;
        if (model.discrepancy == koh::DiscrepancyKind::Additive) {
            f += sample.disc_weights->transpose() *
                 rff_forward(disc_ctx, data.X.row(j).transpose());
        } else if (model.discrepancy == koh::DiscrepancyKind::General) {
            Eigen::VectorXd warp_in(eta.size() + model.d1);
            warp_in << eta, data.X.row(j).transpose();
            f += sample.disc_weights->transpose() * rff_forward(disc_ctx, warp_in);
        }
        field_sum += point_loglik(data.Y.row(j).transpose(), f, hypers.sigma_y);
    }

    double sim_sum = 0.0;
    for (int64_t j : sim_idx) {
        joint << data.Xstar.row(j).transpose(), data.T.row(j).transpose();
        Eigen::VectorXd eta_star =
            emulator_forward(model, ctx, sample.emulator_weights, joint, nullptr);
        sim_sum += point_loglik(data.Z.row(j).transpose(), eta_star, hypers.sigma_z);
    }

    const double wf =
        static_cast<double>(data.n_field()) / static_cast<double>(field_idx.size());
    const double ws = static_cast<double>(data.n_sim()) / static_cast<double>(sim_idx.size());
    return wf * field_sum + ws * sim_sum;
}

svi::ElboEstimate elbo_kernel(const ElboRequest& req, const ParamLayout* layout,
                              Eigen::VectorXd* grad_out) {
    const auto& model = *req.model;
    const auto& data = *req.data;
    const auto& q = *req.posterior;
    const auto& priors = *req.priors;
    const auto& hypers = *req.hypers;

    if (req.n_mc < 1) {
        throw ValidationError("elbo: n_mc must be >= 1, got " + std::to_string(req.n_mc));
    }
    q.validate_for(model);
    if (priors.theta.size() != model.d2) {
        throw ShapeError("elbo: theta prior has length " + std::to_string(priors.theta.size()) +
                         ", model has d2=" + std::to_string(model.d2));
    }
    if (data.d1() != model.d1 || data.d2() != model.d2 || data.d_out() != model.d_out) {
        throw ShapeError("elbo: dataset dimensions do not match model");
    }
    check_indices(req.field_idx, data.n_field(), "elbo(field)");
    check_indices(req.sim_idx, data.n_sim(), "elbo(sim)");
    if (req.eps->n_mc() < req.n_mc) {
        throw ValidationError("elbo: eps bank holds " + std::to_string(req.eps->n_mc()) +
                              " draws, need " + std::to_string(req.n_mc));
    }
    for (int i = 0; i < req.n_mc; ++i) {
        if (req.eps->draws[i].size() != q.factor_total()) {
            throw ShapeError("elbo: eps draw " + std::to_string(i) + " has length " +
                             std::to_string(req.eps->draws[i].size()) + ", expected " +
                             std::to_string(q.factor_total()));
        }
    }

    const size_t n_layers = model.emulator_layers.size();
    std::vector<LayerContext> ctx;
    ctx.reserve(n_layers);
    for (size_t l = 0; l < n_layers; ++l) {
        ctx.push_back(make_context(model.emulator_layers[l], hypers.emulator_kernels[l]));
    }
    const bool has_disc = model.discrepancy != koh::DiscrepancyKind::None;
    const bool warp = model.discrepancy == koh::DiscrepancyKind::General;
    LayerContext disc_ctx;
    if (has_disc) {
        disc_ctx = make_context(*model.disc_layer, *hypers.disc_kernel);
    }

    const double wf =
        static_cast<double>(data.n_field()) / static_cast<double>(req.field_idx.size());
    const double ws =
        static_cast<double>(data.n_sim()) / static_cast<double>(req.sim_idx.size());
    const double inv_mc = 1.0 / static_cast<double>(req.n_mc);

    const bool want_grad = grad_out != nullptr;
    if (want_grad && layout == nullptr) {
        throw ConfigError("elbo gradient requested without a parameter layout");
    }
    if (want_grad) {
        grad_out->setZero(layout->total);
    }

    // Hyperparameter gradient accumulators (shared across samples).
    double dlog_sigma_y = 0.0;
    double dlog_sigma_z = 0.0;
    std::vector<LayerGradAcc> emu_hyper(n_layers);
    LayerGradAcc disc_hyper;
    if (want_grad) {
        for (size_t l = 0; l < n_layers; ++l) {
            emu_hyper[l].init(model.emulator_layers[l].input_dim());
        }
        if (has_disc) {
            disc_hyper.init(model.disc_layer->input_dim());
        }
    }

    // Per-sample weight gradients (chained into mean/log_std after each sample).
    std::vector<Eigen::MatrixXd> dW(n_layers);
    Eigen::MatrixXd dW_disc;
    Eigen::VectorXd dtheta(model.d2);

    EmulatorScratch scratch;
    scratch.layer_in.resize(n_layers);
    scratch.layer_phi.resize(n_layers);

    double loglik_sum = 0.0;

    for (int i = 0; i < req.n_mc; ++i) {
        const svi::ParameterSample sample = svi::sample_parameters(model, q, req.eps->draws[i]);
        if (want_grad) {
            for (size_t l = 0; l < n_layers; ++l) {
                dW[l].setZero(sample.emulator_weights[l].rows(),
                              sample.emulator_weights[l].cols());
            }
            if (has_disc) {
                dW_disc.setZero(sample.disc_weights->rows(), sample.disc_weights->cols());
            }
            dtheta.setZero();
        }

        double field_sum = 0.0;
        Eigen::VectorXd joint(model.d1 + model.d2);
        for (int64_t j : req.field_idx) {
            joint << data.X.row(j).transpose(), sample.theta;
            Eigen::VectorXd eta = emulator_forward(model, ctx, sample.emulator_weights, joint,
                                                   want_grad ? &scratch : nullptr);
            Eigen::VectorXd f = eta;
            Eigen::VectorXd disc_in, disc_phi;
            if (model.discrepancy == koh::DiscrepancyKind::Additive) {
                disc_in = data.X.row(j).transpose();
                disc_phi = rff_forward(disc_ctx, disc_in);
                f += sample.disc_weights->transpose() * disc_phi;
            } else if (warp) {
                disc_in.resize(eta.size() + model.d1);
                disc_in << eta, data.X.row(j).transpose();
                disc_phi = rff_forward(disc_ctx, disc_in);
                f += sample.disc_weights->transpose() * disc_phi;
            }
            field_sum += point_loglik(data.Y.row(j).transpose(), f, hypers.sigma_y);

            if (want_grad) {
                const double seed = wf * inv_mc;
                const double inv_var = 1.0 / (hypers.sigma_y * hypers.sigma_y);
                Eigen::VectorXd residual = data.Y.row(j).transpose() - f;
                Eigen::VectorXd g_f = seed * inv_var * residual;
                dlog_sigma_y +=
                    seed * (residual.squaredNorm() * inv_var - static_cast<double>(model.d_out));

                Eigen::VectorXd g_eta = g_f;
                if (has_disc) {
                    Eigen::VectorXd g_in = rff_backward(disc_ctx, disc_in, disc_phi,
                                                        *sample.disc_weights, g_f, dW_disc,
                                                        disc_hyper);
                    if (warp) {
                        g_eta += g_in.head(model.d_out);
                    }
                }
                // Emulator stack, top down.
                Eigen::VectorXd g = g_eta;
                for (size_t l = n_layers; l-- > 0;) {
                    Eigen::VectorXd g_in =
                        rff_backward(ctx[l], scratch.layer_in[l], scratch.layer_phi[l],
                                     sample.emulator_weights[l], g, dW[l], emu_hyper[l]);
                    if (l == 0) {
                        dtheta += g_in.tail(model.d2);
                    } else if (model.emulator.concat_input) {
                        const Eigen::Index prev = scratch.layer_in[l].size() -
                                                  (model.d1 + model.d2);
                        dtheta += g_in.segment(prev + model.d1, model.d2);
                        g = g_in.head(prev);
                    } else {
                        g = std::move(g_in);
                    }
                }
            }
        }

        double sim_sum = 0.0;
        for (int64_t j : req.sim_idx) {
            joint << data.Xstar.row(j).transpose(), data.T.row(j).transpose();
            Eigen::VectorXd eta_star = emulator_forward(model, ctx, sample.emulator_weights,
                                                        joint, want_grad ? &scratch : nullptr);
            sim_sum += point_loglik(data.Z.row(j).transpose(), eta_star, hypers.sigma_z);

            if (want_grad) {
                const double seed = ws * inv_mc;
                const double inv_var = 1.0 / (hypers.sigma_z * hypers.sigma_z);
                Eigen::VectorXd residual = data.Z.row(j).transpose() - eta_star;
                Eigen::VectorXd g = seed * inv_var * residual;
                dlog_sigma_z +=
                    seed * (residual.squaredNorm() * inv_var - static_cast<double>(model.d_out));
                for (size_t l = n_layers; l-- > 0;) {
                    Eigen::VectorXd g_in =
                        rff_backward(ctx[l], scratch.layer_in[l], scratch.layer_phi[l],
                                     sample.emulator_weights[l], g, dW[l], emu_hyper[l]);
                    if (l > 0) {
                        if (model.emulator.concat_input) {
                            const Eigen::Index prev =
                                scratch.layer_in[l].size() - (model.d1 + model.d2);
                            g = g_in.head(prev);
                        } else {
                            g = std::move(g_in);
                        }
                    }
                }
            }
        }

        loglik_sum += wf * field_sum + ws * sim_sum;

        if (want_grad) {
            // Chain the per-sample weight gradients through the
            // reparameterization: dW/dmean = 1, dW/dlog_std = W - mean.
            for (size_t l = 0; l < n_layers; ++l) {
                const auto& factor = q.q_weights[l];
                Eigen::Map<const Eigen::VectorXd> flat(dW[l].data(), dW[l].size());
                Eigen::Map<const Eigen::VectorXd> w_flat(sample.emulator_weights[l].data(),
                                                         sample.emulator_weights[l].size());
                const auto& bm = layout->block(eta_factor_name(l) + ".mean");
                const auto& bs = layout->block(eta_factor_name(l) + ".log_std");
                grad_out->segment(bm.offset, bm.len) += flat;
                grad_out->segment(bs.offset, bs.len) +=
                    flat.cwiseProduct(w_flat - factor.mean);
            }
            if (has_disc) {
                const auto& factor = q.q_weights.back();
                Eigen::Map<const Eigen::VectorXd> flat(dW_disc.data(), dW_disc.size());
                Eigen::Map<const Eigen::VectorXd> w_flat(sample.disc_weights->data(),
                                                         sample.disc_weights->size());
                const auto& bm = layout->block(disc_factor_name(model) + ".mean");
                const auto& bs = layout->block(disc_factor_name(model) + ".log_std");
                grad_out->segment(bm.offset, bm.len) += flat;
                grad_out->segment(bs.offset, bs.len) +=
                    flat.cwiseProduct(w_flat - factor.mean);
            }
            const auto& tm = layout->block("q_theta.mean");
            const auto& ts = layout->block("q_theta.log_std");
            grad_out->segment(tm.offset, tm.len) += dtheta;
            grad_out->segment(ts.offset, ts.len) +=
                dtheta.cwiseProduct(sample.theta - q.q_theta.mean);
        }
    }

    const double expected_loglik = loglik_sum * inv_mc;

    double kl = svi::kl_gaussian(q.q_theta, priors.theta);
    for (const auto& factor : q.q_weights) {
        kl += svi::kl_gaussian(factor, svi::GaussianFactor::standard(factor.size()));
    }

    svi::ElboEstimate estimate;
    estimate.expected_loglik = expected_loglik;
    estimate.kl = kl;
    estimate.value = expected_loglik - kl;
    estimate.n_mc = req.n_mc;
    estimate.minibatch_field = static_cast<int64_t>(req.field_idx.size());
    estimate.minibatch_sim = static_cast<int64_t>(req.sim_idx.size());

    if (want_grad) {
        // KL gradients (value = E - KL).
        {
            const auto& tm = layout->block("q_theta.mean");
            const auto& ts = layout->block("q_theta.log_std");
            Eigen::ArrayXd prior_inv_var = (-2.0 * priors.theta.log_std.array()).exp();
            grad_out->segment(tm.offset, tm.len) -=
                ((q.q_theta.mean - priors.theta.mean).array() * prior_inv_var).matrix();
            grad_out->segment(ts.offset, ts.len) -=
                ((2.0 * (q.q_theta.log_std - priors.theta.log_std).array()).exp() - 1.0)
                    .matrix();
        }
        for (size_t l = 0; l < n_layers; ++l) {
            const auto& factor = q.q_weights[l];
            const auto& bm = layout->block(eta_factor_name(l) + ".mean");
            const auto& bs = layout->block(eta_factor_name(l) + ".log_std");
            grad_out->segment(bm.offset, bm.len) -= factor.mean;
            grad_out->segment(bs.offset, bs.len) -=
                ((2.0 * factor.log_std.array()).exp() - 1.0).matrix();
        }
        if (has_disc) {
            const auto& factor = q.q_weights.back();
            const auto& bm = layout->block(disc_factor_name(model) + ".mean");
            const auto& bs = layout->block(disc_factor_name(model) + ".log_std");
            grad_out->segment(bm.offset, bm.len) -= factor.mean;
            grad_out->segment(bs.offset, bs.len) -=
                ((2.0 * factor.log_std.array()).exp() - 1.0).matrix();
        }

        // Hyperparameter gradients.
        (*grad_out)[layout->block("log_sigma_y").offset] = dlog_sigma_y;
        (*grad_out)[layout->block("log_sigma_z").offset] = dlog_sigma_z;
        for (size_t l = 0; l < n_layers; ++l) {
            const auto& bsig = layout->block("eta" + std::to_string(l) + ".log_sigma");
            const auto& bprec = layout->block("eta" + std::to_string(l) + ".log_precision");
            (*grad_out)[bsig.offset] = emu_hyper[l].dlog_sigma;
            grad_out->segment(bprec.offset, bprec.len) = emu_hyper[l].dlog_precision;
        }
        if (has_disc) {
            const auto& bsig = layout->block(disc_hyper_name(model) + ".log_sigma");
            const auto& bprec = layout->block(disc_hyper_name(model) + ".log_precision");
            (*grad_out)[bsig.offset] = disc_hyper.dlog_sigma;
            grad_out->segment(bprec.offset, bprec.len) = disc_hyper.dlog_precision;
        }

        if (!std::isfinite(estimate.value)) {
            throw NonFiniteError("elbo value is not finite");
        }
        for (Eigen::Index c = 0; c < grad_out->size(); ++c) {
            if (!std::isfinite((*grad_out)[c])) {
                throw NonFiniteError("non-finite gradient in parameter block '" +
                                     layout->block_at(c).name + "'");
            }
        }
    }

    return estimate;
}

} // namespace detail

GradResult elbo_value_grad(const koh::CalibrationModel& model,
                           const koh::CalibrationDataset& data, const ParamVector& params,
                           const svi::Priors& priors, int n_mc,
                           std::span<const int64_t> field_idx, std::span<const int64_t> sim_idx,
                           const svi::EpsBank& eps_bank) {
    svi::VariationalPosterior posterior;
    koh::Hyperparameters hypers;
    unpack(params, model, &posterior, &hypers);

    detail::ElboRequest req;
    req.model = &model;
    req.data = &data;
    req.posterior = &posterior;
    req.priors = &priors;
    req.hypers = &hypers;
    req.n_mc = n_mc;
    req.field_idx = field_idx;
    req.sim_idx = sim_idx;
    req.eps = &eps_bank;

    GradResult result;
    result.estimate = detail::elbo_kernel(req, params.layout.get(), &result.grad);
    return result;
}

std::vector<double> finite_diff_check(const std::function<double(const Eigen::VectorXd&)>& fn,
                                      const Eigen::VectorXd& params,
                                      const Eigen::VectorXd& analytic_grad, double h) {
    if (!(h > 0.0)) {
        throw ValidationError("finite_diff_check: h must be > 0");
    }
    if (analytic_grad.size() != params.size()) {
        throw ShapeError("finite_diff_check: gradient and parameter lengths differ");
    }
    std::vector<double> rel_errors(static_cast<size_t>(params.size()));
    Eigen::VectorXd p = params;
    for (Eigen::Index k = 0; k < params.size(); ++k) {
        const double original = p[k];
        p[k] = original + h;
        const double up = fn(p);
        p[k] = original - h;
        const double down = fn(p);
        p[k] = original;
        const double fd = (up - down) / (2.0 * h);
        const double g = analytic_grad[k];
        const double scale = std::max({1.0, std::abs(fd), std::abs(g)});
        rel_errors[static_cast<size_t>(k)] = std::abs(fd - g) / scale;
    }
    return rel_errors;
}

} // namespace vcal::grad
