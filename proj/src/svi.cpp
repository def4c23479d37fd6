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

#include "svi.hpp"

#include "errors.hpp"
#include "grad.hpp"

#include <cmath>
#include <string>

namespace vcal::svi {

GaussianFactor GaussianFactor::standard(Eigen::Index n) {
    GaussianFactor f;
    f.mean = Eigen::VectorXd::Zero(n);
    f.log_std = Eigen::VectorXd::Zero(n);
    return f;
}

void GaussianFactor::validate() const {
    if (mean.size() != log_std.size()) {
        throw ShapeError("GaussianFactor: mean has length " + std::to_string(mean.size()) +
                         ", log_std has " + std::to_string(log_std.size()));
    }
    if (mean.size() == 0) {
        throw ValidationError("GaussianFactor: empty factor");
    }
}

Eigen::Index VariationalPosterior::factor_total() const {
    Eigen::Index total = q_theta.size();
    for (const auto& f : q_weights) {
        total += f.size();
    }
    return total;
}

void VariationalPosterior::validate_for(const koh::CalibrationModel& model) const {
    q_theta.validate();
    if (q_theta.size() != model.d2) {
        throw ShapeError("posterior: q_theta has length " + std::to_string(q_theta.size()) +
                         ", model has d2=" + std::to_string(model.d2));
    }
    if (q_weights.size() != model.n_weight_matrices()) {
        throw ShapeError("posterior: " + std::to_string(q_weights.size()) +
                         " weight factors, model needs " +
                         std::to_string(model.n_weight_matrices()));
    }
    for (size_t l = 0; l < model.emulator_layers.size(); ++l) {
        q_weights[l].validate();
        const Eigen::Index expected = static_cast<Eigen::Index>(model.emulator_layers[l].n_rf()) *
                                      model.emulator.layers[l].hidden_dim;
        if (q_weights[l].size() != expected) {
            throw ShapeError("posterior: weight factor " + std::to_string(l) + " has length " +
                             std::to_string(q_weights[l].size()) + ", expected " +
                             std::to_string(expected));
        }
    }
    if (model.discrepancy != koh::DiscrepancyKind::None) {
        const auto& factor = q_weights.back();
        factor.validate();
        const Eigen::Index expected =
            static_cast<Eigen::Index>(model.disc_layer->n_rf()) * model.d_out;
        if (factor.size() != expected) {
            throw ShapeError("posterior: discrepancy weight factor has length " +
                             std::to_string(factor.size()) + ", expected " +
                             std::to_string(expected));
        }
    }
}

VariationalPosterior VariationalPosterior::prior_initialized(const koh::CalibrationModel& model,
                                                             const GaussianFactor& theta_prior) {
    theta_prior.validate();
    if (theta_prior.size() != model.d2) {
        throw ShapeError("prior_initialized: theta prior length " +
                         std::to_string(theta_prior.size()) + " != d2 " +
                         std::to_string(model.d2));
    }
    VariationalPosterior q;
    q.q_theta = theta_prior;
    for (size_t l = 0; l < model.emulator_layers.size(); ++l) {
        q.q_weights.push_back(GaussianFactor::standard(
            static_cast<Eigen::Index>(model.emulator_layers[l].n_rf()) *
            model.emulator.layers[l].hidden_dim));
    }
    if (model.discrepancy != koh::DiscrepancyKind::None) {
        q.q_weights.push_back(GaussianFactor::standard(
            static_cast<Eigen::Index>(model.disc_layer->n_rf()) * model.d_out));
    }
    return q;
}

Eigen::VectorXd reparam_sample(const GaussianFactor& factor, const Eigen::VectorXd& eps) {
    factor.validate();
    if (eps.size() != factor.size()) {
        throw ShapeError("reparam_sample: eps has length " + std::to_string(eps.size()) +
                         ", factor has " + std::to_string(factor.size()));
    }
    return factor.mean + factor.log_std.array().exp().matrix().cwiseProduct(eps);
}

double kl_gaussian(const GaussianFactor& q, const GaussianFactor& p) {
    q.validate();
    p.validate();
    if (q.size() != p.size()) {
        throw ShapeError("kl_gaussian: factor lengths differ (" + std::to_string(q.size()) +
                         " vs " + std::to_string(p.size()) + ")");
    }
    double total = 0.0;
    for (Eigen::Index k = 0; k < q.size(); ++k) {
        const double log_ratio = q.log_std[k] - p.log_std[k];
        const double var_ratio = std::exp(2.0 * log_ratio);
        const double mean_diff = q.mean[k] - p.mean[k];
        const double scaled_mean = mean_diff * std::exp(-p.log_std[k]);
        total += 0.5 * (var_ratio + scaled_mean * scaled_mean - 1.0) - log_ratio;
    }
    return total;
}

EpsBank make_eps_bank(const VariationalPosterior& posterior, int n_mc, util::Rng& rng) {
    if (n_mc < 1) {
        throw ValidationError("make_eps_bank: n_mc must be >= 1");
    }
    EpsBank bank;
    bank.draws.reserve(static_cast<size_t>(n_mc));
    const Eigen::Index total = posterior.factor_total();
    for (int i = 0; i < n_mc; ++i) {
        bank.draws.push_back(rng.normal_vector(total));
    }
    return bank;
}

EpsBank zero_eps_bank(const VariationalPosterior& posterior, int n_mc) {
    if (n_mc < 1) {
        throw ValidationError("zero_eps_bank: n_mc must be >= 1");
    }
    EpsBank bank;
    bank.draws.assign(static_cast<size_t>(n_mc),
                      Eigen::VectorXd::Zero(posterior.factor_total()));
    return bank;
}

ParameterSample sample_parameters(const koh::CalibrationModel& model,
                                  const VariationalPosterior& posterior,
                                  const Eigen::VectorXd& eps_flat) {
    if (eps_flat.size() != posterior.factor_total()) {
        throw ShapeError("sample_parameters: eps has length " + std::to_string(eps_flat.size()) +
                         ", posterior needs " + std::to_string(posterior.factor_total()));
    }
    ParameterSample sample;
    sample.theta = reparam_sample(posterior.q_theta, eps_flat.head(model.d2));
    Eigen::Index offset = model.d2;
    for (size_t l = 0; l < model.emulator_layers.size(); ++l) {
        const auto& factor = posterior.q_weights[l];
        Eigen::VectorXd flat = reparam_sample(factor, eps_flat.segment(offset, factor.size()));
        offset += factor.size();
        sample.emulator_weights.emplace_back(Eigen::Map<const Eigen::MatrixXd>(
            flat.data(), model.emulator_layers[l].n_rf(), model.emulator.layers[l].hidden_dim));
    }
    if (model.discrepancy != koh::DiscrepancyKind::None) {
        const auto& factor = posterior.q_weights.back();
        Eigen::VectorXd flat = reparam_sample(factor, eps_flat.segment(offset, factor.size()));
        sample.disc_weights = Eigen::Map<const Eigen::MatrixXd>(
            flat.data(), model.disc_layer->n_rf(), model.d_out);
    }
    return sample;
}

double minibatch_loglik(const koh::CalibrationModel& model, const koh::CalibrationDataset& data,
                        const ParameterSample& sample, std::span<const int64_t> field_idx,
                        std::span<const int64_t> sim_idx) {
    return grad::detail::sample_loglik(model, koh::hypers_of(model), data, sample, field_idx,
                                       sim_idx);
}

ElboEstimate elbo(const koh::CalibrationModel& model, const koh::CalibrationDataset& data,
                  const VariationalPosterior& posterior, const Priors& priors, int n_mc,
                  std::span<const int64_t> field_idx, std::span<const int64_t> sim_idx,
                  const EpsBank& eps_bank) {
    const koh::Hyperparameters hypers = koh::hypers_of(model);
    grad::detail::ElboRequest req;
    req.model = &model;
    req.data = &data;
    req.posterior = &posterior;
    req.priors = &priors;
    req.hypers = &hypers;
    req.n_mc = n_mc;
    req.field_idx = field_idx;
    req.sim_idx = sim_idx;
    req.eps = &eps_bank;
    return grad::detail::elbo_kernel(req, nullptr, nullptr);
}

Eigen::MatrixXd posterior_samples(const VariationalPosterior& posterior, int64_t count,
                                  uint64_t seed) {
    if (count < 1) {
        throw ValidationError("posterior_samples: count must be >= 1");
    }
    posterior.q_theta.validate();
    util::Rng rng = util::Rng::keyed(seed, {0x9057e210ULL});
    const Eigen::Index d2 = posterior.q_theta.size();
    Eigen::MatrixXd samples(count, d2);
    for (int64_t i = 0; i < count; ++i) {
        samples.row(i) = reparam_sample(posterior.q_theta, rng.normal_vector(d2)).transpose();
    }
    return samples;
}

std::vector<int64_t> all_indices(int64_t n) {
    std::vector<int64_t> idx(static_cast<size_t>(n));
    for (int64_t i = 0; i < n; ++i) {
        idx[static_cast<size_t>(i)] = i;
    }
    return idx;
}

} // namespace vcal::svi
