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
#include "svi.hpp"

#include <Eigen/Dense>

#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace vcal::grad {

// Flat layout of every trainable scalar: variational means and log-stds,
// then log noise scales, then per-layer log kernel hyperparameters. All
// hyperparameters enter through their logarithm so the whole vector is
// unconstrained.
struct ParamLayout {
    struct Block {
        std::string name;
        Eigen::Index offset = 0;
        Eigen::Index len = 0;
    };

    std::vector<Block> blocks;
    Eigen::Index total = 0;

    static std::shared_ptr<const ParamLayout> for_model(const koh::CalibrationModel& model);

    const Block& block(const std::string& name) const; // throws ConfigError if absent
    bool has(const std::string& name) const;
    std::vector<std::string> names() const;

    // Block containing a flat coordinate (for error reporting).
    const Block& block_at(Eigen::Index coordinate) const;
};

struct ParamVector {
    Eigen::VectorXd values;
    std::shared_ptr<const ParamLayout> layout;

    Eigen::VectorBlock<Eigen::VectorXd> segment(const std::string& block_name);
    Eigen::VectorXd segment(const std::string& block_name) const;
};

// Posterior + model hyperparameters flattened into a ParamVector and back.
ParamVector pack(const koh::CalibrationModel& model, const svi::VariationalPosterior& posterior);
void unpack(const ParamVector& params, const koh::CalibrationModel& model,
            svi::VariationalPosterior* posterior, koh::Hyperparameters* hypers);

struct GradResult {
    svi::ElboEstimate estimate;
    Eigen::VectorXd grad; // aligned with the ParamVector layout

    double value() const { return estimate.value; }
};

// Exact gradient of the fixed-noise ELBO with respect to every layout
// coordinate; value matches svi::elbo bit-for-bit on identical inputs.
GradResult elbo_value_grad(const koh::CalibrationModel& model,
                           const koh::CalibrationDataset& data, const ParamVector& params,
                           const svi::Priors& priors, int n_mc,
                           std::span<const int64_t> field_idx, std::span<const int64_t> sim_idx,
                           const svi::EpsBank& eps_bank);

// Central-difference comparison against an analytic gradient. Returns one
// relative error per coordinate, |fd - g| / max(1, |fd|, |g|).
std::vector<double> finite_diff_check(const std::function<double(const Eigen::VectorXd&)>& fn,
                                      const Eigen::VectorXd& params,
                                      const Eigen::VectorXd& analytic_grad, double h);

namespace detail {

// Shared evaluation request for the fused ELBO forward/backward. svi::elbo
// routes through this with grad_out == nullptr, which is what keeps the two
// entry points bit-identical in value.
struct ElboRequest {
    const koh::CalibrationModel* model = nullptr;
    const koh::CalibrationDataset* data = nullptr;
    const svi::VariationalPosterior* posterior = nullptr;
    const svi::Priors* priors = nullptr;
    const koh::Hyperparameters* hypers = nullptr;
    int n_mc = 1;
    std::span<const int64_t> field_idx;
    std::span<const int64_t> sim_idx;
    const svi::EpsBank* eps = nullptr;
};

svi::ElboEstimate elbo_kernel(const ElboRequest& req, const ParamLayout* layout,
                              Eigen::VectorXd* grad_out);

// Single-sample minibatch log-likelihood along the same code path as the
// kernel's forward pass.
double sample_loglik(const koh::CalibrationModel& model, const koh::Hyperparameters& hypers,
                     const koh::CalibrationDataset& data, const svi::ParameterSample& sample,
                     std::span<const int64_t> field_idx, std::span<const int64_t> sim_idx);

} // namespace detail

} // namespace vcal::grad
