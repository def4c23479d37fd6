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
#include "rng.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace vcal::svi {

// Diagonal Gaussian over a flat block of parameters. log_std keeps the scale
// positive without constraints.
struct GaussianFactor {
    Eigen::VectorXd mean;
    Eigen::VectorXd log_std;

    static GaussianFactor standard(Eigen::Index n);
    Eigen::Index size() const { return mean.size(); }
    void validate() const;
};

// Mean-field Gaussian over theta and every weight matrix, emulator layers
// first, discrepancy factor last.
struct VariationalPosterior {
    GaussianFactor q_theta;
    std::vector<GaussianFactor> q_weights;

    Eigen::Index factor_total() const;
    void validate_for(const koh::CalibrationModel& model) const;

    static VariationalPosterior prior_initialized(const koh::CalibrationModel& model,
                                                  const GaussianFactor& theta_prior);
};

// Priors: explicit Gaussian over theta; weight priors are standard normal.
struct Priors {
    GaussianFactor theta;
};

struct ElboEstimate {
    double value = 0.0;
    double expected_loglik = 0.0;
    double kl = 0.0;
    int n_mc = 0;
    int64_t minibatch_field = 0;
    int64_t minibatch_sim = 0;
};

// mean + exp(log_std) .* eps
Eigen::VectorXd reparam_sample(const GaussianFactor& factor, const Eigen::VectorXd& eps);

// Sum over coordinates of KL(N(mu_q, sigma_q^2) || N(mu_p, sigma_p^2)).
double kl_gaussian(const GaussianFactor& q, const GaussianFactor& p);

// One joint draw of (theta, weights) shaped for the model.
struct ParameterSample {
    Eigen::VectorXd theta;
    koh::WeightList emulator_weights;
    std::optional<Eigen::MatrixXd> disc_weights;
};

// Standard-normal draws backing the reparameterization: one flat vector per
// Monte Carlo sample, laid out as [theta | weight factors in order]. Injected
// rather than generated inside the estimator so gradient checks can fix the
// noise.
struct EpsBank {
    std::vector<Eigen::VectorXd> draws;

    int n_mc() const { return static_cast<int>(draws.size()); }
};

EpsBank make_eps_bank(const VariationalPosterior& posterior, int n_mc, util::Rng& rng);
EpsBank zero_eps_bank(const VariationalPosterior& posterior, int n_mc);

// Reparameterized sample from one flat eps draw.
ParameterSample sample_parameters(const koh::CalibrationModel& model,
                                  const VariationalPosterior& posterior,
                                  const Eigen::VectorXd& eps_flat);

// Unbiased minibatch estimate of the full-data log-likelihood for a fixed
// parameter sample: (n/m_f) * sum over field_idx + (N/m_s) * sum over sim_idx.
double minibatch_loglik(const koh::CalibrationModel& model, const koh::CalibrationDataset& data,
                        const ParameterSample& sample, std::span<const int64_t> field_idx,
                        std::span<const int64_t> sim_idx);

// Reparameterized Monte Carlo ELBO estimate with analytic KL. Deterministic
// and differentiable in the posterior parameters for a fixed eps bank.
ElboEstimate elbo(const koh::CalibrationModel& model, const koh::CalibrationDataset& data,
                  const VariationalPosterior& posterior, const Priors& priors, int n_mc,
                  std::span<const int64_t> field_idx, std::span<const int64_t> sim_idx,
                  const EpsBank& eps_bank);

// count x d2 matrix of theta draws, seeded.
Eigen::MatrixXd posterior_samples(const VariationalPosterior& posterior, int64_t count,
                                  uint64_t seed);

// Index span covering a whole data block.
std::vector<int64_t> all_indices(int64_t n);

} // namespace vcal::svi
