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
#include "svi.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>

namespace vcal::bench {

// Water-flow test function on the unit cube, x in [0,1]^5, t in [0,1]^3.
// Inputs are affinely rescaled to the physical parameter ranges internally.
double borehole_eta(const Eigen::VectorXd& x, const Eigen::VectorXd& t);

// Rational discrepancy term over (x1, x2).
double borehole_delta(const Eigen::VectorXd& x);

// Latin hypercube sample: each column is a random permutation of one draw per
// stratum [k/n, (k+1)/n).
Eigen::MatrixXd lhs(int64_t n, int d, util::Rng& rng);

struct BoreholeProblem {
    Eigen::Vector3d theta_true{0.089, 0.308, 0.372};
    double noise_std = 5e-3;
    int64_t n = 2000;
    int64_t N = 20000;
    uint64_t seed = 1;
};

koh::CalibrationDataset make_borehole_dataset(const BoreholeProblem& problem);

// One-variable, one-calibration-input problem with known prior and
// hyperparameters; data are drawn from the model's own prior.
struct Illustrative1DProblem {
    double theta_prior_mean = 0.0;
    double theta_prior_std = 1.0;
    double sigma_eta = 1.0;
    double a_eta = 0.5;
    double sigma_delta = 0.2; // 0 disables the discrepancy draw
    double a_delta = 0.05;
    int64_t n = 4;
    int64_t N = 7;
    double x_lo = 0.0, x_hi = 1.0;
    double t_lo = -2.5, t_hi = 2.5;
    double noise_std = 1e-3;
    double sigma_z = 1e-3;
    int n_rf = 100;
};

struct IllustrativeDraw {
    koh::CalibrationDataset dataset;
    Eigen::VectorXd theta_true;
};

// The model whose prior generates the illustrative data; layer frequencies
// derive from `seed`, so the same seed reproduces the generator's emulator.
koh::CalibrationModel illustrative_model(const Illustrative1DProblem& problem, uint64_t seed);

IllustrativeDraw make_illustrative_dataset(const Illustrative1DProblem& problem, uint64_t seed);

// The (emulator, discrepancy) weight draw behind a generated illustrative
// dataset; lets evaluation rebuild the exact response surface from the seed.
std::pair<Eigen::MatrixXd, Eigen::MatrixXd>
illustrative_generator_weights(const Illustrative1DProblem& problem, uint64_t seed);

// Prior over theta implied by an illustrative problem.
svi::Priors illustrative_priors(const Illustrative1DProblem& problem);

// Uniform product grid with its cell volume.
struct ThetaGrid {
    Eigen::MatrixXd points; // rows x d2
    double cell_volume = 0.0;
};

ThetaGrid default_theta_grid(const svi::Priors& priors, int points_per_dim = 401);

struct GridPosterior {
    Eigen::MatrixXd grid;     // copy of the evaluation points
    Eigen::VectorXd density;  // normalized: sum(density) * cell_volume == 1
    double cell_volume = 0.0;
    double log_marginal = 0.0; // log integral of p(Y,Z|theta) p(theta) d theta

    double mean(int dim) const;
    double stddev(int dim) const;
};

// Exact posterior over theta for a shallow, additive-or-none model: the model
// is linear in the weights, so for each grid point the weights integrate out
// in closed form. Guarded to small problems.
GridPosterior analytic_theta_posterior(const koh::CalibrationModel& model,
                                       const koh::CalibrationDataset& data, const ThetaGrid& grid,
                                       const svi::Priors& priors);

// Average over theta samples of the per-observation squared residual
// ||y_i - eta(x_i, theta)||^2 / n.
using EtaFn = std::function<Eigen::VectorXd(const Eigen::VectorXd& x, const Eigen::VectorXd& t)>;
double mse_metric(const EtaFn& eta_fn, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                  const Eigen::MatrixXd& theta_samples);

} // namespace vcal::bench
