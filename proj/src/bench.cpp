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

#include "bench.hpp"

#include "errors.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <numbers>
#include <string>

namespace vcal::bench {

namespace {

constexpr uint64_t kBoreholeTag = 0xb03eULL;
constexpr uint64_t kIllustrativeTag = 0x111dULL;

void check_unit_cube(const Eigen::VectorXd& v, Eigen::Index expected, const char* name) {
    if (v.size() != expected) {
        throw ShapeError(std::string("borehole: ") + name + " has length " +
                         std::to_string(v.size()) + ", expected " + std::to_string(expected));
    }
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!(v[i] >= 0.0 && v[i] <= 1.0)) {
            throw DomainError(std::string("borehole: ") + name + "[" + std::to_string(i) +
                              "] = " + std::to_string(v[i]) + " outside [0, 1]");
        }
    }
}

} // namespace

double borehole_eta(const Eigen::VectorXd& x, const Eigen::VectorXd& t) {
    check_unit_cube(x, 5, "x");
    check_unit_cube(t, 3, "t");
    const double t_u = x[0] * (115600.0 - 63070.0) + 63070.0;
    const double h_u = x[1] * (1110.0 - 990.0) + 990.0;
    const double h_l = x[2] * (820.0 - 700.0) + 700.0;
    const double length = x[3] * (1680.0 - 1120.0) + 1120.0;
    const double k_w = x[4] * (12045.0 - 9855.0) + 9855.0;
    const double r_w = t[0] * (0.15 - 0.05) + 0.05;
    const double r = t[1] * (50000.0 - 100.0) + 100.0;
    const double t_l = t[2] * (116.0 - 63.1) + 63.1;

    const double log_ratio = std::log(r / r_w);
    const double numerator = 2.0 * std::numbers::pi * t_u * (h_u - h_l);
    const double denominator =
        log_ratio * (1.0 + 2.0 * length * t_u / (log_ratio * r_w * r_w * k_w) + t_u / t_l);
    return numerator / denominator;
}

double borehole_delta(const Eigen::VectorXd& x) {
    if (x.size() < 2) {
        throw ShapeError("borehole_delta: needs at least two input coordinates");
    }
    for (int i = 0; i < 2; ++i) {
        if (!(x[i] >= 0.0 && x[i] <= 1.0)) {
            throw DomainError("borehole_delta: x[" + std::to_string(i) + "] = " +
                              std::to_string(x[i]) + " outside [0, 1]");
        }
    }
    return 2.0 * (10.0 * x[0] * x[0] + 4.0 * x[1] * x[1]) / (50.0 * x[0] * x[1] + 10.0);
}

Eigen::MatrixXd lhs(int64_t n, int d, util::Rng& rng) {
    if (n < 1 || d < 1) {
        throw ValidationError("lhs: n and d must be >= 1");
    }
    Eigen::MatrixXd out(n, d);
    std::vector<double> column(static_cast<size_t>(n));
    for (int c = 0; c < d; ++c) {
        for (int64_t k = 0; k < n; ++k) {
            column[static_cast<size_t>(k)] =
                (static_cast<double>(k) + rng.uniform()) / static_cast<double>(n);
        }
        for (int64_t i = n - 1; i > 0; --i) {
            auto j = static_cast<int64_t>(rng.uniform() * static_cast<double>(i + 1));
            if (j > i) {
                j = i;
            }
            std::swap(column[static_cast<size_t>(i)], column[static_cast<size_t>(j)]);
        }
        for (int64_t k = 0; k < n; ++k) {
            out(k, c) = column[static_cast<size_t>(k)];
        }
    }
    return out;
}

koh::CalibrationDataset make_borehole_dataset(const BoreholeProblem& problem) {
    if (problem.n < 1 || problem.N < 1) {
        throw ValidationError("borehole problem: n and N must be >= 1");
    }
    if (problem.noise_std < 0.0) {
        throw ValidationError("borehole problem: noise_std must be >= 0");
    }
    check_unit_cube(problem.theta_true, 3, "theta_true");

    util::Rng field_rng = util::Rng::keyed(problem.seed, {kBoreholeTag, 0});
    util::Rng sim_rng = util::Rng::keyed(problem.seed, {kBoreholeTag, 1});
    util::Rng noise_rng = util::Rng::keyed(problem.seed, {kBoreholeTag, 2});

    koh::CalibrationDataset data;
    data.X = lhs(problem.n, 5, field_rng);
    Eigen::MatrixXd design = lhs(problem.N, 8, sim_rng);
    data.Xstar = design.leftCols(5);
    data.T = design.rightCols(3);

    data.Z.resize(problem.N, 1);
    for (int64_t j = 0; j < problem.N; ++j) {
        data.Z(j, 0) = borehole_eta(data.Xstar.row(j).transpose(), data.T.row(j).transpose());
    }
    data.Y.resize(problem.n, 1);
    for (int64_t i = 0; i < problem.n; ++i) {
        const Eigen::VectorXd xi = data.X.row(i).transpose();
        data.Y(i, 0) = borehole_eta(xi, problem.theta_true) + borehole_delta(xi) +
                       problem.noise_std * noise_rng.normal();
    }
    data.validate();
    return data;
}

koh::CalibrationModel illustrative_model(const Illustrative1DProblem& problem, uint64_t seed) {
    koh::ModelSpec spec;
    spec.d1 = 1;
    spec.d2 = 1;
    spec.d_out = 1;
    spec.n_rf = problem.n_rf;
    spec.seed = seed;
    spec.emulator_kernel = rff::KernelParams::isotropic(problem.sigma_eta, problem.a_eta, 2);
    if (problem.sigma_delta > 0.0) {
        spec.discrepancy = koh::DiscrepancyKind::Additive;
        spec.disc_kernel = rff::KernelParams::isotropic(problem.sigma_delta, problem.a_delta, 1);
    } else {
        spec.discrepancy = koh::DiscrepancyKind::None;
    }
    spec.noise.sigma_y = problem.noise_std > 0.0 ? problem.noise_std : 1e-3;
    spec.noise.sigma_z = problem.sigma_z;
    return koh::build_model(spec);
}

svi::Priors illustrative_priors(const Illustrative1DProblem& problem) {
    svi::Priors priors;
    priors.theta.mean = Eigen::VectorXd::Constant(1, problem.theta_prior_mean);
    priors.theta.log_std = Eigen::VectorXd::Constant(1, std::log(problem.theta_prior_std));
    return priors;
}

std::pair<Eigen::MatrixXd, Eigen::MatrixXd>
illustrative_generator_weights(const Illustrative1DProblem& problem, uint64_t seed) {
    util::Rng weight_rng = util::Rng::keyed(seed, {kIllustrativeTag, 1});
    Eigen::MatrixXd w_eta = weight_rng.normal_matrix(problem.n_rf, 1);
    Eigen::MatrixXd w_delta = weight_rng.normal_matrix(problem.n_rf, 1);
    return {std::move(w_eta), std::move(w_delta)};
}

IllustrativeDraw make_illustrative_dataset(const Illustrative1DProblem& problem, uint64_t seed) {
    if (problem.n < 1 || problem.N < 1) {
        throw ValidationError("illustrative problem: n and N must be >= 1");
    }
    const koh::CalibrationModel model = illustrative_model(problem, seed);

    util::Rng theta_rng = util::Rng::keyed(seed, {kIllustrativeTag, 0});
    util::Rng field_rng = util::Rng::keyed(seed, {kIllustrativeTag, 2});
    util::Rng sim_rng = util::Rng::keyed(seed, {kIllustrativeTag, 3});
    util::Rng noise_rng = util::Rng::keyed(seed, {kIllustrativeTag, 4});

    Eigen::VectorXd theta_true(1);
    theta_true[0] = problem.theta_prior_mean + problem.theta_prior_std * theta_rng.normal();

    const auto [w_eta, w_delta] = illustrative_generator_weights(problem, seed);
    const koh::WeightList weights{w_eta};

    koh::CalibrationDataset data;
    data.X = (problem.x_lo + (problem.x_hi - problem.x_lo) * lhs(problem.n, 1, field_rng).array())
                 .matrix();

    Eigen::MatrixXd design = lhs(problem.N, 2, sim_rng);
    data.Xstar =
        (problem.x_lo + (problem.x_hi - problem.x_lo) * design.col(0).array()).matrix();
    data.T = (problem.t_lo + (problem.t_hi - problem.t_lo) * design.col(1).array()).matrix();

    data.Z.resize(problem.N, 1);
    for (int64_t j = 0; j < problem.N; ++j) {
        data.Z.row(j) = koh::emulator_eval(model, weights, data.Xstar.row(j).transpose(),
                                           data.T.row(j).transpose());
    }
    data.Y.resize(problem.n, 1);
    for (int64_t i = 0; i < problem.n; ++i) {
        const Eigen::VectorXd xi = data.X.row(i).transpose();
        Eigen::VectorXd response = koh::emulator_eval(model, weights, xi, theta_true);
        if (model.discrepancy == koh::DiscrepancyKind::Additive) {
            response += rff::layer_output(*model.disc_layer, xi, w_delta);
        }
        data.Y(i, 0) = response[0] + problem.noise_std * noise_rng.normal();
    }
    data.validate();
    return IllustrativeDraw{std::move(data), std::move(theta_true)};
}

ThetaGrid default_theta_grid(const svi::Priors& priors, int points_per_dim) {
    priors.theta.validate();
    if (points_per_dim < 2) {
        throw ValidationError("default_theta_grid: need at least two points per dimension");
    }
    const int d2 = static_cast<int>(priors.theta.size());
    int64_t total = 1;
    for (int d = 0; d < d2; ++d) {
        total *= points_per_dim;
        if (total > 2'000'000) {
            throw ValidationError("default_theta_grid: grid too large");
        }
    }
    Eigen::VectorXd lo(d2), step(d2);
    double cell = 1.0;
    for (int d = 0; d < d2; ++d) {
        const double sd = std::exp(priors.theta.log_std[d]);
        lo[d] = priors.theta.mean[d] - 4.0 * sd;
        step[d] = 8.0 * sd / static_cast<double>(points_per_dim - 1);
        cell *= step[d];
    }
    ThetaGrid grid;
    grid.cell_volume = cell;
    grid.points.resize(total, d2);
    for (int64_t k = 0; k < total; ++k) {
        int64_t rem = k;
        for (int d = 0; d < d2; ++d) {
            const int64_t idx = rem % points_per_dim;
            rem /= points_per_dim;
            grid.points(k, d) = lo[d] + static_cast<double>(idx) * step[d];
        }
    }
    return grid;
}

double GridPosterior::mean(int dim) const {
    return (grid.col(dim).cwiseProduct(density)).sum() * cell_volume;
}

double GridPosterior::stddev(int dim) const {
    const double mu = mean(dim);
    const double second =
        (grid.col(dim).array().square() * density.array()).sum() * cell_volume;
    return std::sqrt(std::max(second - mu * mu, 0.0));
}

GridPosterior analytic_theta_posterior(const koh::CalibrationModel& model,
                                       const koh::CalibrationDataset& data, const ThetaGrid& grid,
                                       const svi::Priors& priors) {
    model.validate();
    data.validate();
    if (model.emulator_layers.size() != 1) {
        throw ValidationError("analytic posterior: emulator must be shallow (one layer)");
    }
    if (model.discrepancy == koh::DiscrepancyKind::General) {
        throw ValidationError("analytic posterior: general discrepancy is not linear in the "
                              "weights; only additive or none supported");
    }
    const int64_t rows = data.n_field() + data.n_sim();
    if (rows > 200) {
        throw ValidationError("analytic posterior: too many data rows (" + std::to_string(rows) +
                              " > 200); the oracle is for small problems");
    }
    if (grid.points.rows() > 10000) {
        throw ValidationError("analytic posterior: grid too large (" +
                              std::to_string(grid.points.rows()) + " > 10000)");
    }
    if (grid.points.cols() != model.d2) {
        throw ShapeError("analytic posterior: grid dimension does not match d2");
    }
    if (!(grid.cell_volume > 0.0)) {
        throw ValidationError("analytic posterior: cell volume must be > 0");
    }
    if (priors.theta.size() != model.d2) {
        throw ShapeError("analytic posterior: prior dimension does not match d2");
    }

    const auto& emu = model.emulator_layers[0];
    const bool additive = model.discrepancy == koh::DiscrepancyKind::Additive;
    const int k_eta = emu.n_rf();
    const int k_delta = additive ? model.disc_layer->n_rf() : 0;
    const int k_total = k_eta + k_delta;
    const int64_t n = data.n_field();
    const int64_t n_sim = data.n_sim();

    // Noise variances per stacked row: field rows first, then simulator rows.
    Eigen::VectorXd noise_var(rows);
    noise_var.head(n).setConstant(model.noise.sigma_y * model.noise.sigma_y);
    noise_var.tail(n_sim).setConstant(model.noise.sigma_z * model.noise.sigma_z);
    const double log_det_noise = noise_var.array().log().sum();

    // Simulator-block features do not depend on theta; precompute them.
    Eigen::MatrixXd phi_sim = Eigen::MatrixXd::Zero(n_sim, k_total);
    Eigen::VectorXd joint(model.d1 + model.d2);
    for (int64_t j = 0; j < n_sim; ++j) {
        joint << data.Xstar.row(j).transpose(), data.T.row(j).transpose();
        phi_sim.row(j).head(k_eta) = emu.features(joint).transpose();
    }
    Eigen::MatrixXd phi_delta;
    if (additive) {
        phi_delta.resize(n, k_delta);
        for (int64_t i = 0; i < n; ++i) {
            phi_delta.row(i) = model.disc_layer->features(data.X.row(i).transpose()).transpose();
        }
    }

    const int64_t n_grid = grid.points.rows();
    Eigen::VectorXd log_joint(n_grid);

    util::parallel_for(n_grid, [&](int64_t g) {
        Eigen::VectorXd theta = grid.points.row(g).transpose();
        Eigen::MatrixXd phi(rows, k_total);
        Eigen::VectorXd point(model.d1 + model.d2);
        for (int64_t i = 0; i < n; ++i) {
            point << data.X.row(i).transpose(), theta;
            phi.row(i).head(k_eta) = emu.features(point).transpose();
            if (additive) {
                phi.row(i).tail(k_delta) = phi_delta.row(i);
            }
        }
        phi.bottomRows(n_sim) = phi_sim;

        // Marginal over the standard-normal weights: v ~ N(0, Phi Phi^T + D),
        // evaluated in feature space through M = I + Phi^T D^-1 Phi.
        Eigen::MatrixXd scaled = noise_var.cwiseInverse().asDiagonal() * phi; // D^-1 Phi
        Eigen::MatrixXd cap = Eigen::MatrixXd::Identity(k_total, k_total);
        cap.noalias() += phi.transpose() * scaled;
        Eigen::LLT<Eigen::MatrixXd> llt(cap);
        if (llt.info() != Eigen::Success) {
            throw ValidationError("analytic posterior: capacitance matrix not positive definite");
        }
        const double log_det =
            log_det_noise +
            2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();

        double log_lik = 0.0;
        for (int c = 0; c < model.d_out; ++c) {
            Eigen::VectorXd v(rows);
            v.head(n) = data.Y.col(c);
            v.tail(n_sim) = data.Z.col(c);
            const Eigen::VectorXd dv = noise_var.cwiseInverse().cwiseProduct(v);
            const Eigen::VectorXd proj = phi.transpose() * dv;
            const double quad = v.dot(dv) - proj.dot(llt.solve(proj));
            log_lik += -0.5 * static_cast<double>(rows) * std::log(2.0 * std::numbers::pi) -
                       0.5 * log_det - 0.5 * quad;
        }

        double log_prior = 0.0;
        for (int d = 0; d < model.d2; ++d) {
            const double sd = std::exp(priors.theta.log_std[d]);
            const double zscore = (theta[d] - priors.theta.mean[d]) / sd;
            log_prior += -0.5 * std::log(2.0 * std::numbers::pi) - priors.theta.log_std[d] -
                         0.5 * zscore * zscore;
        }
        log_joint[g] = log_lik + log_prior;
    });

    const double peak = log_joint.maxCoeff();
    const double sum_exp = (log_joint.array() - peak).exp().sum();
    const double log_norm = peak + std::log(sum_exp); // log sum over grid points

    GridPosterior posterior;
    posterior.grid = grid.points;
    posterior.cell_volume = grid.cell_volume;
    posterior.density = ((log_joint.array() - log_norm).exp() / grid.cell_volume).matrix();
    posterior.log_marginal = log_norm + std::log(grid.cell_volume);
    return posterior;
}

double mse_metric(const EtaFn& eta_fn, const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y,
                  const Eigen::MatrixXd& theta_samples) {
    if (theta_samples.rows() < 1) {
        throw ValidationError("mse_metric: needs at least one theta sample");
    }
    if (X.rows() != Y.rows() || X.rows() < 1) {
        throw ShapeError("mse_metric: X and Y must pair up and be non-empty");
    }
    const int64_t n = X.rows();
    const int64_t n_samples = theta_samples.rows();
    double total = 0.0;
    for (int64_t s = 0; s < n_samples; ++s) {
        const Eigen::VectorXd theta = theta_samples.row(s).transpose();
        double sq = 0.0;
        for (int64_t i = 0; i < n; ++i) {
            const Eigen::VectorXd pred = eta_fn(X.row(i).transpose(), theta);
            if (pred.size() != Y.cols()) {
                throw ShapeError("mse_metric: eta_fn output dimension does not match Y");
            }
            sq += (Y.row(i).transpose() - pred).squaredNorm();
        }
        total += sq / static_cast<double>(n);
    }
    return total / static_cast<double>(n_samples);
}

} // namespace vcal::bench
