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

#include <doctest.h>

#include "errors.hpp"
#include "grad.hpp"
#include "koh.hpp"
#include "rng.hpp"
#include "svi.hpp"

#include <cmath>

using namespace vcal;

namespace {

koh::CalibrationDataset random_dataset(int64_t n, int64_t n_sim, uint64_t seed) {
    util::Rng rng(seed);
    koh::CalibrationDataset data;
    data.X = rng.normal_matrix(n, 1);
    data.Y = rng.normal_matrix(n, 1);
    data.Xstar = rng.normal_matrix(n_sim, 1);
    data.T = rng.normal_matrix(n_sim, 1);
    data.Z = rng.normal_matrix(n_sim, 1);
    return data;
}

svi::Priors standard_priors() {
    svi::Priors priors;
    priors.theta = svi::GaussianFactor::standard(1);
    return priors;
}

// Random but moderate parameter point over the whole layout.
grad::ParamVector random_point(const koh::CalibrationModel& model, uint64_t seed) {
    auto params = grad::pack(model, svi::VariationalPosterior::prior_initialized(
                                        model, svi::GaussianFactor::standard(model.d2)));
    util::Rng rng(seed);
    for (const auto& block : params.layout->blocks) {
        auto segment = params.values.segment(block.offset, block.len);
        if (block.name.find("log_std") != std::string::npos) {
            segment = (-1.2 + 0.8 * rng.normal_vector(block.len).array()).matrix();
        } else if (block.name.find("mean") != std::string::npos) {
            segment = 0.5 * rng.normal_vector(block.len);
        } else if (block.name.find("log_sigma") != std::string::npos ||
                   block.name.find("log_precision") != std::string::npos) {
            segment = (-0.3 + 0.4 * rng.normal_vector(block.len).array()).matrix();
        }
    }
    return params;
}

void check_all_coordinates(const koh::CalibrationModel& model,
                           const koh::CalibrationDataset& data, const svi::Priors& priors,
                           const grad::ParamVector& params, const svi::EpsBank& bank, int n_mc,
                           double tolerance) {
    const auto field_all = svi::all_indices(data.n_field());
    const auto sim_all = svi::all_indices(data.n_sim());
    const auto result =
        grad::elbo_value_grad(model, data, params, priors, n_mc, field_all, sim_all, bank);

    const auto layout = params.layout;
    const auto fn = [&](const Eigen::VectorXd& values) {
        grad::ParamVector shifted{values, layout};
        return grad::elbo_value_grad(model, data, shifted, priors, n_mc, field_all, sim_all, bank)
            .estimate.value;
    };
    const auto errors = grad::finite_diff_check(fn, params.values, result.grad, 1e-5);
    double worst = 0.0;
    for (double e : errors) {
        worst = std::max(worst, e);
    }
    CHECK(worst < tolerance);
}

} // namespace

TEST_CASE("finite_diff_check is exact on linear and quadratic functions") {
    Eigen::VectorXd point(3);
    point << 0.3, -1.0, 2.0;

    Eigen::VectorXd slope(3);
    slope << 2.0, -0.5, 1.5;
    const auto linear = [&](const Eigen::VectorXd& p) { return slope.dot(p); };
    auto errors = grad::finite_diff_check(linear, point, slope, 1e-5);
    for (double e : errors) {
        CHECK(e < 1e-9);
    }

    const auto quadratic = [&](const Eigen::VectorXd& p) { return p.squaredNorm(); };
    const Eigen::VectorXd grad_q = 2.0 * point;
    errors = grad::finite_diff_check(quadratic, point, grad_q, 1e-5);
    for (double e : errors) {
        CHECK(e < 1e-9); // central differences are exact on quadratics
    }
}

TEST_CASE("KL gradient closed forms") {
    // d KL / d mu_q = (mu_q - mu_p) / sigma_p^2, checked by differentiating
    // the analytic KL directly.
    svi::GaussianFactor p;
    p.mean = Eigen::VectorXd::Constant(1, 0.4);
    p.log_std = Eigen::VectorXd::Constant(1, std::log(0.8));
    svi::GaussianFactor q;
    q.mean = Eigen::VectorXd::Constant(1, -0.3);
    q.log_std = Eigen::VectorXd::Constant(1, -0.2);

    const double expected = (q.mean[0] - p.mean[0]) / (0.8 * 0.8);
    const double h = 1e-6;
    auto shifted_up = q;
    shifted_up.mean[0] += h;
    auto shifted_down = q;
    shifted_down.mean[0] -= h;
    const double fd =
        (svi::kl_gaussian(shifted_up, p) - svi::kl_gaussian(shifted_down, p)) / (2.0 * h);
    CHECK(fd == doctest::Approx(expected).epsilon(1e-8));
}

TEST_CASE("toy additive model: every coordinate matches central differences") {
    koh::ModelSpec spec;
    spec.d1 = 1;
    spec.d2 = 1;
    spec.d_out = 1;
    spec.n_rf = 4;
    spec.seed = 19;
    spec.discrepancy = koh::DiscrepancyKind::Additive;
    spec.emulator_kernel = rff::KernelParams::isotropic(1.0, 0.5, 2);
    spec.disc_kernel = rff::KernelParams::isotropic(0.3, 1.0, 1);
    spec.noise = {0.25, 0.1};
    const auto model = koh::build_model(spec);
    const auto data = random_dataset(3, 3, 23);
    const auto priors = standard_priors();

    const auto posterior = svi::VariationalPosterior::prior_initialized(model, priors.theta);
    util::Rng eps_rng(55);
    const auto bank = svi::make_eps_bank(posterior, 2, eps_rng);

    for (uint64_t point = 0; point < 5; ++point) {
        const auto params = random_point(model, 300 + point);
        check_all_coordinates(model, data, priors, params, bank, 2, 1e-4);
    }
}

TEST_CASE("general (warped) model gradients match central differences") {
    koh::ModelSpec spec;
    spec.d1 = 1;
    spec.d2 = 1;
    spec.d_out = 1;
    spec.n_rf = 4;
    spec.seed = 29;
    spec.discrepancy = koh::DiscrepancyKind::General;
    spec.emulator_kernel = rff::KernelParams::isotropic(1.0, 0.5, 2);
    spec.disc_kernel = rff::KernelParams::isotropic(0.4, 1.0, 2);
    spec.noise = {0.25, 0.1};
    const auto model = koh::build_model(spec);
    const auto data = random_dataset(3, 3, 31);
    const auto priors = standard_priors();

    const auto posterior = svi::VariationalPosterior::prior_initialized(model, priors.theta);
    util::Rng eps_rng(57);
    const auto bank = svi::make_eps_bank(posterior, 2, eps_rng);

    for (uint64_t point = 0; point < 3; ++point) {
        const auto params = random_point(model, 400 + point);
        check_all_coordinates(model, data, priors, params, bank, 2, 1e-4);
    }
}

TEST_CASE("deep concatenated emulator gradients match central differences") {
    koh::ModelSpec spec;
    spec.d1 = 1;
    spec.d2 = 1;
    spec.d_out = 1;
    spec.n_rf = 4;
    spec.seed = 37;
    spec.discrepancy = koh::DiscrepancyKind::Additive;
    spec.hidden_dims = {2};
    spec.concat_input = true;
    spec.emulator_kernel = rff::KernelParams::isotropic(1.0, 0.5, 2);
    spec.layer_kernel = rff::KernelParams::isotropic(1.0, 2.0, 1);
    spec.disc_kernel = rff::KernelParams::isotropic(0.3, 1.0, 1);
    spec.noise = {0.25, 0.1};
    const auto model = koh::build_model(spec);
    REQUIRE(model.emulator_layers.size() == 2);
    REQUIRE(model.emulator_layers[1].input_dim() == 4); // hidden 2 + (x, theta)
    const auto data = random_dataset(2, 3, 41);
    const auto priors = standard_priors();

    const auto posterior = svi::VariationalPosterior::prior_initialized(model, priors.theta);
    util::Rng eps_rng(59);
    const auto bank = svi::make_eps_bank(posterior, 2, eps_rng);

    for (uint64_t point = 0; point < 3; ++point) {
        const auto params = random_point(model, 500 + point);
        check_all_coordinates(model, data, priors, params, bank, 2, 1e-4);
    }
}

TEST_CASE("value equals svi::elbo bit-for-bit") {
    koh::ModelSpec spec;
    spec.d1 = 1;
    spec.d2 = 1;
    spec.d_out = 1;
    spec.n_rf = 6;
    spec.seed = 43;
    spec.discrepancy = koh::DiscrepancyKind::Additive;
    spec.emulator_kernel = rff::KernelParams::isotropic(1.3, 0.7, 2);
    spec.disc_kernel = rff::KernelParams::isotropic(0.5, 1.4, 1);
    spec.noise = {0.3, 0.07};
    const auto model = koh::build_model(spec);
    const auto data = random_dataset(4, 5, 47);
    const auto priors = standard_priors();

    auto posterior = svi::VariationalPosterior::prior_initialized(model, priors.theta);
    util::Rng rng(61);
    posterior.q_theta.mean = rng.normal_vector(1);
    posterior.q_weights[0].mean = 0.4 * rng.normal_vector(posterior.q_weights[0].size());
    posterior.q_weights[1].log_std =
        (-0.9 * Eigen::VectorXd::Ones(posterior.q_weights[1].size())).eval();

    const auto bank = svi::make_eps_bank(posterior, 3, rng);
    const auto field_all = svi::all_indices(4);
    const auto sim_all = svi::all_indices(5);

    const auto via_svi = svi::elbo(model, data, posterior, priors, 3, field_all, sim_all, bank);
    const auto params = grad::pack(model, posterior);
    const auto via_grad =
        grad::elbo_value_grad(model, data, params, priors, 3, field_all, sim_all, bank);
    CHECK(via_grad.estimate.value == via_svi.value);
    CHECK(via_grad.estimate.expected_loglik == via_svi.expected_loglik);
    CHECK(via_grad.estimate.kl == via_svi.kl);
}

TEST_CASE("zero eps rows isolate the KL contribution of a factor's log_std") {
    koh::ModelSpec spec;
    spec.d1 = 1;
    spec.d2 = 1;
    spec.d_out = 1;
    spec.n_rf = 4;
    spec.seed = 53;
    spec.discrepancy = koh::DiscrepancyKind::None;
    spec.emulator_kernel = rff::KernelParams::isotropic(1.0, 0.5, 2);
    spec.noise = {0.2, 0.1};
    const auto model = koh::build_model(spec);
    const auto data = random_dataset(3, 3, 59);
    const auto priors = standard_priors();

    const auto params = random_point(model, 600);
    svi::VariationalPosterior posterior;
    grad::unpack(params, model, &posterior, nullptr);

    // eps zero for the emulator weight factor: its sampled W equals the mean,
    // so the likelihood path contributes nothing to d/d log_std and the
    // gradient reduces to the KL term -(exp(2 ls) - 1).
    util::Rng rng(63);
    svi::EpsBank bank;
    Eigen::VectorXd draw = rng.normal_vector(posterior.factor_total());
    draw.tail(posterior.q_weights[0].size()).setZero();
    bank.draws.push_back(draw);

    const auto result = grad::elbo_value_grad(model, data, params, priors, 1,
                                              svi::all_indices(3), svi::all_indices(3), bank);
    const auto& block = params.layout->block("q_w_eta0.log_std");
    const Eigen::VectorXd ls = params.values.segment(block.offset, block.len);
    const Eigen::VectorXd expected = (-((2.0 * ls.array()).exp() - 1.0)).matrix();
    const Eigen::VectorXd actual = result.grad.segment(block.offset, block.len);
    for (Eigen::Index k = 0; k < ls.size(); ++k) {
        CHECK(actual[k] == doctest::Approx(expected[k]).epsilon(1e-12));
    }
}

TEST_CASE("gradient vanishes at the optimum of a collapsed problem") {
    // With data equal to the prior-mean prediction (all weights zero mean give
    // zero output, and Y = Z = 0), the prior-initialized posterior is a
    // stationary point in the weight means at zero eps.
    koh::ModelSpec spec;
    spec.d1 = 1;
    spec.d2 = 1;
    spec.d_out = 1;
    spec.n_rf = 4;
    spec.seed = 67;
    spec.discrepancy = koh::DiscrepancyKind::None;
    spec.emulator_kernel = rff::KernelParams::isotropic(1.0, 0.5, 2);
    spec.noise = {0.5, 0.5};
    const auto model = koh::build_model(spec);

    koh::CalibrationDataset data = random_dataset(3, 3, 71);
    data.Y.setZero();
    data.Z.setZero();

    const auto priors = standard_priors();
    const auto params = grad::pack(
        model, svi::VariationalPosterior::prior_initialized(model, priors.theta));
    const auto bank = svi::zero_eps_bank(
        svi::VariationalPosterior::prior_initialized(model, priors.theta), 1);
    const auto result = grad::elbo_value_grad(model, data, params, priors, 1,
                                              svi::all_indices(3), svi::all_indices(3), bank);
    const auto& block = params.layout->block("q_w_eta0.mean");
    CHECK(result.grad.segment(block.offset, block.len).cwiseAbs().maxCoeff() < 1e-12);
    const auto& theta_block = params.layout->block("q_theta.mean");
    CHECK(result.grad.segment(theta_block.offset, theta_block.len).cwiseAbs().maxCoeff() <
          1e-12);
}

TEST_CASE("non-finite parameters raise an error naming the block") {
    koh::ModelSpec spec;
    spec.d1 = 1;
    spec.d2 = 1;
    spec.d_out = 1;
    spec.n_rf = 4;
    spec.seed = 73;
    spec.discrepancy = koh::DiscrepancyKind::None;
    spec.emulator_kernel = rff::KernelParams::isotropic(1.0, 0.5, 2);
    spec.noise = {0.2, 0.1};
    const auto model = koh::build_model(spec);
    const auto data = random_dataset(2, 2, 79);
    const auto priors = standard_priors();

    auto params = grad::pack(
        model, svi::VariationalPosterior::prior_initialized(model, priors.theta));
    params.segment("q_theta.mean")[0] = std::numeric_limits<double>::quiet_NaN();
    const auto bank = svi::zero_eps_bank(
        svi::VariationalPosterior::prior_initialized(model, priors.theta), 1);
    CHECK_THROWS_AS(grad::elbo_value_grad(model, data, params, priors, 1, svi::all_indices(2),
                                          svi::all_indices(2), bank),
                    NonFiniteError);
}

TEST_CASE("pack/unpack round trip") {
    koh::ModelSpec spec;
    spec.d1 = 2;
    spec.d2 = 2;
    spec.d_out = 1;
    spec.n_rf = 4;
    spec.seed = 83;
    spec.discrepancy = koh::DiscrepancyKind::General;
    spec.emulator_kernel = rff::KernelParams::isotropic(1.4, 0.6, 4);
    spec.disc_kernel = rff::KernelParams::isotropic(0.5, 1.1, 3);
    spec.noise = {0.12, 0.034};
    const auto model = koh::build_model(spec);

    auto posterior = svi::VariationalPosterior::prior_initialized(
        model, svi::GaussianFactor::standard(2));
    util::Rng rng(89);
    posterior.q_theta.mean = rng.normal_vector(2);
    posterior.q_weights[0].log_std = 0.3 * rng.normal_vector(posterior.q_weights[0].size());

    const auto params = grad::pack(model, posterior);
    svi::VariationalPosterior back;
    koh::Hyperparameters hypers;
    grad::unpack(params, model, &back, &hypers);

    CHECK(back.q_theta.mean == posterior.q_theta.mean);
    CHECK(back.q_weights[0].log_std == posterior.q_weights[0].log_std);
    CHECK(hypers.sigma_y == doctest::Approx(0.12).epsilon(1e-15));
    CHECK(hypers.sigma_z == doctest::Approx(0.034).epsilon(1e-15));
    CHECK(hypers.emulator_kernels[0].sigma == doctest::Approx(1.4).epsilon(1e-12));
    CHECK(hypers.disc_kernel->precision_diag[0] == doctest::Approx(1.1).epsilon(1e-12));

    // Unknown block names are rejected.
    CHECK_THROWS_AS(params.layout->block("noblock"), ConfigError);
}
