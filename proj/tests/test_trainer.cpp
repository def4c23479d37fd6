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

#include "bench.hpp"
#include "errors.hpp"
#include "grad.hpp"
#include "svi.hpp"
#include "trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

using namespace vcal;

namespace {

koh::CalibrationModel tiny_model(koh::DiscrepancyKind kind, std::vector<int> hidden = {}) {
    koh::ModelSpec spec;
    spec.d1 = 1;
    spec.d2 = 1;
    spec.d_out = 1;
    spec.n_rf = 4;
    spec.seed = 7;
    spec.discrepancy = kind;
    spec.hidden_dims = std::move(hidden);
    spec.emulator_kernel = rff::KernelParams::isotropic(1.0, 0.5, 2);
    spec.layer_kernel = rff::KernelParams::isotropic(1.0, 2.0, 1);
    const int disc_dim = kind == koh::DiscrepancyKind::General ? 2 : 1;
    spec.disc_kernel = rff::KernelParams::isotropic(0.3, 1.0, disc_dim);
    spec.noise = {0.2, 0.1};
    return koh::build_model(spec);
}

koh::CalibrationDataset tiny_data(int64_t n, int64_t n_sim, uint64_t seed) {
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

bool contains(const std::vector<std::string>& names, const std::string& name) {
    return std::find(names.begin(), names.end(), name) != names.end();
}

} // namespace

TEST_CASE("default_schedule masks per stage") {
    SUBCASE("shallow additive model") {
        const auto model = tiny_model(koh::DiscrepancyKind::Additive);
        const auto schedule = train::default_schedule(model);
        REQUIRE(schedule.size() == 4);

        CHECK(contains(schedule[0].trainable_blocks, "q_w_eta0.mean"));
        CHECK(contains(schedule[0].trainable_blocks, "q_w_eta0.log_std"));
        CHECK(!contains(schedule[0].trainable_blocks, "q_theta.mean"));
        CHECK(!contains(schedule[0].trainable_blocks, "q_w_delta.mean"));
        CHECK(!contains(schedule[0].trainable_blocks, "log_sigma_z"));

        CHECK(contains(schedule[1].trainable_blocks, "log_sigma_z"));
        CHECK(contains(schedule[1].trainable_blocks, "eta0.log_sigma"));
        CHECK(contains(schedule[1].trainable_blocks, "eta0.log_precision"));
        CHECK(!contains(schedule[1].trainable_blocks, "log_sigma_y"));
        CHECK(schedule[1].learning_rate == doctest::Approx(schedule[0].learning_rate / 10.0));

        CHECK(contains(schedule[2].trainable_blocks, "q_theta.mean"));
        CHECK(contains(schedule[2].trainable_blocks, "q_w_delta.mean"));
        CHECK(!contains(schedule[2].trainable_blocks, "delta.log_sigma"));

        const auto layout = grad::ParamLayout::for_model(model);
        CHECK(schedule[3].trainable_blocks.size() == layout->names().size());
    }

    SUBCASE("no-discrepancy model has theta but no delta blocks in stage two") {
        const auto model = tiny_model(koh::DiscrepancyKind::None);
        const auto schedule = train::default_schedule(model);
        CHECK(contains(schedule[2].trainable_blocks, "q_theta.mean"));
        for (const auto& name : schedule[2].trainable_blocks) {
            CHECK(name.find("delta") == std::string::npos);
        }
    }

    SUBCASE("deep emulator includes every layer factor in stage one") {
        const auto model = tiny_model(koh::DiscrepancyKind::Additive, {2});
        const auto schedule = train::default_schedule(model);
        CHECK(contains(schedule[0].trainable_blocks, "q_w_eta0.mean"));
        CHECK(contains(schedule[0].trainable_blocks, "q_w_eta1.mean"));
        CHECK(contains(schedule[1].trainable_blocks, "eta1.log_precision"));
    }
}

TEST_CASE("init_from_priors copies prior moments and model hyperparameters") {
    const auto model = tiny_model(koh::DiscrepancyKind::Additive);
    svi::Priors priors;
    priors.theta.mean = Eigen::VectorXd::Constant(1, 0.5);
    priors.theta.log_std = Eigen::VectorXd::Constant(1, 0.5 * std::log(0.25));
    const auto params = train::init_from_priors(model, priors);

    CHECK(params.segment("q_theta.mean")[0] == 0.5);
    CHECK(params.segment("q_theta.log_std")[0] == doctest::Approx(0.5 * std::log(0.25)));
    CHECK(params.segment("q_w_eta0.mean").isZero(0.0));
    CHECK(params.segment("q_w_eta0.log_std").isZero(0.0));
    CHECK(params.segment("log_sigma_y")[0] == doctest::Approx(std::log(0.2)));
    CHECK(params.segment("log_sigma_z")[0] == doctest::Approx(std::log(0.1)));
    CHECK(params.segment("eta0.log_precision")[0] == doctest::Approx(std::log(0.5)));
}

TEST_CASE("run_stage with zero iterations leaves the state untouched") {
    const auto model = tiny_model(koh::DiscrepancyKind::None);
    const auto priors = standard_priors();
    train::TrainState state;
    state.params = train::init_from_priors(model, priors);
    state.m.setZero(state.params.layout->total);
    state.v.setZero(state.params.layout->total);
    const Eigen::VectorXd before = state.params.values;

    train::StageSpec spec;
    spec.name = "noop";
    spec.trainable_blocks = {"q_theta.mean"};
    spec.iterations = 0;
    train::run_stage(state, spec,
                     [](const grad::ParamVector&, util::Rng&) { return grad::GradResult{}; }, 1);
    CHECK(state.params.values == before);
    CHECK(state.iteration == 0);
    CHECK(state.completed_stages == 1);
}

TEST_CASE("adaptive ascent finds the maximum of a 1-D quadratic") {
    const auto model = tiny_model(koh::DiscrepancyKind::None);
    const auto priors = standard_priors();
    train::TrainState state;
    state.params = train::init_from_priors(model, priors);
    state.m.setZero(state.params.layout->total);
    state.v.setZero(state.params.layout->total);

    const auto& block = state.params.layout->block("q_theta.mean");
    const double target = 1.3;
    const auto objective = [&](const grad::ParamVector& params, util::Rng&) {
        grad::GradResult result;
        const double x = params.values[block.offset];
        result.estimate.value = -(x - target) * (x - target);
        result.grad.setZero(params.layout->total);
        result.grad[block.offset] = -2.0 * (x - target);
        return result;
    };

    train::StageSpec spec;
    spec.name = "quadratic";
    spec.trainable_blocks = {"q_theta.mean"};
    spec.learning_rate = 1e-2;
    spec.iterations = 2000;
    train::run_stage(state, spec, objective, 3);
    CHECK(std::abs(state.params.values[block.offset] - target) < 1e-3);
}

TEST_CASE("masked coordinates are bitwise untouched") {
    const auto model = tiny_model(koh::DiscrepancyKind::Additive);
    const auto data = tiny_data(3, 4, 17);
    const auto priors = standard_priors();

    train::TrainState state;
    state.params = train::init_from_priors(model, priors);
    state.m.setZero(state.params.layout->total);
    state.v.setZero(state.params.layout->total);
    const Eigen::VectorXd before = state.params.values;

    train::StageSpec spec;
    spec.name = "weights_only";
    spec.trainable_blocks = {"q_w_eta0.mean", "q_w_eta0.log_std"};
    spec.iterations = 25;
    spec.minibatch_field = 3;
    spec.minibatch_sim = 4;
    train::run_stage(state, spec, model, data, priors, 11);

    for (const auto& block : state.params.layout->blocks) {
        if (block.name.rfind("q_w_eta0", 0) == 0) {
            continue;
        }
        for (Eigen::Index k = block.offset; k < block.offset + block.len; ++k) {
            CHECK(state.params.values[k] == before[k]);
        }
    }
    // And the trained block did move.
    const auto& moved = state.params.layout->block("q_w_eta0.mean");
    CHECK(state.params.values.segment(moved.offset, moved.len) !=
          before.segment(moved.offset, moved.len));

    SUBCASE("unknown mask names are rejected") {
        train::StageSpec bad = spec;
        bad.trainable_blocks = {"nope"};
        CHECK_THROWS_AS(train::run_stage(state, bad, model, data, priors, 11), ConfigError);
    }
}

TEST_CASE("calibrate: empty schedule returns the priors; same seed reproduces") {
    const auto model = tiny_model(koh::DiscrepancyKind::Additive);
    const auto data = tiny_data(3, 4, 19);
    const auto priors = standard_priors();

    const auto empty = train::calibrate(model, data, {}, 5, priors);
    CHECK(empty.posterior.q_theta.mean == priors.theta.mean);
    CHECK(empty.posterior.q_theta.log_std == priors.theta.log_std);
    CHECK(empty.posterior.q_weights[0].mean.isZero(0.0));

    train::ScheduleOptions options;
    options.iterations = 40;
    options.minibatch_field = 2;
    options.minibatch_sim = 3;
    const auto schedule = train::default_schedule(model, options);
    const auto first = train::calibrate(model, data, schedule, 5, priors);
    const auto second = train::calibrate(model, data, schedule, 5, priors);
    CHECK(first.state.params.values == second.state.params.values);
    REQUIRE(first.trace.size() == second.trace.size());
    for (size_t i = 0; i < first.trace.size(); ++i) {
        CHECK(first.trace[i].elbo == second.trace[i].elbo);
        CHECK(first.trace[i].kl == second.trace[i].kl);
        CHECK(first.trace[i].iteration == second.trace[i].iteration);
    }
    CHECK(first.trace.size() == 160);
}

TEST_CASE("stochastic ascent improves the ELBO on a tiny problem") {
    bench::Illustrative1DProblem problem;
    problem.n = 2;
    problem.N = 2;
    problem.n_rf = 2;
    problem.noise_std = 0.1;
    problem.sigma_z = 0.1;

    int improved = 0;
    for (uint64_t seed = 1; seed <= 20; ++seed) {
        const auto draw = bench::make_illustrative_dataset(problem, seed);
        const auto model = bench::illustrative_model(problem, seed);
        const auto priors = bench::illustrative_priors(problem);

        train::ScheduleOptions options;
        options.iterations = 150;
        options.n_mc = 1;
        const auto schedule = train::default_schedule(model, options);

        const auto initial_params = train::init_from_priors(model, priors);
        const auto result = train::calibrate(model, draw.dataset, schedule, seed, priors);

        // Fixed evaluation noise for a fair before/after comparison.
        svi::VariationalPosterior q0;
        grad::unpack(initial_params, model, &q0, nullptr);
        util::Rng eval_rng(900 + seed);
        const auto bank = svi::make_eps_bank(q0, 64, eval_rng);
        const auto field_all = svi::all_indices(2);
        const auto sim_all = svi::all_indices(2);
        const auto before = grad::elbo_value_grad(model, draw.dataset, initial_params, priors,
                                                  64, field_all, sim_all, bank);
        const auto after = grad::elbo_value_grad(model, draw.dataset, result.state.params,
                                                 priors, 64, field_all, sim_all, bank);
        if (after.estimate.value >= before.estimate.value) {
            ++improved;
        }
    }
    CHECK(improved >= 19);
}

TEST_CASE("divergence raises after ten consecutive non-finite iterations") {
    const auto model = tiny_model(koh::DiscrepancyKind::None);
    const auto priors = standard_priors();
    train::TrainState state;
    state.params = train::init_from_priors(model, priors);
    state.m.setZero(state.params.layout->total);
    state.v.setZero(state.params.layout->total);

    const auto objective = [&](const grad::ParamVector& params, util::Rng&) {
        grad::GradResult result;
        result.estimate.value = std::numeric_limits<double>::quiet_NaN();
        result.grad.setZero(params.layout->total);
        return result;
    };
    train::StageSpec spec;
    spec.name = "nan";
    spec.trainable_blocks = {"q_theta.mean"};
    spec.iterations = 100;
    try {
        train::run_stage(state, spec, objective, 1);
        FAIL("expected DivergenceError");
    } catch (const train::DivergenceError& error) {
        CHECK(error.trace.size() == 10);
        CHECK(std::isnan(error.trace.back().elbo));
    }
}

TEST_CASE("pause and resume reproduce an uninterrupted run bit-for-bit") {
    const auto model = tiny_model(koh::DiscrepancyKind::Additive);
    const auto data = tiny_data(4, 5, 23);
    const auto priors = standard_priors();

    train::ScheduleOptions options;
    options.iterations = 30; // 4 stages x 30 = 120 total
    options.minibatch_field = 2;
    options.minibatch_sim = 3;
    const auto schedule = train::default_schedule(model, options);

    const auto full = train::calibrate(model, data, schedule, 13, priors);

    auto partial = train::calibrate(model, data, schedule, 13, priors, nullptr, nullptr, 50);
    CHECK(partial.state.iteration == 50);
    CHECK(partial.state.completed_stages == 1);
    const auto resumed =
        train::calibrate(model, data, schedule, 13, priors, nullptr, &partial.state);

    CHECK(resumed.state.iteration == full.state.iteration);
    CHECK(resumed.state.params.values == full.state.params.values);
    CHECK(resumed.state.m == full.state.m);
    CHECK(resumed.state.v == full.state.v);
}
