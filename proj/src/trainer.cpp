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

#include "trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>

namespace vcal::train {

namespace {

constexpr uint64_t kStageStreamTag = 0x57a6e5ULL;
constexpr int kMaxConsecutiveNonFinite = 10;

std::vector<uint8_t> build_mask(const grad::ParamLayout& layout,
                                const std::vector<std::string>& blocks) {
    std::vector<uint8_t> mask(static_cast<size_t>(layout.total), 0);
    for (const auto& name : blocks) {
        const auto& b = layout.block(name); // throws on unknown names
        for (Eigen::Index k = b.offset; k < b.offset + b.len; ++k) {
            mask[static_cast<size_t>(k)] = 1;
        }
    }
    return mask;
}

} // namespace

void adam_ascend(Eigen::VectorXd& params, Eigen::VectorXd& m, Eigen::VectorXd& v,
                 const Eigen::VectorXd& grad, const std::vector<uint8_t>& mask, int64_t step,
                 double learning_rate, const AdamParams& adam) {
    if (params.size() != grad.size() || params.size() != m.size() || params.size() != v.size() ||
        static_cast<Eigen::Index>(mask.size()) != params.size()) {
        throw ShapeError("adam_ascend: vector lengths disagree");
    }
    const double m_corr = 1.0 - std::pow(adam.beta1, static_cast<double>(step));
    const double v_corr = 1.0 - std::pow(adam.beta2, static_cast<double>(step));
    for (Eigen::Index k = 0; k < params.size(); ++k) {
        if (!mask[static_cast<size_t>(k)]) {
            continue;
        }
        m[k] = adam.beta1 * m[k] + (1.0 - adam.beta1) * grad[k];
        v[k] = adam.beta2 * v[k] + (1.0 - adam.beta2) * grad[k] * grad[k];
        const double m_hat = m[k] / m_corr;
        const double v_hat = v[k] / v_corr;
        params[k] += learning_rate * m_hat / (std::sqrt(v_hat) + adam.epsilon);
    }
}

std::vector<StageSpec> default_schedule(const koh::CalibrationModel& model,
                                        const ScheduleOptions& options) {
    const auto layout = grad::ParamLayout::for_model(model);

    std::vector<std::string> emulator_factors;
    std::vector<std::string> emulator_hypers;
    std::vector<std::string> all_factors;
    std::vector<std::string> everything = layout->names();
    for (const auto& name : everything) {
        if (name.rfind("q_w_eta", 0) == 0) {
            emulator_factors.push_back(name);
        }
        if (name.rfind("q_w_", 0) == 0 || name.rfind("q_theta", 0) == 0) {
            all_factors.push_back(name);
        }
        if (name.rfind("eta", 0) == 0) {
            emulator_hypers.push_back(name);
        }
    }

    StageSpec base;
    base.learning_rate = options.learning_rate;
    base.iterations = options.iterations;
    base.minibatch_field = options.minibatch_field;
    base.minibatch_sim = options.minibatch_sim;
    base.n_mc = options.n_mc;

    StageSpec s1a = base;
    s1a.name = "sim_weights";
    s1a.trainable_blocks = emulator_factors;

    StageSpec s1b = base;
    s1b.name = "sim_joint";
    s1b.trainable_blocks = emulator_factors;
    s1b.trainable_blocks.push_back("log_sigma_z");
    s1b.trainable_blocks.insert(s1b.trainable_blocks.end(), emulator_hypers.begin(),
                                emulator_hypers.end());
    s1b.learning_rate = options.learning_rate / 10.0;

    StageSpec s2a = base;
    s2a.name = "field_weights";
    s2a.trainable_blocks = all_factors;

    StageSpec s2b = base;
    s2b.name = "field_joint";
    s2b.trainable_blocks = everything;
    s2b.learning_rate = options.learning_rate / 10.0;

    return {s1a, s1b, s2a, s2b};
}

grad::ParamVector init_from_priors(const koh::CalibrationModel& model, const svi::Priors& priors) {
    const auto posterior = svi::VariationalPosterior::prior_initialized(model, priors.theta);
    return grad::pack(model, posterior);
}

Objective elbo_objective(const koh::CalibrationModel& model, const koh::CalibrationDataset& data,
                         const svi::Priors& priors, const StageSpec& spec) {
    const int64_t m_field = std::min<int64_t>(spec.minibatch_field, data.n_field());
    const int64_t m_sim = std::min<int64_t>(spec.minibatch_sim, data.n_sim());
    if (m_field < 1 || m_sim < 1) {
        throw ValidationError("elbo_objective: minibatch sizes must be >= 1");
    }
    const int n_mc = spec.n_mc;
    return [&model, &data, priors, m_field, m_sim, n_mc](const grad::ParamVector& params,
                                                         util::Rng& rng) {
        // Draw order is fixed: field indices, simulator indices, eps bank.
        std::vector<int64_t> field_idx = rng.sample_without_replacement(data.n_field(), m_field);
        std::vector<int64_t> sim_idx = rng.sample_without_replacement(data.n_sim(), m_sim);
        svi::VariationalPosterior posterior;
        grad::unpack(params, model, &posterior, nullptr);
        svi::EpsBank eps = svi::make_eps_bank(posterior, n_mc, rng);
        return grad::elbo_value_grad(model, data, params, priors, n_mc, field_idx, sim_idx, eps);
    };
}

void run_stage(TrainState& state, const StageSpec& spec, const Objective& objective,
               uint64_t seed, const RunHooks* hooks, int64_t stop_after_global) {
    if (spec.iterations < 0) {
        throw ValidationError("run_stage: iterations must be >= 0");
    }
    if (!(spec.learning_rate > 0.0)) {
        throw ValidationError("run_stage: learning rate must be > 0");
    }
    const auto& layout = *state.params.layout;
    const std::vector<uint8_t> mask = build_mask(layout, spec.trainable_blocks);
    const int stage_index = state.completed_stages;

    if (state.iter_in_stage == 0) {
        // Fresh stage: the trainable set changed, start the moments over.
        state.m.setZero(layout.total);
        state.v.setZero(layout.total);
        state.adam_step = 0;
    }

    int consecutive_bad = 0;
    for (int64_t it = state.iter_in_stage; it < spec.iterations; ++it) {
        if (stop_after_global > 0 && state.iteration >= stop_after_global) {
            return; // paused; state records the exact position
        }
        const auto started = std::chrono::steady_clock::now();
        util::Rng rng = util::Rng::keyed(
            seed, {kStageStreamTag, static_cast<uint64_t>(stage_index), static_cast<uint64_t>(it)});

        bool bad = false;
        grad::GradResult result;
        try {
            result = objective(state.params, rng);
        } catch (const NonFiniteError&) {
            bad = true;
        }
        if (!bad && !std::isfinite(result.estimate.value)) {
            bad = true;
        }

        if (!bad) {
            consecutive_bad = 0;
            state.adam_step += 1;
            adam_ascend(state.params.values, state.m, state.v, result.grad, mask,
                        state.adam_step, spec.learning_rate);
        } else {
            ++consecutive_bad;
        }

        state.iteration += 1;
        state.iter_in_stage = it + 1;

        const auto elapsed = std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - started)
                                 .count();
        TraceRecord record;
        record.iteration = state.iteration;
        record.stage = spec.name;
        record.elbo = bad ? std::numeric_limits<double>::quiet_NaN() : result.estimate.value;
        record.kl = bad ? std::numeric_limits<double>::quiet_NaN() : result.estimate.kl;
        record.wall_ms = elapsed;
        state.trace.push_back(std::move(record));

        if (consecutive_bad >= kMaxConsecutiveNonFinite) {
            throw DivergenceError("objective non-finite for " +
                                      std::to_string(kMaxConsecutiveNonFinite) +
                                      " consecutive iterations in stage '" + spec.name + "'",
                                  state.trace);
        }

        if (hooks != nullptr && hooks->checkpoint_every > 0 && hooks->on_checkpoint &&
            state.iteration % hooks->checkpoint_every == 0) {
            hooks->on_checkpoint(state);
        }
    }
    state.completed_stages += 1;
    state.iter_in_stage = 0;
}

void run_stage(TrainState& state, const StageSpec& spec, const koh::CalibrationModel& model,
               const koh::CalibrationDataset& data, const svi::Priors& priors, uint64_t seed,
               const RunHooks* hooks) {
    run_stage(state, spec, elbo_objective(model, data, priors, spec), seed, hooks, 0);
}

CalibrationResult calibrate(const koh::CalibrationModel& model,
                            const koh::CalibrationDataset& data,
                            const std::vector<StageSpec>& schedule, uint64_t seed,
                            const svi::Priors& priors, const RunHooks* hooks,
                            const TrainState* resume_from, int64_t stop_after_iterations) {
    TrainState state;
    if (resume_from != nullptr) {
        state = *resume_from;
    } else {
        state.params = init_from_priors(model, priors);
        state.m.setZero(state.params.layout->total);
        state.v.setZero(state.params.layout->total);
    }

    for (size_t s = static_cast<size_t>(state.completed_stages); s < schedule.size(); ++s) {
        if (stop_after_iterations > 0 && state.iteration >= stop_after_iterations) {
            break;
        }
        const auto objective = elbo_objective(model, data, priors, schedule[s]);
        run_stage(state, schedule[s], objective, seed, hooks, stop_after_iterations);
        if (state.completed_stages == static_cast<int>(s)) {
            break; // paused mid-stage by stop_after_iterations
        }
    }

    CalibrationResult result;
    grad::unpack(state.params, model, &result.posterior, &result.hypers);
    result.trace = state.trace;
    result.state = std::move(state);
    return result;
}

} // namespace vcal::train
