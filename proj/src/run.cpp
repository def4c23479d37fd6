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

#include "run.hpp"

#include "bench.hpp"
#include "errors.hpp"
#include "grad.hpp"
#include "io.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace vcal::run {

namespace {

std::vector<uint64_t> layer_seeds_of(const koh::CalibrationModel& model) {
    std::vector<uint64_t> seeds;
    for (const auto& layer : model.emulator_layers) {
        if (!layer.seed().has_value()) {
            throw ValidationError("cannot checkpoint a model with explicit frequencies");
        }
        seeds.push_back(*layer.seed());
    }
    if (model.disc_layer.has_value()) {
        if (!model.disc_layer->seed().has_value()) {
            throw ValidationError("cannot checkpoint a model with explicit frequencies");
        }
        seeds.push_back(*model.disc_layer->seed());
    }
    return seeds;
}

std::string trace_to_csv(const std::vector<train::TraceRecord>& trace, bool with_header) {
    std::string out;
    if (with_header) {
        out += "iteration,stage,elbo,kl,wall_ms\n";
    }
    for (const auto& record : trace) {
        out += std::to_string(record.iteration) + ',' + record.stage + ',' +
               io::format_double(record.elbo) + ',' + io::format_double(record.kl) + ',' +
               std::to_string(record.wall_ms) + '\n';
    }
    return out;
}

void flush_trace(const std::string& out_dir, const std::vector<train::TraceRecord>& trace,
                 bool resumed) {
    const std::string path = out_dir + "/trace.csv";
    std::string content;
    if (resumed && std::filesystem::exists(path)) {
        std::ifstream in(path);
        std::stringstream buffer;
        buffer << in.rdbuf();
        content = buffer.str();
        content += trace_to_csv(trace, false);
    } else {
        content = trace_to_csv(trace, true);
    }
    io::write_text_atomic(path, content);
}

Eigen::MatrixXd load_posterior_csv(const std::string& path, int expected_d2) {
    io::CsvTable table = io::read_csv(path);
    if (static_cast<int>(table.header.size()) != expected_d2) {
        throw IoError(path + ": has " + std::to_string(table.header.size()) +
                      " columns, dataset implies d2 = " + std::to_string(expected_d2));
    }
    for (int d = 0; d < expected_d2; ++d) {
        if (table.header[static_cast<size_t>(d)] != "theta_" + std::to_string(d + 1)) {
            throw IoError(path + ": column " + std::to_string(d + 1) +
                          " must be named theta_" + std::to_string(d + 1));
        }
    }
    if (table.values.rows() < 1) {
        throw IoError(path + ": no posterior samples");
    }
    return table.values;
}

} // namespace

void generate(const std::string& problem, int64_t n, int64_t n_sim, uint64_t seed,
              const std::string& out_dir) {
    std::filesystem::create_directories(out_dir);
    io::TruthInfo truth;
    truth.seed = seed;
    if (problem == "borehole") {
        bench::BoreholeProblem spec;
        spec.seed = seed;
        if (n > 0) {
            spec.n = n;
        }
        if (n_sim > 0) {
            spec.N = n_sim;
        }
        koh::CalibrationDataset data = bench::make_borehole_dataset(spec);
        io::save_dataset(out_dir, data);
        truth.problem = "borehole";
        truth.theta_true = spec.theta_true;
    } else if (problem == "illustrative") {
        bench::Illustrative1DProblem spec;
        if (n > 0) {
            spec.n = n;
        }
        if (n_sim > 0) {
            spec.N = n_sim;
        }
        bench::IllustrativeDraw draw = bench::make_illustrative_dataset(spec, seed);
        io::save_dataset(out_dir, draw.dataset);
        truth.problem = "illustrative";
        truth.theta_true = draw.theta_true;
    } else {
        throw ValidationError("unknown problem '" + problem +
                              "'; valid names: borehole, illustrative");
    }
    io::write_truth(out_dir + "/truth.csv", truth);
}

CalibrateRun create_run(const std::string& config_path) {
    CalibrateRun run;
    run.config = io::parse_run_config(config_path);
    run.data = io::load_dataset(run.config.dataset_dir);
    if (run.data.d1() != run.config.d1 || run.data.d2() != run.config.d2 ||
        run.data.d_out() != run.config.d_out) {
        throw ConfigError("dataset dimensions (d1=" + std::to_string(run.data.d1()) +
                          ", d2=" + std::to_string(run.data.d2()) +
                          ", d_out=" + std::to_string(run.data.d_out()) +
                          ") do not match the configuration");
    }
    if (run.config.standardize_outputs) {
        koh::standardize_outputs(run.data);
    }
    run.model = koh::build_model(io::model_spec_from(run.config));
    run.priors = io::priors_from(run.config);
    run.schedule = io::schedule_from(run.config, run.model);
    for (const auto& stage : run.schedule) {
        run.total_iterations += stage.iterations;
    }
    std::filesystem::create_directories(run.config.out_dir);
    return run;
}

void resume_run(CalibrateRun& run, const std::string& checkpoint_path) {
    const io::Checkpoint checkpoint = io::load_checkpoint(checkpoint_path);
    if (checkpoint.config_hash != io::config_hash(run.config)) {
        throw ConfigError(checkpoint_path +
                          ": checkpoint was created with a different configuration");
    }
    if (checkpoint.train_seed != run.config.seed) {
        throw ConfigError(checkpoint_path + ": checkpoint training seed differs from config");
    }
    if (checkpoint.layer_seeds != layer_seeds_of(run.model)) {
        throw ConfigError(checkpoint_path + ": checkpoint layer seeds differ from the model");
    }
    auto layout = grad::ParamLayout::for_model(run.model);
    if (checkpoint.params.size() != layout->total || checkpoint.m.size() != layout->total ||
        checkpoint.v.size() != layout->total) {
        throw ConfigError(checkpoint_path + ": parameter count does not match the model");
    }

    train::TrainState state;
    state.params.values = checkpoint.params;
    state.params.layout = layout;
    state.m = checkpoint.m;
    state.v = checkpoint.v;
    state.adam_step = checkpoint.adam_step;
    state.iteration = checkpoint.iteration;
    state.completed_stages = checkpoint.completed_stages;
    state.iter_in_stage = checkpoint.iter_in_stage;
    run.resume_state = std::move(state);
    run.finished = checkpoint.finished;
}

bool execute_run(CalibrateRun& run, int64_t stop_after_iterations) {
    if (run.finished) {
        return true; // nothing left to do
    }
    const uint64_t cfg_hash = io::config_hash(run.config);
    const std::vector<uint64_t> seeds = layer_seeds_of(run.model);
    const std::string ckpt_path = run.config.out_dir + "/checkpoint.bin";

    train::RunHooks hooks;
    hooks.checkpoint_every = run.config.checkpoint_every;
    hooks.on_checkpoint = [&](const train::TrainState& state) {
        io::save_checkpoint(ckpt_path, io::checkpoint_from_state(state, cfg_hash,
                                                                 run.config.seed, seeds, false));
    };

    const bool resumed = run.resume_state.has_value();
    train::CalibrationResult result;
    try {
        result = train::calibrate(run.model, run.data, run.schedule, run.config.seed, run.priors,
                                  &hooks, resumed ? &*run.resume_state : nullptr,
                                  stop_after_iterations);
    } catch (const train::DivergenceError& error) {
        flush_trace(run.config.out_dir, error.trace, resumed);
        throw;
    }

    flush_trace(run.config.out_dir, result.trace, resumed);
    const bool completed =
        result.state.completed_stages == static_cast<int>(run.schedule.size());
    io::save_checkpoint(ckpt_path, io::checkpoint_from_state(result.state, cfg_hash,
                                                             run.config.seed, seeds, completed));

    if (completed) {
        Eigen::MatrixXd samples = svi::posterior_samples(
            result.posterior, run.config.posterior_samples, run.config.seed);
        std::vector<std::string> header;
        for (int d = 1; d <= run.model.d2; ++d) {
            header.push_back("theta_" + std::to_string(d));
        }
        io::write_csv(run.config.out_dir + "/posterior_samples.csv", header, samples);
        run.finished = true;
    }
    run.resume_state = std::move(result.state);
    return completed;
}

void evaluate(const std::string& posterior_csv, const std::string& dataset_dir,
              const std::string& truth_csv, bool with_oracle, const std::string& out_csv) {
    const koh::CalibrationDataset data = io::load_dataset(dataset_dir);
    const std::string truth_path =
        truth_csv.empty() ? dataset_dir + "/truth.csv" : truth_csv;
    if (!std::filesystem::exists(truth_path)) {
        throw IoError("cannot determine the simulator: no truth file at " + truth_path +
                      " (pass --truth explicitly)");
    }
    const io::TruthInfo truth = io::read_truth(truth_path);
    const Eigen::MatrixXd samples = load_posterior_csv(posterior_csv, data.d2());

    bench::EtaFn eta_fn;
    bench::Illustrative1DProblem illustrative;
    if (truth.problem == "borehole") {
        // Gaussian posterior tails may poke slightly outside the unit cube;
        // clamp samples onto the simulator's domain for metric evaluation.
        eta_fn = [](const Eigen::VectorXd& x, const Eigen::VectorXd& t) {
            Eigen::VectorXd tc = t.cwiseMax(0.0).cwiseMin(1.0);
            Eigen::VectorXd out(1);
            out[0] = bench::borehole_eta(x, tc);
            return out;
        };
    } else if (truth.problem == "illustrative") {
        const koh::CalibrationModel model = bench::illustrative_model(illustrative, truth.seed);
        const auto weights = bench::illustrative_generator_weights(illustrative, truth.seed);
        eta_fn = [model, w_eta = weights.first](const Eigen::VectorXd& x,
                                                const Eigen::VectorXd& t) {
            return koh::emulator_eval(model, {w_eta}, x, t);
        };
    } else {
        throw ValidationError("unknown problem '" + truth.problem + "' in " + truth_path);
    }

    std::string out = "metric,value\n";
    const double mse = bench::mse_metric(eta_fn, data.X, data.Y, samples);
    out += "mse," + io::format_double(mse) + '\n';

    const Eigen::VectorXd mean = samples.colwise().mean();
    for (int d = 0; d < data.d2(); ++d) {
        out += "theta_mean_" + std::to_string(d + 1) + ',' + io::format_double(mean[d]) + '\n';
    }
    for (int d = 0; d < data.d2(); ++d) {
        const double var =
            (samples.col(d).array() - mean[d]).square().sum() /
            std::max<double>(1.0, static_cast<double>(samples.rows() - 1));
        out += "theta_std_" + std::to_string(d + 1) + ',' +
               io::format_double(std::sqrt(var)) + '\n';
    }
    if (truth.theta_true.size() == data.d2()) {
        for (int d = 0; d < data.d2(); ++d) {
            out += "abs_error_" + std::to_string(d + 1) + ',' +
                   io::format_double(std::abs(mean[d] - truth.theta_true[d])) + '\n';
        }
    }

    if (with_oracle) {
        if (truth.problem != "illustrative") {
            throw ValidationError("--oracle is available only for the illustrative problem");
        }
        const koh::CalibrationModel model = bench::illustrative_model(illustrative, truth.seed);
        const svi::Priors priors = bench::illustrative_priors(illustrative);
        const bench::ThetaGrid grid = bench::default_theta_grid(priors);
        const bench::GridPosterior posterior =
            bench::analytic_theta_posterior(model, data, grid, priors);

        const Eigen::Index bins = posterior.grid.rows();
        const double width = grid.cell_volume;
        const double lo = posterior.grid(0, 0) - 0.5 * width;
        Eigen::VectorXd counts = Eigen::VectorXd::Zero(bins);
        for (Eigen::Index s = 0; s < samples.rows(); ++s) {
            auto bin = static_cast<Eigen::Index>(std::floor((samples(s, 0) - lo) / width));
            bin = std::clamp<Eigen::Index>(bin, 0, bins - 1);
            counts[bin] += 1.0;
        }
        counts /= static_cast<double>(samples.rows());
        double tv = 0.0;
        for (Eigen::Index k = 0; k < bins; ++k) {
            tv += std::abs(counts[k] - posterior.density[k] * width);
        }
        tv *= 0.5;
        out += "tv_distance," + io::format_double(tv) + '\n';
    }

    io::write_text_atomic(out_csv, out);
}

} // namespace vcal::run
