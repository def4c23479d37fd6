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

#include <vcal/vcal.h>

#include <CLI11.hpp>

#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>

namespace {

// 0 on success, 3 on divergence, 2 on any validation/input error.
int exit_code(vcal_status status) {
    if (status == VCAL_OK) {
        return 0;
    }
    if (status == VCAL_ERR_DIVERGED) {
        return 3;
    }
    return 2;
}

int report(vcal_status status) {
    if (status != VCAL_OK) {
        std::cerr << "error: " << vcal_last_error() << "\n";
    }
    return exit_code(status);
}

int run_generate(const std::string& problem, int64_t n, int64_t n_sim, uint64_t seed,
                 const std::string& out_dir) {
    const vcal_status status = vcal_generate(problem.c_str(), n, n_sim, seed, out_dir.c_str());
    if (status == VCAL_OK) {
        std::cout << "wrote field.csv, sim.csv, truth.csv to " << out_dir << "\n";
    }
    return report(status);
}

int run_calibrate(const std::string& config, const std::string& resume, int64_t stop_after) {
    vcal_run* run = nullptr;
    vcal_status status = vcal_run_create(config.c_str(), &run);
    if (status != VCAL_OK) {
        return report(status);
    }
    if (!resume.empty()) {
        status = vcal_run_resume(run, resume.c_str());
        if (status != VCAL_OK) {
            vcal_run_free(run);
            return report(status);
        }
        int32_t finished = 0;
        vcal_run_finished(run, &finished);
        if (finished != 0) {
            std::cout << "checkpoint already finished; nothing to do\n";
            vcal_run_free(run);
            return 0;
        }
    }
    status = vcal_run_execute(run, stop_after);
    if (status == VCAL_OK) {
        int32_t finished = 0;
        vcal_run_finished(run, &finished);
        std::cout << (finished != 0 ? "calibration finished\n"
                                    : "calibration paused; checkpoint written\n");
    }
    vcal_run_free(run);
    return report(status);
}

int run_evaluate(const std::string& posterior, const std::string& dataset,
                 const std::string& truth, bool oracle, const std::string& out) {
    const vcal_status status =
        vcal_evaluate(posterior.c_str(), dataset.c_str(), truth.empty() ? nullptr : truth.c_str(),
                      oracle ? 1 : 0, out.c_str());
    if (status == VCAL_OK) {
        std::ifstream in(out);
        std::cout << in.rdbuf();
    }
    return report(status);
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"vcal — variational calibration of computer models"};
    app.require_subcommand(1);

    auto* generate = app.add_subcommand("generate", "generate a benchmark dataset");
    std::string gen_problem;
    int64_t gen_n = 0;
    int64_t gen_nsim = 0;
    uint64_t gen_seed = 1;
    std::string gen_out;
    generate->add_option("--problem", gen_problem, "problem name (borehole, illustrative)")
        ->required();
    generate->add_option("--n", gen_n, "field observations (0 = problem default)");
    generate->add_option("--N", gen_nsim, "simulator runs (0 = problem default)");
    generate->add_option("--seed", gen_seed, "generator seed");
    generate->add_option("--out", gen_out, "output directory")->required();

    auto* calibrate = app.add_subcommand("calibrate", "run variational calibration");
    std::string cal_config;
    std::string cal_resume;
    int64_t cal_stop_after = 0;
    calibrate->add_option("--config", cal_config, "run configuration file")->required();
    calibrate->add_option("--resume", cal_resume, "checkpoint to continue from");
    calibrate->add_option("--stop-after", cal_stop_after,
                          "pause after this many total iterations (0 = run to completion)");

    auto* evaluate = app.add_subcommand("evaluate", "compute posterior metrics");
    std::string eval_posterior;
    std::string eval_dataset;
    std::string eval_truth;
    std::string eval_out = "metrics.csv";
    bool eval_oracle = false;
    evaluate->add_option("--posterior", eval_posterior, "posterior samples CSV")->required();
    evaluate->add_option("--dataset", eval_dataset, "dataset directory")->required();
    evaluate->add_option("--truth", eval_truth, "truth CSV (default: <dataset>/truth.csv)");
    evaluate->add_flag("--oracle", eval_oracle,
                       "compare against the analytic grid posterior (illustrative only)");
    evaluate->add_option("--out", eval_out, "metrics output CSV");

    CLI11_PARSE(app, argc, argv);

    if (generate->parsed()) {
        return run_generate(gen_problem, gen_n, gen_nsim, gen_seed, gen_out);
    }
    if (calibrate->parsed()) {
        return run_calibrate(cal_config, cal_resume, cal_stop_after);
    }
    return run_evaluate(eval_posterior, eval_dataset, eval_truth, eval_oracle, eval_out);
}
