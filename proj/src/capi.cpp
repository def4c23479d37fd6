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

#include "vcal/vcal.h"

#include "errors.hpp"
#include "io.hpp"
#include "run.hpp"
#include "trainer.hpp"

#include <exception>
#include <string>

namespace {

thread_local std::string g_last_error;

void clear_error() {
    g_last_error.clear();
}

vcal_status fail(vcal_status code, const std::string& message) {
    g_last_error = message;
    return code;
}

// Maps C++ exceptions onto status codes at the ABI boundary.
template <typename Fn>
vcal_status guarded(Fn&& fn) {
    clear_error();
    try {
        fn();
        return VCAL_OK;
    } catch (const vcal::train::DivergenceError& e) {
        return fail(VCAL_ERR_DIVERGED, e.what());
    } catch (const vcal::IoError& e) {
        return fail(VCAL_ERR_IO, e.what());
    } catch (const vcal::Error& e) {
        return fail(VCAL_ERR_INVALID, e.what());
    } catch (const std::exception& e) {
        return fail(VCAL_ERR_INTERNAL, e.what());
    } catch (...) {
        return fail(VCAL_ERR_INTERNAL, "unknown error");
    }
}

vcal_status require(bool condition, const char* message) {
    if (condition) {
        return VCAL_OK;
    }
    return fail(VCAL_ERR_INVALID, message);
}

} // namespace

struct vcal_dataset {
    vcal::koh::CalibrationDataset data;
};

struct vcal_run {
    vcal::run::CalibrateRun run;
};

extern "C" {

const char* vcal_version(void) {
    return "0.1.0";
}

const char* vcal_last_error(void) {
    return g_last_error.c_str();
}

vcal_status vcal_dataset_load(const char* dir, vcal_dataset** out) {
    clear_error();
    if (require(dir != nullptr && out != nullptr, "vcal_dataset_load: null argument") != VCAL_OK) {
        return VCAL_ERR_INVALID;
    }
    *out = nullptr;
    return guarded([&] {
        auto handle = new vcal_dataset{vcal::io::load_dataset(dir)};
        *out = handle;
    });
}

vcal_status vcal_dataset_dims(const vcal_dataset* data, int64_t* n_field, int64_t* n_sim,
                              int32_t* d1, int32_t* d2, int32_t* d_out) {
    clear_error();
    if (require(data != nullptr, "vcal_dataset_dims: null dataset") != VCAL_OK) {
        return VCAL_ERR_INVALID;
    }
    if (n_field != nullptr) {
        *n_field = data->data.n_field();
    }
    if (n_sim != nullptr) {
        *n_sim = data->data.n_sim();
    }
    if (d1 != nullptr) {
        *d1 = data->data.d1();
    }
    if (d2 != nullptr) {
        *d2 = data->data.d2();
    }
    if (d_out != nullptr) {
        *d_out = data->data.d_out();
    }
    return VCAL_OK;
}

void vcal_dataset_free(vcal_dataset* data) {
    delete data;
}

vcal_status vcal_generate(const char* problem, int64_t n_field, int64_t n_sim, uint64_t seed,
                          const char* out_dir) {
    clear_error();
    if (require(problem != nullptr && out_dir != nullptr, "vcal_generate: null argument") !=
        VCAL_OK) {
        return VCAL_ERR_INVALID;
    }
    return guarded([&] { vcal::run::generate(problem, n_field, n_sim, seed, out_dir); });
}

vcal_status vcal_run_create(const char* config_path, vcal_run** out) {
    clear_error();
    if (require(config_path != nullptr && out != nullptr, "vcal_run_create: null argument") !=
        VCAL_OK) {
        return VCAL_ERR_INVALID;
    }
    *out = nullptr;
    return guarded([&] {
        auto handle = new vcal_run{vcal::run::create_run(config_path)};
        *out = handle;
    });
}

vcal_status vcal_run_resume(vcal_run* run, const char* checkpoint_path) {
    clear_error();
    if (require(run != nullptr && checkpoint_path != nullptr,
                "vcal_run_resume: null argument") != VCAL_OK) {
        return VCAL_ERR_INVALID;
    }
    return guarded([&] { vcal::run::resume_run(run->run, checkpoint_path); });
}

vcal_status vcal_run_execute(vcal_run* run, int64_t stop_after) {
    clear_error();
    if (require(run != nullptr, "vcal_run_execute: null run") != VCAL_OK) {
        return VCAL_ERR_INVALID;
    }
    return guarded([&] { vcal::run::execute_run(run->run, stop_after); });
}

vcal_status vcal_run_finished(const vcal_run* run, int32_t* finished) {
    clear_error();
    if (require(run != nullptr && finished != nullptr, "vcal_run_finished: null argument") !=
        VCAL_OK) {
        return VCAL_ERR_INVALID;
    }
    *finished = run->run.finished ? 1 : 0;
    return VCAL_OK;
}

void vcal_run_free(vcal_run* run) {
    delete run;
}

vcal_status vcal_evaluate(const char* posterior_csv, const char* dataset_dir,
                          const char* truth_csv, int32_t with_oracle, const char* out_csv) {
    clear_error();
    if (require(posterior_csv != nullptr && dataset_dir != nullptr && out_csv != nullptr,
                "vcal_evaluate: null argument") != VCAL_OK) {
        return VCAL_ERR_INVALID;
    }
    return guarded([&] {
        vcal::run::evaluate(posterior_csv, dataset_dir, truth_csv ? truth_csv : "",
                            with_oracle != 0, out_csv);
    });
}

} // extern "C"
