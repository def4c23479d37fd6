/* Licensed under the Apache License, Version 2.0 (the "License"); you
 * may not use this file except in compliance with the License.  You
 * may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or
 * implied.  See the License for the specific language governing
 * permissions and limitations under the License.
 */

/* vcal — scalable variational calibration of black-box computer models.
 *
 * C interface to the calibration engine: opaque handles, integer status
 * codes, and a thread-local error message. All heavy lifting (random-feature
 * GP emulators, stochastic variational inference, benchmark generators)
 * lives behind this boundary.
 */

#ifndef VCAL_VCAL_H
#define VCAL_VCAL_H

#include <stdint.h>

#ifdef __cplusplus
extern "C" {
#endif

#ifndef VCAL_API
#if defined(_WIN32)
#define VCAL_API __declspec(dllexport)
#else
#define VCAL_API __attribute__((visibility("default")))
#endif
#endif

typedef int32_t vcal_status;

enum {
    VCAL_OK = 0,
    VCAL_ERR_INVALID = 1,  /* bad argument, configuration or data shape */
    VCAL_ERR_IO = 2,       /* file open/parse/write failure */
    VCAL_ERR_DIVERGED = 3, /* optimization diverged; trace has been flushed */
    VCAL_ERR_INTERNAL = 4
};

VCAL_API const char* vcal_version(void);

/* Message describing the most recent failure on this thread; empty string
 * when the last call succeeded. The pointer stays valid until the next vcal
 * call on the same thread. */
VCAL_API const char* vcal_last_error(void);

/* ---- datasets ---------------------------------------------------------- */

typedef struct vcal_dataset vcal_dataset;

/* Loads field.csv / sim.csv from a directory. */
VCAL_API vcal_status vcal_dataset_load(const char* dir, vcal_dataset** out);
VCAL_API vcal_status vcal_dataset_dims(const vcal_dataset* data, int64_t* n_field,
                                       int64_t* n_sim, int32_t* d1, int32_t* d2,
                                       int32_t* d_out);
VCAL_API void vcal_dataset_free(vcal_dataset* data);

/* ---- benchmark data generation ----------------------------------------- */

/* problem: "borehole" or "illustrative". Non-positive n_field / n_sim select
 * the problem defaults. Writes field.csv, sim.csv and truth.csv. */
VCAL_API vcal_status vcal_generate(const char* problem, int64_t n_field, int64_t n_sim,
                                   uint64_t seed, const char* out_dir);

/* ---- calibration -------------------------------------------------------- */

typedef struct vcal_run vcal_run;

/* Parses a config file, loads the dataset and builds the model. */
VCAL_API vcal_status vcal_run_create(const char* config_path, vcal_run** out);

/* Continues from a checkpoint written by a previous execution of the same
 * configuration. */
VCAL_API vcal_status vcal_run_resume(vcal_run* run, const char* checkpoint_path);

/* Trains, writing trace.csv, checkpoint.bin and (on completion)
 * posterior_samples.csv into the configured output directory. A positive
 * stop_after pauses once that many total iterations have run. */
VCAL_API vcal_status vcal_run_execute(vcal_run* run, int64_t stop_after);

/* Sets *finished to 1 once the whole schedule has completed. */
VCAL_API vcal_status vcal_run_finished(const vcal_run* run, int32_t* finished);

VCAL_API void vcal_run_free(vcal_run* run);

/* ---- evaluation ---------------------------------------------------------- */

/* Writes posterior metrics to out_csv. truth_csv may be NULL, in which case
 * <dataset_dir>/truth.csv is used. with_oracle != 0 adds the total-variation
 * distance against the analytic grid posterior (illustrative problem only). */
VCAL_API vcal_status vcal_evaluate(const char* posterior_csv, const char* dataset_dir,
                                   const char* truth_csv, int32_t with_oracle,
                                   const char* out_csv);

#ifdef __cplusplus
}
#endif

#endif /* VCAL_VCAL_H */
