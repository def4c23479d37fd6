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

#include "config.hpp"

#include "errors.hpp"
#include "io.hpp"

#include <cerrno>
#include <cstdlib>
#include <fstream>
#include <sstream>

namespace vcal::io {

namespace {

std::string trim(const std::string& text) {
    const auto first = text.find_first_not_of(" \t");
    if (first == std::string::npos) {
        return "";
    }
    const auto last = text.find_last_not_of(" \t");
    return text.substr(first, last - first + 1);
}

struct KeyValue {
    std::string section;
    std::string key;
    std::string value;
    int line = 0;
};

std::vector<KeyValue> read_entries(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw IoError("cannot open config " + path);
    }
    std::vector<KeyValue> entries;
    std::string section;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        const auto comment = line.find('#');
        if (comment != std::string::npos) {
            line = line.substr(0, comment);
        }
        const std::string trimmed = trim(line);
        if (trimmed.empty()) {
            continue;
        }
        if (trimmed.front() == '[') {
            if (trimmed.back() != ']') {
                throw ConfigError(path + ":" + std::to_string(line_no) +
                                  ": malformed section header '" + trimmed + "'");
            }
            section = trim(trimmed.substr(1, trimmed.size() - 2));
            continue;
        }
        const auto eq = trimmed.find('=');
        if (eq == std::string::npos) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key = value");
        }
        KeyValue kv;
        kv.section = section;
        kv.key = trim(trimmed.substr(0, eq));
        kv.value = trim(trimmed.substr(eq + 1));
        kv.line = line_no;
        if (kv.key.empty()) {
            throw ConfigError(path + ":" + std::to_string(line_no) + ": empty key");
        }
        entries.push_back(std::move(kv));
    }
    return entries;
}

[[noreturn]] void bad_value(const std::string& path, const KeyValue& kv, const char* type) {
    throw ConfigError(path + ":" + std::to_string(kv.line) + ": key '" + kv.key +
                      "' expects a " + type + ", got '" + kv.value + "'");
}

double as_double(const std::string& path, const KeyValue& kv) {
    errno = 0;
    char* end = nullptr;
    const double v = std::strtod(kv.value.c_str(), &end);
    if (end == kv.value.c_str() || *end != '\0' || errno == ERANGE) {
        bad_value(path, kv, "number");
    }
    return v;
}

int64_t as_int(const std::string& path, const KeyValue& kv) {
    errno = 0;
    char* end = nullptr;
    const long long v = std::strtoll(kv.value.c_str(), &end, 10);
    if (end == kv.value.c_str() || *end != '\0' || errno == ERANGE) {
        bad_value(path, kv, "integer");
    }
    return v;
}

uint64_t as_uint(const std::string& path, const KeyValue& kv) {
    errno = 0;
    char* end = nullptr;
    const unsigned long long v = std::strtoull(kv.value.c_str(), &end, 10);
    if (end == kv.value.c_str() || *end != '\0' || errno == ERANGE) {
        bad_value(path, kv, "non-negative integer");
    }
    return v;
}

bool as_bool(const std::string& path, const KeyValue& kv) {
    if (kv.value == "true") {
        return true;
    }
    if (kv.value == "false") {
        return false;
    }
    bad_value(path, kv, "boolean (true/false)");
}

std::vector<double> as_double_list(const std::string& path, const KeyValue& kv) {
    std::vector<double> out;
    std::stringstream stream(kv.value);
    std::string token;
    while (stream >> token) {
        KeyValue item = kv;
        item.value = token;
        out.push_back(as_double(path, item));
    }
    if (out.empty()) {
        bad_value(path, kv, "list of numbers");
    }
    return out;
}

std::vector<int> as_int_list_or_empty(const std::string& path, const KeyValue& kv) {
    std::vector<int> out;
    std::stringstream stream(kv.value);
    std::string token;
    while (stream >> token) {
        KeyValue item = kv;
        item.value = token;
        out.push_back(static_cast<int>(as_int(path, item)));
    }
    return out;
}

} // namespace

RunConfig parse_run_config(const std::string& path) {
    RunConfig cfg;
    bool saw_d1 = false, saw_d2 = false, saw_dataset = false, saw_out = false;
    bool saw_theta_mean = false, saw_theta_var = false;

    for (const auto& kv : read_entries(path)) {
        const std::string full = kv.section + "." + kv.key;
        if (full == "model.d1") {
            cfg.d1 = static_cast<int>(as_int(path, kv));
            saw_d1 = true;
        } else if (full == "model.d2") {
            cfg.d2 = static_cast<int>(as_int(path, kv));
            saw_d2 = true;
        } else if (full == "model.d_out") {
            cfg.d_out = static_cast<int>(as_int(path, kv));
        } else if (full == "model.n_rf") {
            cfg.n_rf = static_cast<int>(as_int(path, kv));
        } else if (full == "model.discrepancy") {
            if (kv.value != "none" && kv.value != "additive" && kv.value != "general") {
                bad_value(path, kv, "discrepancy mode (none/additive/general)");
            }
            cfg.discrepancy = kv.value;
        } else if (full == "model.hidden_dims") {
            cfg.hidden_dims = as_int_list_or_empty(path, kv);
        } else if (full == "model.concat_input") {
            cfg.concat_input = as_bool(path, kv);
        } else if (full == "model.seed") {
            cfg.model_seed = as_uint(path, kv);
        } else if (full == "prior.preset") {
            if (kv.value != "default") {
                bad_value(path, kv, "preset name ('default')");
            }
            cfg.preset_applied = true;
        } else if (full == "prior.theta_mean") {
            cfg.theta_mean = as_double_list(path, kv);
            saw_theta_mean = true;
        } else if (full == "prior.theta_var") {
            cfg.theta_var = as_double_list(path, kv);
            saw_theta_var = true;
        } else if (full == "prior.sigma_y") {
            cfg.sigma_y = as_double(path, kv);
        } else if (full == "prior.sigma_z") {
            cfg.sigma_z = as_double(path, kv);
        } else if (full == "prior.sigma_eta") {
            cfg.sigma_eta = as_double(path, kv);
        } else if (full == "prior.a_eta") {
            cfg.a_eta = as_double(path, kv);
        } else if (full == "prior.sigma_delta") {
            cfg.sigma_delta = as_double(path, kv);
        } else if (full == "prior.a_delta") {
            cfg.a_delta = as_double(path, kv);
        } else if (full == "prior.sigma_layer") {
            cfg.sigma_layer = as_double(path, kv);
        } else if (full == "prior.a_layer") {
            cfg.a_layer = as_double(path, kv);
        } else if (full == "training.seed") {
            cfg.seed = as_uint(path, kv);
        } else if (full == "training.learning_rate") {
            cfg.learning_rate = as_double(path, kv);
        } else if (full == "training.iterations") {
            cfg.iterations = as_int(path, kv);
        } else if (full == "training.minibatch_field") {
            cfg.minibatch_field = as_int(path, kv);
        } else if (full == "training.minibatch_sim") {
            cfg.minibatch_sim = as_int(path, kv);
        } else if (full == "training.n_mc") {
            cfg.n_mc = static_cast<int>(as_int(path, kv));
        } else if (full == "training.checkpoint_every") {
            cfg.checkpoint_every = as_int(path, kv);
        } else if (full == "training.standardize_outputs") {
            cfg.standardize_outputs = as_bool(path, kv);
        } else if (full == "training.posterior_samples") {
            cfg.posterior_samples = as_int(path, kv);
        } else if (full == "io.dataset_dir") {
            cfg.dataset_dir = kv.value;
            saw_dataset = true;
        } else if (full == "io.out_dir") {
            cfg.out_dir = kv.value;
            saw_out = true;
        } else {
            throw ConfigError(path + ":" + std::to_string(kv.line) + ": unknown key '" + full +
                              "'");
        }
    }

    if (!saw_d1 || !saw_d2) {
        throw ConfigError(path + ": model.d1 and model.d2 are required");
    }
    if (!saw_dataset || !saw_out) {
        throw ConfigError(path + ": io.dataset_dir and io.out_dir are required");
    }
    if (cfg.preset_applied) {
        if (!saw_theta_mean) {
            cfg.theta_mean.assign(static_cast<size_t>(cfg.d2), 0.5);
        }
        if (!saw_theta_var) {
            cfg.theta_var.assign(static_cast<size_t>(cfg.d2), 0.25);
        }
    } else if (!saw_theta_mean || !saw_theta_var) {
        throw ConfigError(path +
                          ": prior.theta_mean and prior.theta_var are required "
                          "(or set prior.preset = default)");
    }

    if (cfg.d1 < 1 || cfg.d2 < 1 || cfg.d_out < 1) {
        throw ConfigError(path + ": model dimensions must be >= 1");
    }
    if (cfg.n_rf < 2 || cfg.n_rf % 2 != 0) {
        throw ConfigError(path + ": model.n_rf must be an even integer >= 2");
    }
    if (cfg.theta_mean.size() != static_cast<size_t>(cfg.d2) ||
        cfg.theta_var.size() != static_cast<size_t>(cfg.d2)) {
        throw ConfigError(path + ": theta prior vectors must have length d2 = " +
                          std::to_string(cfg.d2));
    }
    for (double v : cfg.theta_var) {
        if (!(v > 0.0)) {
            throw ConfigError(path + ": theta_var entries must be > 0");
        }
    }
    for (double v : {cfg.sigma_y, cfg.sigma_z, cfg.sigma_eta, cfg.a_eta, cfg.sigma_delta,
                     cfg.a_delta, cfg.sigma_layer, cfg.a_layer, cfg.learning_rate}) {
        if (!(v > 0.0)) {
            throw ConfigError(path + ": scale and rate values must all be > 0");
        }
    }
    for (int h : cfg.hidden_dims) {
        if (h < 1) {
            throw ConfigError(path + ": hidden_dims entries must be >= 1");
        }
    }
    if (cfg.iterations < 0 || cfg.checkpoint_every < 0) {
        throw ConfigError(path + ": iteration counts must be >= 0");
    }
    if (cfg.minibatch_field < 1 || cfg.minibatch_sim < 1 || cfg.n_mc < 1 ||
        cfg.posterior_samples < 1) {
        throw ConfigError(path + ": batch sizes, n_mc and posterior_samples must be >= 1");
    }
    return cfg;
}

uint64_t config_hash(const RunConfig& config) {
    std::string canon;
    canon.reserve(512);
    auto add = [&](const std::string& key, const std::string& value) {
        canon += key;
        canon += '=';
        canon += value;
        canon += '\n';
    };
    add("d1", std::to_string(config.d1));
    add("d2", std::to_string(config.d2));
    add("d_out", std::to_string(config.d_out));
    add("n_rf", std::to_string(config.n_rf));
    add("discrepancy", config.discrepancy);
    {
        std::string dims;
        for (int h : config.hidden_dims) {
            dims += std::to_string(h) + " ";
        }
        add("hidden_dims", dims);
    }
    add("concat_input", config.concat_input ? "true" : "false");
    add("model_seed", std::to_string(config.model_seed));
    auto add_list = [&](const std::string& key, const std::vector<double>& values) {
        std::string text;
        for (double v : values) {
            text += format_double(v) + " ";
        }
        add(key, text);
    };
    add_list("theta_mean", config.theta_mean);
    add_list("theta_var", config.theta_var);
    add("sigma_y", format_double(config.sigma_y));
    add("sigma_z", format_double(config.sigma_z));
    add("sigma_eta", format_double(config.sigma_eta));
    add("a_eta", format_double(config.a_eta));
    add("sigma_delta", format_double(config.sigma_delta));
    add("a_delta", format_double(config.a_delta));
    add("sigma_layer", format_double(config.sigma_layer));
    add("a_layer", format_double(config.a_layer));
    add("seed", std::to_string(config.seed));
    add("learning_rate", format_double(config.learning_rate));
    add("iterations", std::to_string(config.iterations));
    add("minibatch_field", std::to_string(config.minibatch_field));
    add("minibatch_sim", std::to_string(config.minibatch_sim));
    add("n_mc", std::to_string(config.n_mc));
    add("standardize_outputs", config.standardize_outputs ? "true" : "false");
    add("posterior_samples", std::to_string(config.posterior_samples));

    // FNV-1a
    uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char ch : canon) {
        hash ^= ch;
        hash *= 0x100000001b3ULL;
    }
    return hash;
}

koh::ModelSpec model_spec_from(const RunConfig& config) {
    koh::ModelSpec spec;
    spec.d1 = config.d1;
    spec.d2 = config.d2;
    spec.d_out = config.d_out;
    spec.n_rf = config.n_rf;
    spec.seed = config.model_seed;
    spec.hidden_dims = config.hidden_dims;
    spec.concat_input = config.concat_input;
    if (config.discrepancy == "none") {
        spec.discrepancy = koh::DiscrepancyKind::None;
    } else if (config.discrepancy == "additive") {
        spec.discrepancy = koh::DiscrepancyKind::Additive;
    } else {
        spec.discrepancy = koh::DiscrepancyKind::General;
    }
    spec.emulator_kernel =
        rff::KernelParams::isotropic(config.sigma_eta, config.a_eta, config.d1 + config.d2);
    spec.layer_kernel = rff::KernelParams::isotropic(config.sigma_layer, config.a_layer, 1);
    const int disc_dim = spec.discrepancy == koh::DiscrepancyKind::General
                             ? config.d_out + config.d1
                             : config.d1;
    spec.disc_kernel =
        rff::KernelParams::isotropic(config.sigma_delta, config.a_delta, disc_dim);
    spec.noise.sigma_y = config.sigma_y;
    spec.noise.sigma_z = config.sigma_z;
    return spec;
}

svi::Priors priors_from(const RunConfig& config) {
    svi::Priors priors;
    priors.theta.mean.resize(config.d2);
    priors.theta.log_std.resize(config.d2);
    for (int d = 0; d < config.d2; ++d) {
        priors.theta.mean[d] = config.theta_mean[static_cast<size_t>(d)];
        priors.theta.log_std[d] = 0.5 * std::log(config.theta_var[static_cast<size_t>(d)]);
    }
    return priors;
}

std::vector<train::StageSpec> schedule_from(const RunConfig& config,
                                            const koh::CalibrationModel& model) {
    train::ScheduleOptions options;
    options.learning_rate = config.learning_rate;
    options.iterations = config.iterations;
    options.minibatch_field = config.minibatch_field;
    options.minibatch_sim = config.minibatch_sim;
    options.n_mc = config.n_mc;
    return train::default_schedule(model, options);
}

} // namespace vcal::io
