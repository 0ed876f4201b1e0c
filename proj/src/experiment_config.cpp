#include "flatmtl/experiment_config.hpp"

#include "flatmtl/errors.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace flatmtl {

namespace {

double parse_double(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("trailing characters");
        return v;
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': cannot parse '" + value +
                                    "' as a number");
    }
}

std::size_t parse_size(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(value, &pos);
        if (pos != value.size() || v < 0) throw std::invalid_argument("bad");
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': cannot parse '" + value +
                                    "' as a non-negative integer");
    }
}

std::uint64_t parse_u64(const std::string& key, const std::string& value) {
    try {
        std::size_t pos = 0;
        const unsigned long long v = std::stoull(value, &pos);
        if (pos != value.size()) throw std::invalid_argument("bad");
        return static_cast<std::uint64_t>(v);
    } catch (const std::exception&) {
        throw std::invalid_argument("config key '" + key + "': cannot parse '" + value +
                                    "' as an unsigned integer");
    }
}

bool parse_bool(const std::string& key, const std::string& value) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + value +
                                "' as a boolean");
}

std::string format_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string format_list(const std::vector<double>& xs) {
    std::string out;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        if (i) out += ',';
        out += format_double(xs[i]);
    }
    return out;
}

struct KeyDef {
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
    std::function<std::string(const ExperimentConfig&)> get;
};

const std::map<std::string, KeyDef>& key_table() {
    static const std::map<std::string, KeyDef> table = [] {
        std::map<std::string, KeyDef> t;
        auto str = [&t](const std::string& key, std::string ExperimentConfig::*field) {
            t[key] = KeyDef{[field](ExperimentConfig& c, const std::string&,
                                    const std::string& v) { c.*field = v; },
                            [field](const ExperimentConfig& c) { return c.*field; }};
        };
        auto dbl = [&t](const std::string& key, double ExperimentConfig::*field) {
            t[key] = KeyDef{[field](ExperimentConfig& c, const std::string& k,
                                    const std::string& v) { c.*field = parse_double(k, v); },
                            [field](const ExperimentConfig& c) { return format_double(c.*field); }};
        };
        auto sz = [&t](const std::string& key, std::size_t ExperimentConfig::*field) {
            t[key] = KeyDef{[field](ExperimentConfig& c, const std::string& k,
                                    const std::string& v) { c.*field = parse_size(k, v); },
                            [field](const ExperimentConfig& c) { return std::to_string(c.*field); }};
        };
        auto u64 = [&t](const std::string& key, std::uint64_t ExperimentConfig::*field) {
            t[key] = KeyDef{[field](ExperimentConfig& c, const std::string& k,
                                    const std::string& v) { c.*field = parse_u64(k, v); },
                            [field](const ExperimentConfig& c) { return std::to_string(c.*field); }};
        };
        auto bol = [&t](const std::string& key, bool ExperimentConfig::*field) {
            t[key] = KeyDef{[field](ExperimentConfig& c, const std::string& k,
                                    const std::string& v) { c.*field = parse_bool(k, v); },
                            [field](const ExperimentConfig& c) {
                                return c.*field ? std::string("true") : std::string("false");
                            }};
        };
        auto dlist = [&t](const std::string& key, std::vector<double> ExperimentConfig::*field) {
            t[key] = KeyDef{[field](ExperimentConfig& c, const std::string&,
                                    const std::string& v) { c.*field = parse_double_list(v); },
                            [field](const ExperimentConfig& c) { return format_list(c.*field); }};
        };

        str("problem", &ExperimentConfig::problem);
        str("method", &ExperimentConfig::method);
        str("out", &ExperimentConfig::out_dir);
        str("run-id", &ExperimentConfig::run_id);
        bol("force", &ExperimentConfig::force);
        dbl("rho", &ExperimentConfig::rho);
        dbl("rho-ns", &ExperimentConfig::rho_ns);
        bol("adaptive", &ExperimentConfig::adaptive);
        dbl("lr", &ExperimentConfig::lr);
        str("lr-schedule", &ExperimentConfig::lr_schedule);
        dbl("lr-decay-factor", &ExperimentConfig::lr_decay_factor);
        sz("lr-decay-every", &ExperimentConfig::lr_decay_every);
        dbl("momentum", &ExperimentConfig::momentum);
        sz("epochs", &ExperimentConfig::epochs);
        sz("batch-size", &ExperimentConfig::batch_size);
        u64("seed", &ExperimentConfig::seed);
        sz("eval-every", &ExperimentConfig::eval_every);
        sz("steps-per-epoch", &ExperimentConfig::steps_per_epoch);
        bol("per-task-batches", &ExperimentConfig::per_task_batches);
        dbl("cagrad-c", &ExperimentConfig::cagrad_c);
        sz("solver-max-iters", &ExperimentConfig::solver_max_iters);
        dbl("solver-tol", &ExperimentConfig::solver_tol);
        dlist("sharpness-rhos", &ExperimentConfig::sharpness_rhos);
        dlist("probe-radii", &ExperimentConfig::probe_radii);
        sz("samples-per-radius", &ExperimentConfig::samples_per_radius);
        dbl("surface-extent", &ExperimentConfig::surface_extent);
        sz("surface-resolution", &ExperimentConfig::surface_resolution);
        sz("sharpness-steps", &ExperimentConfig::sharpness_steps);
        sz("sharpness-restarts", &ExperimentConfig::sharpness_restarts);
        bol("probe-shared-only", &ExperimentConfig::probe_shared_only);
        u64("data-seed", &ExperimentConfig::data_seed);
        sz("tv-shared-dim", &ExperimentConfig::tv_shared_dim);
        dbl("tv-wide-curvature", &ExperimentConfig::tv_wide_curvature);
        dbl("tv-narrow-curvature", &ExperimentConfig::tv_narrow_curvature);
        dbl("tv-narrow-radius", &ExperimentConfig::tv_narrow_radius);
        dbl("tv-init-radius", &ExperimentConfig::tv_init_radius);
        sz("synth-samples", &ExperimentConfig::synth_samples);
        sz("synth-input-dim", &ExperimentConfig::synth_input_dim);
        dbl("synth-noise", &ExperimentConfig::synth_noise);
        dbl("synth-separation", &ExperimentConfig::synth_separation);
        dbl("synth-flip-prob", &ExperimentConfig::synth_flip_prob);
        dbl("synth-label-noise", &ExperimentConfig::synth_label_noise);
        str("mlp-hidden", &ExperimentConfig::mlp_hidden);
        dbl("mlp-init-scale", &ExperimentConfig::mlp_init_scale);
        sz("quad-dim", &ExperimentConfig::quad_dim);
        sz("quad-tasks", &ExperimentConfig::quad_tasks);
        str("idx-images-a", &ExperimentConfig::idx_images_a);
        str("idx-labels-a", &ExperimentConfig::idx_labels_a);
        str("idx-images-b", &ExperimentConfig::idx_images_b);
        str("idx-labels-b", &ExperimentConfig::idx_labels_b);
        sz("idx-pairs", &ExperimentConfig::idx_pairs);
        sz("idx-eval-pairs", &ExperimentConfig::idx_eval_pairs);
        sz("idx-canvas", &ExperimentConfig::idx_canvas);
        return t;
    }();
    return table;
}

} // namespace

std::vector<double> parse_double_list(const std::string& text) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(parse_double("list", item));
    }
    return out;
}

std::vector<std::size_t> parse_size_list(const std::string& text) {
    std::vector<std::size_t> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        out.push_back(parse_size("list", item));
    }
    return out;
}

void ExperimentConfig::set(const std::string& key, const std::string& value) {
    const auto& table = key_table();
    auto it = table.find(key);
    if (it == table.end()) {
        throw std::invalid_argument("unknown config key '" + key + "'");
    }
    it->second.set(*this, key, value);
}

void ExperimentConfig::load_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        const auto hash_pos = line.find('#');
        if (hash_pos != std::string::npos) line.erase(hash_pos);
        const auto strip = [](std::string s) {
            const auto b = s.find_first_not_of(" \t\r");
            if (b == std::string::npos) return std::string();
            const auto e = s.find_last_not_of(" \t\r");
            return s.substr(b, e - b + 1);
        };
        const std::string stripped = strip(line);
        if (stripped.empty()) continue;
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw std::invalid_argument(path + ":" + std::to_string(lineno) +
                                        ": expected 'key = value'");
        }
        set(strip(stripped.substr(0, eq)), strip(stripped.substr(eq + 1)));
    }
}

bool ExperimentConfig::flat_mode() const {
    bool flat = false;
    AggregationMethod::parse(method, &flat);
    return flat;
}

void ExperimentConfig::validate() const {
    static const char* const known_problems[] = {"two_valley", "synth_classification",
                                                 "paired_idx", "quadratic_moo"};
    if (problem.empty()) throw std::invalid_argument("config: 'problem' is required");
    if (std::find(std::begin(known_problems), std::end(known_problems), problem) ==
        std::end(known_problems)) {
        throw std::invalid_argument("config: unknown problem '" + problem +
                                    "' (expected two_valley|synth_classification|paired_idx|"
                                    "quadratic_moo)");
    }
    make_train_config(1); // parses the method and validates the numeric core
    if (lr_schedule != "constant" && lr_schedule != "step") {
        throw std::invalid_argument("config: lr-schedule must be constant|step");
    }
    for (double r : sharpness_rhos) {
        if (r < 0.0) throw std::invalid_argument("config: sharpness rho must be >= 0");
    }
    for (double r : probe_radii) {
        if (r < 0.0) throw std::invalid_argument("config: probe radius must be >= 0");
    }
    if (surface_resolution < 2) {
        throw std::invalid_argument("config: surface-resolution must be >= 2");
    }
    if (problem == "paired_idx") {
        if (idx_images_a.empty() || idx_labels_a.empty() || idx_images_b.empty() ||
            idx_labels_b.empty()) {
            throw std::invalid_argument(
                "config: paired_idx requires idx-images-a, idx-labels-a, idx-images-b, "
                "idx-labels-b");
        }
    }
}

TrainConfig ExperimentConfig::make_train_config(std::size_t threads) const {
    TrainConfig tc;
    bool flat = false;
    tc.method = AggregationMethod::parse(method, &flat);
    tc.method.cagrad_c = cagrad_c;
    tc.method.max_iterations = solver_max_iters;
    tc.method.tolerance = solver_tol;
    tc.flat_enabled = flat;
    tc.perturb.rho_shared = rho;
    tc.perturb.rho_nonshared = effective_rho_ns();
    tc.perturb.adaptive = adaptive;
    tc.learning_rate = lr;
    tc.schedule = lr_schedule == "step" ? LrScheduleKind::StepDecay : LrScheduleKind::Constant;
    tc.decay_factor = lr_decay_factor;
    tc.decay_every = lr_decay_every;
    tc.momentum = momentum;
    tc.epochs = epochs;
    tc.batch_size = batch_size;
    tc.seed = seed;
    tc.eval_every = eval_every;
    tc.per_task_batches = per_task_batches;
    tc.steps_per_epoch_analytic = steps_per_epoch;
    tc.threads = threads;
    tc.validate();
    return tc;
}

std::map<std::string, std::string> ExperimentConfig::to_map() const {
    std::map<std::string, std::string> out;
    for (const auto& [key, def] : key_table()) {
        out[key] = def.get(*this);
    }
    return out;
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [key, value] : to_map()) {
        j[key] = value;
    }
    return j;
}

std::uint64_t ExperimentConfig::hash() const {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    auto feed = [&h](const std::string& s) {
        for (unsigned char ch : s) {
            h ^= ch;
            h *= 0x100000001B3ULL;
        }
    };
    for (const auto& [key, value] : to_map()) {
        feed(key);
        feed("=");
        feed(value);
        feed("\n");
    }
    return h;
}

const std::vector<std::string>& ExperimentConfig::known_keys() {
    static const std::vector<std::string> keys = [] {
        std::vector<std::string> out;
        for (const auto& [key, def] : key_table()) out.push_back(key);
        return out;
    }();
    return keys;
}

} // namespace flatmtl
