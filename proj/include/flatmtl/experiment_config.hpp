#pragma once

#include "flatmtl/trainer.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

namespace flatmtl {

/// Flat experiment configuration. Every knob has a config-file key and a CLI
/// flag of the same name; flags override file values; the merged result is
/// echoed into summary.json. Unknown keys are rejected.
struct ExperimentConfig {
    // experiment
    std::string problem;
    std::string method = "mean"; // may carry the f- prefix for flat mode
    std::string out_dir;
    std::string run_id = "run";
    bool force = false;

    // optimization
    double rho = 0.05;
    double rho_ns = -1.0; // -1: follow rho
    bool adaptive = false;
    double lr = 0.01;
    std::string lr_schedule = "constant"; // constant | step
    double lr_decay_factor = 0.85;
    std::size_t lr_decay_every = 10;
    double momentum = 0.0;
    std::size_t epochs = 10;
    std::size_t batch_size = 64;
    std::uint64_t seed = 0;
    std::size_t eval_every = 0;
    std::size_t steps_per_epoch = 50;
    bool per_task_batches = false;
    double cagrad_c = 0.4;
    std::size_t solver_max_iters = 500;
    double solver_tol = 1e-8;

    // analysis toggles
    std::vector<double> sharpness_rhos = {0.1};
    std::vector<double> probe_radii;
    std::size_t samples_per_radius = 10;
    double surface_extent = 1.0;
    std::size_t surface_resolution = 41;
    std::size_t sharpness_steps = 30;
    std::size_t sharpness_restarts = 8;
    bool probe_shared_only = false;

    // problem parameters
    std::uint64_t data_seed = 0; // 0: follow seed
    std::size_t tv_shared_dim = 2;
    double tv_wide_curvature = 1.0;
    double tv_narrow_curvature = 33.0;
    double tv_narrow_radius = 0.25;
    double tv_init_radius = 0.15;
    std::size_t synth_samples = 2000;
    std::size_t synth_input_dim = 5;
    double synth_noise = 0.8;
    double synth_separation = 1.0;
    double synth_flip_prob = 0.25;
    double synth_label_noise = 0.0;
    std::string mlp_hidden = "32,32";
    double mlp_init_scale = 1.0;
    std::size_t quad_dim = 2;
    std::size_t quad_tasks = 2;
    std::string idx_images_a, idx_labels_a, idx_images_b, idx_labels_b;
    std::size_t idx_pairs = 10000;
    std::size_t idx_eval_pairs = 2000;
    std::size_t idx_canvas = 36;

    /// Apply one key=value assignment; throws std::invalid_argument for
    /// unknown keys or unparseable values.
    void set(const std::string& key, const std::string& value);

    /// Load `key = value` lines ('#' comments, blank lines ignored).
    void load_file(const std::string& path);

    void validate() const;

    bool flat_mode() const;
    TrainConfig make_train_config(std::size_t threads) const;
    double effective_rho_ns() const { return rho_ns < 0.0 ? rho : rho_ns; }
    std::uint64_t effective_data_seed() const { return data_seed != 0 ? data_seed : seed; }

    /// Canonical key -> value map of the full effective configuration.
    std::map<std::string, std::string> to_map() const;
    nlohmann::json to_json() const;
    std::uint64_t hash() const;

    static const std::vector<std::string>& known_keys();
};

std::vector<double> parse_double_list(const std::string& text);
std::vector<std::size_t> parse_size_list(const std::string& text);

} // namespace flatmtl
