#include "flatmtl/runner.hpp"

#include "flatmtl/analysis.hpp"
#include "flatmtl/errors.hpp"
#include "flatmtl/idx.hpp"
#include "flatmtl/registry.hpp"

#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace flatmtl {

namespace fs = std::filesystem;
using nlohmann::json;

#ifndef FLATMTL_GIT_REV
#define FLATMTL_GIT_REV "unknown"
#endif

namespace {

std::string csv_double(double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

std::string u64_hex(std::uint64_t v) {
    std::ostringstream ss;
    ss << std::hex << v;
    return ss.str();
}

std::uint64_t u64_from_hex(const std::string& s) {
    return std::stoull(s, nullptr, 16);
}

json rng_state_json(const std::array<std::uint64_t, 4>& s) {
    json out = json::array();
    for (auto w : s) out.push_back(u64_hex(w));
    return out;
}

std::array<std::uint64_t, 4> rng_state_from_json(const json& j) {
    std::array<std::uint64_t, 4> out{};
    for (std::size_t i = 0; i < 4; ++i) out[i] = u64_from_hex(j.at(i).get<std::string>());
    return out;
}

void write_text_file(const std::string& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open '" + path + "' for writing");
    out << content;
    if (!out) throw IoError("write failed for '" + path + "'");
}

json eval_json(const EvalSnapshot& snap) {
    json out{{"epoch", snap.epoch}, {"losses", snap.losses}};
    if (!snap.accuracies.empty()) out["accuracies"] = snap.accuracies;
    return out;
}

} // namespace

std::size_t threads_from_env() {
    const char* raw = std::getenv("FLATMTL_THREADS");
    if (raw == nullptr || *raw == '\0') return 1;
    try {
        const long v = std::stol(raw);
        if (v < 1) return 1;
        return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
        throw std::invalid_argument("FLATMTL_THREADS must be a positive integer");
    }
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    json j;
    j["format"] = ckpt.format;
    j["theta"] = ckpt.state.theta;
    j["momentum"] = ckpt.state.momentum;
    j["rng"] = {{"pcgrad", rng_state_json(ckpt.state.pcgrad_rng)},
                {"batch", rng_state_json(ckpt.state.batch_rng)}};
    j["next_epoch"] = ckpt.state.next_epoch;
    j["global_step"] = ckpt.state.global_step;
    json blocks = json::array();
    for (const auto& [begin, end] : ckpt.shared_and_blocks) {
        blocks.push_back(json::array({begin, end}));
    }
    j["blocks"] = blocks;
    j["config_hash"] = u64_hex(ckpt.config_hash);
    j["config"] = ckpt.config_echo;
    j["run_id"] = ckpt.run_id;
    write_text_file(path, j.dump(2) + "\n");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open checkpoint '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        throw IoError("cannot parse checkpoint '" + path + "': " + e.what());
    }
    Checkpoint ckpt;
    try {
        ckpt.format = j.at("format").get<int>();
        ckpt.state.theta = j.at("theta").get<ParamVector>();
        ckpt.state.momentum = j.at("momentum").get<ParamVector>();
        ckpt.state.pcgrad_rng = rng_state_from_json(j.at("rng").at("pcgrad"));
        ckpt.state.batch_rng = rng_state_from_json(j.at("rng").at("batch"));
        ckpt.state.next_epoch = j.at("next_epoch").get<std::size_t>();
        ckpt.state.global_step = j.at("global_step").get<std::size_t>();
        for (const auto& b : j.at("blocks")) {
            ckpt.shared_and_blocks.emplace_back(b.at(0).get<std::size_t>(),
                                                b.at(1).get<std::size_t>());
        }
        ckpt.config_hash = u64_from_hex(j.at("config_hash").get<std::string>());
        ckpt.config_echo = j.at("config");
        ckpt.run_id = j.at("run_id").get<std::string>();
    } catch (const json::exception& e) {
        throw IoError("malformed checkpoint '" + path + "': " + e.what());
    }
    return ckpt;
}

namespace {

ExperimentConfig config_from_echo(const json& echo) {
    ExperimentConfig cfg;
    for (const auto& [key, value] : echo.items()) {
        cfg.set(key, value.get<std::string>());
    }
    return cfg;
}

json sharpness_json(const MultiTaskProblem& problem, const ParamVector& theta,
                    const Batch& batch, const ExperimentConfig& cfg, SeededRng& rng) {
    SharpnessBudget budget;
    budget.ascent_steps = cfg.sharpness_steps;
    budget.restarts = cfg.sharpness_restarts;
    json rows = json::array();
    for (double rho : cfg.sharpness_rhos) {
        for (std::size_t i = 0; i < problem.task_count(); ++i) {
            const SharpnessEntry e = rho_sharpness(problem, i, theta, rho, batch, budget, rng);
            rows.push_back({{"rho", e.rho},
                            {"task", i},
                            {"base_loss", e.base_loss},
                            {"worst_loss", e.worst_loss},
                            {"sharpness", e.sharpness},
                            {"single_step_sharpness", e.single_step_sharpness},
                            {"samples", e.samples}});
        }
    }
    return rows;
}

void prepare_out_dir(const std::string& out_dir, bool force) {
    if (out_dir.empty()) throw std::invalid_argument("output directory is required");
    fs::path dir(out_dir);
    if (fs::exists(dir)) {
        if (!fs::is_directory(dir)) {
            throw std::invalid_argument("output path '" + out_dir + "' is not a directory");
        }
        if (!fs::is_empty(dir) && !force) {
            throw std::invalid_argument("output directory '" + out_dir +
                                        "' already contains a run; pass --force to overwrite");
        }
    }
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create output directory '" + out_dir + "': " + ec.message());
}

} // namespace

void run_train(const ExperimentConfig& config) {
    config.validate();
    prepare_out_dir(config.out_dir, config.force);
    const std::size_t threads = threads_from_env();
    const bool deterministic_log = threads <= 1;

    BuiltProblem built = problem_registry(config.problem, config);
    const TrainConfig tc = config.make_train_config(threads);

    const fs::path dir(config.out_dir);
    std::ofstream csv(dir / "log.csv", std::ios::binary | std::ios::trunc);
    if (!csv) throw IoError("cannot open log.csv for writing");

    TrainResult result = train(*built.problem, *built.data, tc, &csv, deterministic_log);
    csv.close();

    // checkpoint: final parameters + everything needed to resume
    Checkpoint ckpt;
    ckpt.state = result.state;
    const auto& part = built.problem->partition();
    ckpt.shared_and_blocks.emplace_back(part.shared_range().begin, part.shared_range().end);
    for (std::size_t i = 0; i < part.task_count(); ++i) {
        ckpt.shared_and_blocks.emplace_back(part.nonshared_range(i).begin,
                                            part.nonshared_range(i).end);
    }
    ckpt.config_hash = config.hash();
    ckpt.config_echo = config.to_json();
    ckpt.run_id = config.run_id;
    save_checkpoint((dir / "checkpoint.json").string(), ckpt);

    json summary;
    summary["config"] = config.to_json();
    summary["seed"] = config.seed;
    summary["git_rev"] = FLATMTL_GIT_REV;
    summary["dataset"] = built.metadata;
    summary["delta_m"] = nullptr; // filled by `compare` against single-task baselines
    summary["steps"] = result.records.size();
    summary["total_wall_ms"] = result.total_wall_ms; // wall-clock: exempt from determinism

    if (!result.records.empty()) {
        json final_losses = json::array();
        for (const auto& t : result.records.back().tasks) final_losses.push_back(t.loss);
        summary["final_losses"] = final_losses;
    }
    summary["final_metrics"] = {{"final", eval_json(result.final_eval)},
                                {"best", eval_json(result.best_eval)},
                                {"best_epoch", result.best_epoch}};
    if (result.aborted) {
        summary["aborted"] = true;
        summary["abort_reason"] = result.abort_reason;
        json diag;
        diag["abort_reason"] = result.abort_reason;
        if (!result.records.empty()) {
            const RunRecord& last = result.records.back();
            json tasks = json::array();
            for (const auto& t : last.tasks) {
                tasks.push_back({{"loss", t.loss},
                                 {"grad_norm", t.grad_norm},
                                 {"flat_norm", t.flat_norm}});
            }
            diag["last_record"] = {{"step", last.step},
                                   {"epoch", last.epoch},
                                   {"tasks", tasks},
                                   {"update_norm", last.update_norm}};
        }
        write_text_file((dir / "divergence.json").string(), diag.dump(2) + "\n");
        write_text_file((dir / "summary.json").string(), summary.dump(2) + "\n");
        throw DivergenceError(result.abort_reason);
    }

    SeededRng probe_rng = SeededRng(config.seed).substream(7);
    summary["sharpness"] = sharpness_json(*built.problem, result.final_theta,
                                          built.data->eval_set(), config, probe_rng);
    write_text_file((dir / "summary.json").string(), summary.dump(2) + "\n");
}

namespace {

void write_sharpness_csv(const fs::path& dir, const std::string& run_id,
                         const MultiTaskProblem& problem, const ParamVector& theta,
                         const Batch& batch, const ExperimentConfig& cfg, SeededRng& rng) {
    SharpnessBudget budget;
    budget.ascent_steps = cfg.sharpness_steps;
    budget.restarts = cfg.sharpness_restarts;
    for (std::size_t i = 0; i < problem.task_count(); ++i) {
        std::ostringstream out;
        out << "rho,base_loss,worst_loss,sharpness,single_step_sharpness,samples\n";
        for (double rho : cfg.sharpness_rhos) {
            const SharpnessEntry e = rho_sharpness(problem, i, theta, rho, batch, budget, rng);
            out << csv_double(e.rho) << ',' << csv_double(e.base_loss) << ','
                << csv_double(e.worst_loss) << ',' << csv_double(e.sharpness) << ','
                << csv_double(e.single_step_sharpness) << ',' << e.samples << '\n';
        }
        write_text_file((dir / (run_id + "_sharpness_" + std::to_string(i) + ".csv")).string(),
                        out.str());
    }
}

void write_probe_csv(const fs::path& dir, const std::string& run_id,
                     const MultiTaskProblem& problem, const ParamVector& theta,
                     const Batch& batch, const ExperimentConfig& cfg, SeededRng& rng) {
    std::vector<double> radii = cfg.probe_radii;
    if (radii.empty()) radii = {0.0, 0.5, 1.0, 2.0, 4.0};
    const auto rows = robustness_probe(problem, theta, radii, cfg.samples_per_radius, rng,
                                       batch, cfg.probe_shared_only);
    for (std::size_t i = 0; i < problem.task_count(); ++i) {
        std::ostringstream out;
        out << "radius,mean_loss,std_loss,mean_accuracy,std_accuracy\n";
        for (const auto& row : rows) {
            out << csv_double(row.radius) << ',' << csv_double(row.mean_loss[i]) << ','
                << csv_double(row.std_loss[i]);
            if (!row.mean_accuracy.empty()) {
                out << ',' << csv_double(row.mean_accuracy[i]) << ','
                    << csv_double(row.std_accuracy[i]);
            } else {
                out << ",,";
            }
            out << '\n';
        }
        write_text_file((dir / (run_id + "_probe_" + std::to_string(i) + ".csv")).string(),
                        out.str());
    }
}

void write_surface_csv(const fs::path& dir, const std::string& run_id,
                       const MultiTaskProblem& problem, const ParamVector& theta,
                       const Batch& batch, const ExperimentConfig& cfg, SeededRng& rng) {
    for (std::size_t i = 0; i < problem.task_count(); ++i) {
        const SurfaceGrid grid = loss_surface_grid(problem, i, theta, rng, cfg.surface_extent,
                                                   cfg.surface_resolution, batch);
        std::ostringstream out;
        for (std::size_t a = 0; a < grid.resolution; ++a) {
            for (std::size_t b = 0; b < grid.resolution; ++b) {
                if (b) out << ',';
                out << csv_double(grid.values[a * grid.resolution + b]);
            }
            out << '\n';
        }
        write_text_file((dir / (run_id + "_surface_" + std::to_string(i) + ".csv")).string(),
                        out.str());
    }
}

} // namespace

void run_analyze(const std::string& checkpoint_path, const std::vector<std::string>& measures,
                 const ExperimentConfig& overrides, const std::string& out_dir) {
    const Checkpoint ckpt = load_checkpoint(checkpoint_path);
    ExperimentConfig cfg = config_from_echo(ckpt.config_echo);
    // measurement knobs may be overridden on the command line
    cfg.sharpness_rhos = overrides.sharpness_rhos;
    cfg.probe_radii = overrides.probe_radii;
    cfg.samples_per_radius = overrides.samples_per_radius;
    cfg.surface_extent = overrides.surface_extent;
    cfg.surface_resolution = overrides.surface_resolution;
    cfg.sharpness_steps = overrides.sharpness_steps;
    cfg.sharpness_restarts = overrides.sharpness_restarts;
    cfg.probe_shared_only = overrides.probe_shared_only;
    const std::uint64_t analyze_seed = overrides.seed != 0 ? overrides.seed : cfg.seed;

    BuiltProblem built = problem_registry(cfg.problem, cfg);
    built.problem->partition().require_matches(ckpt.state.theta);

    const fs::path dir = out_dir.empty() ? fs::path(checkpoint_path).parent_path()
                                         : fs::path(out_dir);
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw IoError("cannot create '" + dir.string() + "': " + ec.message());

    SeededRng rng = SeededRng(analyze_seed).substream(11);
    const Batch& eval = built.data->eval_set();
    for (const std::string& measure : measures) {
        if (measure == "sharpness") {
            write_sharpness_csv(dir, ckpt.run_id, *built.problem, ckpt.state.theta, eval, cfg,
                                rng);
        } else if (measure == "probe") {
            write_probe_csv(dir, ckpt.run_id, *built.problem, ckpt.state.theta, eval, cfg, rng);
        } else if (measure == "surface") {
            write_surface_csv(dir, ckpt.run_id, *built.problem, ckpt.state.theta, eval, cfg,
                              rng);
        } else {
            throw std::invalid_argument("unknown measure '" + measure +
                                        "' (expected sharpness|probe|surface)");
        }
    }
}

nlohmann::json run_compare(const std::vector<std::string>& run_dirs,
                           const std::string& baselines_path, const std::string& out_path) {
    if (run_dirs.empty()) {
        throw std::invalid_argument("compare: need at least one run directory");
    }
    std::ifstream bin(baselines_path);
    if (!bin) throw std::invalid_argument("compare: cannot open baselines file '" +
                                          baselines_path + "'");
    json baselines;
    try {
        bin >> baselines;
    } catch (const json::exception& e) {
        throw IoError("compare: cannot parse baselines: " + std::string(e.what()));
    }
    const std::string metric = baselines.value("metric", std::string("accuracy"));
    std::vector<double> base_values;
    std::vector<bool> lower_better;
    try {
        base_values = baselines.at("values").get<std::vector<double>>();
        lower_better = baselines.at("lower_is_better").get<std::vector<bool>>();
    } catch (const json::exception& e) {
        throw IoError("compare: malformed baselines file: " + std::string(e.what()));
    }

    json table = json::array();
    for (const std::string& dir : run_dirs) {
        const fs::path summary_path = fs::path(dir) / "summary.json";
        std::ifstream sin(summary_path);
        if (!sin) throw IoError("compare: missing " + summary_path.string());
        json summary;
        try {
            sin >> summary;
        } catch (const json::exception& e) {
            throw IoError("compare: cannot parse " + summary_path.string() + ": " + e.what());
        }
        std::vector<double> metrics;
        try {
            const json& final_eval = summary.at("final_metrics").at("final");
            if (metric == "accuracy") {
                metrics = final_eval.at("accuracies").get<std::vector<double>>();
            } else {
                metrics = final_eval.at("losses").get<std::vector<double>>();
            }
        } catch (const json::exception& e) {
            throw IoError("compare: summary in '" + dir + "' lacks metric '" + metric +
                          "': " + e.what());
        }
        const double dm = delta_m(metrics, base_values, lower_better);
        table.push_back({{"run", dir},
                         {"method", summary.at("config").value("method", "?")},
                         {"metric", metric},
                         {"values", metrics},
                         {"delta_m_percent", dm}});
    }
    json out{{"baselines", baselines}, {"runs", table}};
    if (!out_path.empty()) {
        write_text_file(out_path, out.dump(2) + "\n");
    }
    return out;
}

void run_datagen(const ExperimentConfig& config, const std::string& out_prefix) {
    if (config.idx_images_a.empty() || config.idx_labels_a.empty() ||
        config.idx_images_b.empty() || config.idx_labels_b.empty()) {
        throw std::invalid_argument(
            "datagen needs idx-images-a, idx-labels-a, idx-images-b, idx-labels-b");
    }
    const IdxTensor images_a = read_idx(config.idx_images_a);
    const IdxTensor labels_a = read_idx(config.idx_labels_a);
    const IdxTensor images_b = read_idx(config.idx_images_b);
    const IdxTensor labels_b = read_idx(config.idx_labels_b);
    SeededRng rng(config.effective_data_seed());
    const PairedImageDataset ds =
        compose_multitask_pairs(images_a, labels_a, images_b, labels_b, rng, config.idx_pairs,
                                config.idx_canvas, config.idx_canvas);

    IdxTensor images_out;
    images_out.dims = {ds.count, ds.height, ds.width};
    images_out.data = ds.images;
    write_idx(out_prefix + "_images.idx", images_out);
    auto labels_out = [&](const std::vector<int>& labels, const std::string& suffix) {
        IdxTensor t;
        t.dims = {labels.size()};
        t.data.reserve(labels.size());
        for (int v : labels) t.data.push_back(static_cast<std::uint8_t>(v));
        write_idx(out_prefix + suffix, t);
    };
    labels_out(ds.labels_task1, "_labels1.idx");
    labels_out(ds.labels_task2, "_labels2.idx");

    json meta{{"pairs", ds.count},
              {"canvas", {ds.height, ds.width}},
              {"overlap_policy", "elementwise_max"},
              {"seed", config.effective_data_seed()},
              {"source_hashes",
               {{"images_a", file_hash(config.idx_images_a)},
                {"labels_a", file_hash(config.idx_labels_a)},
                {"images_b", file_hash(config.idx_images_b)},
                {"labels_b", file_hash(config.idx_labels_b)}}}};
    write_text_file(out_prefix + "_metadata.json", meta.dump(2) + "\n");
}

} // namespace flatmtl
