#include "flatmtl/registry.hpp"

#include "flatmtl/analytic_problems.hpp"
#include "flatmtl/idx.hpp"
#include "flatmtl/mlp.hpp"
#include "flatmtl/synth_data.hpp"

#include <algorithm>
#include <stdexcept>

namespace flatmtl {

namespace {

BuiltProblem build_two_valley(const ExperimentConfig& cfg) {
    TwoValleyProblem::Config tv = TwoValleyProblem::Config::defaults();
    tv.shared_dim = cfg.tv_shared_dim;
    tv.wide_curvature = cfg.tv_wide_curvature;
    tv.narrow_curvature = cfg.tv_narrow_curvature;
    tv.narrow_radius = cfg.tv_narrow_radius;
    tv.init_radius = cfg.tv_init_radius;
    if (tv.shared_dim != 2) {
        // default centers are 2-d; re-embed them on the first two axes
        for (auto* centers : {&tv.wide_centers, &tv.narrow_centers}) {
            for (auto& c : *centers) c.resize(tv.shared_dim, 0.0);
        }
    }
    BuiltProblem built;
    built.problem = std::make_shared<TwoValleyProblem>(tv);
    built.data = std::make_shared<EmptyDataSource>(built.problem->task_count());
    built.metadata = {{"problem", "two_valley"},
                      {"wide_curvature", tv.wide_curvature},
                      {"narrow_curvature", tv.narrow_curvature},
                      {"narrow_radius", tv.narrow_radius}};
    return built;
}

BuiltProblem build_quadratic(const ExperimentConfig& cfg) {
    // Random symmetric positive-definite task matrices from the data seed.
    SeededRng rng(cfg.effective_data_seed());
    const std::size_t d = cfg.quad_dim;
    std::vector<QuadraticProblem::TaskSpec> tasks(std::max<std::size_t>(cfg.quad_tasks, 1));
    for (auto& spec : tasks) {
        std::vector<double> base(d * d);
        for (auto& x : base) x = rng.normal();
        spec.matrix.assign(d * d, 0.0);
        // A = B'B + 0.5 I
        for (std::size_t i = 0; i < d; ++i) {
            for (std::size_t j = 0; j < d; ++j) {
                double acc = 0.0;
                for (std::size_t k = 0; k < d; ++k) acc += base[k * d + i] * base[k * d + j];
                spec.matrix[i * d + j] = acc / static_cast<double>(d) + (i == j ? 0.5 : 0.0);
            }
        }
    }
    BuiltProblem built;
    built.problem = std::make_shared<QuadraticProblem>(d, std::move(tasks));
    built.data = std::make_shared<EmptyDataSource>(built.problem->task_count());
    built.metadata = {{"problem", "quadratic_moo"},
                      {"dim", d},
                      {"tasks", cfg.quad_tasks},
                      {"data_seed", cfg.effective_data_seed()}};
    return built;
}

MlpProblem::Spec mlp_spec_from(const ExperimentConfig& cfg, std::size_t input_dim,
                               std::vector<std::size_t> classes) {
    MlpProblem::Spec spec;
    spec.input_dim = input_dim;
    spec.hidden = parse_size_list(cfg.mlp_hidden);
    if (spec.hidden.empty()) {
        throw std::invalid_argument("config: mlp-hidden must name at least one layer width");
    }
    spec.classes_per_task = std::move(classes);
    spec.init_scale = cfg.mlp_init_scale;
    return spec;
}

BuiltProblem build_synth(const ExperimentConfig& cfg) {
    SynthConfig sc;
    sc.samples = cfg.synth_samples;
    sc.input_dim = cfg.synth_input_dim;
    sc.noise = cfg.synth_noise;
    sc.separation = cfg.synth_separation;
    sc.flip_prob = cfg.synth_flip_prob;
    sc.label_noise = cfg.synth_label_noise;
    SeededRng rng(cfg.effective_data_seed());
    auto [source, meta] = synth_two_task_classification(rng, sc);

    BuiltProblem built;
    built.problem = std::make_shared<MlpProblem>(mlp_spec_from(cfg, sc.input_dim, {2, 2}));
    built.data = std::make_shared<InMemoryDataSource>(std::move(source));
    built.metadata = {{"problem", "synth_classification"},
                      {"samples", sc.samples},
                      {"input_dim", sc.input_dim},
                      {"noise", sc.noise},
                      {"flip_prob", sc.flip_prob},
                      {"label_noise", sc.label_noise},
                      {"data_seed", meta.seed}};
    return built;
}

Batch dataset_to_batch(const PairedImageDataset& ds) {
    Batch b;
    b.rows = ds.count;
    b.features = ds.height * ds.width;
    b.inputs.resize(b.rows * b.features);
    for (std::size_t i = 0; i < ds.images.size(); ++i) {
        b.inputs[i] = static_cast<double>(ds.images[i]) / 255.0; // normalize to [0,1]
    }
    b.labels = {std::vector<int>(ds.labels_task1.begin(), ds.labels_task1.end()),
                std::vector<int>(ds.labels_task2.begin(), ds.labels_task2.end())};
    return b;
}

BuiltProblem build_paired_idx(const ExperimentConfig& cfg) {
    if (cfg.idx_images_a.empty() || cfg.idx_labels_a.empty() || cfg.idx_images_b.empty() ||
        cfg.idx_labels_b.empty()) {
        throw std::invalid_argument(
            "paired_idx needs idx-images-a, idx-labels-a, idx-images-b, idx-labels-b");
    }
    const IdxTensor images_a = read_idx(cfg.idx_images_a);
    const IdxTensor labels_a = read_idx(cfg.idx_labels_a);
    const IdxTensor images_b = read_idx(cfg.idx_images_b);
    const IdxTensor labels_b = read_idx(cfg.idx_labels_b);

    SeededRng rng(cfg.effective_data_seed());
    PairedImageDataset train = compose_multitask_pairs(images_a, labels_a, images_b, labels_b,
                                                       rng, cfg.idx_pairs, cfg.idx_canvas,
                                                       cfg.idx_canvas);
    PairedImageDataset eval = compose_multitask_pairs(images_a, labels_a, images_b, labels_b,
                                                      rng, cfg.idx_eval_pairs, cfg.idx_canvas,
                                                      cfg.idx_canvas);

    auto classes_of = [](const IdxTensor& labels) {
        int max_label = 0;
        for (std::uint8_t v : labels.data) max_label = std::max(max_label, static_cast<int>(v));
        return static_cast<std::size_t>(std::max(max_label + 1, 2));
    };

    BuiltProblem built;
    built.problem = std::make_shared<MlpProblem>(mlp_spec_from(
        cfg, cfg.idx_canvas * cfg.idx_canvas, {classes_of(labels_a), classes_of(labels_b)}));
    built.data = std::make_shared<InMemoryDataSource>(dataset_to_batch(train),
                                                      dataset_to_batch(eval));
    built.metadata = {{"problem", "paired_idx"},
                      {"pairs", cfg.idx_pairs},
                      {"eval_pairs", cfg.idx_eval_pairs},
                      {"canvas", cfg.idx_canvas},
                      {"overlap_policy", "elementwise_max"},
                      {"pixel_normalization", "1/255"},
                      {"data_seed", cfg.effective_data_seed()},
                      {"source_hashes",
                       {{"images_a", file_hash(cfg.idx_images_a)},
                        {"labels_a", file_hash(cfg.idx_labels_a)},
                        {"images_b", file_hash(cfg.idx_images_b)},
                        {"labels_b", file_hash(cfg.idx_labels_b)}}}};
    return built;
}

} // namespace

BuiltProblem problem_registry(const std::string& name, const ExperimentConfig& config) {
    if (name == "two_valley") return build_two_valley(config);
    if (name == "quadratic_moo") return build_quadratic(config);
    if (name == "synth_classification") return build_synth(config);
    if (name == "paired_idx") return build_paired_idx(config);
    throw std::invalid_argument("unknown problem '" + name +
                                "' (expected two_valley|synth_classification|paired_idx|"
                                "quadratic_moo)");
}

} // namespace flatmtl
