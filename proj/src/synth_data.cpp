#include "flatmtl/synth_data.hpp"

#include <stdexcept>

namespace flatmtl {

namespace {

Batch draw_split(SeededRng& rng, const SynthConfig& cfg, bool corrupt_labels) {
    Batch b;
    b.rows = cfg.samples;
    b.features = cfg.input_dim;
    b.inputs.resize(b.rows * b.features);
    b.labels.assign(2, std::vector<int>(b.rows, 0));
    for (std::size_t r = 0; r < b.rows; ++r) {
        const int y1 = rng.next_double() < 0.5 ? 0 : 1;
        const int y2 = rng.next_double() < cfg.flip_prob ? 1 - y1 : y1;
        double* x = b.inputs.data() + r * b.features;
        // class directions are the first two coordinate axes
        x[0] = (y1 == 1 ? cfg.separation : -cfg.separation);
        x[1] = (y2 == 1 ? cfg.separation : -cfg.separation);
        for (std::size_t f = 2; f < b.features; ++f) x[f] = 0.0;
        if (cfg.noise > 0.0) {
            for (std::size_t f = 0; f < b.features; ++f) x[f] += cfg.noise * rng.normal();
        }
        b.labels[0][r] = y1;
        b.labels[1][r] = y2;
        if (corrupt_labels && cfg.label_noise > 0.0) {
            if (rng.next_double() < cfg.label_noise) b.labels[0][r] = 1 - b.labels[0][r];
            if (rng.next_double() < cfg.label_noise) b.labels[1][r] = 1 - b.labels[1][r];
        }
    }
    return b;
}

} // namespace

std::pair<InMemoryDataSource, SynthMetadata>
synth_two_task_classification(SeededRng& rng, const SynthConfig& config) {
    if (config.samples == 0) {
        throw std::invalid_argument("synth_two_task_classification: samples must be > 0");
    }
    if (config.input_dim < 2) {
        throw std::invalid_argument("synth_two_task_classification: input_dim must be >= 2");
    }
    if (config.noise < 0.0 || config.flip_prob < 0.0 || config.flip_prob > 1.0 ||
        config.label_noise < 0.0 || config.label_noise > 1.0) {
        throw std::invalid_argument("synth_two_task_classification: bad noise/probability");
    }
    SynthMetadata meta;
    meta.config = config;
    meta.seed = rng.seed();
    Batch train = draw_split(rng, config, /*corrupt_labels=*/true);
    Batch eval = draw_split(rng, config, /*corrupt_labels=*/false);
    return {InMemoryDataSource(std::move(train), std::move(eval)), meta};
}

} // namespace flatmtl
