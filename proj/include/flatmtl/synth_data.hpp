#pragma once

#include "flatmtl/problem.hpp"
#include "flatmtl/rng.hpp"

#include <cstddef>
#include <string>

namespace flatmtl {

/// Synthetic two-task binary classification over a shared input: two class
/// bits (correlated through flip_prob) select a Gaussian-mixture component,
/// inputs are the two class directions plus isotropic noise. noise == 0 gives
/// linearly separable tasks. Optionally flips a fraction of *training* labels
/// to make empirical minima sharper.
struct SynthConfig {
    std::size_t samples = 2000;     // training rows; an equal eval set is drawn
    std::size_t input_dim = 5;      // >= 2
    double separation = 1.0;        // class-center half-distance along each direction
    double noise = 0.8;             // stddev of the additive Gaussian input noise
    double flip_prob = 0.25;        // P(task-2 bit != task-1 bit)
    double label_noise = 0.0;       // training-label corruption rate
};

struct SynthMetadata {
    SynthConfig config;
    std::uint64_t seed = 0;
};

/// Deterministic in (rng state, config). Returns train+eval sets of equal size.
std::pair<InMemoryDataSource, SynthMetadata>
synth_two_task_classification(SeededRng& rng, const SynthConfig& config);

} // namespace flatmtl
