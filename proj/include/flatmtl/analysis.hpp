#pragma once

#include "flatmtl/problem.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace flatmtl {

/// Worst-case loss increase within a rho-ball around theta for one task.
/// The inner maximization reports a true search (ascent + restarts), not just
/// the single normalized-gradient step; that single-step estimate is kept
/// alongside for comparison.
struct SharpnessEntry {
    double rho = 0.0;
    double base_loss = 0.0;
    double worst_loss = 0.0;
    double sharpness = 0.0;             // worst - base, >= 0 by construction
    double single_step_sharpness = 0.0; // loss at the normalized-gradient step
    std::size_t samples = 0;            // inner-max evaluations performed
};

struct SharpnessBudget {
    std::size_t ascent_steps = 30;
    std::size_t restarts = 8;
    double step_fraction = 0.25; // ascent step length as a fraction of rho
};

SharpnessEntry rho_sharpness(const MultiTaskProblem& problem, std::size_t task,
                             const ParamVector& theta, double rho, const Batch& batch,
                             const SharpnessBudget& budget, SeededRng& rng);

/// Mean/std of per-task loss (and accuracy where defined) under uniform
/// sphere perturbations of the parameters, per radius. The r=0 row is the
/// exact unperturbed evaluation.
struct ProbeRow {
    double radius = 0.0;
    std::vector<double> mean_loss, std_loss;
    std::vector<double> mean_accuracy, std_accuracy; // empty when undefined
};

std::vector<ProbeRow> robustness_probe(const MultiTaskProblem& problem, const ParamVector& theta,
                                       const std::vector<double>& radii,
                                       std::size_t samples_per_radius, SeededRng& rng,
                                       const Batch& eval_batch, bool shared_only = false);

/// Task-i losses over theta + a*d1 + b*d2 with a,b on a symmetric grid.
/// Directions are Gaussian, per-block scaled to the parameter norms
/// (disable with normalize_blocks=false), then made exactly orthogonal.
struct SurfaceGrid {
    std::size_t resolution = 0;
    double extent = 0.0;
    std::vector<double> values; // resolution x resolution, row-major over (a, b)
    std::vector<double> dir1, dir2;
    double axis(std::size_t idx) const; // grid coordinate of row/col idx
};

SurfaceGrid loss_surface_grid(const MultiTaskProblem& problem, std::size_t task,
                              const ParamVector& theta, SeededRng& rng, double extent,
                              std::size_t resolution, const Batch& batch,
                              bool normalize_blocks = true);

/// Mean signed relative change vs single-task baselines, in percent; negative
/// means improvement (Table-3 convention: the sign flips for higher-is-better
/// metrics so that beating the baseline is always negative).
double delta_m(const std::vector<double>& task_metrics,
               const std::vector<double>& single_task_baselines,
               const std::vector<bool>& lower_is_better);

/// Mean squared distance between predicted probability rows and one-hot
/// labels; probabilities are N x C row-major, each row summing to 1 (1e-6).
double brier_score(const std::vector<double>& probabilities, std::size_t classes,
                   const std::vector<int>& labels);

/// Expected calibration error with equal-width confidence bins over (0, 1].
double expected_calibration_error(const std::vector<double>& probabilities, std::size_t classes,
                                  const std::vector<int>& labels, std::size_t bins = 10);

/// (1/C) * sum_c -p_c ln p_c with 0 ln 0 := 0. Pass class_prefactor=false for
/// the plain Shannon entropy.
double predictive_entropy(std::span<const double> probability_row, bool class_prefactor = true);

} // namespace flatmtl
