#pragma once

#include "flatmtl/problem.hpp"

#include <cstddef>
#include <span>
#include <vector>

namespace flatmtl {

/// Perturbation radii for the shared and non-shared blocks. The adaptive
/// variant scales the gradient elementwise by |theta| before normalizing, so
/// the radius constrains the
/// parameter-relative perturbation instead of the raw one.
struct PerturbConfig {
    double rho_shared = 0.1;
    double rho_nonshared = 0.1;
    bool adaptive = false;
    double epsilon_floor = 1e-12;

    void validate() const;
};

/// Ascent-direction perturbation of one block:
///   standard:  eps = rho * g / max(||g||, floor)
///   adaptive:  eps = rho * T^2 g / max(||T g||, floor),  T = diag(|theta| + floor)
/// A zero gradient yields a zero perturbation (the direction is undefined at
/// critical points, so the step degenerates to the plain gradient there).
std::vector<double> worst_case_perturbation(std::span<const double> grad_block, double rho,
                                            const PerturbConfig& cfg,
                                            std::span<const double> theta_block);

/// Gradient of task i's loss w.r.t. the shared block, evaluated with only the
/// shared block displaced: (theta_sh + eps, theta_ns^i).
std::vector<double> sam_shared_gradient(const MultiTaskProblem& problem, std::size_t task,
                                        const ParamVector& theta,
                                        std::span<const double> eps_shared,
                                        const Batch& batch);

/// Gradient w.r.t. task i's non-shared block, evaluated with only that block
/// displaced: (theta_sh, theta_ns^i + eps).
std::vector<double> sam_nonshared_gradient(const MultiTaskProblem& problem, std::size_t task,
                                           const ParamVector& theta,
                                           std::span<const double> eps_nonshared,
                                           const Batch& batch);

/// flat = sam - loss, the component that steers toward lower gradient norm.
std::vector<double> decompose_flat(std::span<const double> sam_shared,
                                   std::span<const double> loss_shared);

/// Everything one step needs from one task.
struct TaskGradients {
    std::vector<double> loss_shared;    // gradient at the unperturbed point
    std::vector<double> sam_shared;     // gradient at the shared-perturbed point
    std::vector<double> flat_shared;    // sam_shared - loss_shared, stored not recomputed
    std::vector<double> plain_nonshared;
    std::vector<double> sam_nonshared;
    std::vector<double> eps_shared;
    std::vector<double> eps_nonshared;
};

struct TaskGradientBundle {
    std::vector<TaskGradients> tasks;
};

/// Runs the per-task loop: one gradient at the unperturbed point, worst-case
/// perturbations for both blocks, and one gradient at each one-sided
/// perturbed point. Tasks may be evaluated on up to `threads` workers; the
/// bundle is assembled in task order either way.
TaskGradientBundle compute_bundle(const MultiTaskProblem& problem, const ParamVector& theta,
                                  const std::vector<Batch>& per_task_batches,
                                  const PerturbConfig& cfg, std::size_t threads = 1);

} // namespace flatmtl
