#pragma once

#include "flatmtl/problem.hpp"

#include <cstddef>
#include <vector>

namespace flatmtl {

/// Per-task quadratic objective over the shared block plus a quadratic head
/// per task:
///   L_i(theta) = 0.5 (s - b_i)' A_i (s - b_i) + 0.5 k_i ||n_i - h_i||^2
/// with s the shared block and n_i task i's non-shared block.
class QuadraticProblem : public MultiTaskProblem {
public:
    struct TaskSpec {
        std::vector<double> matrix;  // shared_dim x shared_dim, symmetric, row-major
        std::vector<double> center;  // b_i, defaults to zeros
        std::size_t head_dim = 1;
        double head_curvature = 1.0;
        std::vector<double> head_target; // h_i, defaults to zeros
    };

    QuadraticProblem(std::size_t shared_dim, std::vector<TaskSpec> tasks,
                     double init_scale = 1.0);

    const ParamPartition& partition() const override { return partition_; }
    ParamVector initial_params(SeededRng& rng) const override;

    std::size_t shared_dim() const { return shared_dim_; }
    const TaskSpec& task_spec(std::size_t i) const { return tasks_[i]; }

protected:
    double do_task_loss(std::size_t task, const ParamVector& theta,
                        const Batch& batch) const override;
    ParamVector do_task_grad(std::size_t task, const ParamVector& theta,
                             const Batch& batch) const override;

private:
    std::size_t shared_dim_;
    std::vector<TaskSpec> tasks_;
    double init_scale_;
    ParamPartition partition_;
};

/// Desk-scale landscape with one wide and one narrow valley per task. Each
/// task's shared-block loss is a quadratic basin around its wide center with
/// a compact-support dip carved out at the narrow center:
///
///   L_i(s) = floor + 0.5 kw ||s - wide_i||^2 - An * bump(||s - narrow_i|| / rn)
///
/// where bump(t) = exp(1 - 1/(1 - t^2)) on |t|<1 and 0 outside. The wide
/// valley bottoms out exactly at wide_i with curvature kw and loss == floor;
/// the dip adds curvature so that the Hessian at the narrow center is
/// narrow_curvature * I on the shared block. Both valleys are strict local
/// minima; the narrow one is strictly sharper.
class TwoValleyProblem : public MultiTaskProblem {
public:
    struct Config {
        std::size_t shared_dim = 2;
        std::size_t task_count = 2;
        double wide_curvature = 1.0;
        double narrow_curvature = 33.0;
        double narrow_radius = 0.25;
        double floor = 0.0;
        // Valley centers; sized task_count x shared_dim when given explicitly.
        std::vector<std::vector<double>> wide_centers;
        std::vector<std::vector<double>> narrow_centers;
        std::size_t head_dim = 1;
        double head_curvature = 1.0;
        // Initialization ball (defaults to the shared narrow center).
        std::vector<double> init_center;
        double init_radius = 0.15;

        static Config defaults();
    };

    explicit TwoValleyProblem(Config cfg);

    const ParamPartition& partition() const override { return partition_; }
    ParamVector initial_params(SeededRng& rng) const override;

    const Config& config() const { return cfg_; }
    double bump_amplitude() const { return amplitude_; }

    /// Closed-form quadratic-approximation sharpness of each valley:
    /// max_{||eps||<=rho} L(v+eps) - L(v) ~= 0.5 rho^2 lambda_max(H(v)).
    double wide_valley_sharpness(double rho) const;
    double narrow_valley_sharpness(double rho) const;

    /// Shared-block Hessian traces at the nominal valley centers of one task.
    double hessian_trace_wide() const;
    double hessian_trace_narrow() const;

protected:
    double do_task_loss(std::size_t task, const ParamVector& theta,
                        const Batch& batch) const override;
    ParamVector do_task_grad(std::size_t task, const ParamVector& theta,
                             const Batch& batch) const override;

private:
    Config cfg_;
    double amplitude_; // An, derived from the curvature gap
    ParamPartition partition_;
};

} // namespace flatmtl
