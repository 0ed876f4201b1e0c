#pragma once

#include "flatmtl/problem.hpp"

#include <cstddef>
#include <vector>

namespace flatmtl {

/// Multi-head MLP with a shared tanh trunk and one linear classifier head per
/// task, trained with mean cross-entropy. Gradients are hand-coded backprop
/// (no autodiff dependency); the finite-difference check in the test suite is
/// therefore a genuinely independent oracle.
///
/// Parameter layout (one flat vector):
///   shared block:  [W1 row-major, b1, W2, b2, ...]   trunk layers
///   block i:       [U_i row-major, c_i]              head for task i
class MlpProblem : public MultiTaskProblem {
public:
    struct Spec {
        std::size_t input_dim = 2;
        std::vector<std::size_t> hidden = {16};      // trunk widths
        std::vector<std::size_t> classes_per_task = {2, 2};
        double init_scale = 1.0; // multiplies 1/sqrt(fan_in)
    };

    explicit MlpProblem(Spec spec);

    const ParamPartition& partition() const override { return partition_; }
    ParamVector initial_params(SeededRng& rng) const override;

    bool has_accuracy() const override { return true; }
    double task_accuracy(std::size_t task, const ParamVector& theta,
                         const Batch& batch) const override;
    std::vector<double> predict_probs(std::size_t task, const ParamVector& theta,
                                      const Batch& batch) const override;
    std::size_t class_count(std::size_t task) const override {
        return spec_.classes_per_task[task];
    }

    /// One group per trunk layer (weights+bias) plus one per head.
    std::vector<IndexRange> param_groups() const override { return groups_; }

    const Spec& spec() const { return spec_; }

protected:
    double do_task_loss(std::size_t task, const ParamVector& theta,
                        const Batch& batch) const override;
    ParamVector do_task_grad(std::size_t task, const ParamVector& theta,
                             const Batch& batch) const override;

private:
    struct Forward {
        // activations[k]: rows x width_k, post-tanh (activations[0] = inputs)
        std::vector<std::vector<double>> activations;
        std::vector<double> probs; // rows x classes
        double loss = 0.0;
    };
    Forward forward(std::size_t task, const ParamVector& theta, const Batch& batch) const;

    Spec spec_;
    std::vector<std::size_t> trunk_dims_; // input_dim, hidden...
    std::size_t trunk_out_ = 0;
    ParamPartition partition_;
    std::vector<IndexRange> groups_;
    std::vector<std::size_t> layer_offsets_; // offset of each trunk layer in shared block
};

} // namespace flatmtl
