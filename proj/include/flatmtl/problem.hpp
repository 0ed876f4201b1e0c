#pragma once

#include "flatmtl/param_vector.hpp"
#include "flatmtl/partition.hpp"
#include "flatmtl/rng.hpp"

#include <cstddef>
#include <cstdint>
#include <memory>
#include <utility>
#include <vector>

namespace flatmtl {

/// One minibatch: a row-major inputs matrix plus one label sequence per task.
/// Analytic problems use an empty batch (rows == 0).
struct Batch {
    std::size_t rows = 0;
    std::size_t features = 0;
    std::vector<double> inputs;           // rows x features
    std::vector<std::vector<int>> labels; // per task, each of length rows

    void validate(std::size_t task_count) const;
    static Batch empty(std::size_t task_count);
};

/// A multi-task objective: per-task loss and gradient at arbitrary parameter
/// points. Gradients come back full-length with zeros outside the shared
/// block and the task's own non-shared block. Implementations are immutable
/// after construction and callable concurrently.
class MultiTaskProblem {
public:
    virtual ~MultiTaskProblem() = default;

    std::size_t task_count() const { return partition().task_count(); }
    virtual const ParamPartition& partition() const = 0;

    double task_loss(std::size_t task, const ParamVector& theta, const Batch& batch) const;
    ParamVector task_grad(std::size_t task, const ParamVector& theta, const Batch& batch) const;

    virtual ParamVector initial_params(SeededRng& rng) const = 0;

    /// Fraction of batch rows where task's argmax prediction equals the label.
    /// Only meaningful when has_accuracy() is true.
    virtual bool has_accuracy() const { return false; }
    virtual double task_accuracy(std::size_t task, const ParamVector& theta,
                                 const Batch& batch) const;

    /// N x C row-major class probabilities for calibration metrics.
    virtual std::vector<double> predict_probs(std::size_t task, const ParamVector& theta,
                                              const Batch& batch) const;
    virtual std::size_t class_count(std::size_t task) const;

    /// Parameter groups used for per-block direction normalization in the
    /// loss-surface plots. Defaults to the partition blocks; models with
    /// internal layer structure may refine this.
    virtual std::vector<IndexRange> param_groups() const;

protected:
    virtual double do_task_loss(std::size_t task, const ParamVector& theta,
                                const Batch& batch) const = 0;
    virtual ParamVector do_task_grad(std::size_t task, const ParamVector& theta,
                                     const Batch& batch) const = 0;

    void check_args(std::size_t task, const ParamVector& theta, const Batch& batch) const;
};

/// Deterministic batch supply. Batches are a pure function of
/// (epoch_seed, step, batch_size) so a resumed run regenerates the same
/// sequence once the trainer's rng position is restored.
class DataSource {
public:
    virtual ~DataSource() = default;
    virtual std::size_t steps_per_epoch(std::size_t batch_size) const = 0;
    virtual Batch make_batch(std::uint64_t epoch_seed, std::size_t step,
                             std::size_t batch_size) const = 0;
    /// Held-out evaluation set (may equal the training set for analytic problems).
    virtual const Batch& eval_set() const = 0;
    virtual const Batch& train_set() const = 0;
};

/// Data source for analytic objectives that ignore data entirely: serves
/// empty batches. steps_per_epoch() reports 0, which tells the trainer to
/// use its own steps_per_epoch_analytic setting.
class EmptyDataSource : public DataSource {
public:
    explicit EmptyDataSource(std::size_t task_count) : batch_(Batch::empty(task_count)) {}

    std::size_t steps_per_epoch(std::size_t) const override { return 0; }
    Batch make_batch(std::uint64_t, std::size_t, std::size_t) const override { return batch_; }
    const Batch& eval_set() const override { return batch_; }
    const Batch& train_set() const override { return batch_; }

private:
    Batch batch_;
};

/// In-memory labelled dataset serving seeded shuffled minibatches.
class InMemoryDataSource : public DataSource {
public:
    InMemoryDataSource(Batch train, Batch eval);

    std::size_t steps_per_epoch(std::size_t batch_size) const override;
    Batch make_batch(std::uint64_t epoch_seed, std::size_t step,
                     std::size_t batch_size) const override;
    const Batch& eval_set() const override { return eval_; }
    const Batch& train_set() const override { return train_; }

private:
    Batch train_;
    Batch eval_;
};

} // namespace flatmtl
