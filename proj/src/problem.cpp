#include "flatmtl/problem.hpp"

#include "flatmtl/errors.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace flatmtl {

void Batch::validate(std::size_t task_count) const {
    if (inputs.size() != rows * features) {
        throw std::invalid_argument("Batch: inputs size != rows*features");
    }
    if (labels.size() != task_count) {
        throw std::invalid_argument("Batch: expected " + std::to_string(task_count) +
                                    " label sequences, got " + std::to_string(labels.size()));
    }
    for (const auto& l : labels) {
        if (l.size() != rows) {
            throw std::invalid_argument("Batch: label sequence length != rows");
        }
    }
}

Batch Batch::empty(std::size_t task_count) {
    Batch b;
    b.labels.resize(task_count);
    return b;
}

void MultiTaskProblem::check_args(std::size_t task, const ParamVector& theta,
                                  const Batch& batch) const {
    if (task >= task_count()) {
        throw std::invalid_argument("task index " + std::to_string(task) +
                                    " out of range (m=" + std::to_string(task_count()) + ")");
    }
    partition().require_matches(theta);
    batch.validate(task_count());
}

double MultiTaskProblem::task_loss(std::size_t task, const ParamVector& theta,
                                   const Batch& batch) const {
    check_args(task, theta, batch);
    const double loss = do_task_loss(task, theta, batch);
    if (!std::isfinite(loss)) {
        throw DivergenceError("task " + std::to_string(task) + " loss is non-finite");
    }
    return loss;
}

ParamVector MultiTaskProblem::task_grad(std::size_t task, const ParamVector& theta,
                                        const Batch& batch) const {
    check_args(task, theta, batch);
    ParamVector g = do_task_grad(task, theta, batch);
    if (g.size() != theta.size()) {
        throw std::invalid_argument("task_grad: gradient length mismatch");
    }
    require_finite(g, "task gradient");
    return g;
}

double MultiTaskProblem::task_accuracy(std::size_t, const ParamVector&, const Batch&) const {
    throw std::invalid_argument("this problem does not define an accuracy metric");
}

std::vector<double> MultiTaskProblem::predict_probs(std::size_t, const ParamVector&,
                                                    const Batch&) const {
    throw std::invalid_argument("this problem does not produce class probabilities");
}

std::size_t MultiTaskProblem::class_count(std::size_t) const {
    throw std::invalid_argument("this problem does not define classes");
}

std::vector<IndexRange> MultiTaskProblem::param_groups() const {
    std::vector<IndexRange> groups;
    groups.push_back(partition().shared_range());
    for (std::size_t i = 0; i < task_count(); ++i) {
        groups.push_back(partition().nonshared_range(i));
    }
    return groups;
}

InMemoryDataSource::InMemoryDataSource(Batch train, Batch eval)
    : train_(std::move(train)), eval_(std::move(eval)) {
    if (train_.rows == 0) {
        throw std::invalid_argument("InMemoryDataSource: empty training set");
    }
    train_.validate(train_.labels.size());
    eval_.validate(train_.labels.size());
}

std::size_t InMemoryDataSource::steps_per_epoch(std::size_t batch_size) const {
    if (batch_size == 0) throw std::invalid_argument("batch_size must be >= 1");
    return (train_.rows + batch_size - 1) / batch_size;
}

Batch InMemoryDataSource::make_batch(std::uint64_t epoch_seed, std::size_t step,
                                     std::size_t batch_size) const {
    const std::size_t n = train_.rows;
    std::vector<std::size_t> perm(n);
    for (std::size_t i = 0; i < n; ++i) perm[i] = i;
    SeededRng rng(epoch_seed);
    shuffle(rng, perm);

    const std::size_t begin = step * batch_size;
    if (begin >= n) {
        throw std::invalid_argument("make_batch: step beyond epoch");
    }
    const std::size_t end = std::min(begin + batch_size, n);

    Batch out;
    out.rows = end - begin;
    out.features = train_.features;
    out.inputs.resize(out.rows * out.features);
    out.labels.resize(train_.labels.size());
    for (auto& l : out.labels) l.resize(out.rows);
    for (std::size_t r = begin; r < end; ++r) {
        const std::size_t src = perm[r];
        const std::size_t dst = r - begin;
        for (std::size_t f = 0; f < out.features; ++f) {
            out.inputs[dst * out.features + f] = train_.inputs[src * out.features + f];
        }
        for (std::size_t t = 0; t < out.labels.size(); ++t) {
            out.labels[t][dst] = train_.labels[t][src];
        }
    }
    return out;
}

} // namespace flatmtl
