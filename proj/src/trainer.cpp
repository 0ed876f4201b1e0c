#include "flatmtl/trainer.hpp"

#include "flatmtl/errors.hpp"

#include <charconv>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

namespace flatmtl {

const char* const kRunLogHeader = "step,epoch,task,loss,grad_norm,flat_norm,lr,wall_ms";

void TrainConfig::validate() const {
    method.validate();
    if (flat_enabled) perturb.validate();
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
        throw std::invalid_argument("TrainConfig: learning_rate must be finite and >= 0");
    }
    if (epochs < 1) throw std::invalid_argument("TrainConfig: epochs must be >= 1");
    if (batch_size < 1) throw std::invalid_argument("TrainConfig: batch_size must be >= 1");
    if (momentum < 0.0 || momentum >= 1.0) {
        throw std::invalid_argument("TrainConfig: momentum must be in [0, 1)");
    }
    if (schedule == LrScheduleKind::StepDecay) {
        if (!(decay_factor > 0.0) || decay_every == 0) {
            throw std::invalid_argument("TrainConfig: step decay needs factor > 0 and period >= 1");
        }
    }
    if (steps_per_epoch_analytic == 0) {
        throw std::invalid_argument("TrainConfig: steps_per_epoch_analytic must be >= 1");
    }
}

double lr_at(const TrainConfig& config, std::size_t epoch) {
    switch (config.schedule) {
        case LrScheduleKind::Constant:
            return config.learning_rate;
        case LrScheduleKind::StepDecay:
            return config.learning_rate *
                   std::pow(config.decay_factor,
                            static_cast<double>(epoch / config.decay_every));
    }
    throw std::logic_error("unreachable schedule kind");
}

namespace {

std::vector<double> extract_block(const ParamVector& full, const IndexRange& r) {
    return std::vector<double>(full.begin() + r.begin, full.begin() + r.end);
}

void format_double(std::ostream& out, double v) {
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.write(buf, res.ptr - buf);
}

} // namespace

void write_record_csv(std::ostream& out, const RunRecord& record, bool deterministic_log) {
    for (std::size_t i = 0; i < record.tasks.size(); ++i) {
        out << record.step << ',' << record.epoch << ',' << i << ',';
        format_double(out, record.tasks[i].loss);
        out << ',';
        format_double(out, record.tasks[i].grad_norm);
        out << ',';
        format_double(out, record.tasks[i].flat_norm);
        out << ',';
        format_double(out, record.lr);
        out << ',';
        // Wall time is the one nondeterministic field; the reproducible-log
        // mode pins it to 0 so identical runs produce identical bytes.
        format_double(out, deterministic_log ? 0.0 : record.wall_ms);
        out << '\n';
    }
}

RunRecord mtl_step(const MultiTaskProblem& problem, ParamVector& theta,
                   const std::vector<Batch>& per_task_batches, const TrainConfig& config,
                   GradientAggregator& aggregator, ParamVector* momentum_state,
                   std::size_t step, std::size_t epoch) {
    const auto start = std::chrono::steady_clock::now();
    const std::size_t m = problem.task_count();
    const auto& part = problem.partition();
    part.require_matches(theta);
    if (per_task_batches.size() != m) {
        throw std::invalid_argument("mtl_step: need one batch per task");
    }

    RunRecord record;
    record.step = step;
    record.epoch = epoch;
    record.lr = lr_at(config, epoch);
    record.tasks.resize(m);

    std::vector<std::vector<double>> loss_grads(m);
    std::vector<std::vector<double>> flat_grads;
    std::vector<std::vector<double>> nonshared_updates(m);

    if (config.flat_enabled) {
        TaskGradientBundle bundle = compute_bundle(problem, theta, per_task_batches,
                                                   config.perturb, config.threads);
        flat_grads.resize(m);
        for (std::size_t i = 0; i < m; ++i) {
            loss_grads[i] = std::move(bundle.tasks[i].loss_shared);
            flat_grads[i] = std::move(bundle.tasks[i].flat_shared);
            nonshared_updates[i] = std::move(bundle.tasks[i].sam_nonshared);
        }
    } else {
        for (std::size_t i = 0; i < m; ++i) {
            ParamVector g = problem.task_grad(i, theta, per_task_batches[i]);
            loss_grads[i] = extract_block(g, part.shared_range());
            nonshared_updates[i] = extract_block(g, part.nonshared_range(i));
        }
    }

    for (std::size_t i = 0; i < m; ++i) {
        record.tasks[i].loss = problem.task_loss(i, theta, per_task_batches[i]);
        record.tasks[i].grad_norm = l2_norm(loss_grads[i]);
        record.tasks[i].flat_norm = config.flat_enabled ? l2_norm(flat_grads[i]) : 0.0;
    }

    std::vector<double> shared_update = aggregator.aggregate(loss_grads);
    record.loss_agg_norm = l2_norm(shared_update);
    if (config.flat_enabled) {
        const std::vector<double> flat_agg = aggregator.aggregate(flat_grads);
        record.flat_agg_norm = l2_norm(flat_agg);
        axpy_into(1.0, flat_agg, shared_update);
    }
    record.update_norm = l2_norm(shared_update);

    // assemble the full update vector [shared | ns_1 | ... | ns_m]
    ParamVector update(theta.size(), 0.0);
    {
        auto view = part.shared_view(update);
        for (std::size_t j = 0; j < view.size(); ++j) view[j] = shared_update[j];
        for (std::size_t i = 0; i < m; ++i) {
            auto nview = part.nonshared_view(update, i);
            for (std::size_t j = 0; j < nview.size(); ++j) nview[j] = nonshared_updates[i][j];
        }
    }
    if (config.momentum > 0.0 && momentum_state != nullptr) {
        if (momentum_state->size() != theta.size()) {
            momentum_state->assign(theta.size(), 0.0);
        }
        for (std::size_t j = 0; j < update.size(); ++j) {
            (*momentum_state)[j] = config.momentum * (*momentum_state)[j] + update[j];
        }
        update = *momentum_state;
    }
    for (std::size_t j = 0; j < theta.size(); ++j) {
        theta[j] -= record.lr * update[j];
    }
    require_finite(theta, "updated parameters");

    record.wall_ms = std::chrono::duration<double, std::milli>(
                         std::chrono::steady_clock::now() - start)
                         .count();
    return record;
}

namespace {

EvalSnapshot evaluate(const MultiTaskProblem& problem, const ParamVector& theta,
                      const Batch& eval_batch, std::size_t epoch) {
    EvalSnapshot snap;
    snap.epoch = epoch;
    const std::size_t m = problem.task_count();
    snap.losses.resize(m);
    const bool has_acc = problem.has_accuracy();
    if (has_acc) snap.accuracies.resize(m);
    for (std::size_t i = 0; i < m; ++i) {
        snap.losses[i] = problem.task_loss(i, theta, eval_batch);
        if (has_acc) snap.accuracies[i] = problem.task_accuracy(i, theta, eval_batch);
    }
    return snap;
}

// Higher is better when accuracies exist, otherwise lower mean loss.
double eval_score(const EvalSnapshot& snap) {
    double acc = 0.0;
    if (!snap.accuracies.empty()) {
        for (double a : snap.accuracies) acc += a;
        return acc / static_cast<double>(snap.accuracies.size());
    }
    for (double l : snap.losses) acc += l;
    return -acc / static_cast<double>(snap.losses.size());
}

} // namespace

TrainResult train(const MultiTaskProblem& problem, const DataSource& data,
                  const TrainConfig& config, std::ostream* csv_out, bool deterministic_log,
                  const TrainState* resume) {
    config.validate();
    const auto wall_start = std::chrono::steady_clock::now();
    const std::size_t m = problem.task_count();

    SeededRng master(config.seed);
    SeededRng init_rng = master.substream(1);
    SeededRng pcgrad_rng = master.substream(2);
    SeededRng batch_rng = master.substream(3);

    TrainState state;
    if (resume != nullptr) {
        state = *resume;
        problem.partition().require_matches(state.theta);
        pcgrad_rng = SeededRng::from_state(state.pcgrad_rng);
        batch_rng = SeededRng::from_state(state.batch_rng);
    } else {
        state.theta = problem.initial_params(init_rng);
    }

    GradientAggregator aggregator(config.method, pcgrad_rng);

    TrainResult result;
    if (csv_out) {
        *csv_out << kRunLogHeader << '\n';
    }

    std::size_t raw_steps = data.steps_per_epoch(config.batch_size);
    if (raw_steps == 0) raw_steps = config.steps_per_epoch_analytic;

    bool have_best = false;
    auto consider_eval = [&](const EvalSnapshot& snap) {
        result.evals.push_back(snap);
        if (!have_best || eval_score(snap) > eval_score(result.best_eval)) {
            have_best = true;
            result.best_eval = snap;
            result.best_theta = state.theta;
            result.best_epoch = snap.epoch;
        }
    };

    try {
        for (std::size_t epoch = state.next_epoch; epoch < config.epochs; ++epoch) {
            const std::uint64_t epoch_seed = batch_rng.next_u64();
            for (std::size_t s = 0; s < raw_steps; ++s) {
                std::vector<Batch> batches;
                batches.reserve(m);
                if (config.per_task_batches) {
                    const SeededRng task_mix(epoch_seed);
                    for (std::size_t i = 0; i < m; ++i) {
                        batches.push_back(data.make_batch(task_mix.substream(i + 1).seed(), s,
                                                          config.batch_size));
                    }
                } else {
                    Batch shared = data.make_batch(epoch_seed, s, config.batch_size);
                    for (std::size_t i = 0; i + 1 < m; ++i) batches.push_back(shared);
                    batches.push_back(std::move(shared));
                }
                RunRecord record = mtl_step(problem, state.theta, batches, config, aggregator,
                                            &state.momentum, state.global_step, epoch);
                ++state.global_step;
                if (csv_out) write_record_csv(*csv_out, record, deterministic_log);
                result.records.push_back(std::move(record));
            }
            state.next_epoch = epoch + 1;
            const bool last_epoch = epoch + 1 == config.epochs;
            if (last_epoch || (config.eval_every > 0 && (epoch + 1) % config.eval_every == 0)) {
                consider_eval(evaluate(problem, state.theta, data.eval_set(), epoch));
            }
        }
    } catch (const DivergenceError& err) {
        result.aborted = true;
        result.abort_reason = std::string(err.what()) + " (step " +
                              std::to_string(state.global_step) + ")";
    }

    state.pcgrad_rng = aggregator.rng_state();
    state.batch_rng = batch_rng.state();

    result.final_theta = state.theta;
    if (!result.evals.empty()) {
        result.final_eval = result.evals.back();
    }
    if (!have_best) {
        result.best_theta = state.theta;
        result.best_eval = result.final_eval;
    }
    result.state = std::move(state);
    result.total_wall_ms = std::chrono::duration<double, std::milli>(
                               std::chrono::steady_clock::now() - wall_start)
                               .count();
    return result;
}

} // namespace flatmtl
