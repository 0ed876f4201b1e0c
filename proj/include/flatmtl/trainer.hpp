#pragma once

#include "flatmtl/aggregators.hpp"
#include "flatmtl/perturb.hpp"
#include "flatmtl/problem.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace flatmtl {

enum class LrScheduleKind { Constant, StepDecay };

struct TrainConfig {
    AggregationMethod method;
    PerturbConfig perturb;
    /// OFF trains the plain empirical-risk baseline: no perturbed
    /// evaluations are ever constructed and the shared update aggregates the
    /// plain gradients.
    bool flat_enabled = false;
    double learning_rate = 0.01;
    LrScheduleKind schedule = LrScheduleKind::Constant;
    double decay_factor = 0.85;
    std::size_t decay_every = 10;
    /// Momentum over the assembled final update vector (0 = plain SGD).
    double momentum = 0.0;
    std::size_t epochs = 1;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
    std::size_t eval_every = 0; // epochs between eval passes; 0 = final only
    bool per_task_batches = false;
    std::size_t steps_per_epoch_analytic = 50; // for data sources that ignore batches
    std::size_t threads = 1;

    void validate() const;
};

/// Learning rate for an epoch under the configured schedule.
double lr_at(const TrainConfig& config, std::size_t epoch);

struct TaskStepStats {
    double loss = 0.0;
    double grad_norm = 0.0; // ||g_loss_shared|| for this task
    double flat_norm = 0.0; // ||g_flat_shared||, 0 when flat mode is off
};

struct RunRecord {
    std::size_t step = 0;
    std::size_t epoch = 0;
    std::vector<TaskStepStats> tasks;
    double loss_agg_norm = 0.0;
    double flat_agg_norm = 0.0;
    double update_norm = 0.0; // shared update = loss_agg + flat_agg
    double lr = 0.0;
    double wall_ms = 0.0;
};

/// One Algorithm-style update: per-task bundle (or plain gradients when flat
/// mode is off), the two aggregations, the combined shared step and the
/// per-task non-shared steps. theta is updated in place.
RunRecord mtl_step(const MultiTaskProblem& problem, ParamVector& theta,
                   const std::vector<Batch>& per_task_batches, const TrainConfig& config,
                   GradientAggregator& aggregator, ParamVector* momentum_state,
                   std::size_t step, std::size_t epoch);

struct EvalSnapshot {
    std::size_t epoch = 0;
    std::vector<double> losses;
    std::vector<double> accuracies; // empty when the problem has no accuracy
};

/// Serializable mid-run state: everything needed to continue a run and
/// reproduce the rng stream positions exactly.
struct TrainState {
    ParamVector theta;
    ParamVector momentum;
    std::array<std::uint64_t, 4> pcgrad_rng{};
    std::array<std::uint64_t, 4> batch_rng{};
    std::size_t next_epoch = 0;
    std::size_t global_step = 0;
};

struct TrainResult {
    ParamVector final_theta;
    ParamVector best_theta;
    std::size_t best_epoch = 0;
    std::vector<RunRecord> records;
    std::vector<EvalSnapshot> evals; // includes the final epoch
    EvalSnapshot final_eval;
    EvalSnapshot best_eval;
    TrainState state; // state after the last completed epoch
    double total_wall_ms = 0.0;
    bool aborted = false;
    std::string abort_reason;
};

/// Runs the full training loop. Deterministic given (config, problem, data):
/// all randomness comes from substreams of config.seed. When csv_out is given
/// one log row per (step, task) is written; wall_ms is written as measured
/// unless deterministic_log is set (the bit-reproducible mode), which pins it
/// to 0. Pass resume to continue from a checkpointed TrainState.
TrainResult train(const MultiTaskProblem& problem, const DataSource& data,
                  const TrainConfig& config, std::ostream* csv_out = nullptr,
                  bool deterministic_log = true, const TrainState* resume = nullptr);

/// CSV header used by train(): one row per (step, task).
extern const char* const kRunLogHeader;

void write_record_csv(std::ostream& out, const RunRecord& record, bool deterministic_log);

} // namespace flatmtl
