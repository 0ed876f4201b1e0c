#pragma once

#include "flatmtl/experiment_config.hpp"
#include "flatmtl/trainer.hpp"

#include <string>
#include <vector>

#include <json.hpp>

namespace flatmtl {

/// Checkpoint: parameters, optimizer/rng state and the effective config; a
/// resumed run reproduces the original rng stream positions exactly.
struct Checkpoint {
    int format = 1;
    TrainState state;
    std::vector<std::pair<std::size_t, std::size_t>> shared_and_blocks; // [shared, ns...]
    std::uint64_t config_hash = 0;
    nlohmann::json config_echo;
    std::string run_id;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

/// Number of worker threads from FLATMTL_THREADS (default 1; 1 guarantees
/// bit-reproducible logs).
std::size_t threads_from_env();

/// Full train pipeline: build the problem, run the loop, write log.csv,
/// summary.json and checkpoint.json under config.out_dir. Throws
/// DivergenceError after persisting diagnostics when the run diverges.
void run_train(const ExperimentConfig& config);

/// Measurements on a stored checkpoint; writes {run_id}_{measure}_{task}.csv
/// files plus a JSON digest into out_dir.
void run_analyze(const std::string& checkpoint_path, const std::vector<std::string>& measures,
                 const ExperimentConfig& overrides, const std::string& out_dir);

/// Relative-improvement table for a set of run directories against a
/// single-task baseline file. Returns the table as JSON (also printed and
/// written to out_path when non-empty).
nlohmann::json run_compare(const std::vector<std::string>& run_dirs,
                           const std::string& baselines_path, const std::string& out_path);

/// Compose a two-task paired dataset from IDX sources and write it back out
/// as IDX files plus metadata.
void run_datagen(const ExperimentConfig& config, const std::string& out_prefix);

} // namespace flatmtl
