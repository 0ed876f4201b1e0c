#pragma once

#include "flatmtl/experiment_config.hpp"
#include "flatmtl/problem.hpp"

#include <memory>
#include <string>

#include <json.hpp>

namespace flatmtl {

struct BuiltProblem {
    std::shared_ptr<MultiTaskProblem> problem;
    std::shared_ptr<DataSource> data;
    nlohmann::json metadata; // dataset provenance: seeds, hashes, composition policy
};

/// Wires a named benchmark problem (two_valley | synth_classification |
/// paired_idx | quadratic_moo) with its data source from the experiment
/// configuration. Throws std::invalid_argument for unknown names or missing
/// paired_idx paths.
BuiltProblem problem_registry(const std::string& name, const ExperimentConfig& config);

} // namespace flatmtl
