// flatmtl CLI: train / analyze / compare / datagen.
//
// Exit codes: 0 ok, 2 invalid config or usage, 3 numeric failure
// (divergence, solver breakdown), 4 I/O failure.

#include "flatmtl/errors.hpp"
#include "flatmtl/runner.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace {

struct PendingConfig {
    std::string config_file;
    std::vector<std::pair<std::string, std::string>> overrides; // flag order preserved

    flatmtl::ExperimentConfig resolve() const {
        flatmtl::ExperimentConfig cfg;
        if (!config_file.empty()) cfg.load_file(config_file);
        for (const auto& [key, value] : overrides) cfg.set(key, value); // flags win
        return cfg;
    }
};

// Every config key doubles as a --flag; collected as strings and applied
// through the same setter as the config file so the merge rules stay in one
// place.
void add_config_flags(CLI::App* cmd, PendingConfig& pending) {
    cmd->add_option("--config", pending.config_file, "key = value config file");
    for (const std::string& key : flatmtl::ExperimentConfig::known_keys()) {
        cmd->add_option_function<std::string>(
            "--" + key,
            [&pending, key](const std::string& value) {
                pending.overrides.emplace_back(key, value);
            },
            "override config key '" + key + "'");
    }
}

int guarded(const std::function<void()>& body) {
    try {
        body();
        return 0;
    } catch (const CLI::ParseError&) {
        throw; // handled by CLI11 in main
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const flatmtl::IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 4;
    } catch (const flatmtl::NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"flat-region multi-task training and diagnostics"};
    app.require_subcommand(1);

    int exit_code = 0;

    // train
    auto* train_cmd = app.add_subcommand("train", "run a training experiment");
    PendingConfig train_cfg;
    add_config_flags(train_cmd, train_cfg);
    train_cmd->callback([&] {
        exit_code = guarded([&] {
            flatmtl::ExperimentConfig cfg = train_cfg.resolve();
            flatmtl::run_train(cfg);
        });
    });

    // analyze
    auto* analyze_cmd = app.add_subcommand("analyze", "measure a stored checkpoint");
    PendingConfig analyze_cfg;
    std::string checkpoint_path;
    std::string analyze_out;
    std::vector<std::string> measures;
    analyze_cmd->add_option("checkpoint", checkpoint_path, "checkpoint.json from a run")
        ->required();
    analyze_cmd->add_option("--measure", measures, "sharpness|probe|surface (repeatable)")
        ->required();
    analyze_cmd->add_option("--analyze-out", analyze_out,
                            "output directory (default: beside the checkpoint)");
    add_config_flags(analyze_cmd, analyze_cfg);
    analyze_cmd->callback([&] {
        exit_code = guarded([&] {
            flatmtl::ExperimentConfig overrides = analyze_cfg.resolve();
            flatmtl::run_analyze(checkpoint_path, measures, overrides, analyze_out);
        });
    });

    // compare
    auto* compare_cmd = app.add_subcommand("compare", "delta-m table across runs");
    std::vector<std::string> run_dirs;
    std::string baselines_path;
    std::string compare_out;
    compare_cmd->add_option("runs", run_dirs, "run directories with summary.json")->required();
    compare_cmd->add_option("--baselines", baselines_path,
                            "JSON file with single-task baseline metrics")
        ->required();
    compare_cmd->add_option("--table-out", compare_out, "write the table JSON here");
    compare_cmd->callback([&] {
        exit_code = guarded([&] {
            const auto table = flatmtl::run_compare(run_dirs, baselines_path, compare_out);
            std::cout << table.dump(2) << "\n";
        });
    });

    // datagen
    auto* datagen_cmd = app.add_subcommand("datagen", "compose a paired two-task dataset");
    PendingConfig datagen_cfg;
    std::string out_prefix;
    datagen_cmd->add_option("--out-prefix", out_prefix, "output file prefix")->required();
    add_config_flags(datagen_cmd, datagen_cfg);
    datagen_cmd->callback([&] {
        exit_code = guarded([&] {
            flatmtl::ExperimentConfig cfg = datagen_cfg.resolve();
            flatmtl::run_datagen(cfg, out_prefix);
        });
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2; // usage problems are config errors
    }
    return exit_code;
}
