#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "mmflow/mmflow.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRun = 3;
constexpr int kExitExpectation = 4;

void list_families(bool as_json) {
    const auto entries = mmflow::family_registry();
    if (as_json) {
        mmflow::Json arr = mmflow::Json::array();
        for (const auto& e : entries) {
            mmflow::Json expected = mmflow::Json::array();
            for (const auto& [coupling, outcome] : e.expected) {
                expected.push_back({{"coupling", coupling}, {"outcome", outcome}});
            }
            arr.push_back({{"name", e.name},
                           {"description", e.description},
                           {"parameters", e.parameters},
                           {"options", e.options},
                           {"expected", expected}});
        }
        mmflow::write_json(std::cout, mmflow::Json{{"families", arr}});
        std::cout << '\n';
        return;
    }
    for (const auto& e : entries) {
        std::cout << e.name << "\n  " << e.description << '\n';
        for (const auto& [k, v] : e.parameters) std::cout << "  parameter " << k << " = " << v << '\n';
        for (const auto& [k, v] : e.options) std::cout << "  option " << k << " = " << v << '\n';
        for (const auto& [c, o] : e.expected) std::cout << "  expect [" << c << "] " << o << '\n';
    }
}

int run(const std::string& config_path, std::string out_dir, std::size_t jobs, bool as_json) {
    const mmflow::ExperimentConfig cfg = mmflow::load_config(config_path);
    if (out_dir.empty()) {
        if (const char* env = std::getenv("OUTPUT_DIR"); env && *env) {
            out_dir = env;
        } else {
            out_dir = cfg.output;
        }
    }
    const mmflow::ExperimentResult res = mmflow::run_experiment(cfg, jobs);
    mmflow::write_reports(res, out_dir);

    for (const auto& e : res.expectations) {
        std::cerr << (e.passed ? "expectation met: " : "expectation FAILED: ") << e.kind << " (" << e.detail << ")\n";
    }
    if (res.invariant_violations() != 0) {
        std::cerr << "warning: " << res.invariant_violations() << " invariant violations\n";
    }
    const char* status = res.expectations_met() ? "ok" : "expectation_failed";
    if (as_json) {
        mmflow::Json line{{"status", status},
                          {"output", out_dir},
                          {"runs", res.trajectories.size()},
                          {"invariant_violations", res.invariant_violations()}};
        std::cout << line.dump() << '\n';
    } else {
        std::cout << "status=" << status << " output=" << out_dir << " runs=" << res.trajectories.size()
                  << " invariant_violations=" << res.invariant_violations() << '\n';
    }
    return res.expectations_met() ? 0 : kExitExpectation;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Relaxed minimizing-movement experiments"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir;
    std::size_t jobs = mmflow::detail::default_jobs();
    bool run_json = false;
    auto* run_cmd = app.add_subcommand("run", "Run an experiment configuration");
    run_cmd->add_option("config", config_path, "Configuration file")->required();
    run_cmd->add_option("--out", out_dir, "Output directory (overrides config and OUTPUT_DIR)");
    run_cmd->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
    run_cmd->add_flag("--json", run_json, "Print the summary line as JSON");

    bool list_json = false;
    auto* list_cmd = app.add_subcommand("list-families", "List the available families");
    list_cmd->add_flag("--json", list_json, "Machine-readable listing");

    std::string validate_path;
    auto* validate_cmd = app.add_subcommand("validate", "Check a configuration without running it");
    validate_cmd->add_option("config", validate_path, "Configuration file")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << "\n\n" << app.help();
        return kExitConfig;
    }

    try {
        if (*list_cmd) {
            list_families(list_json);
            return 0;
        }
        if (*validate_cmd) {
            mmflow::load_config(validate_path);
            std::cout << "status=valid config=" << validate_path << '\n';
            return 0;
        }
        return run(config_path, out_dir, jobs, run_json);
    } catch (const mmflow::Error& e) {
        std::cerr << "error [" << mmflow::to_string(e.kind()) << "]: " << e.what() << '\n';
        if (e.kind() == mmflow::ErrorKind::ConfigError) {
            std::cout << "status=config_error\n";
            return kExitConfig;
        }
        std::cout << "status=run_error\n";
        return kExitRun;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        std::cout << "status=run_error\n";
        return kExitRun;
    }
}
