#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "termforge/errors.hpp"
#include "termforge/pipeline.hpp"

using termforge::Pipeline;
using termforge::PipelineConfig;
using termforge::StageSummary;

int main(int argc, char** argv) {
    CLI::App app{"termforge: terminal-recording task engine and evaluation harness"};
    app.require_subcommand(1);

    PipelineConfig config;
    std::string llm_mode = "replay";
    std::string config_file;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--corpus", config.corpus_dir, "Recording corpus directory");
        cmd->add_option("--store", config.store_dir, "Bundle store directory");
        cmd->add_option("--work", config.work_dir, "Working directory (default <store>.work)");
        cmd->add_option("--concurrency", config.concurrency, "Worker pool size")
            ->check(CLI::PositiveNumber);
        cmd->add_option("--driver", config.driver, "Sandbox driver")
            ->check(CLI::IsMember({"container", "local"}));
        cmd->add_option("--llm-mode", llm_mode, "LLM gateway mode")
            ->check(CLI::IsMember({"live", "record", "replay"}));
        cmd->add_option("--budget-env", config.budget_env, "Environment repair budget");
        cmd->add_option("--budget-tests", config.budget_tests, "Test refinement budget");
        cmd->add_option("--policy", config.policy_file, "Filter policy file");
        cmd->add_option("--prices", config.price_table_file, "Model price table");
        cmd->add_option("--model", config.model_id, "Synthesis model id");
        cmd->add_option("--config", config_file, "key=value configuration file");
        cmd->add_flag("--force", config.force, "Reprocess completed tasks");
    };

    for (const auto& stage : Pipeline::stage_order()) {
        CLI::App* cmd = app.add_subcommand(stage, "Run the " + stage + " stage");
        add_common(cmd);
        if (stage == "eval") {
            cmd->add_option("--agent", config.agent, "Agent adapter name");
            cmd->add_option("--tasks", config.store_dir, "Task bundle directory");
            cmd->add_option("--eval-model", config.eval_model_id, "Evaluated model id");
            cmd->add_option("--wall-clock", config.wall_clock_s, "Per-task wall clock (s)");
        }
    }

    CLI11_PARSE(app, argc, argv);

    try {
        if (!config_file.empty()) config.apply_file(config_file);
        config.llm_mode = termforge::llm_mode_from_string(llm_mode);

        std::string stage = app.get_subcommands().front()->get_name();
        Pipeline pipeline(config);
        StageSummary summary = pipeline.run_stage(stage);

        std::cout << summary.stage << ": processed " << summary.processed << ", skipped "
                  << summary.skipped << ", failed " << summary.failed << "\n";
        for (const auto& note : summary.task_notes) std::cout << "  " << note << "\n";
        return summary.failed > 0 ? 1 : 0;
    } catch (const termforge::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
}
