#pragma once

#include <filesystem>
#include <map>
#include <memory>
#include <string>
#include <vector>

#include "termforge/bundle.hpp"
#include "termforge/filter.hpp"
#include "termforge/gateway.hpp"
#include "termforge/harness.hpp"
#include "termforge/sandbox.hpp"

namespace termforge {

struct PipelineConfig {
    std::filesystem::path corpus_dir;
    std::filesystem::path store_dir = "store";
    // Working data (cast copies, transcripts, verdicts) lives outside the
    // bundle store so the provenance scan stays clean.
    std::filesystem::path work_dir;  // defaults to <store>.work
    int concurrency = 4;
    std::string driver = "local";
    LlmMode llm_mode = LlmMode::Replay;
    int budget_env = 5;
    int budget_tests = 3;
    bool force = false;
    std::filesystem::path policy_file;
    std::filesystem::path price_table_file;
    std::string model_id = "synthesis-model";
    std::string agent = "scripted-ref";
    std::string eval_model_id = "eval-model";
    double wall_clock_s = 1200.0;

    std::filesystem::path effective_work_dir() const {
        return work_dir.empty() ? std::filesystem::path(store_dir.string() + ".work") : work_dir;
    }

    // Line-oriented key=value overrides; unknown keys rejected.
    void apply_file(const std::filesystem::path& p);
};

struct StageSummary {
    std::string stage;
    int processed = 0;
    int skipped = 0;
    int failed = 0;
    std::vector<std::string> task_notes;
};

class Pipeline {
  public:
    Pipeline(PipelineConfig config, std::shared_ptr<Provider> provider = nullptr);

    StageSummary run_stage(const std::string& stage);

    BundleStore& store() { return store_; }
    LlmGateway& gateway() { return *gateway_; }
    SandboxDriver& driver() { return *driver_; }
    const PipelineConfig& config() const { return config_; }

    static const std::vector<std::string>& stage_order();

  private:
    StageSummary stage_ingest();
    StageSummary stage_filter();
    StageSummary stage_synthesize();
    StageSummary stage_forge_env();
    StageSummary stage_forge_tests();
    StageSummary stage_validate();
    StageSummary stage_eval();
    StageSummary stage_report();

    std::vector<std::string> work_ids() const;
    RawRecording load_work_recording(const std::string& id) const;

    PipelineConfig config_;
    BundleStore store_;
    std::filesystem::path work_;
    FilterPolicy policy_;
    std::shared_ptr<SandboxDriver> driver_;
    std::unique_ptr<LlmGateway> gateway_;
};

// Runs fn(i) for i in [0, n) on a bounded worker pool.
void parallel_for(size_t n, int workers, const std::function<void(size_t)>& fn);

}  // namespace termforge
