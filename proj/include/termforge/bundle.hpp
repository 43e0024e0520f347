#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "termforge/env_forge.hpp"
#include "termforge/sandbox.hpp"
#include "termforge/synth.hpp"
#include "termforge/test_forge.hpp"

namespace termforge {

struct BundleMetadata {
    std::string title;
    std::string category;    // one label from the 18-way taxonomy
    std::string source_url;  // pointer back to the recording; never its body
    int n_commands = 0;
    double recording_duration_s = 0.0;
    std::string engine_version = "termforge-0.1";

    bool operator==(const BundleMetadata&) const = default;
};

struct TaskBundle {
    std::string task_id;
    TaskInstruction instruction;
    ReferenceSolution solution;
    EnvironmentSpec env;
    TestSuite suite;
    BundleMetadata metadata;
    bool admitted = false;
};

// On-disk layout per bundle:
//   task.json  instruction.md  solution.sh
//   environment/Dockerfile [environment/docker-compose.yaml]
//   tests/suite.json  tests/assertions/<name>.sh  tests/run_tests.sh
//   validation.json
class BundleStore {
  public:
    explicit BundleStore(std::filesystem::path root);

    const std::filesystem::path& root() const { return root_; }
    std::filesystem::path bundle_dir(const std::string& task_id) const;

    std::vector<std::string> list() const;
    bool has(const std::string& task_id) const;

    // Stage bookkeeping: index.json maps task_id -> {stage: "done"}.
    std::string stage_status(const std::string& task_id, const std::string& stage) const;
    void set_stage_status(const std::string& task_id, const std::string& stage,
                          const std::string& status);

    void write_bundle(const TaskBundle& bundle);  // atomic per member file
    TaskBundle read_bundle(const std::string& task_id) const;  // CorruptBundle

    void write_validation(const std::string& task_id, const ReproductionReport& repro,
                          const std::optional<ValidationReport>& validation);
    nlohmann::json read_validation(const std::string& task_id) const;

    // Provenance rule: no recording transcript body may live under the store.
    // Returns offending paths (empty = compliant).
    std::vector<std::string> scan_provenance() const;

  private:
    nlohmann::json load_index() const;
    void save_index(const nlohmann::json& index) const;

    std::filesystem::path root_;
};

// Serialization shared with the pipeline and tests.
nlohmann::json reproduction_to_json(const ReproductionReport& report);
ReproductionReport reproduction_from_json(const nlohmann::json& j);
nlohmann::json validation_to_json(const ValidationReport& report);
ValidationReport validation_from_json(const nlohmann::json& j);

std::string instruction_to_markdown(const TaskInstruction& instruction);
TaskInstruction instruction_from_markdown(const std::string& text);

}  // namespace termforge
