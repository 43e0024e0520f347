#pragma once

#include <optional>
#include <string>
#include <vector>

#include "termforge/gateway.hpp"
#include "termforge/sandbox.hpp"
#include "termforge/synth.hpp"

namespace termforge {

struct RepairAttempt {
    int iteration = 0;
    enum class FailureKind { Build, Startup, Runtime } failure_kind = FailureKind::Build;
    std::string failure_log;
    EnvironmentSpec spec_after;
};

struct ReproductionReport {
    std::string task_id;
    enum class Status { Reproduced, Discarded } status = Status::Discarded;
    std::vector<RepairAttempt> attempts;
    std::optional<ExecResult> final_exec;
    std::optional<std::string> discard_reason;
    // Image produced by the successful build (set when reproduced), so later
    // stages can reuse it instead of rebuilding.
    std::optional<std::string> image_id;
    FsDelta delta;  // pre/post filesystem delta of the successful run
};

// Derives an environment spec from the solution commands (plus any repository
// manifests mentioned in metadata) via the gateway, then applies the anti-fake
// lint: the spec may not fabricate stand-ins for real tools.
EnvironmentSpec synthesize_environment(const ReferenceSolution& solution,
                                       const std::string& metadata_context, LlmGateway& gateway,
                                       const std::string& model_id = "synthesis-model");

// Static scan of a spec for stub-executable patterns, plus the dynamic check
// that no solution command's leading token resolves to a file the spec itself
// writes. Throws FakeDependencyDetected.
void lint_fake_dependencies(const EnvironmentSpec& spec, const ReferenceSolution& solution);

// Build -> launch (network allowed) -> execute the solution; feed failures
// back through the gateway for spec revisions until exit 0 or the budget runs
// out. Never throws: every outcome lands in the report.
ReproductionReport reproduce_loop(const EnvironmentSpec& spec, const ReferenceSolution& solution,
                                  int budget, SandboxDriver& driver, LlmGateway& gateway,
                                  const std::string& model_id = "synthesis-model");

// Failure signatures no spec revision can fix (dead URLs, unreachable hosts).
bool is_irrecoverable_failure(const std::string& failure_log);

}  // namespace termforge
