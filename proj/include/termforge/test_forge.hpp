#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "termforge/env_forge.hpp"
#include "termforge/gateway.hpp"
#include "termforge/sandbox.hpp"
#include "termforge/synth.hpp"

namespace termforge {

struct Assertion {
    std::string name;
    std::string predicate_script;  // exits 0 iff the asserted state holds
    std::string rationale;         // instruction clause the assertion grounds
};

struct TestSuite {
    std::vector<Assertion> assertions;
    int version = 1;

    // Combined runner emitted into the bundle for harness use.
    std::string runner_script() const;
};

struct PartialSolution {
    enum class Origin { Truncate, Ablate } origin = Origin::Truncate;
    std::string removed;  // human description of what was dropped
    std::string script_text;
    std::string id() const { return origin == Origin::Truncate ? "truncate" : "ablate"; }
};

struct TrialReport {
    enum class Trial { AllPassing, Nop, Partial } trial = Trial::AllPassing;
    std::optional<std::string> partial_id;
    std::map<std::string, bool> per_assertion;  // name -> passed
    bool verdict = false;
    std::string container_id;
    std::string note;
};

struct ValidationRound {
    int suite_version = 0;
    std::vector<TrialReport> trials;
};

struct ValidationReport {
    std::string task_id;
    std::vector<ValidationRound> rounds;
    enum class Final { Admitted, Discarded } final = Final::Discarded;
    std::vector<std::string> instruction_sync_notes;
    TestSuite final_suite;
};

// Pure verdict rules, property-tested over arbitrary result maps.
bool allpassing_verdict(const std::map<std::string, bool>& per_assertion);
bool nop_verdict(const std::map<std::string, bool>& per_assertion);
bool partial_verdict(const std::map<std::string, bool>& per_assertion);

// Lint: true when a predicate references volatile state (timestamps, pids,
// /proc, transient stdout) instead of persistent artifacts.
bool is_brittle_assertion(const Assertion& assertion);

TestSuite generate_tests(const TaskInstruction& instruction, const ReferenceSolution& solution,
                         const FsDelta& delta, LlmGateway& gateway,
                         const std::string& model_id = "synthesis-model");

std::map<std::string, bool> run_suite(SandboxDriver& driver, const ContainerHandle& handle,
                                      const TestSuite& suite);

struct PartialStrategy {
    bool half_prefix = true;
    bool last_ablation = true;
};

std::vector<PartialSolution> derive_partials(const ReferenceSolution& solution,
                                             PartialStrategy strategy = {});

TrialReport trial_allpassing(const ImageRef& image, const ReferenceSolution& solution,
                             const TestSuite& suite, SandboxDriver& driver);
TrialReport trial_nop(const ImageRef& image, const TestSuite& suite, SandboxDriver& driver);
std::vector<TrialReport> trial_partial(const ImageRef& image,
                                       const std::vector<PartialSolution>& partials,
                                       const TestSuite& suite, SandboxDriver& driver);

// Rounds of generate/repair -> three trials until all pass or the budget is
// exhausted. May append clarifying clauses to the instruction (sync notes).
ValidationReport validate_task(const std::string& task_id, TaskInstruction& instruction,
                               const ReferenceSolution& solution, const ImageRef& image,
                               const FsDelta& delta, int budget, SandboxDriver& driver,
                               LlmGateway& gateway,
                               const std::string& model_id = "synthesis-model",
                               const TestSuite* initial_suite = nullptr);

}  // namespace termforge
