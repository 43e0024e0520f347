#pragma once

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "termforge/bundle.hpp"
#include "termforge/gateway.hpp"
#include "termforge/sandbox.hpp"

namespace termforge {

// Executes one agent command inside the task container and returns what the
// agent observes.
using ShellEndpoint = std::function<ExecResult(const std::string& command)>;

struct Trajectory {
    // (command issued, observed output) per turn.
    std::vector<std::pair<std::string, std::string>> turns;
    UsageRecord usage;
    double wall_time_s = 0.0;
};

class AgentAdapter {
  public:
    virtual ~AgentAdapter() = default;
    virtual std::string name() const = 0;
    // Installed inside the container before the agent runs; empty for
    // harness-native agents. Nonzero exit is a harness error, never a fail.
    virtual std::string setup_script() const { return ""; }
    virtual Trajectory drive(const std::string& instruction_text, const ShellEndpoint& shell) = 0;
};

enum class Outcome { Pass, Fail, Timeout, Error };

std::string to_string(Outcome o);
Outcome outcome_from_string(const std::string& s);

struct RunRecord {
    std::string task_id;
    std::string agent;
    std::string model;
    Outcome outcome = Outcome::Error;
    std::optional<Trajectory> trajectory;
    std::map<std::string, bool> per_assertion;
    long started_at = 0;  // unix seconds
    std::string error_class;  // session-init | startup-timeout | agent-install
    std::string notes;
};

struct RunSet {
    std::string run_id;
    std::string agent;
    std::string model;
    std::vector<RunRecord> records;
};

struct HarnessConfig {
    std::string model_id = "eval-model";
    double wall_clock_s = 1200.0;  // 20 min per task
    int concurrency = 4;
};

struct AgentStatus {
    bool pre_agent_error = false;
    std::string error_class;
    bool wall_clock_exceeded = false;
};

// Pure classification rule: pre-agent harness failure -> error; wall clock
// exceeded -> timeout (a fail); all assertions pass -> pass; otherwise fail.
Outcome classify_outcome(const std::map<std::string, bool>& suite_results,
                         const AgentStatus& status);

RunRecord run_task(const TaskBundle& bundle, AgentAdapter& agent, const HarnessConfig& config,
                   SandboxDriver& driver);

// Latest record wins per (task, agent); errors are replaced by any later
// non-error record. Throws ConfigMismatch when sets disagree on agent/model.
RunSet merge_retries(const std::vector<RunSet>& sets);

// One record per line; config snapshot sits beside the log.
void save_runset(const RunSet& set, const std::filesystem::path& dir);
RunSet load_runset(const std::filesystem::path& dir);

// Built-in adapters.
std::shared_ptr<AgentAdapter> make_scripted_agent(const std::string& name,
                                                  std::vector<std::string> commands);
std::shared_ptr<AgentAdapter> make_nop_agent();
// Prompts the gateway for the next command each turn; summarizes history when
// the free-token estimate drops below the threshold.
std::shared_ptr<AgentAdapter> make_generic_loop_agent(LlmGateway& gateway,
                                                      const std::string& model_id,
                                                      double temperature = 0.7,
                                                      long summarize_below_tokens = 8000,
                                                      int max_turns = 50);

}  // namespace termforge
