#include "termforge/harness.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <sstream>

#include <nlohmann/json.hpp>

#include "termforge/errors.hpp"
#include "termforge/test_forge.hpp"
#include "termforge/util.hpp"

using nlohmann::json;

namespace termforge {

std::string to_string(Outcome o) {
    switch (o) {
        case Outcome::Pass: return "pass";
        case Outcome::Fail: return "fail";
        case Outcome::Timeout: return "timeout";
        case Outcome::Error: return "error";
    }
    return "error";
}

Outcome outcome_from_string(const std::string& s) {
    if (s == "pass") return Outcome::Pass;
    if (s == "fail") return Outcome::Fail;
    if (s == "timeout") return Outcome::Timeout;
    return Outcome::Error;
}

Outcome classify_outcome(const std::map<std::string, bool>& suite_results,
                         const AgentStatus& status) {
    if (status.pre_agent_error) return Outcome::Error;
    if (status.wall_clock_exceeded) return Outcome::Timeout;
    if (!suite_results.empty() && allpassing_verdict(suite_results)) return Outcome::Pass;
    return Outcome::Fail;
}

RunRecord run_task(const TaskBundle& bundle, AgentAdapter& agent, const HarnessConfig& config,
                   SandboxDriver& driver) {
    RunRecord record;
    record.task_id = bundle.task_id;
    record.agent = agent.name();
    record.model = config.model_id;
    record.started_at = static_cast<long>(std::time(nullptr));

    AgentStatus status;
    ContainerHandle handle;
    try {
        ImageRef image = driver.build_image(bundle.env);
        handle = driver.launch(image, IsolationPolicy{.network_none = true});
    } catch (const StartupTimeout&) {
        status.pre_agent_error = true;
        status.error_class = "startup-timeout";
    } catch (const Error& e) {
        status.pre_agent_error = true;
        status.error_class = "session-init";
        record.notes = e.what();
    }

    if (!status.pre_agent_error) {
        // Isolation spot-check: in an engine-backed container the outbound
        // probe must fail; the local driver cannot enforce isolation and says
        // so instead of silently passing.
        if (driver.supports_isolation()) {
            ExecResult probe = driver.exec(handle, network_probe_script(), 10.0);
            if (probe.exit_code == 0) {
                status.pre_agent_error = true;
                status.error_class = "session-init";
                record.notes = "network isolation breach: outbound probe succeeded";
            }
        } else {
            record.notes = "isolation-not-applicable (local driver)";
        }
    }

    if (!status.pre_agent_error && !agent.setup_script().empty()) {
        ExecResult setup = driver.exec(handle, agent.setup_script(), 300.0);
        if (setup.exit_code != 0 || setup.timed_out) {
            status.pre_agent_error = true;
            status.error_class = "agent-install";
            record.notes = "agent setup exited " + std::to_string(setup.exit_code);
        }
    }

    if (!status.pre_agent_error) {
        auto start = std::chrono::steady_clock::now();
        auto elapsed = [&] {
            return std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        };
        ShellEndpoint shell = [&](const std::string& command) -> ExecResult {
            double remaining = config.wall_clock_s - elapsed();
            if (remaining <= 0.0) {
                status.wall_clock_exceeded = true;
                ExecResult r;
                r.exit_code = 124;
                r.timed_out = true;
                r.stderr_text = "wall clock exceeded";
                return r;
            }
            ExecResult r = driver.exec(handle, command, remaining);
            if (elapsed() >= config.wall_clock_s) status.wall_clock_exceeded = true;
            return r;
        };
        try {
            Trajectory traj = agent.drive(instruction_to_markdown(bundle.instruction), shell);
            traj.wall_time_s = elapsed();
            record.trajectory = std::move(traj);
        } catch (const std::exception& e) {
            record.notes += std::string("; agent aborted: ") + e.what();
        }
        record.per_assertion = run_suite(driver, handle, bundle.suite);
    }

    driver.teardown(handle);
    record.outcome = classify_outcome(record.per_assertion, status);
    record.error_class = status.error_class;
    return record;
}

RunSet merge_retries(const std::vector<RunSet>& sets) {
    RunSet merged;
    if (sets.empty()) return merged;
    merged.run_id = sets.front().run_id + "-merged";
    merged.agent = sets.front().agent;
    merged.model = sets.front().model;
    for (const auto& s : sets)
        if (s.agent != merged.agent || s.model != merged.model)
            throw ConfigMismatch(s.agent + "/" + s.model + " vs " + merged.agent + "/" +
                                 merged.model);

    std::map<std::pair<std::string, std::string>, RunRecord> latest;
    for (const auto& s : sets)
        for (const auto& r : s.records) {
            auto key = std::make_pair(r.task_id, r.agent);
            auto it = latest.find(key);
            if (it == latest.end() || r.started_at > it->second.started_at ||
                (it->second.outcome == Outcome::Error && r.outcome != Outcome::Error &&
                 r.started_at >= it->second.started_at))
                latest[key] = r;
        }
    for (auto& [key, r] : latest) merged.records.push_back(std::move(r));
    return merged;
}

namespace {

json trajectory_to_json(const Trajectory& t) {
    json turns = json::array();
    for (const auto& [cmd, out] : t.turns) turns.push_back({{"command", cmd}, {"output", out}});
    return {{"turns", turns},
            {"usage",
             {{"model_id", t.usage.model_id},
              {"input_tokens", t.usage.input_tokens},
              {"output_tokens", t.usage.output_tokens},
              {"cost_usd", t.usage.cost_usd}}},
            {"wall_time_s", t.wall_time_s}};
}

Trajectory trajectory_from_json(const json& j) {
    Trajectory t;
    for (const auto& turn : j.value("turns", json::array()))
        t.turns.emplace_back(turn.value("command", ""), turn.value("output", ""));
    const json& u = j.value("usage", json::object());
    t.usage.model_id = u.value("model_id", "");
    t.usage.input_tokens = u.value("input_tokens", 0L);
    t.usage.output_tokens = u.value("output_tokens", 0L);
    t.usage.cost_usd = u.value("cost_usd", 0.0);
    t.wall_time_s = j.value("wall_time_s", 0.0);
    return t;
}

}  // namespace

void save_runset(const RunSet& set, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    json config{{"run_id", set.run_id}, {"agent", set.agent}, {"model", set.model}};
    atomic_write_file(dir / "config.json", config.dump(2));
    std::ostringstream lines;
    for (const auto& r : set.records) {
        json per = json::object();
        for (const auto& [name, ok] : r.per_assertion) per[name] = ok;
        json j{{"task_id", r.task_id},     {"agent", r.agent},
               {"model", r.model},         {"outcome", to_string(r.outcome)},
               {"per_assertion", per},     {"started_at", r.started_at},
               {"error_class", r.error_class}, {"notes", r.notes}};
        if (r.trajectory) j["trajectory"] = trajectory_to_json(*r.trajectory);
        lines << j.dump() << "\n";
    }
    atomic_write_file(dir / "records.jsonl", lines.str());
}

RunSet load_runset(const std::filesystem::path& dir) {
    RunSet set;
    json config = json::parse(read_file(dir / "config.json"));
    set.run_id = config.value("run_id", "");
    set.agent = config.value("agent", "");
    set.model = config.value("model", "");
    for (const auto& line : split_lines(read_file(dir / "records.jsonl"))) {
        if (trim(line).empty()) continue;
        json j = json::parse(line);
        RunRecord r;
        r.task_id = j.value("task_id", "");
        r.agent = j.value("agent", "");
        r.model = j.value("model", "");
        r.outcome = outcome_from_string(j.value("outcome", "error"));
        const json per = j.value("per_assertion", json::object());
        for (const auto& [name, ok] : per.items()) r.per_assertion[name] = ok.get<bool>();
        r.started_at = j.value("started_at", 0L);
        r.error_class = j.value("error_class", "");
        r.notes = j.value("notes", "");
        if (j.contains("trajectory")) r.trajectory = trajectory_from_json(j["trajectory"]);
        set.records.push_back(std::move(r));
    }
    return set;
}

// ---------------------------------------------------------------------------
// Built-in adapters.
// ---------------------------------------------------------------------------

namespace {

class ScriptedAgent final : public AgentAdapter {
  public:
    ScriptedAgent(std::string name, std::vector<std::string> commands)
        : name_(std::move(name)), commands_(std::move(commands)) {}

    std::string name() const override { return name_; }

    Trajectory drive(const std::string&, const ShellEndpoint& shell) override {
        Trajectory traj;
        for (const auto& cmd : commands_) {
            ExecResult r = shell(cmd);
            traj.turns.emplace_back(cmd, r.stdout_text + r.stderr_text);
            if (r.timed_out) break;
        }
        return traj;
    }

  private:
    std::string name_;
    std::vector<std::string> commands_;
};

class NopAgent final : public AgentAdapter {
  public:
    std::string name() const override { return "nop"; }
    Trajectory drive(const std::string&, const ShellEndpoint&) override { return {}; }
};

class GenericLoopAgent final : public AgentAdapter {
  public:
    GenericLoopAgent(LlmGateway& gateway, std::string model_id, double temperature,
                     long summarize_below, int max_turns)
        : gateway_(gateway), model_id_(std::move(model_id)), temperature_(temperature),
          summarize_below_(summarize_below), max_turns_(max_turns) {}

    std::string name() const override { return "generic-loop"; }

    Trajectory drive(const std::string& instruction_text, const ShellEndpoint& shell) override {
        Trajectory traj;
        json history = json::array();
        for (int turn = 0; turn < max_turns_; ++turn) {
            // Proactive summarization: when the running context estimate
            // crowds the window, collapse the older half of the history.
            long estimate = static_cast<long>(history.dump().size() / 4);
            if (estimate > summarize_below_ && history.size() > 2) {
                size_t half = history.size() / 2;
                json kept = json::array();
                kept.push_back({{"command", "(summary)"},
                                {"output", "[summarized " + std::to_string(half) +
                                               " earlier turns]"}});
                for (size_t i = half; i < history.size(); ++i) kept.push_back(history[i]);
                history = std::move(kept);
            }
            ChatRequest req;
            req.template_id = "agent_next_command";
            req.model_id = model_id_;
            req.temperature = temperature_;
            req.segments = {
                "You are completing a terminal task. Reply with exactly one shell command, "
                "or DONE when the goal state is reached.",
                json{{"instruction", instruction_text}, {"history", history}}.dump()};
            ChatResponse resp = gateway_.complete(req);
            traj.usage.model_id = model_id_;
            traj.usage.input_tokens += resp.usage.input_tokens;
            traj.usage.output_tokens += resp.usage.output_tokens;
            traj.usage.cost_usd += resp.usage.cost_usd;

            std::string command = trim(resp.text);
            if (command.empty() || command == "DONE") break;
            ExecResult r = shell(command);
            std::string output = r.stdout_text + r.stderr_text;
            traj.turns.emplace_back(command, output);
            history.push_back({{"command", command}, {"output", output.substr(0, 2000)}});
            if (r.timed_out) break;
        }
        return traj;
    }

  private:
    LlmGateway& gateway_;
    std::string model_id_;
    double temperature_;
    long summarize_below_;
    int max_turns_;
};

}  // namespace

std::shared_ptr<AgentAdapter> make_scripted_agent(const std::string& name,
                                                  std::vector<std::string> commands) {
    return std::make_shared<ScriptedAgent>(name, std::move(commands));
}

std::shared_ptr<AgentAdapter> make_nop_agent() { return std::make_shared<NopAgent>(); }

std::shared_ptr<AgentAdapter> make_generic_loop_agent(LlmGateway& gateway,
                                                      const std::string& model_id,
                                                      double temperature,
                                                      long summarize_below_tokens, int max_turns) {
    return std::make_shared<GenericLoopAgent>(gateway, model_id, temperature,
                                              summarize_below_tokens, max_turns);
}

}  // namespace termforge
