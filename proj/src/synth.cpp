#include "termforge/synth.hpp"

#include <regex>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "termforge/errors.hpp"
#include "termforge/util.hpp"

using nlohmann::json;

namespace termforge {

namespace {
constexpr const char* kPreamble = "#!/usr/bin/env bash\nset -euo pipefail\n\n";
}

ReferenceSolution ReferenceSolution::from_commands(const std::vector<std::string>& commands) {
    ReferenceSolution sol;
    sol.commands = commands;
    std::ostringstream script;
    script << kPreamble;
    for (const auto& c : commands) script << c << "\n";
    sol.script_text = script.str();
    for (size_t i = 0; i < commands.size(); ++i)
        if (is_effectful_command(commands[i])) sol.effectful_indices.push_back(i);
    return sol;
}

std::vector<std::string> ReferenceSolution::parse_script(const std::string& script_text) {
    std::vector<std::string> commands;
    for (const auto& line : split_lines(script_text)) {
        std::string t = trim(line);
        if (t.empty() || t[0] == '#') continue;
        if (t == "set -euo pipefail") continue;
        commands.push_back(t);
    }
    return commands;
}

bool is_effectful_command(const std::string& command) {
    static const std::set<std::string> read_only = {"ls",   "cat",   "cd",      "pwd",
                                                    "echo", "clear", "history"};
    for (const auto& simple : split_compound_command(command)) {
        std::string tok = leading_command_token(simple);
        if (tok.empty()) continue;
        if (!read_only.count(tok)) return true;
    }
    // A redirect makes even a read-only command durable.
    bool quoted_s = false, quoted_d = false;
    for (char c : command) {
        if (c == '\'' && !quoted_d) quoted_s = !quoted_s;
        else if (c == '"' && !quoted_s) quoted_d = !quoted_d;
        else if (c == '>' && !quoted_s && !quoted_d) return true;
    }
    return false;
}

std::vector<std::vector<CommandStep>> chunk_transcript(const Transcript& transcript,
                                                       int max_steps_per_chunk) {
    if (max_steps_per_chunk < 1) throw Error("max_steps_per_chunk must be >= 1");
    std::vector<std::vector<CommandStep>> chunks;
    std::vector<CommandStep> cur;
    for (const auto& step : transcript.steps) {
        cur.push_back(step);
        if (static_cast<int>(cur.size()) == max_steps_per_chunk) {
            chunks.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) chunks.push_back(std::move(cur));
    return chunks;
}

std::vector<std::string> redirect_targets(const std::vector<std::string>& commands) {
    std::vector<std::string> targets;
    static const std::regex redirect(R"((?:^|[^\d<>])>{1,2}\s*(/[^\s;|&)]+))");
    for (const auto& c : commands) {
        auto begin = std::sregex_iterator(c.begin(), c.end(), redirect);
        for (auto it = begin; it != std::sregex_iterator(); ++it) {
            std::string path = (*it)[1];
            if (path.starts_with("/dev/") || path.starts_with("/proc/")) continue;
            bool seen = false;
            for (const auto& t : targets)
                if (t == path) seen = true;
            if (!seen) targets.push_back(path);
        }
    }
    return targets;
}

ReferenceSolution extract_solution(const Transcript& transcript, LlmGateway& gateway,
                                   SynthesisRecord* record, int max_steps_per_chunk,
                                   const std::string& model_id) {
    auto chunks = chunk_transcript(transcript, max_steps_per_chunk);
    std::vector<std::string> merged;
    for (const auto& chunk : chunks) {
        json steps = json::array();
        for (const auto& step : chunk)
            steps.push_back({{"command", step.command_text},
                             {"output", step.output_text.substr(0, 1024)}});
        ChatRequest req;
        req.template_id = "extract_commands";
        req.model_id = model_id;
        req.segments = {
            "Extract the clean executable command list from this transcript chunk. Remove "
            "typos, failed attempts, and noise. Reply with a JSON array of command strings.",
            json{{"steps", steps}}.dump()};
        ChatResponse resp = gateway.complete(req);
        if (record) {
            record->prompt_digests.push_back(req.digest());
            record->usage.push_back(resp.usage);
        }
        json arr;
        try {
            arr = json::parse(resp.text);
        } catch (const json::exception& e) {
            throw GatewayError(std::string("extract_commands: unparseable response: ") + e.what());
        }
        for (const auto& c : arr) {
            std::string cmd = trim(c.get<std::string>());
            if (cmd.empty()) continue;
            // Adjacent-duplicate removal across chunk boundaries too.
            if (!merged.empty() && merged.back() == cmd) continue;
            merged.push_back(cmd);
        }
    }
    if (record) {
        record->recording_id = transcript.recording_id;
        record->chunk_count = static_cast<int>(chunks.size());
    }
    if (merged.empty()) throw EmptySolution();
    return ReferenceSolution::from_commands(merged);
}

// ---------------------------------------------------------------------------
// Instruction lint.
// ---------------------------------------------------------------------------

namespace {

const std::set<std::string>& command_vocabulary() {
    static const std::set<std::string> vocab = {
        "ls",     "cat",   "cd",     "pwd",    "grep",    "sed",     "awk",     "sort",
        "uniq",   "cut",   "head",   "tail",   "wc",      "tr",      "find",    "xargs",
        "mkdir",  "touch", "cp",     "mv",     "rm",      "chmod",   "chown",   "ln",
        "tar",    "gzip",  "zip",    "unzip",  "curl",    "wget",    "git",     "make",
        "cmake",  "gcc",   "g++",    "cargo",  "npm",     "pip",     "python",  "python3",
        "node",   "ruby",  "go",     "java",   "docker",  "kubectl", "helm",    "ssh",
        "scp",    "rsync", "systemctl", "apt", "apt-get", "yum",     "dnf",     "brew",
        "jq",     "tee",   "echo",   "printf", "export",  "source",  "bash",    "sh",
        "pytest", "vim",   "nano",   "psql",   "mysql",   "ffmpeg",  "terraform"};
    return vocab;
}

bool mentions_command(const std::string& text, std::string& which) {
    // Inside code spans.
    static const std::regex code_span("`([^`]+)`");
    for (auto it = std::sregex_iterator(text.begin(), text.end(), code_span);
         it != std::sregex_iterator(); ++it) {
        std::string tok = leading_command_token((*it)[1].str());
        if (command_vocabulary().count(tok)) {
            which = tok;
            return true;
        }
    }
    // After run/execute/type imperatives.
    static const std::regex imperative(R"((?:\b[Rr]un|\b[Ee]xecute|\b[Tt]ype)\s+`?([A-Za-z0-9_./-]+))");
    for (auto it = std::sregex_iterator(text.begin(), text.end(), imperative);
         it != std::sregex_iterator(); ++it) {
        std::string tok = (*it)[1];
        if (command_vocabulary().count(tok)) {
            which = tok;
            return true;
        }
    }
    return false;
}

}  // namespace

std::vector<Violation> lint_instruction(const TaskInstruction& instruction) {
    std::vector<Violation> violations;
    std::string all = instruction.goal_text;
    for (const auto& c : instruction.constraints) all += "\n" + c;

    static const std::regex step_enum(R"([Ss]tep\s+\d+)");
    static const std::regex numbered_list(R"((^|\n)\s*\d+[.)]\s+[A-Z])");
    if (std::regex_search(all, step_enum) || std::regex_search(all, numbered_list))
        violations.push_back({"enumeration", "instruction enumerates procedural steps"});

    std::string which;
    if (mentions_command(all, which))
        violations.push_back({"command-mention", "instruction names command: " + which});

    static const std::regex file_ref(R"((/[A-Za-z0-9_./-]+))");
    bool references_files = std::regex_search(all, file_ref);
    if (references_files && instruction.required_outputs.empty())
        violations.push_back(
            {"missing-output", "constraints reference files but no required output is declared"});

    for (const auto& [path, fmt] : instruction.required_outputs)
        if (path.empty() || path[0] != '/')
            violations.push_back({"missing-output", "required output is not absolute: " + path});

    return violations;
}

TaskInstruction formalize_instruction(const Transcript& transcript, const std::string& title,
                                      const std::string& description,
                                      const ReferenceSolution& solution, LlmGateway& gateway,
                                      SynthesisRecord* record, const std::string& model_id) {
    json commands = json::array();
    for (const auto& c : solution.commands) commands.push_back(c);
    json required_paths = json::array();
    for (const auto& p : redirect_targets(solution.commands)) required_paths.push_back(p);

    std::string last_error;
    const int repair_budget = 2;
    for (int round = 0; round <= repair_budget; ++round) {
        ChatRequest req;
        req.template_id = round == 0 ? "formalize_instruction" : "repair_instruction";
        req.model_id = model_id;
        json ctx{{"title", title},
                 {"description", description},
                 {"commands", commands},
                 {"required_paths", required_paths}};
        if (round > 0) ctx["lint_errors"] = last_error;
        req.segments = {
            "Write an outcome-oriented task instruction describing the expected final state, "
            "not the path. No procedural phrasing, no specific commands, no step "
            "enumerations. Explicitly specify required output paths. Reply as JSON: "
            "{goal_text, required_outputs: [[path, format]...], constraints: [...]}.",
            ctx.dump()};
        ChatResponse resp = gateway.complete(req);
        if (record) {
            record->prompt_digests.push_back(req.digest());
            record->usage.push_back(resp.usage);
        }
        json j;
        try {
            j = json::parse(resp.text);
        } catch (const json::exception& e) {
            last_error = std::string("unparseable response: ") + e.what();
            continue;
        }
        TaskInstruction instr;
        instr.goal_text = j.value("goal_text", "");
        for (const auto& ro : j.value("required_outputs", json::array()))
            instr.required_outputs.emplace_back(ro.at(0).get<std::string>(),
                                                ro.at(1).get<std::string>());
        for (const auto& c : j.value("constraints", json::array()))
            instr.constraints.push_back(c.get<std::string>());

        auto violations = lint_instruction(instr);
        if (violations.empty()) return instr;
        std::ostringstream errs;
        for (const auto& v : violations) errs << v.kind << ": " << v.detail << "; ";
        last_error = errs.str();
    }
    throw UnlintableInstruction(last_error);
}

}  // namespace termforge
