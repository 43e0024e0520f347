#pragma once

#include <string>
#include <utility>
#include <vector>

#include "termforge/cast.hpp"
#include "termforge/gateway.hpp"

namespace termforge {

struct TaskInstruction {
    std::string goal_text;
    // (absolute path, format descriptor)
    std::vector<std::pair<std::string, std::string>> required_outputs;
    std::vector<std::string> constraints;
};

struct ReferenceSolution {
    std::string script_text;                 // strict-failure preamble + commands
    std::vector<std::string> commands;       // one logical command each
    std::vector<size_t> effectful_indices;

    static ReferenceSolution from_commands(const std::vector<std::string>& commands);
    // Inverse of assembly: commands parsed back from a script.
    static std::vector<std::string> parse_script(const std::string& script_text);
};

struct Violation {
    std::string kind;  // enumeration | command-mention | missing-output
    std::string detail;
};

struct SynthesisRecord {
    std::string recording_id;
    std::vector<std::string> prompt_digests;
    int chunk_count = 0;
    std::vector<UsageRecord> usage;
};

std::vector<std::vector<CommandStep>> chunk_transcript(const Transcript& transcript,
                                                       int max_steps_per_chunk);

ReferenceSolution extract_solution(const Transcript& transcript, LlmGateway& gateway,
                                   SynthesisRecord* record = nullptr,
                                   int max_steps_per_chunk = 40,
                                   const std::string& model_id = "synthesis-model");

TaskInstruction formalize_instruction(const Transcript& transcript, const std::string& title,
                                      const std::string& description,
                                      const ReferenceSolution& solution, LlmGateway& gateway,
                                      SynthesisRecord* record = nullptr,
                                      const std::string& model_id = "synthesis-model");

std::vector<Violation> lint_instruction(const TaskInstruction& instruction);

// Absolute redirect targets in the solution seed the instruction's
// required_outputs.
std::vector<std::string> redirect_targets(const std::vector<std::string>& commands);

// True when a command changes durable state (not in the read-only set, or
// redirects output to a file).
bool is_effectful_command(const std::string& command);

}  // namespace termforge
