#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace termforge {

// Hex-encoded SHA-256 of arbitrary bytes.
std::string sha256_hex(std::string_view data);

std::string trim(std::string_view s);
std::vector<std::string> split_lines(std::string_view text);
bool contains(std::string_view haystack, std::string_view needle);

std::string read_file(const std::filesystem::path& p);
// Write-temp-then-rename so concurrent readers never see partial content.
void atomic_write_file(const std::filesystem::path& p, std::string_view content);

// Splits a compound shell line on ; && || | into simple command fragments.
// Quote- and escape-aware; subshell contents are kept inside their fragment.
std::vector<std::string> split_compound_command(std::string_view line);

// Whitespace tokenization respecting single/double quotes.
std::vector<std::string> shell_tokens(std::string_view command);

// First meaningful token of a simple command: wrapper prefixes (sudo, env,
// time, nohup, command) and VAR=value assignments are skipped, directory
// prefixes stripped.
std::string leading_command_token(std::string_view command);

// True when the line ends inside an unterminated quote or with a trailing
// backslash, i.e. the shell would ask for a continuation line.
bool shell_line_continues(std::string_view buffer);

struct ProcessResult {
    int exit_code = -1;
    bool timed_out = false;
    std::string out;
    std::string err;
    double duration_s = 0.0;
};

// Runs `bash script_file` (or bash -c when given inline text) in `cwd` with
// the given extra environment, killing the whole process group on timeout.
ProcessResult run_bash(const std::string& script_text,
                       const std::filesystem::path& cwd,
                       const std::map<std::string, std::string>& extra_env,
                       double timeout_s);

}  // namespace termforge
