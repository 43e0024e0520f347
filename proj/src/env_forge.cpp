#include "termforge/env_forge.hpp"

#include <regex>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "termforge/errors.hpp"
#include "termforge/util.hpp"

using nlohmann::json;

namespace termforge {

namespace {

// Paths a spec may legitimately write without faking a dependency.
bool is_binary_dir(const std::string& path) {
    return path.starts_with("/usr/bin/") || path.starts_with("/usr/local/bin/") ||
           path.starts_with("/bin/") || path.starts_with("/sbin/") ||
           path.starts_with("/usr/sbin/");
}

std::vector<std::string> spec_written_paths(const EnvironmentSpec& spec) {
    std::vector<std::string> paths;
    for (const auto& line : split_lines(spec.dockerfile_text)) {
        std::string t = trim(line);
        if (!t.starts_with("RUN ")) continue;
        for (const auto& p : redirect_targets({t.substr(4)})) paths.push_back(p);
    }
    return paths;
}

}  // namespace

void lint_fake_dependencies(const EnvironmentSpec& spec, const ReferenceSolution& solution) {
    // Static scan: shebang lines written into binary directories, aliases, and
    // symlinks pointing real tool names at impostors.
    static const std::regex stub_write(
        R"(echo\s+['"]?#!\s*/bin/sh|printf\s+['"]?#!|alias\s+\w+=|ln\s+-s\w*\s+\S+\s+(/usr(/local)?/s?bin|/s?bin)/)");
    for (const auto& line : split_lines(spec.dockerfile_text)) {
        std::string t = trim(line);
        if (!t.starts_with("RUN ")) continue;
        std::string body = t.substr(4);
        if (std::regex_search(body, stub_write)) {
            for (const auto& p : redirect_targets({body}))
                if (is_binary_dir(p)) throw FakeDependencyDetected(p);
            if (contains(body, "alias ") || contains(body, "ln -s"))
                throw FakeDependencyDetected(body);
        }
    }

    // Dynamic check: no solution command's leading token may be a file the
    // spec itself writes into a binary directory.
    std::set<std::string> written_tools;
    for (const auto& p : spec_written_paths(spec))
        if (is_binary_dir(p))
            written_tools.insert(std::filesystem::path(p).filename().string());
    for (const auto& cmd : solution.commands)
        for (const auto& simple : split_compound_command(cmd)) {
            std::string tok = leading_command_token(simple);
            if (written_tools.count(tok)) throw FakeDependencyDetected(tok);
        }
}

EnvironmentSpec synthesize_environment(const ReferenceSolution& solution,
                                       const std::string& metadata_context, LlmGateway& gateway,
                                       const std::string& model_id) {
    json commands = json::array();
    for (const auto& c : solution.commands) commands.push_back(c);
    ChatRequest req;
    req.template_id = "synthesize_environment";
    req.model_id = model_id;
    req.segments = {
        "Synthesize a Dockerfile that provides every tool and runtime the solution needs. "
        "Install real packages only; never create stub executables or aliases standing in "
        "for missing tools. Reply with the raw Dockerfile text.",
        json{{"commands", commands}, {"metadata", metadata_context}, {"workdir", "/app"}}.dump()};
    ChatResponse resp = gateway.complete(req);

    EnvironmentSpec spec;
    spec.dockerfile_text = resp.text;
    for (const auto& line : split_lines(resp.text)) {
        std::string t = trim(line);
        if (t.starts_with("WORKDIR ")) spec.workdir = trim(t.substr(8));
    }
    lint_fake_dependencies(spec, solution);
    return spec;
}

bool is_irrecoverable_failure(const std::string& failure_log) {
    static const char* signatures[] = {
        "Could not resolve host",  "Name or service not known", "404 Not Found",
        "Connection refused",      "certificate has expired",   "Repository not found",
        "No space left on device", "dead URL",
    };
    for (const char* sig : signatures)
        if (contains(failure_log, sig)) return true;
    return false;
}

ReproductionReport reproduce_loop(const EnvironmentSpec& initial_spec,
                                  const ReferenceSolution& solution, int budget,
                                  SandboxDriver& driver, LlmGateway& gateway,
                                  const std::string& model_id) {
    ReproductionReport report;
    EnvironmentSpec spec = initial_spec;
    IsolationPolicy full_network{.network_none = false};

    for (int iteration = 0;; ++iteration) {
        std::string failure_log;
        RepairAttempt::FailureKind kind = RepairAttempt::FailureKind::Build;

        try {
            ImageRef image = driver.build_image(spec);
            ContainerHandle handle;
            try {
                handle = driver.launch(image, full_network);
            } catch (const Error& e) {
                failure_log = e.what();
                kind = RepairAttempt::FailureKind::Startup;
            }
            if (failure_log.empty()) {
                FsSnapshot before = driver.snapshot(handle, {spec.workdir});
                ExecResult exec = driver.exec(handle, solution.script_text, 0.0);
                if (exec.exit_code == 0 && !exec.timed_out) {
                    report.delta = diff(before, driver.snapshot(handle, {spec.workdir}));
                    driver.teardown(handle);
                    report.status = ReproductionReport::Status::Reproduced;
                    report.final_exec = exec;
                    report.image_id = image.id;
                    return report;
                }
                std::ostringstream log;
                log << "exit " << exec.exit_code;
                if (exec.timed_out) log << " (timed out)";
                log << "\nstdout:\n" << exec.stdout_text << "\nstderr:\n" << exec.stderr_text;
                failure_log = log.str();
                kind = RepairAttempt::FailureKind::Runtime;
                report.final_exec = exec;
                driver.teardown(handle);
            }
        } catch (const BuildError& e) {
            failure_log = e.what();
            kind = RepairAttempt::FailureKind::Build;
        } catch (const Error& e) {
            failure_log = e.what();
            kind = RepairAttempt::FailureKind::Startup;
        }

        if (failure_log.empty()) failure_log = "(no diagnostic output)";

        if (is_irrecoverable_failure(failure_log)) {
            report.status = ReproductionReport::Status::Discarded;
            report.discard_reason = "irrecoverable resource failure: " + failure_log;
            return report;
        }
        if (iteration >= budget) {
            report.status = ReproductionReport::Status::Discarded;
            report.discard_reason = "repair budget exhausted after " + std::to_string(budget) +
                                    " iterations; last failure: " + failure_log;
            return report;
        }

        ChatRequest req;
        req.template_id = "repair_environment";
        req.model_id = model_id;
        req.segments = {
            "The environment failed to reproduce the reference solution. Revise the "
            "Dockerfile to fix the failure. Reply with the raw Dockerfile text.",
            json{{"dockerfile", spec.dockerfile_text}, {"failure_log", failure_log}}.dump()};
        ChatResponse resp = gateway.complete(req);
        spec.dockerfile_text = resp.text;
        try {
            lint_fake_dependencies(spec, solution);
        } catch (const FakeDependencyDetected& e) {
            report.status = ReproductionReport::Status::Discarded;
            report.discard_reason = std::string("repair introduced a fake dependency: ") + e.what();
            return report;
        }

        RepairAttempt attempt;
        attempt.iteration = iteration + 1;
        attempt.failure_kind = kind;
        attempt.failure_log = failure_log;
        attempt.spec_after = spec;
        report.attempts.push_back(std::move(attempt));
    }
}

}  // namespace termforge
