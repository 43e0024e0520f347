#include "termforge/filter.hpp"

#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "termforge/errors.hpp"
#include "termforge/util.hpp"

using nlohmann::json;

namespace termforge {

std::string to_string(Gate g) {
    switch (g) {
        case Gate::Pii: return "pii";
        case Gate::Credential: return "credential";
        case Gate::Destructive: return "destructive";
        case Gate::Tui: return "tui";
        case Gate::Reproducibility: return "reproducibility";
        case Gate::Length: return "length";
        case Gate::Quality: return "quality";
    }
    return "?";
}

FilterPolicy FilterPolicy::defaults() {
    FilterPolicy p;
    p.credential_patterns = {
        R"(AKIA[0-9A-Z]{16})",                                  // AWS access key id
        R"(AWS_SECRET_ACCESS_KEY\s*=)",
        R"(-----BEGIN [A-Z ]*PRIVATE KEY-----)",
        R"([Bb]earer\s+[A-Za-z0-9._~+/-]{16,})",
        R"(ghp_[A-Za-z0-9]{36})",
        R"(sk-[A-Za-z0-9]{20,})",
        R"((?:password|passwd|PASSWORD)\s*=\s*['"]?[^\s'"]{4,})",
        R"(api[_-]?key\s*=\s*['"]?[A-Za-z0-9]{16,})",
    };
    p.pii_patterns = {
        R"([A-Za-z0-9._%+-]+@[A-Za-z0-9.-]+\.[A-Za-z]{2,})",   // email
        R"(\b[0-9]{12,19}\b)",                                  // card / phone shaped digits
        R"(\+[0-9]{10,15}\b)",
    };
    p.destructive_patterns = {
        R"(rm\s+(-[A-Za-z]*[rR][A-Za-z]*f[A-Za-z]*|-[A-Za-z]*f[A-Za-z]*[rR][A-Za-z]*)\s+(/|~|\$HOME|/\*)\s*$)",
        R"(rm\s+-rf?\s+/\s*(--no-preserve-root)?\s*$)",
        R"(dd\s+[^|;]*of=/dev/(sd|hd|nvme|vd|xvd))",
        R"(mkfs(\.[a-z0-9]+)?\s+(-\S+\s+)*/dev/)",
        R"(:\(\)\s*\{\s*:\s*\|\s*:\s*&\s*\}\s*;\s*:)",          // fork bomb
        R"(>\s*/dev/(sd|hd|nvme)[a-z])",
    };
    p.windows_patterns = {
        R"([A-Z]:\\[\\A-Za-z0-9_.-]*)",
        R"(PS [A-Z]:\\)",
        R"(\bcmd\.exe\b)",
        R"(\bpowershell(\.exe)?\b)",
    };
    p.proprietary_tools = {"matlab", "sqlplus", "mathematica", "idl"};
    return p;
}

FilterPolicy FilterPolicy::from_file(const std::filesystem::path& path) {
    FilterPolicy p = defaults();
    bool cred_reset = false, pii_reset = false, destr_reset = false, win_reset = false,
         prop_reset = false;
    for (const auto& raw : split_lines(read_file(path))) {
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        auto colon = line.find(':');
        if (colon == std::string::npos) throw Error("bad policy line (no gate prefix): " + line);
        std::string gate = trim(line.substr(0, colon));
        std::string value = trim(line.substr(colon + 1));
        auto replace_into = [&](std::vector<std::string>& v, bool& reset) {
            if (!reset) {
                v.clear();
                reset = true;
            }
            v.push_back(value);
        };
        if (gate == "credential") replace_into(p.credential_patterns, cred_reset);
        else if (gate == "pii") replace_into(p.pii_patterns, pii_reset);
        else if (gate == "destructive") replace_into(p.destructive_patterns, destr_reset);
        else if (gate == "windows") replace_into(p.windows_patterns, win_reset);
        else if (gate == "proprietary") replace_into(p.proprietary_tools, prop_reset);
        else if (gate == "tui") p.tui.blocklist.push_back(value);
        else if (gate == "min_steps") p.min_steps = std::stoi(value);
        else if (gate == "quality_threshold") p.quality_threshold = std::stod(value);
        else throw Error("unknown policy gate: " + gate);
    }
    return p;
}

namespace {

std::vector<std::regex> compile(const std::vector<std::string>& patterns) {
    std::vector<std::regex> out;
    out.reserve(patterns.size());
    for (const auto& p : patterns) out.emplace_back(p);
    return out;
}

void scan_steps(const Transcript& t, const std::vector<std::regex>& regexes, Gate gate,
                const char* what, std::vector<Finding>& findings, bool command_only = false) {
    for (const auto& step : t.steps) {
        std::string text = command_only ? step.command_text
                                        : step.command_text + "\n" + step.output_text;
        for (const auto& re : regexes) {
            std::smatch m;
            if (std::regex_search(text, m, re)) {
                findings.push_back({gate, Severity::Reject, step.index,
                                    std::string(what) + ": \"" + m.str().substr(0, 60) + "\""});
                break;  // one finding per step per gate
            }
        }
    }
}

}  // namespace

std::vector<Finding> scan_sensitive(const Transcript& t, const FilterPolicy& policy) {
    std::vector<Finding> findings;
    scan_steps(t, compile(policy.credential_patterns), Gate::Credential, "credential pattern",
               findings);
    scan_steps(t, compile(policy.pii_patterns), Gate::Pii, "personal data pattern", findings);
    scan_steps(t, compile(policy.destructive_patterns), Gate::Destructive, "destructive command",
               findings, /*command_only=*/true);
    return findings;
}

std::vector<Finding> check_reproducibility(const Transcript& t, const FilterPolicy& policy) {
    std::vector<Finding> findings;
    scan_steps(t, compile(policy.windows_patterns), Gate::Reproducibility, "windows marker",
               findings);
    for (const auto& step : t.steps) {
        for (const auto& simple : split_compound_command(step.command_text)) {
            std::string tok = leading_command_token(simple);
            for (const auto& tool : policy.proprietary_tools)
                if (tok == tool)
                    findings.push_back({Gate::Reproducibility, Severity::Reject, step.index,
                                        "proprietary tool: " + tool});
        }
    }
    // Dead-URL probing is an optional driver, default off: hermetic runs must
    // not touch the network.
    return findings;
}

bool length_gate(const Transcript& t, int min_steps) {
    return static_cast<int>(t.steps.size()) >= min_steps;
}

double score_quality(const Transcript& t, LlmGateway& gateway, const std::string& model_id) {
    const auto& ro = std::vector<std::string>{"ls", "cat", "cd", "pwd", "echo", "clear", "history"};
    int effectful = 0;
    json steps = json::array();
    for (const auto& step : t.steps) {
        std::string tok = leading_command_token(step.command_text);
        bool is_ro = false;
        for (const auto& r : ro)
            if (tok == r) is_ro = true;
        if (!is_ro) ++effectful;
        steps.push_back({{"command", step.command_text},
                         {"output", step.output_text.substr(0, 512)}});
    }
    double heuristic = t.steps.empty()
                           ? 0.0
                           : static_cast<double>(effectful) / static_cast<double>(t.steps.size());

    ChatRequest req;
    req.template_id = "quality_score";
    req.model_id = model_id;
    req.segments = {
        "Score this terminal session's quality on [0,1]. Penalize opaque or purely "
        "exploratory sessions (repetitive listing/viewing with no durable effect). "
        "Reply with the number only.",
        json{{"steps", steps}}.dump()};
    ChatResponse resp = gateway.complete(req);
    double llm_score = 0.0;
    try {
        llm_score = std::stod(trim(resp.text));
    } catch (...) {
        throw GatewayError("quality_score response is not a number: " + resp.text);
    }
    llm_score = std::clamp(llm_score, 0.0, 1.0);
    return 0.5 * heuristic + 0.5 * llm_score;
}

std::string FilterVerdict::to_json_line() const {
    json f = json::array();
    for (const auto& finding : findings)
        f.push_back({{"gate", to_string(finding.gate)},
                     {"severity", finding.severity == Severity::Reject ? "reject" : "warn"},
                     {"locus", finding.locus},
                     {"detail", finding.detail}});
    json j{{"recording_id", recording_id},
           {"decision", accepted ? "accept" : "reject"},
           {"findings", f}};
    if (quality_score) j["quality_score"] = *quality_score;
    return j.dump();
}

FilterVerdict apply_policy(const RawRecording& recording, const Transcript* transcript,
                           const std::vector<CastEvent>& events, const FilterPolicy& policy,
                           LlmGateway& gateway) {
    FilterVerdict verdict;
    verdict.recording_id = recording.id;

    if (!transcript) {
        verdict.findings.push_back({Gate::Length, Severity::Reject, -1,
                                    "transcript reconstruction found no command steps"});
        return verdict;
    }

    auto rejecting = [](const std::vector<Finding>& fs) {
        for (const auto& f : fs)
            if (f.severity == Severity::Reject) return true;
        return false;
    };

    auto sensitive = scan_sensitive(*transcript, policy);
    verdict.findings.insert(verdict.findings.end(), sensitive.begin(), sensitive.end());
    if (rejecting(sensitive)) return verdict;

    if (detect_tui(events, *transcript, policy.tui)) {
        verdict.findings.push_back(
            {Gate::Tui, Severity::Reject, -1, "TUI interaction detected"});
        return verdict;
    }

    auto repro = check_reproducibility(*transcript, policy);
    verdict.findings.insert(verdict.findings.end(), repro.begin(), repro.end());
    if (rejecting(repro)) return verdict;

    if (!length_gate(*transcript, policy.min_steps)) {
        verdict.findings.push_back({Gate::Length, Severity::Reject, -1,
                                    std::to_string(transcript->steps.size()) + " steps < " +
                                        std::to_string(policy.min_steps) + " minimum"});
        return verdict;
    }

    double q = score_quality(*transcript, gateway);
    verdict.quality_score = q;
    if (q < policy.quality_threshold) {
        std::ostringstream ss;
        ss << "quality " << q << " below threshold " << policy.quality_threshold;
        verdict.findings.push_back({Gate::Quality, Severity::Reject, -1, ss.str()});
        return verdict;
    }

    verdict.accepted = true;
    return verdict;
}

}  // namespace termforge
