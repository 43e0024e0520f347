#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "termforge/cast.hpp"
#include "termforge/gateway.hpp"

namespace termforge {

enum class Gate { Pii, Credential, Destructive, Tui, Reproducibility, Length, Quality };
enum class Severity { Reject, Warn };

std::string to_string(Gate g);

struct Finding {
    Gate gate;
    Severity severity = Severity::Reject;
    int locus = -1;  // step index; -1 when recording-level
    std::string detail;
};

struct FilterPolicy {
    int min_steps = 3;
    double quality_threshold = 0.5;
    std::vector<std::string> credential_patterns;
    std::vector<std::string> pii_patterns;
    std::vector<std::string> destructive_patterns;
    std::vector<std::string> windows_patterns;
    std::vector<std::string> proprietary_tools;
    TuiPolicy tui;
    bool probe_dead_urls = false;  // hermetic by default

    static FilterPolicy defaults();
    // Plain-text policy file, one gate-prefixed pattern per line:
    //   credential: <regex>
    //   destructive: <regex>
    //   proprietary: <tool-name>
    // Unlisted gates keep their defaults.
    static FilterPolicy from_file(const std::filesystem::path& p);
};

struct FilterVerdict {
    std::string recording_id;
    bool accepted = false;
    std::vector<Finding> findings;
    std::optional<double> quality_score;

    std::string to_json_line() const;
};

std::vector<Finding> scan_sensitive(const Transcript& transcript, const FilterPolicy& policy);
std::vector<Finding> check_reproducibility(const Transcript& transcript,
                                           const FilterPolicy& policy);
bool length_gate(const Transcript& transcript, int min_steps);
double score_quality(const Transcript& transcript, LlmGateway& gateway,
                     const std::string& model_id = "synthesis-model");

// Runs the full gate sequence: sensitive -> TUI -> reproducibility -> length
// -> quality, short-circuiting on the first reject. Pass a null transcript
// when reconstruction failed; that is a length reject.
FilterVerdict apply_policy(const RawRecording& recording, const Transcript* transcript,
                           const std::vector<CastEvent>& events, const FilterPolicy& policy,
                           LlmGateway& gateway);

}  // namespace termforge
