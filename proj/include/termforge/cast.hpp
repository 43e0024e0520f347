#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

namespace termforge {

// A raw recording as delivered by a fetcher. Bundles keep only source_url
// pointers to recordings; transcript bodies never enter the bundle store.
struct RawRecording {
    std::string id;
    std::string source_url;
    std::string title;
    std::string description;
    std::string cast_bytes;
};

struct CastHeader {
    int version = 2;
    int width = 80;
    int height = 24;
    std::map<std::string, std::string> env;
};

enum class EventKind { Output, Input, Marker };

struct CastEvent {
    double time = 0.0;
    EventKind kind = EventKind::Output;
    std::string payload;
};

struct CommandStep {
    int index = 0;
    std::string command_text;
    std::string output_text;
    double start_time = 0.0;
    double end_time = 0.0;
};

struct Transcript {
    std::string recording_id;
    std::vector<CommandStep> steps;
    double duration_s = 0.0;
    bool had_input_events = false;
};

struct PromptConfig {
    // A screenlog line is a command boundary when one of these markers occurs
    // in it; the text after the marker is the command.
    std::vector<std::string> markers = {"$ ", "# ", "> "};
};

struct TuiPolicy {
    std::vector<std::string> blocklist = {"vim", "vi",   "nano", "emacs", "less",
                                          "top", "htop", "tmux", "screen", "mc"};
};

// asciinema v2 container: one JSON header line, then [time, kind, payload]
// event lines. Throws UnsupportedVersion / MalformedLine / NonMonotonicTime.
std::pair<CastHeader, std::vector<CastEvent>> parse_cast(std::string_view bytes);

std::string serialize_cast(const CastHeader& header, const std::vector<CastEvent>& events);

// Line-discipline rendering of raw terminal output: SGR stripped, CR moves to
// column 0 and overwrites, BS deletes one cell, CSI K erases, unknown escapes
// dropped. Total: malformed input never throws.
std::string render_screenlog(const std::vector<CastEvent>& events);
std::string render_text(std::string_view raw);

Transcript reconstruct_transcript(const CastHeader& header,
                                  const std::vector<CastEvent>& events,
                                  const PromptConfig& prompts,
                                  const std::string& recording_id = "");

bool detect_tui(const std::vector<CastEvent>& events, const Transcript& transcript,
                const TuiPolicy& policy);

// Fetcher interface. Remote crawling is a pluggable driver; the bundled
// implementation reads .cast files from a directory with a manifest.json.
class RecordingFetcher {
  public:
    virtual ~RecordingFetcher() = default;
    virtual RawRecording fetch(const std::string& id) = 0;
    virtual std::vector<RawRecording> list_all() = 0;
};

class LocalCorpusFetcher final : public RecordingFetcher {
  public:
    explicit LocalCorpusFetcher(std::filesystem::path corpus_dir);
    RawRecording fetch(const std::string& id) override;
    std::vector<RawRecording> list_all() override;

  private:
    std::filesystem::path dir_;
};

}  // namespace termforge
