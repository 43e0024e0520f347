#include "termforge/cast.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include <nlohmann/json.hpp>

#include "termforge/errors.hpp"
#include "termforge/util.hpp"

using nlohmann::json;

namespace termforge {

namespace {

EventKind kind_from_code(const std::string& code, int line) {
    if (code == "o") return EventKind::Output;
    if (code == "i") return EventKind::Input;
    if (code == "m") return EventKind::Marker;
    throw MalformedLine(line, "unknown event kind \"" + code + "\"");
}

const char* kind_code(EventKind k) {
    switch (k) {
        case EventKind::Output: return "o";
        case EventKind::Input: return "i";
        case EventKind::Marker: return "m";
    }
    return "o";
}

}  // namespace

std::pair<CastHeader, std::vector<CastEvent>> parse_cast(std::string_view bytes) {
    auto lines = split_lines(bytes);
    if (lines.empty() || trim(lines[0]).empty())
        throw MalformedLine(1, "missing header line");

    CastHeader header;
    try {
        json h = json::parse(lines[0]);
        header.version = h.at("version").get<int>();
        if (header.version != 2) throw UnsupportedVersion(header.version);
        header.width = h.value("width", 80);
        header.height = h.value("height", 24);
        if (header.width < 1 || header.height < 1)
            throw MalformedLine(1, "non-positive terminal dimensions");
        if (h.contains("env") && h["env"].is_object())
            for (auto& [k, v] : h["env"].items())
                header.env[k] = v.is_string() ? v.get<std::string>() : v.dump();
    } catch (const json::exception& e) {
        throw MalformedLine(1, e.what());
    }

    std::vector<CastEvent> events;
    double last_time = -1.0;
    for (size_t i = 1; i < lines.size(); ++i) {
        if (trim(lines[i]).empty()) continue;
        int lineno = static_cast<int>(i + 1);
        json ev;
        try {
            ev = json::parse(lines[i]);
        } catch (const json::exception& e) {
            throw MalformedLine(lineno, e.what());
        }
        if (!ev.is_array() || ev.size() != 3 || !ev[0].is_number() || !ev[1].is_string() ||
            !ev[2].is_string())
            throw MalformedLine(lineno, "expected [time, kind, payload]");
        CastEvent e;
        e.time = ev[0].get<double>();
        if (e.time < 0) throw MalformedLine(lineno, "negative event time");
        e.kind = kind_from_code(ev[1].get<std::string>(), lineno);
        e.payload = ev[2].get<std::string>();
        if (e.time < last_time) throw NonMonotonicTime(lineno);
        last_time = e.time;
        events.push_back(std::move(e));
    }
    return {header, events};
}

std::string serialize_cast(const CastHeader& header, const std::vector<CastEvent>& events) {
    json h{{"version", header.version}, {"width", header.width}, {"height", header.height}};
    if (!header.env.empty()) h["env"] = header.env;
    std::ostringstream out;
    out << h.dump() << "\n";
    for (const auto& e : events) {
        json ev = json::array({e.time, kind_code(e.kind), e.payload});
        out << ev.dump() << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------
// Line-discipline emulator.
// ---------------------------------------------------------------------------

namespace {

class LineDiscipline {
  public:
    void feed(std::string_view raw) {
        for (size_t i = 0; i < raw.size(); ++i) {
            char c = raw[i];
            if (esc_state_ != EscState::None) {
                feed_escape(c);
                continue;
            }
            switch (c) {
                case '\x1b': esc_state_ = EscState::Esc; break;
                case '\r': col_ = 0; break;
                case '\n': commit_line(); break;
                case '\b':
                    if (col_ > 0) {
                        if (col_ <= cur_.size()) cur_.erase(col_ - 1, 1);
                        --col_;
                    }
                    break;
                case '\a': break;  // bell
                default: put(c); break;
            }
        }
    }

    std::string result() const {
        std::string out = committed_;
        out += cur_;
        return out;
    }

  private:
    enum class EscState { None, Esc, Csi, Osc, OscEsc };

    void put(char c) {
        if (col_ < cur_.size()) cur_[col_] = c;
        else {
            while (cur_.size() < col_) cur_.push_back(' ');
            cur_.push_back(c);
        }
        ++col_;
    }

    void commit_line() {
        committed_ += cur_;
        committed_ += '\n';
        cur_.clear();
        col_ = 0;
    }

    void erase_line(int mode) {
        if (mode == 2) {
            cur_.clear();
        } else if (mode == 1) {
            for (size_t i = 0; i < std::min(col_, cur_.size()); ++i) cur_[i] = ' ';
        } else {
            if (col_ < cur_.size()) cur_.erase(col_);
        }
    }

    void feed_escape(char c) {
        switch (esc_state_) {
            case EscState::Esc:
                if (c == '[') {
                    esc_state_ = EscState::Csi;
                    csi_params_.clear();
                } else if (c == ']') {
                    esc_state_ = EscState::Osc;
                } else {
                    esc_state_ = EscState::None;  // two-char sequence, dropped
                }
                break;
            case EscState::Csi:
                if (c >= 0x40 && c <= 0x7e) {
                    if (c == 'K') {
                        int mode = csi_params_.empty() ? 0 : std::atoi(csi_params_.c_str());
                        erase_line(mode);
                    }
                    // 'm' (SGR) and every other final byte: dropped
                    esc_state_ = EscState::None;
                } else {
                    csi_params_.push_back(c);
                    if (csi_params_.size() > 64) esc_state_ = EscState::None;
                }
                break;
            case EscState::Osc:
                if (c == '\a') esc_state_ = EscState::None;
                else if (c == '\x1b') esc_state_ = EscState::OscEsc;
                break;
            case EscState::OscEsc:
                esc_state_ = (c == '\\') ? EscState::None : EscState::Osc;
                break;
            case EscState::None: break;
        }
    }

    std::string committed_;
    std::string cur_;
    size_t col_ = 0;
    EscState esc_state_ = EscState::None;
    std::string csi_params_;
};

}  // namespace

std::string render_text(std::string_view raw) {
    LineDiscipline ld;
    ld.feed(raw);
    return ld.result();
}

std::string render_screenlog(const std::vector<CastEvent>& events) {
    LineDiscipline ld;
    for (const auto& e : events)
        if (e.kind == EventKind::Output) ld.feed(e.payload);
    return ld.result();
}

// ---------------------------------------------------------------------------
// Transcript reconstruction.
// ---------------------------------------------------------------------------

namespace {

// Finds the earliest prompt marker occurrence in a line. Returns the position
// just past the marker, or npos.
size_t prompt_match_end(const std::string& line, const PromptConfig& prompts) {
    size_t best = std::string::npos;
    for (const auto& m : prompts.markers) {
        size_t pos = line.find(m);
        if (pos == std::string::npos) continue;
        size_t end = pos + m.size();
        if (best == std::string::npos || end < best) best = end;
    }
    return best;
}

std::string clean_output(const std::string& rendered, const std::string& command,
                         const PromptConfig& prompts) {
    auto lines = split_lines(rendered);
    size_t begin = 0, end = lines.size();
    // Drop an echoed command line at the top.
    if (begin < end) {
        const std::string& first = lines[begin];
        size_t pe = prompt_match_end(first, prompts);
        std::string echoed = pe == std::string::npos ? first : first.substr(pe);
        if (trim(echoed) == trim(command)) ++begin;
    }
    // Drop trailing blank lines and a trailing bare prompt.
    while (end > begin) {
        const std::string& last = lines[end - 1];
        size_t pe = prompt_match_end(last, prompts);
        bool bare_prompt = pe != std::string::npos && trim(last.substr(pe)).empty();
        if (trim(last).empty() || bare_prompt) --end;
        else break;
    }
    std::string out;
    for (size_t i = begin; i < end; ++i) {
        out += lines[i];
        if (i + 1 < end) out += '\n';
    }
    // Trailing cell padding from CR overwrites is not meaningful output.
    while (!out.empty() && (out.back() == ' ' || out.back() == '\n')) out.pop_back();
    return out;
}

// Applies terminal line editing (BS, CR) to typed input to recover the
// command text as the shell saw it.
std::string edit_input(const std::string& typed) {
    std::string out;
    for (char c : typed) {
        if (c == '\b' || c == '\x7f') {
            if (!out.empty()) out.pop_back();
        } else {
            out.push_back(c);
        }
    }
    return out;
}

Transcript from_input_events(const CastHeader&, const std::vector<CastEvent>& events,
                             const PromptConfig& prompts, const std::string& recording_id) {
    Transcript t;
    t.recording_id = recording_id;
    t.had_input_events = true;

    struct Pending {
        std::string command;
        double start = 0.0;
        double end = 0.0;
        std::string raw_output;
        bool open = false;
    } cur;

    std::string buffer;
    double buffer_start = -1.0;

    auto close_step = [&]() {
        if (!cur.open) return;
        CommandStep step;
        step.index = static_cast<int>(t.steps.size());
        step.command_text = trim(cur.command);
        step.output_text = clean_output(render_text(cur.raw_output), step.command_text, prompts);
        step.start_time = cur.start;
        step.end_time = std::max(cur.start, cur.end);
        if (!step.command_text.empty()) t.steps.push_back(std::move(step));
        cur = Pending{};
    };

    for (const auto& e : events) {
        if (e.kind == EventKind::Marker) continue;
        if (e.kind == EventKind::Output) {
            if (cur.open) {
                cur.raw_output += e.payload;
                cur.end = e.time;
            }
            continue;
        }
        // Input event: split on newline terminators.
        for (char c : e.payload) {
            if (buffer_start < 0) buffer_start = e.time;
            if (c == '\r' || c == '\n') {
                std::string line = edit_input(buffer);
                buffer.clear();
                if (shell_line_continues(line)) {
                    buffer = line + "\n";
                    continue;
                }
                close_step();
                if (!trim(line).empty()) {
                    cur.open = true;
                    cur.command = line;
                    cur.start = buffer_start;
                    cur.end = e.time;
                }
                buffer_start = -1.0;
            } else {
                buffer.push_back(c);
            }
        }
    }
    close_step();

    if (!events.empty()) t.duration_s = events.back().time;
    if (t.steps.empty()) throw NoCommandsFound();
    return t;
}

Transcript from_screenlog(const CastHeader&, const std::vector<CastEvent>& events,
                          const PromptConfig& prompts, const std::string& recording_id) {
    Transcript t;
    t.recording_id = recording_id;
    t.had_input_events = false;

    std::string screenlog = render_screenlog(events);
    auto lines = split_lines(screenlog);

    double t0 = events.empty() ? 0.0 : events.front().time;
    double t1 = events.empty() ? 0.0 : events.back().time;
    auto line_time = [&](size_t idx) {
        if (lines.size() <= 1) return t0;
        return t0 + (t1 - t0) * static_cast<double>(idx) / static_cast<double>(lines.size() - 1);
    };

    struct Open {
        std::string command;
        std::vector<std::string> output;
        size_t start_line = 0;
        size_t end_line = 0;
        bool active = false;
    } cur;

    auto close_step = [&]() {
        if (!cur.active) return;
        CommandStep step;
        step.index = static_cast<int>(t.steps.size());
        step.command_text = trim(cur.command);
        std::string out;
        for (size_t i = 0; i < cur.output.size(); ++i) {
            out += cur.output[i];
            if (i + 1 < cur.output.size()) out += '\n';
        }
        while (!out.empty() && (out.back() == ' ' || out.back() == '\n')) out.pop_back();
        step.output_text = out;
        step.start_time = line_time(cur.start_line);
        step.end_time = std::max(step.start_time, line_time(cur.end_line));
        if (!step.command_text.empty()) t.steps.push_back(std::move(step));
        cur = Open{};
    };

    for (size_t i = 0; i < lines.size(); ++i) {
        size_t pe = prompt_match_end(lines[i], prompts);
        if (pe != std::string::npos) {
            std::string cmd = trim(lines[i].substr(pe));
            close_step();
            if (!cmd.empty()) {
                cur.active = true;
                cur.command = cmd;
                cur.start_line = i;
                cur.end_line = i;
            }
        } else if (cur.active) {
            cur.output.push_back(lines[i]);
            cur.end_line = i;
        }
    }
    close_step();

    if (!events.empty()) t.duration_s = events.back().time;
    if (t.steps.empty()) throw NoCommandsFound();
    return t;
}

}  // namespace

Transcript reconstruct_transcript(const CastHeader& header, const std::vector<CastEvent>& events,
                                  const PromptConfig& prompts, const std::string& recording_id) {
    bool has_input = std::any_of(events.begin(), events.end(),
                                 [](const CastEvent& e) { return e.kind == EventKind::Input; });
    return has_input ? from_input_events(header, events, prompts, recording_id)
                     : from_screenlog(header, events, prompts, recording_id);
}

bool detect_tui(const std::vector<CastEvent>& events, const Transcript& transcript,
                const TuiPolicy& policy) {
    for (const auto& e : events) {
        if (e.kind != EventKind::Output) continue;
        if (contains(e.payload, "\x1b[?1049h") || contains(e.payload, "\x1b[?47h")) return true;
    }
    for (const auto& step : transcript.steps) {
        for (const auto& simple : split_compound_command(step.command_text)) {
            std::string tok = leading_command_token(simple);
            for (const auto& blocked : policy.blocklist)
                if (tok == blocked) return true;
        }
    }
    return false;
}

// ---------------------------------------------------------------------------
// Local corpus fetcher.
// ---------------------------------------------------------------------------

LocalCorpusFetcher::LocalCorpusFetcher(std::filesystem::path corpus_dir)
    : dir_(std::move(corpus_dir)) {}

namespace {

RawRecording from_manifest_entry(const std::filesystem::path& dir, const json& entry) {
    RawRecording r;
    r.id = entry.at("id").get<std::string>();
    r.source_url = entry.at("url").get<std::string>();
    r.title = entry.value("title", "");
    r.description = entry.value("description", "");
    r.cast_bytes = read_file(dir / entry.at("file").get<std::string>());
    if (r.source_url.empty()) throw Error("recording " + r.id + " lacks a source_url pointer");
    if (r.cast_bytes.empty()) throw Error("recording " + r.id + " has empty cast bytes");
    return r;
}

}  // namespace

RawRecording LocalCorpusFetcher::fetch(const std::string& id) {
    json manifest = json::parse(read_file(dir_ / "manifest.json"));
    for (const auto& entry : manifest)
        if (entry.at("id").get<std::string>() == id) return from_manifest_entry(dir_, entry);
    throw Error("recording not found in corpus manifest: " + id);
}

std::vector<RawRecording> LocalCorpusFetcher::list_all() {
    json manifest = json::parse(read_file(dir_ / "manifest.json"));
    std::vector<RawRecording> out;
    for (const auto& entry : manifest) out.push_back(from_manifest_entry(dir_, entry));
    return out;
}

}  // namespace termforge
