#include "termforge/bundle.hpp"

#include <mutex>
#include <sstream>

#include "termforge/errors.hpp"
#include "termforge/util.hpp"

using nlohmann::json;

namespace termforge {

namespace {
std::mutex index_mutex;
}

// ---------------------------------------------------------------------------
// Instruction markdown round-trip.
// ---------------------------------------------------------------------------

std::string instruction_to_markdown(const TaskInstruction& instruction) {
    std::ostringstream out;
    out << "# Task\n\n" << instruction.goal_text << "\n";
    if (!instruction.required_outputs.empty()) {
        out << "\n## Required outputs\n\n";
        for (const auto& [path, fmt] : instruction.required_outputs)
            out << "- `" << path << "` (" << fmt << ")\n";
    }
    if (!instruction.constraints.empty()) {
        out << "\n## Constraints\n\n";
        for (const auto& c : instruction.constraints) out << "- " << c << "\n";
    }
    return out.str();
}

TaskInstruction instruction_from_markdown(const std::string& text) {
    TaskInstruction instr;
    enum class Section { Goal, Outputs, Constraints } section = Section::Goal;
    std::ostringstream goal;
    for (const auto& line : split_lines(text)) {
        std::string t = trim(line);
        if (t == "# Task") continue;
        if (t == "## Required outputs") {
            section = Section::Outputs;
            continue;
        }
        if (t == "## Constraints") {
            section = Section::Constraints;
            continue;
        }
        switch (section) {
            case Section::Goal:
                if (!t.empty()) {
                    if (goal.tellp() > 0) goal << "\n";
                    goal << t;
                }
                break;
            case Section::Outputs: {
                if (!t.starts_with("- `")) break;
                size_t close = t.find('`', 3);
                if (close == std::string::npos) break;
                std::string path = t.substr(3, close - 3);
                std::string fmt = "text";
                size_t open_paren = t.find('(', close);
                size_t close_paren = t.find(')', close);
                if (open_paren != std::string::npos && close_paren != std::string::npos)
                    fmt = t.substr(open_paren + 1, close_paren - open_paren - 1);
                instr.required_outputs.emplace_back(path, fmt);
                break;
            }
            case Section::Constraints:
                if (t.starts_with("- ")) instr.constraints.push_back(t.substr(2));
                break;
        }
    }
    instr.goal_text = goal.str();
    return instr;
}

// ---------------------------------------------------------------------------
// Report serialization.
// ---------------------------------------------------------------------------

namespace {

const char* failure_kind_name(RepairAttempt::FailureKind k) {
    switch (k) {
        case RepairAttempt::FailureKind::Build: return "build";
        case RepairAttempt::FailureKind::Startup: return "startup";
        case RepairAttempt::FailureKind::Runtime: return "runtime";
    }
    return "build";
}

RepairAttempt::FailureKind failure_kind_from(const std::string& s) {
    if (s == "startup") return RepairAttempt::FailureKind::Startup;
    if (s == "runtime") return RepairAttempt::FailureKind::Runtime;
    return RepairAttempt::FailureKind::Build;
}

json exec_to_json(const ExecResult& e) {
    return {{"exit_code", e.exit_code},
            {"stdout", e.stdout_text},
            {"stderr", e.stderr_text},
            {"duration_s", e.duration_s},
            {"timed_out", e.timed_out}};
}

ExecResult exec_from_json(const json& j) {
    ExecResult e;
    e.exit_code = j.value("exit_code", -1);
    e.stdout_text = j.value("stdout", "");
    e.stderr_text = j.value("stderr", "");
    e.duration_s = j.value("duration_s", 0.0);
    e.timed_out = j.value("timed_out", false);
    return e;
}

const char* trial_name(TrialReport::Trial t) {
    switch (t) {
        case TrialReport::Trial::AllPassing: return "allpassing";
        case TrialReport::Trial::Nop: return "nop";
        case TrialReport::Trial::Partial: return "partial";
    }
    return "allpassing";
}

TrialReport::Trial trial_from(const std::string& s) {
    if (s == "nop") return TrialReport::Trial::Nop;
    if (s == "partial") return TrialReport::Trial::Partial;
    return TrialReport::Trial::AllPassing;
}

json suite_to_json(const TestSuite& suite) {
    json assertions = json::array();
    for (const auto& a : suite.assertions)
        assertions.push_back(
            {{"name", a.name}, {"script", a.predicate_script}, {"rationale", a.rationale}});
    return {{"version", suite.version}, {"assertions", assertions}};
}

TestSuite suite_from_json(const json& j) {
    TestSuite suite;
    suite.version = j.value("version", 1);
    for (const auto& a : j.value("assertions", json::array()))
        suite.assertions.push_back({a.at("name").get<std::string>(),
                                    a.value("script", ""), a.value("rationale", "")});
    return suite;
}

}  // namespace

json reproduction_to_json(const ReproductionReport& report) {
    json attempts = json::array();
    for (const auto& a : report.attempts)
        attempts.push_back({{"iteration", a.iteration},
                            {"failure_kind", failure_kind_name(a.failure_kind)},
                            {"failure_log", a.failure_log},
                            {"dockerfile_after", a.spec_after.dockerfile_text}});
    json delta{{"added", json::array()}, {"removed", json::array()}, {"modified", json::array()}};
    for (const auto& p : report.delta.added) delta["added"].push_back(p);
    for (const auto& p : report.delta.removed) delta["removed"].push_back(p);
    for (const auto& [p, before, after] : report.delta.modified)
        delta["modified"].push_back({{"path", p}, {"before", before}, {"after", after}});
    json j{{"task_id", report.task_id},
           {"status",
            report.status == ReproductionReport::Status::Reproduced ? "reproduced" : "discarded"},
           {"attempts", attempts},
           {"delta", delta}};
    if (report.final_exec) j["final_exec"] = exec_to_json(*report.final_exec);
    if (report.discard_reason) j["discard_reason"] = *report.discard_reason;
    if (report.image_id) j["image_id"] = *report.image_id;
    return j;
}

ReproductionReport reproduction_from_json(const json& j) {
    ReproductionReport report;
    report.task_id = j.value("task_id", "");
    report.status = j.value("status", "discarded") == "reproduced"
                        ? ReproductionReport::Status::Reproduced
                        : ReproductionReport::Status::Discarded;
    for (const auto& a : j.value("attempts", json::array())) {
        RepairAttempt attempt;
        attempt.iteration = a.value("iteration", 0);
        attempt.failure_kind = failure_kind_from(a.value("failure_kind", "build"));
        attempt.failure_log = a.value("failure_log", "");
        attempt.spec_after.dockerfile_text = a.value("dockerfile_after", "");
        report.attempts.push_back(std::move(attempt));
    }
    if (j.contains("final_exec")) report.final_exec = exec_from_json(j["final_exec"]);
    if (j.contains("discard_reason")) report.discard_reason = j["discard_reason"].get<std::string>();
    if (j.contains("image_id")) report.image_id = j["image_id"].get<std::string>();
    if (j.contains("delta")) {
        const json& d = j["delta"];
        for (const auto& p : d.value("added", json::array()))
            report.delta.added.insert(p.get<std::string>());
        for (const auto& p : d.value("removed", json::array()))
            report.delta.removed.insert(p.get<std::string>());
        for (const auto& m : d.value("modified", json::array()))
            report.delta.modified.emplace_back(m.value("path", ""), m.value("before", ""),
                                               m.value("after", ""));
    }
    return report;
}

json validation_to_json(const ValidationReport& report) {
    json rounds = json::array();
    for (const auto& r : report.rounds) {
        json trials = json::array();
        for (const auto& t : r.trials) {
            json per = json::object();
            for (const auto& [name, ok] : t.per_assertion) per[name] = ok;
            json tj{{"trial", trial_name(t.trial)},
                    {"per_assertion", per},
                    {"verdict", t.verdict},
                    {"container_id", t.container_id},
                    {"note", t.note}};
            if (t.partial_id) tj["partial_id"] = *t.partial_id;
            trials.push_back(tj);
        }
        rounds.push_back({{"suite_version", r.suite_version}, {"trials", trials}});
    }
    return {{"task_id", report.task_id},
            {"rounds", rounds},
            {"final", report.final == ValidationReport::Final::Admitted ? "admitted" : "discarded"},
            {"instruction_sync_notes", report.instruction_sync_notes},
            {"final_suite", suite_to_json(report.final_suite)}};
}

ValidationReport validation_from_json(const json& j) {
    ValidationReport report;
    report.task_id = j.value("task_id", "");
    report.final = j.value("final", "discarded") == "admitted" ? ValidationReport::Final::Admitted
                                                               : ValidationReport::Final::Discarded;
    for (const auto& n : j.value("instruction_sync_notes", json::array()))
        report.instruction_sync_notes.push_back(n.get<std::string>());
    for (const auto& r : j.value("rounds", json::array())) {
        ValidationRound round;
        round.suite_version = r.value("suite_version", 0);
        for (const auto& t : r.value("trials", json::array())) {
            TrialReport trial;
            trial.trial = trial_from(t.value("trial", "allpassing"));
            if (t.contains("partial_id")) trial.partial_id = t["partial_id"].get<std::string>();
            const json per = t.value("per_assertion", json::object());
            for (const auto& [name, ok] : per.items()) trial.per_assertion[name] = ok.get<bool>();
            trial.verdict = t.value("verdict", false);
            trial.container_id = t.value("container_id", "");
            trial.note = t.value("note", "");
            round.trials.push_back(std::move(trial));
        }
        report.rounds.push_back(std::move(round));
    }
    if (j.contains("final_suite")) report.final_suite = suite_from_json(j["final_suite"]);
    return report;
}

// ---------------------------------------------------------------------------
// Store.
// ---------------------------------------------------------------------------

BundleStore::BundleStore(std::filesystem::path root) : root_(std::move(root)) {
    std::filesystem::create_directories(root_ / "bundles");
}

std::filesystem::path BundleStore::bundle_dir(const std::string& task_id) const {
    return root_ / "bundles" / task_id;
}

std::vector<std::string> BundleStore::list() const {
    std::vector<std::string> ids;
    for (const auto& entry : std::filesystem::directory_iterator(root_ / "bundles"))
        if (entry.is_directory()) ids.push_back(entry.path().filename().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

bool BundleStore::has(const std::string& task_id) const {
    return std::filesystem::exists(bundle_dir(task_id) / "task.json");
}

json BundleStore::load_index() const {
    auto path = root_ / "index.json";
    if (!std::filesystem::exists(path)) return json{{"tasks", json::object()}};
    return json::parse(read_file(path));
}

void BundleStore::save_index(const json& index) const {
    atomic_write_file(root_ / "index.json", index.dump(2));
}

std::string BundleStore::stage_status(const std::string& task_id, const std::string& stage) const {
    std::lock_guard lock(index_mutex);
    json index = load_index();
    return index["tasks"].value(task_id, json::object())
        .value("stages", json::object())
        .value(stage, "");
}

void BundleStore::set_stage_status(const std::string& task_id, const std::string& stage,
                                   const std::string& status) {
    std::lock_guard lock(index_mutex);
    json index = load_index();
    index["tasks"][task_id]["stages"][stage] = status;
    save_index(index);
}

void BundleStore::write_bundle(const TaskBundle& bundle) {
    auto dir = bundle_dir(bundle.task_id);
    std::filesystem::create_directories(dir / "environment");
    std::filesystem::create_directories(dir / "tests" / "assertions");

    json task{{"task_id", bundle.task_id},
              {"title", bundle.metadata.title},
              {"category", bundle.metadata.category},
              {"source_url", bundle.metadata.source_url},
              {"n_commands", bundle.metadata.n_commands},
              {"duration_s", bundle.metadata.recording_duration_s},
              {"engine_version", bundle.metadata.engine_version},
              {"admitted", bundle.admitted}};
    atomic_write_file(dir / "task.json", task.dump(2));
    atomic_write_file(dir / "instruction.md", instruction_to_markdown(bundle.instruction));
    atomic_write_file(dir / "solution.sh", bundle.solution.script_text);
    atomic_write_file(dir / "environment" / "Dockerfile", bundle.env.dockerfile_text);
    if (!bundle.env.compose_text.empty())
        atomic_write_file(dir / "environment" / "docker-compose.yaml", bundle.env.compose_text);

    json manifest{{"version", bundle.suite.version}, {"assertions", json::array()}};
    for (const auto& a : bundle.suite.assertions) {
        manifest["assertions"].push_back({{"name", a.name}, {"rationale", a.rationale}});
        atomic_write_file(dir / "tests" / "assertions" / (a.name + ".sh"),
                          a.predicate_script + "\n");
    }
    atomic_write_file(dir / "tests" / "suite.json", manifest.dump(2));
    atomic_write_file(dir / "tests" / "run_tests.sh", bundle.suite.runner_script());
}

TaskBundle BundleStore::read_bundle(const std::string& task_id) const {
    auto dir = bundle_dir(task_id);
    if (!std::filesystem::exists(dir)) throw CorruptBundle(task_id + ": no bundle directory");
    auto require = [&](const std::filesystem::path& p) {
        if (!std::filesystem::exists(p))
            throw CorruptBundle(task_id + ": missing " + p.filename().string());
        return read_file(p);
    };

    // Provenance rule: a raw transcript body anywhere in the bundle is a
    // corruption, not just a policy warning.
    for (const auto& entry : std::filesystem::recursive_directory_iterator(dir)) {
        std::string name = entry.path().filename().string();
        if (name.ends_with(".cast") || name.starts_with("transcript"))
            throw CorruptBundle(task_id + ": embedded recording transcript " + name);
    }

    TaskBundle bundle;
    json task;
    try {
        task = json::parse(require(dir / "task.json"));
    } catch (const json::exception& e) {
        throw CorruptBundle(task_id + ": invalid task.json: " + e.what());
    }
    bundle.task_id = task.value("task_id", task_id);
    bundle.metadata.title = task.value("title", "");
    bundle.metadata.category = task.value("category", "");
    bundle.metadata.source_url = task.value("source_url", "");
    bundle.metadata.n_commands = task.value("n_commands", 0);
    bundle.metadata.recording_duration_s = task.value("duration_s", 0.0);
    bundle.metadata.engine_version = task.value("engine_version", "");
    bundle.admitted = task.value("admitted", false);

    bundle.instruction = instruction_from_markdown(require(dir / "instruction.md"));
    std::string script = require(dir / "solution.sh");
    bundle.solution = ReferenceSolution::from_commands(ReferenceSolution::parse_script(script));
    bundle.env.dockerfile_text = require(dir / "environment" / "Dockerfile");
    if (std::filesystem::exists(dir / "environment" / "docker-compose.yaml"))
        bundle.env.compose_text = read_file(dir / "environment" / "docker-compose.yaml");
    for (const auto& line : split_lines(bundle.env.dockerfile_text)) {
        std::string t = trim(line);
        if (t.starts_with("WORKDIR ")) bundle.env.workdir = trim(t.substr(8));
    }

    json manifest;
    try {
        manifest = json::parse(require(dir / "tests" / "suite.json"));
    } catch (const json::exception& e) {
        throw CorruptBundle(task_id + ": invalid suite.json: " + e.what());
    }
    bundle.suite.version = manifest.value("version", 1);
    for (const auto& a : manifest.value("assertions", json::array())) {
        std::string name = a.at("name").get<std::string>();
        auto script_path = dir / "tests" / "assertions" / (name + ".sh");
        if (!std::filesystem::exists(script_path))
            throw CorruptBundle(task_id + ": missing assertion script " + name);
        std::string body = read_file(script_path);
        while (!body.empty() && body.back() == '\n') body.pop_back();
        bundle.suite.assertions.push_back({name, body, a.value("rationale", "")});
    }
    require(dir / "tests" / "run_tests.sh");
    return bundle;
}

void BundleStore::write_validation(const std::string& task_id, const ReproductionReport& repro,
                                   const std::optional<ValidationReport>& validation) {
    json j{{"reproduction", reproduction_to_json(repro)}};
    if (validation) {
        j["validation"] = validation_to_json(*validation);
        j["admitted"] = validation->final == ValidationReport::Final::Admitted;
    } else {
        j["admitted"] = false;
    }
    atomic_write_file(bundle_dir(task_id) / "validation.json", j.dump(2));
}

json BundleStore::read_validation(const std::string& task_id) const {
    auto path = bundle_dir(task_id) / "validation.json";
    if (!std::filesystem::exists(path)) throw CorruptBundle(task_id + ": missing validation.json");
    return json::parse(read_file(path));
}

std::vector<std::string> BundleStore::scan_provenance() const {
    std::vector<std::string> offenders;
    for (const auto& entry : std::filesystem::recursive_directory_iterator(root_)) {
        if (!entry.is_regular_file()) continue;
        std::string name = entry.path().filename().string();
        if (name.ends_with(".cast") || name.starts_with("transcript"))
            offenders.push_back(entry.path().string());
    }
    return offenders;
}

}  // namespace termforge
