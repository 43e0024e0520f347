#include "termforge/pipeline.hpp"

#include <atomic>
#include <mutex>
#include <sstream>
#include <thread>

#include <nlohmann/json.hpp>

#include "termforge/env_forge.hpp"
#include "termforge/errors.hpp"
#include "termforge/metrics.hpp"
#include "termforge/synth.hpp"
#include "termforge/test_forge.hpp"
#include "termforge/util.hpp"

using nlohmann::json;

namespace termforge {

void parallel_for(size_t n, int workers, const std::function<void(size_t)>& fn) {
    if (n == 0) return;
    int pool = std::max(1, std::min<int>(workers, static_cast<int>(n)));
    std::atomic<size_t> next{0};
    std::vector<std::thread> threads;
    for (int w = 0; w < pool; ++w)
        threads.emplace_back([&] {
            for (size_t i = next++; i < n; i = next++) fn(i);
        });
    for (auto& t : threads) t.join();
}

void PipelineConfig::apply_file(const std::filesystem::path& p) {
    for (const auto& raw : split_lines(read_file(p))) {
        std::string line = trim(raw);
        if (line.empty() || line[0] == '#') continue;
        auto eq = line.find('=');
        if (eq == std::string::npos) throw Error("bad config line: " + line);
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key == "corpus") corpus_dir = value;
        else if (key == "store") store_dir = value;
        else if (key == "work") work_dir = value;
        else if (key == "concurrency") concurrency = std::stoi(value);
        else if (key == "driver") driver = value;
        else if (key == "llm_mode") llm_mode = llm_mode_from_string(value);
        else if (key == "budget_env") budget_env = std::stoi(value);
        else if (key == "budget_tests") budget_tests = std::stoi(value);
        else if (key == "policy") policy_file = value;
        else if (key == "prices") price_table_file = value;
        else if (key == "model") model_id = value;
        else if (key == "agent") agent = value;
        else if (key == "eval_model") eval_model_id = value;
        else if (key == "wall_clock_s") wall_clock_s = std::stod(value);
        else throw Error("unknown config key: " + key);
    }
}

const std::vector<std::string>& Pipeline::stage_order() {
    static const std::vector<std::string> order = {"ingest",     "filter",   "synthesize",
                                                   "forge-env",  "forge-tests", "validate",
                                                   "eval",       "report"};
    return order;
}

Pipeline::Pipeline(PipelineConfig config, std::shared_ptr<Provider> provider)
    : config_(std::move(config)), store_(config_.store_dir), work_(config_.effective_work_dir()) {
    std::filesystem::create_directories(work_ / "casts");
    std::filesystem::create_directories(work_ / "meta");
    std::filesystem::create_directories(work_ / "verdicts");

    policy_ = config_.policy_file.empty() ? FilterPolicy::defaults()
                                          : FilterPolicy::from_file(config_.policy_file);

    PriceTable prices;
    if (!config_.price_table_file.empty())
        prices = PriceTable::from_file(config_.price_table_file);
    if (!provider && config_.llm_mode == LlmMode::Live) provider = make_http_provider();
    if (!provider && config_.llm_mode == LlmMode::Record) provider = make_stub_provider();
    gateway_ = std::make_unique<LlmGateway>(std::move(provider), work_ / "llm_cache",
                                            config_.llm_mode, std::move(prices));

    driver_ = make_driver(config_.driver, work_ / "sandbox");
}

std::vector<std::string> Pipeline::work_ids() const {
    std::vector<std::string> ids;
    for (const auto& entry : std::filesystem::directory_iterator(work_ / "meta"))
        if (entry.path().extension() == ".json") ids.push_back(entry.path().stem().string());
    std::sort(ids.begin(), ids.end());
    return ids;
}

RawRecording Pipeline::load_work_recording(const std::string& id) const {
    json meta = json::parse(read_file(work_ / "meta" / (id + ".json")));
    RawRecording rec;
    rec.id = id;
    rec.source_url = meta.value("source_url", "");
    rec.title = meta.value("title", "");
    rec.description = meta.value("description", "");
    rec.cast_bytes = read_file(work_ / "casts" / (id + ".cast"));
    return rec;
}

StageSummary Pipeline::run_stage(const std::string& stage) {
    if (stage == "ingest") return stage_ingest();
    if (stage == "filter") return stage_filter();
    if (stage == "synthesize") return stage_synthesize();
    if (stage == "forge-env") return stage_forge_env();
    if (stage == "forge-tests") return stage_forge_tests();
    if (stage == "validate") return stage_validate();
    if (stage == "eval") return stage_eval();
    if (stage == "report") return stage_report();
    throw Error("unknown stage: " + stage);
}

StageSummary Pipeline::stage_ingest() {
    StageSummary summary{.stage = "ingest"};
    LocalCorpusFetcher fetcher(config_.corpus_dir);
    auto recordings = fetcher.list_all();
    std::mutex mu;
    parallel_for(recordings.size(), config_.concurrency, [&](size_t i) {
        const RawRecording& rec = recordings[i];
        std::lock_guard lock(mu);
        if (!config_.force && store_.stage_status(rec.id, "ingest") == "done") {
            summary.skipped++;
            return;
        }
        try {
            parse_cast(rec.cast_bytes);  // reject malformed input at the door
            atomic_write_file(work_ / "casts" / (rec.id + ".cast"), rec.cast_bytes);
            json meta{{"source_url", rec.source_url},
                      {"title", rec.title},
                      {"description", rec.description}};
            atomic_write_file(work_ / "meta" / (rec.id + ".json"), meta.dump(2));
            store_.set_stage_status(rec.id, "ingest", "done");
            summary.processed++;
        } catch (const Error& e) {
            store_.set_stage_status(rec.id, "ingest", "failed");
            summary.failed++;
            summary.task_notes.push_back(rec.id + ": " + e.what());
        }
    });
    return summary;
}

StageSummary Pipeline::stage_filter() {
    StageSummary summary{.stage = "filter"};
    auto ids = work_ids();
    std::mutex mu;
    parallel_for(ids.size(), config_.concurrency, [&](size_t i) {
        const std::string& id = ids[i];
        {
            std::lock_guard lock(mu);
            if (store_.stage_status(id, "ingest") != "done") {
                summary.failed++;
                summary.task_notes.push_back(id + ": PrerequisiteMissing(ingest)");
                return;
            }
            if (!config_.force && !store_.stage_status(id, "filter").empty()) {
                summary.skipped++;
                return;
            }
        }
        RawRecording rec = load_work_recording(id);
        auto [header, events] = parse_cast(rec.cast_bytes);
        Transcript transcript;
        const Transcript* tp = nullptr;
        try {
            transcript = reconstruct_transcript(header, events, PromptConfig{}, id);
            tp = &transcript;
        } catch (const NoCommandsFound&) {
            tp = nullptr;
        }
        FilterVerdict verdict = apply_policy(rec, tp, events, policy_, *gateway_);
        std::lock_guard lock(mu);
        atomic_write_file(work_ / "verdicts" / (id + ".json"), verdict.to_json_line() + "\n");
        std::string log;
        if (std::filesystem::exists(work_ / "filter_verdicts.jsonl"))
            log = read_file(work_ / "filter_verdicts.jsonl");
        atomic_write_file(work_ / "filter_verdicts.jsonl", log + verdict.to_json_line() + "\n");
        store_.set_stage_status(id, "filter", verdict.accepted ? "accepted" : "rejected");
        summary.processed++;
        if (!verdict.accepted && !verdict.findings.empty())
            summary.task_notes.push_back(id + ": rejected at " +
                                         to_string(verdict.findings.front().gate));
    });
    return summary;
}

StageSummary Pipeline::stage_synthesize() {
    StageSummary summary{.stage = "synthesize"};
    auto ids = work_ids();
    std::mutex mu;
    parallel_for(ids.size(), config_.concurrency, [&](size_t i) {
        const std::string& id = ids[i];
        {
            std::lock_guard lock(mu);
            std::string filter_status = store_.stage_status(id, "filter");
            if (filter_status.empty()) {
                summary.failed++;
                summary.task_notes.push_back(id + ": PrerequisiteMissing(filter)");
                return;
            }
            if (filter_status != "accepted") {
                summary.skipped++;
                return;
            }
            if (!config_.force && store_.stage_status(id, "synthesize") == "done") {
                summary.skipped++;
                return;
            }
        }
        try {
            RawRecording rec = load_work_recording(id);
            auto [header, events] = parse_cast(rec.cast_bytes);
            Transcript transcript = reconstruct_transcript(header, events, PromptConfig{}, id);

            SynthesisRecord record;
            ReferenceSolution solution =
                extract_solution(transcript, *gateway_, &record, 40, config_.model_id);
            TaskInstruction instruction = formalize_instruction(
                transcript, rec.title, rec.description, solution, *gateway_, &record,
                config_.model_id);

            json commands = json::array();
            for (const auto& c : solution.commands) commands.push_back(c);
            ChatRequest cat_req;
            cat_req.template_id = "categorize";
            cat_req.model_id = config_.model_id;
            cat_req.segments = {
                "Assign the single category that best reflects the task's primary goal.",
                json{{"commands", commands}, {"title", rec.title}}.dump()};
            std::string category = trim(gateway_->complete(cat_req).text);

            TaskBundle bundle;
            bundle.task_id = id;
            bundle.instruction = instruction;
            bundle.solution = solution;
            bundle.metadata.title = rec.title;
            bundle.metadata.category = category;
            bundle.metadata.source_url = rec.source_url;
            bundle.metadata.n_commands = static_cast<int>(solution.commands.size());
            bundle.metadata.recording_duration_s = transcript.duration_s;

            std::lock_guard lock(mu);
            store_.write_bundle(bundle);
            store_.set_stage_status(id, "synthesize", "done");
            summary.processed++;
        } catch (const Error& e) {
            std::lock_guard lock(mu);
            store_.set_stage_status(id, "synthesize", "failed");
            summary.failed++;
            summary.task_notes.push_back(id + ": " + e.what());
        }
    });
    return summary;
}

StageSummary Pipeline::stage_forge_env() {
    StageSummary summary{.stage = "forge-env"};
    auto ids = store_.list();
    std::mutex mu;
    parallel_for(ids.size(), config_.concurrency, [&](size_t i) {
        const std::string& id = ids[i];
        {
            std::lock_guard lock(mu);
            if (store_.stage_status(id, "synthesize") != "done") {
                summary.failed++;
                summary.task_notes.push_back(id + ": PrerequisiteMissing(synthesize)");
                return;
            }
            if (!config_.force && !store_.stage_status(id, "forge-env").empty()) {
                summary.skipped++;
                return;
            }
        }
        try {
            TaskBundle bundle = store_.read_bundle(id);
            EnvironmentSpec spec = synthesize_environment(bundle.solution, bundle.metadata.title,
                                                          *gateway_, config_.model_id);
            ReproductionReport report = reproduce_loop(spec, bundle.solution, config_.budget_env,
                                                       *driver_, *gateway_, config_.model_id);
            report.task_id = id;
            bool reproduced = report.status == ReproductionReport::Status::Reproduced;
            if (reproduced && !report.attempts.empty())
                spec = report.attempts.back().spec_after;
            bundle.env = spec;
            for (const auto& line : split_lines(spec.dockerfile_text)) {
                std::string t = trim(line);
                if (t.starts_with("WORKDIR ")) bundle.env.workdir = trim(t.substr(8));
            }
            std::lock_guard lock(mu);
            store_.write_bundle(bundle);
            store_.write_validation(id, report, std::nullopt);
            store_.set_stage_status(id, "forge-env", reproduced ? "done" : "discarded");
            if (reproduced) summary.processed++;
            else {
                summary.failed++;
                summary.task_notes.push_back(id + ": " + report.discard_reason.value_or(""));
            }
        } catch (const Error& e) {
            std::lock_guard lock(mu);
            store_.set_stage_status(id, "forge-env", "failed");
            summary.failed++;
            summary.task_notes.push_back(id + ": " + e.what());
        }
    });
    return summary;
}

StageSummary Pipeline::stage_forge_tests() {
    StageSummary summary{.stage = "forge-tests"};
    auto ids = store_.list();
    std::mutex mu;
    parallel_for(ids.size(), config_.concurrency, [&](size_t i) {
        const std::string& id = ids[i];
        {
            std::lock_guard lock(mu);
            std::string env_status = store_.stage_status(id, "forge-env");
            if (env_status.empty()) {
                summary.failed++;
                summary.task_notes.push_back(id + ": PrerequisiteMissing(forge-env)");
                return;
            }
            if (env_status != "done") {
                summary.skipped++;
                return;
            }
            if (!config_.force && !store_.stage_status(id, "forge-tests").empty()) {
                summary.skipped++;
                return;
            }
        }
        try {
            TaskBundle bundle = store_.read_bundle(id);
            ReproductionReport repro =
                reproduction_from_json(store_.read_validation(id).at("reproduction"));
            TestSuite suite = generate_tests(bundle.instruction, bundle.solution, repro.delta,
                                             *gateway_, config_.model_id);
            bundle.suite = suite;
            std::lock_guard lock(mu);
            store_.write_bundle(bundle);
            store_.set_stage_status(id, "forge-tests", "done");
            summary.processed++;
        } catch (const Error& e) {
            std::lock_guard lock(mu);
            store_.set_stage_status(id, "forge-tests", "failed");
            summary.failed++;
            summary.task_notes.push_back(id + ": " + e.what());
        }
    });
    return summary;
}

StageSummary Pipeline::stage_validate() {
    StageSummary summary{.stage = "validate"};
    auto ids = store_.list();
    std::mutex mu;
    parallel_for(ids.size(), config_.concurrency, [&](size_t i) {
        const std::string& id = ids[i];
        {
            std::lock_guard lock(mu);
            if (store_.stage_status(id, "forge-tests") != "done") {
                std::string env_status = store_.stage_status(id, "forge-env");
                if (env_status == "discarded" || env_status == "failed") summary.skipped++;
                else {
                    summary.failed++;
                    summary.task_notes.push_back(id + ": PrerequisiteMissing(forge-tests)");
                }
                return;
            }
            if (!config_.force && !store_.stage_status(id, "validate").empty()) {
                summary.skipped++;
                return;
            }
        }
        try {
            TaskBundle bundle = store_.read_bundle(id);
            ReproductionReport repro =
                reproduction_from_json(store_.read_validation(id).at("reproduction"));
            ImageRef image = driver_->build_image(bundle.env);
            ValidationReport report = validate_task(id, bundle.instruction, bundle.solution,
                                                    image, repro.delta, config_.budget_tests,
                                                    *driver_, *gateway_, config_.model_id,
                                                    &bundle.suite);
            bool admitted = report.final == ValidationReport::Final::Admitted;
            bundle.suite = report.final_suite;
            bundle.admitted = admitted;
            std::lock_guard lock(mu);
            store_.write_bundle(bundle);
            store_.write_validation(id, repro, report);
            store_.set_stage_status(id, "validate", admitted ? "admitted" : "discarded");
            if (admitted) summary.processed++;
            else {
                summary.failed++;
                summary.task_notes.push_back(id + ": discarded in validation");
            }
        } catch (const Error& e) {
            std::lock_guard lock(mu);
            store_.set_stage_status(id, "validate", "failed");
            summary.failed++;
            summary.task_notes.push_back(id + ": " + e.what());
        }
    });
    return summary;
}

StageSummary Pipeline::stage_eval() {
    StageSummary summary{.stage = "eval"};
    std::vector<std::string> admitted;
    for (const auto& id : store_.list())
        if (store_.stage_status(id, "validate") == "admitted") admitted.push_back(id);
    if (admitted.empty()) {
        summary.failed++;
        summary.task_notes.push_back("PrerequisiteMissing(validate): no admitted bundles");
        return summary;
    }

    RunSet set;
    set.run_id = config_.agent + "-" + config_.eval_model_id;
    set.agent = config_.agent;
    set.model = config_.eval_model_id;

    HarnessConfig hconfig;
    hconfig.model_id = config_.eval_model_id;
    hconfig.wall_clock_s = config_.wall_clock_s;
    hconfig.concurrency = config_.concurrency;

    std::mutex mu;
    parallel_for(admitted.size(), config_.concurrency, [&](size_t i) {
        const std::string& id = admitted[i];
        TaskBundle bundle = store_.read_bundle(id);
        std::shared_ptr<AgentAdapter> agent;
        if (config_.agent == "scripted-ref")
            agent = make_scripted_agent("scripted-ref", bundle.solution.commands);
        else if (config_.agent == "nop")
            agent = make_nop_agent();
        else
            agent = make_generic_loop_agent(*gateway_, config_.eval_model_id);
        RunRecord record = run_task(bundle, *agent, hconfig, *driver_);
        std::lock_guard lock(mu);
        set.records.push_back(std::move(record));
        summary.processed++;
    });
    std::sort(set.records.begin(), set.records.end(),
              [](const RunRecord& a, const RunRecord& b) { return a.task_id < b.task_id; });
    save_runset(set, store_.root() / "runs" / set.run_id);
    return summary;
}

StageSummary Pipeline::stage_report() {
    StageSummary summary{.stage = "report"};
    auto runs_dir = store_.root() / "runs";
    if (!std::filesystem::exists(runs_dir)) {
        summary.failed++;
        summary.task_notes.push_back("PrerequisiteMissing(eval): no run sets");
        return summary;
    }

    std::map<std::string, BundleMetadata> bundles;
    std::map<std::string, ReferenceSolution> solutions;
    for (const auto& id : store_.list()) {
        try {
            TaskBundle b = store_.read_bundle(id);
            bundles[id] = b.metadata;
            solutions[id] = b.solution;
        } catch (const CorruptBundle&) {
            continue;  // partially synthesized bundles carry no run data
        }
    }

    std::vector<MetricRow> rows;
    Breakdowns all_breakdowns;
    std::vector<double> overlaps;
    std::vector<std::filesystem::path> run_dirs;
    for (const auto& entry : std::filesystem::directory_iterator(runs_dir))
        if (entry.is_directory()) run_dirs.push_back(entry.path());
    std::sort(run_dirs.begin(), run_dirs.end());

    for (const auto& dir : run_dirs) {
        RunSet set = load_runset(dir);
        if (set.records.empty()) continue;
        rows.push_back(aggregate(set));
        Breakdowns b = breakdowns(set, bundles);
        for (const auto& [cat, cell] : b.by_category) {
            all_breakdowns.by_category[cat].passes += cell.passes;
            all_breakdowns.by_category[cat].total += cell.total;
        }
        for (const auto& [key, cell] : b.by_complexity) {
            all_breakdowns.by_complexity[key].passes += cell.passes;
            all_breakdowns.by_complexity[key].total += cell.total;
        }
        for (const auto& r : set.records)
            if (r.outcome == Outcome::Pass && r.trajectory && solutions.count(r.task_id))
                overlaps.push_back(
                    overlap_stat(r.task_id, *r.trajectory, solutions[r.task_id]).jaccard);
        summary.processed++;
    }

    std::string text = render_report_text(rows, all_breakdowns);
    if (!overlaps.empty()) {
        std::ostringstream extra;
        extra << "\nMedian command-set overlap (solved runs): " << median(overlaps) << "\n";
        text += extra.str();
    }
    atomic_write_file(store_.root() / "report.txt", text);
    atomic_write_file(store_.root() / "report.csv", render_report_csv(rows));
    return summary;
}

}  // namespace termforge
