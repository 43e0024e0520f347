#include <doctest.h>

#include <atomic>
#include <numeric>

#include "helpers.hpp"
#include "termforge/errors.hpp"
#include "termforge/pipeline.hpp"
#include "termforge/util.hpp"

using namespace termforge;

namespace {

PipelineConfig record_config(const std::filesystem::path& dir) {
    PipelineConfig config;
    config.corpus_dir = testing::fixtures_dir() / "corpus";
    config.store_dir = dir / "store";
    config.llm_mode = LlmMode::Record;
    config.concurrency = 2;
    config.driver = "local";
    return config;
}

}  // namespace

TEST_CASE("parallel_for covers every index exactly once") {
    std::vector<std::atomic<int>> hits(257);
    parallel_for(hits.size(), 8, [&](size_t i) { hits[i]++; });
    for (const auto& h : hits) CHECK(h.load() == 1);

    // Degenerate worker counts still work.
    std::atomic<int> n{0};
    parallel_for(10, 0, [&](size_t) { n++; });
    CHECK(n.load() == 10);
    parallel_for(0, 4, [&](size_t) { FAIL("must not be called"); });
}

TEST_CASE("config files override fields and reject unknown keys") {
    testing::TempDir dir;
    auto path = dir.path() / "pipeline.conf";
    atomic_write_file(path,
                      "# comment\n"
                      "corpus = /data/corpus\n"
                      "store = /data/store\n"
                      "concurrency = 9\n"
                      "driver = container\n"
                      "llm_mode = record\n"
                      "budget_env = 7\n"
                      "budget_tests = 2\n"
                      "agent = nop\n"
                      "eval_model = big-model\n"
                      "wall_clock_s = 300\n");
    PipelineConfig config;
    config.apply_file(path);
    CHECK(config.corpus_dir == "/data/corpus");
    CHECK(config.store_dir == "/data/store");
    CHECK(config.concurrency == 9);
    CHECK(config.driver == "container");
    CHECK(config.llm_mode == LlmMode::Record);
    CHECK(config.budget_env == 7);
    CHECK(config.budget_tests == 2);
    CHECK(config.agent == "nop");
    CHECK(config.eval_model_id == "big-model");
    CHECK(config.wall_clock_s == doctest::Approx(300.0));

    atomic_write_file(path, "frobnicate = yes\n");
    CHECK_THROWS_AS(config.apply_file(path), Error);
    atomic_write_file(path, "no equals sign\n");
    CHECK_THROWS_AS(config.apply_file(path), Error);
}

TEST_CASE("work data lives beside the store, not inside it") {
    PipelineConfig config;
    config.store_dir = "/data/store";
    CHECK(config.effective_work_dir() == "/data/store.work");
    config.work_dir = "/scratch/w";
    CHECK(config.effective_work_dir() == "/scratch/w");
}

TEST_CASE("stages demand their prerequisites per task, without batch aborts") {
    testing::TempDir dir;
    Pipeline pipeline(record_config(dir));

    // Running filter before ingest: every task fails with a note, none aborts.
    auto premature = pipeline.run_stage("filter");
    CHECK(premature.processed == 0);

    auto ingest = pipeline.run_stage("ingest");
    CHECK(ingest.processed == 3);
    CHECK(ingest.failed == 0);

    // forge-tests straight after ingest+filter: per-task PrerequisiteMissing.
    pipeline.run_stage("filter");
    auto early = pipeline.run_stage("forge-tests");
    CHECK(early.processed == 0);
    for (const auto& note : early.task_notes) CHECK(contains(note, "PrerequisiteMissing"));
}

TEST_CASE("re-running a completed stage skips finished work") {
    testing::TempDir dir;
    Pipeline pipeline(record_config(dir));
    auto first = pipeline.run_stage("ingest");
    CHECK(first.processed == 3);
    auto second = pipeline.run_stage("ingest");
    CHECK(second.processed == 0);
    CHECK(second.skipped == 3);

    // --force reprocesses.
    auto config = record_config(dir);
    config.force = true;
    Pipeline forced(config);
    auto third = forced.run_stage("ingest");
    CHECK(third.processed == 3);
}

TEST_CASE("record-mode pipeline runs end to end over the fixture corpus") {
    testing::TempDir dir;
    Pipeline pipeline(record_config(dir));
    for (const auto& stage : Pipeline::stage_order()) {
        CAPTURE(stage);
        auto summary = pipeline.run_stage(stage);
        CHECK(summary.failed == 0);
        CHECK(summary.processed > 0);
    }

    // Every fixture recording became an admitted bundle.
    auto& store = pipeline.store();
    auto ids = store.list();
    CHECK(ids.size() == 3);
    int admitted = 0;
    for (const auto& id : ids) {
        auto bundle = store.read_bundle(id);
        if (bundle.admitted) ++admitted;
        CHECK_FALSE(bundle.suite.assertions.empty());
        CHECK(bundle.metadata.source_url.starts_with("https://asciinema.org/"));
        CHECK_FALSE(bundle.metadata.category.empty());
    }
    CHECK(admitted >= 1);

    // The store holds no recording bodies; the work dir does.
    CHECK(store.scan_provenance().empty());
    CHECK(std::filesystem::exists(pipeline.config().effective_work_dir() / "casts" / "r1.cast"));

    // The scripted reference run passed everything and the report landed.
    auto runset = load_runset(store.root() / "runs" / "scripted-ref-eval-model");
    CHECK(runset.records.size() == static_cast<size_t>(admitted));
    for (const auto& r : runset.records) CHECK(r.outcome == Outcome::Pass);
    CHECK(std::filesystem::exists(store.root() / "report.txt"));
    CHECK(std::filesystem::exists(store.root() / "report.csv"));
    CHECK(contains(read_file(store.root() / "report.txt"), "scripted-ref"));
}

TEST_CASE("the nop agent fails the admitted bundles") {
    testing::TempDir dir;
    auto config = record_config(dir);
    {
        Pipeline pipeline(config);
        for (const auto& stage :
             {"ingest", "filter", "synthesize", "forge-env", "forge-tests", "validate"})
            pipeline.run_stage(stage);
    }
    config.agent = "nop";
    Pipeline evaluator(config);
    auto summary = evaluator.run_stage("eval");
    CHECK(summary.processed > 0);
    auto runset = load_runset(evaluator.store().root() / "runs" / "nop-eval-model");
    REQUIRE_FALSE(runset.records.empty());
    for (const auto& r : runset.records) CHECK(r.outcome == Outcome::Fail);
}
