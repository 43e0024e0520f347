#include <doctest.h>

#include "helpers.hpp"
#include "termforge/env_forge.hpp"
#include "termforge/errors.hpp"
#include "termforge/util.hpp"

using namespace termforge;

namespace {

LlmGateway make_gateway(const std::filesystem::path& cache) {
    return LlmGateway(make_stub_provider(), cache, LlmMode::Record);
}

}  // namespace

TEST_CASE("synthesize_environment emits a minimal spec for pure-POSIX solutions") {
    testing::TempDir cache;
    auto gateway = make_gateway(cache);
    auto sol = ReferenceSolution::from_commands(
        {"mkdir -p /app", "printf 'a\\n' > /app/x", "sort /app/x | uniq -c > /app/y"});
    auto spec = synthesize_environment(sol, "", gateway);
    CHECK(contains(spec.dockerfile_text, "FROM debian:stable-slim"));
    CHECK(contains(spec.dockerfile_text, "WORKDIR /app"));
    CHECK_FALSE(contains(spec.dockerfile_text, "RUN apt-get"));
    CHECK(spec.workdir == "/app");
}

TEST_CASE("synthesize_environment installs packages for non-baseline tools") {
    testing::TempDir cache;
    auto gateway = make_gateway(cache);
    auto sol = ReferenceSolution::from_commands({"jq '.a' /app/in.json > /app/out.json"});
    auto spec = synthesize_environment(sol, "", gateway);
    CHECK(contains(spec.dockerfile_text, "apt-get install -y jq"));
}

TEST_CASE("anti-fake lint rejects specs that fabricate binaries") {
    auto sol = ReferenceSolution::from_commands({"terraform apply"});

    EnvironmentSpec stubbed;
    stubbed.dockerfile_text =
        "FROM debian:stable-slim\n"
        "RUN echo '#!/bin/sh' > /usr/bin/terraform && chmod +x /usr/bin/terraform\n";
    CHECK_THROWS_AS(lint_fake_dependencies(stubbed, sol), FakeDependencyDetected);

    EnvironmentSpec aliased;
    aliased.dockerfile_text =
        "FROM debian:stable-slim\nRUN ln -s /bin/true /usr/local/bin/terraform\n";
    CHECK_THROWS_AS(lint_fake_dependencies(aliased, sol), FakeDependencyDetected);

    EnvironmentSpec honest;
    honest.dockerfile_text =
        "FROM debian:stable-slim\nRUN apt-get update && apt-get install -y terraform\n";
    CHECK_NOTHROW(lint_fake_dependencies(honest, sol));

    // Writing ordinary data files is fine.
    EnvironmentSpec data;
    data.dockerfile_text =
        "FROM debian:stable-slim\nRUN printf 'seed\\n' > /app/seed.txt\n";
    CHECK_NOTHROW(lint_fake_dependencies(data, ReferenceSolution::from_commands({"cat /app/seed.txt"})));
}

TEST_CASE("reproduce_loop succeeds with zero repairs on a working spec") {
    testing::TempDir cache;
    testing::TempDir sandbox;
    auto gateway = make_gateway(cache);
    auto driver = make_local_driver(sandbox);

    auto sol = ReferenceSolution::from_commands(
        {"mkdir -p /app", "printf 'b\\na\\n' > /app/in.txt", "sort /app/in.txt > /app/out.txt"});
    auto spec = synthesize_environment(sol, "", gateway);
    auto report = reproduce_loop(spec, sol, 5, *driver, gateway);

    CHECK(report.status == ReproductionReport::Status::Reproduced);
    CHECK(report.attempts.empty());
    REQUIRE(report.final_exec.has_value());
    CHECK(report.final_exec->exit_code == 0);
    CHECK(report.image_id.has_value());
    CHECK(report.delta.added.count("/app/out.txt") == 1);
    CHECK(driver->live_containers() == 0);
}

TEST_CASE("reproduce_loop repairs a missing-package build failure") {
    testing::TempDir cache;
    testing::TempDir sandbox;
    auto gateway = make_gateway(cache);
    auto driver = make_local_driver(sandbox);

    auto sol = ReferenceSolution::from_commands({"printf 'ok\\n' > /app/out.txt"});
    EnvironmentSpec spec;
    spec.dockerfile_text =
        "FROM debian:stable-slim\n"
        "WORKDIR /app\n"
        "RUN apt-get update && apt-get install -y surely-not-a-real-binary-9z\n";
    auto report = reproduce_loop(spec, sol, 5, *driver, gateway);

    CHECK(report.status == ReproductionReport::Status::Reproduced);
    REQUIRE(report.attempts.size() == 1);
    CHECK(report.attempts[0].failure_kind == RepairAttempt::FailureKind::Build);
    CHECK(contains(report.attempts[0].failure_log, "package not found"));
    CHECK_FALSE(contains(report.attempts[0].spec_after.dockerfile_text,
                         "surely-not-a-real-binary-9z"));
    CHECK(report.final_exec->exit_code == 0);
}

TEST_CASE("reproduce_loop discards on irrecoverable failure signatures") {
    testing::TempDir cache;
    testing::TempDir sandbox;
    auto gateway = make_gateway(cache);
    auto driver = make_local_driver(sandbox);

    auto sol = ReferenceSolution::from_commands(
        {"printf 'curl: (6) Could not resolve host: gone.example.invalid\\n' >&2",
         "exit 6"});
    EnvironmentSpec spec;
    spec.dockerfile_text = "FROM debian:stable-slim\nWORKDIR /app\n";
    auto report = reproduce_loop(spec, sol, 5, *driver, gateway);

    CHECK(report.status == ReproductionReport::Status::Discarded);
    REQUIRE(report.discard_reason.has_value());
    CHECK(contains(*report.discard_reason, "irrecoverable"));
    // No repair budget is wasted on an unfixable failure.
    CHECK(report.attempts.size() <= 1);
}

TEST_CASE("reproduce_loop discards after exhausting the repair budget") {
    testing::TempDir cache;
    testing::TempDir sandbox;
    auto gateway = make_gateway(cache);
    auto driver = make_local_driver(sandbox);

    auto sol = ReferenceSolution::from_commands({"exit 3"});
    EnvironmentSpec spec;
    spec.dockerfile_text = "FROM debian:stable-slim\nWORKDIR /app\n";
    const int budget = 3;
    auto report = reproduce_loop(spec, sol, budget, *driver, gateway);

    CHECK(report.status == ReproductionReport::Status::Discarded);
    CHECK(static_cast<int>(report.attempts.size()) <= budget);
    REQUIRE(report.discard_reason.has_value());

    // Report invariants: iterations monotone, failure logs non-empty.
    int last = 0;
    for (const auto& a : report.attempts) {
        CHECK(a.iteration > last);
        last = a.iteration;
        CHECK_FALSE(a.failure_log.empty());
    }
    // Reproduced iff the final exec exited 0.
    if (report.final_exec)
        CHECK((report.status == ReproductionReport::Status::Reproduced) ==
              (report.final_exec->exit_code == 0));
}

TEST_CASE("is_irrecoverable_failure matches dead-resource signatures only") {
    CHECK(is_irrecoverable_failure("curl: Could not resolve host: x.example"));
    CHECK(is_irrecoverable_failure("fatal: Repository not found"));
    CHECK(is_irrecoverable_failure("HTTP request failed: 404 Not Found"));
    CHECK(is_irrecoverable_failure("write failed: No space left on device"));
    CHECK_FALSE(is_irrecoverable_failure("make: *** [all] Error 2"));
    CHECK_FALSE(is_irrecoverable_failure(""));
}
