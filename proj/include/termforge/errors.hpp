#pragma once

#include <stdexcept>
#include <string>

namespace termforge {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// cast_ingest
struct UnsupportedVersion : Error {
    int version;
    explicit UnsupportedVersion(int v)
        : Error("unsupported cast version " + std::to_string(v)), version(v) {}
};
struct MalformedLine : Error {
    int line;
    MalformedLine(int l, const std::string& detail)
        : Error("malformed cast line " + std::to_string(l) + ": " + detail), line(l) {}
};
struct NonMonotonicTime : Error {
    int line;
    explicit NonMonotonicTime(int l)
        : Error("non-monotonic event time at line " + std::to_string(l)), line(l) {}
};
struct NoCommandsFound : Error {
    NoCommandsFound() : Error("no command steps detected in recording") {}
};

// llm_gateway
struct GatewayError : Error {
    using Error::Error;
};
struct CacheMiss : GatewayError {
    std::string digest;
    explicit CacheMiss(const std::string& d) : GatewayError("replay cache miss: " + d), digest(d) {}
};
struct ProviderError : GatewayError {
    double retry_after_s;
    ProviderError(const std::string& msg, double retry = 0.0)
        : GatewayError(msg), retry_after_s(retry) {}
};
struct UnknownModelPrice : Error {
    explicit UnknownModelPrice(const std::string& model)
        : Error("no price entry for model: " + model) {}
};

// task_synth
struct EmptySolution : Error {
    EmptySolution() : Error("no commands survived solution extraction") {}
};
struct UnlintableInstruction : Error {
    explicit UnlintableInstruction(const std::string& detail)
        : Error("instruction failed lint after repair budget: " + detail) {}
};

// sandbox
struct BuildError : Error {
    std::string log;
    explicit BuildError(const std::string& build_log)
        : Error("image build failed: " + build_log), log(build_log) {}
};
struct DriverUnavailable : Error {
    explicit DriverUnavailable(const std::string& detail)
        : Error("sandbox driver unavailable: " + detail) {}
};
struct StartupTimeout : Error {
    StartupTimeout() : Error("container startup timed out") {}
};
struct RootMismatch : Error {
    RootMismatch() : Error("snapshots cover different roots or exclusions") {}
};

// env_forge
struct FakeDependencyDetected : Error {
    explicit FakeDependencyDetected(const std::string& detail)
        : Error("environment spec fakes a dependency: " + detail) {}
};

// test_forge
struct NoPersistentArtifacts : Error {
    NoPersistentArtifacts()
        : Error("empty filesystem delta and no required outputs to assert on") {}
};

// harness / metrics
struct ConfigMismatch : Error {
    explicit ConfigMismatch(const std::string& detail)
        : Error("run sets disagree on configuration: " + detail) {}
};
struct AllErrors : Error {
    AllErrors() : Error("every record in the set is an error; rates undefined") {}
};
struct ConstantSeries : Error {
    ConstantSeries() : Error("pearson undefined for a constant series") {}
};
struct LengthMismatch : Error {
    LengthMismatch() : Error("series lengths differ") {}
};
struct MissingMetadata : Error {
    explicit MissingMetadata(const std::string& task)
        : Error("no bundle metadata for task: " + task) {}
};

// pipeline
struct PrerequisiteMissing : Error {
    explicit PrerequisiteMissing(const std::string& detail)
        : Error("stage prerequisite missing: " + detail) {}
};
struct CorruptBundle : Error {
    explicit CorruptBundle(const std::string& detail) : Error("corrupt bundle: " + detail) {}
};

}  // namespace termforge
