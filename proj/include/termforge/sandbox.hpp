#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <set>
#include <string>
#include <tuple>
#include <vector>

namespace termforge {

struct EnvironmentSpec {
    std::string dockerfile_text;
    std::string compose_text;  // only for multi-service tasks
    std::map<std::string, std::string> build_args;
    std::string workdir = "/app";
};

struct ExecResult {
    int exit_code = -1;
    std::string stdout_text;
    std::string stderr_text;
    double duration_s = 0.0;
    bool timed_out = false;
};

struct FsEntry {
    enum class Kind { File, Dir, Symlink } kind = Kind::File;
    std::uint64_t size = 0;
    std::string digest;  // sha256 hex; "!unreadable" sentinel
    unsigned mode = 0;

    bool operator==(const FsEntry&) const = default;
};

struct FsSnapshot {
    std::vector<std::string> roots;
    std::vector<std::string> exclusions;
    std::map<std::string, FsEntry> entries;
};

// Default volatile paths never captured in snapshots.
const std::vector<std::string>& default_snapshot_exclusions();

struct FsDelta {
    std::set<std::string> added;
    std::set<std::string> removed;
    // (path, before digest, after digest)
    std::vector<std::tuple<std::string, std::string, std::string>> modified;

    bool empty() const { return added.empty() && removed.empty() && modified.empty(); }
};

FsDelta diff(const FsSnapshot& before, const FsSnapshot& after);

struct IsolationPolicy {
    bool network_none = true;  // evaluation default; reproduction allows network
};

struct ImageRef {
    std::string id;
};

struct ContainerHandle {
    std::string id;
};

struct DriverTimeouts {
    double startup_s = 120.0;
    double exec_s = 600.0;
};

// Uniform execution substrate. One handle is owned by one worker at a time;
// drivers accept concurrent calls across distinct handles.
class SandboxDriver {
  public:
    virtual ~SandboxDriver() = default;
    virtual std::string name() const = 0;
    virtual bool available() const = 0;
    // Whether network isolation is actually enforceable (container engine) or
    // not applicable (local process driver).
    virtual bool supports_isolation() const = 0;

    virtual ImageRef build_image(const EnvironmentSpec& spec) = 0;  // BuildError / DriverUnavailable
    virtual ContainerHandle launch(const ImageRef& image, const IsolationPolicy& isolation) = 0;
    virtual ExecResult exec(const ContainerHandle& handle, const std::string& script,
                            double timeout_s) = 0;
    virtual FsSnapshot snapshot(const ContainerHandle& handle,
                                const std::vector<std::string>& roots) = 0;
    virtual void teardown(const ContainerHandle& handle) = 0;  // idempotent
    virtual int live_containers() const = 0;
};

// Hermetic local-process driver: each container is a scratch directory; the
// configured sandbox roots (the workdir by default) are remapped into it by
// path-prefix substitution on scripts and snapshot reporting. No image
// semantics; install RUN lines become host-tool availability checks.
std::shared_ptr<SandboxDriver> make_local_driver(const std::filesystem::path& base_dir,
                                                 DriverTimeouts timeouts = {});

// Container-engine driver speaking the Docker Engine HTTP API over its local
// unix socket.
std::shared_ptr<SandboxDriver> make_docker_driver(const std::string& socket_path = "/var/run/docker.sock",
                                                  DriverTimeouts timeouts = {});

std::shared_ptr<SandboxDriver> make_driver(const std::string& kind,
                                           const std::filesystem::path& local_base,
                                           DriverTimeouts timeouts = {});

// Inserts the engine's no-network mode key into each compose service.
// Pure text transform, unit-testable without an engine.
std::string rewrite_compose_isolation(const std::string& compose_text);

// Outbound probe script: exits nonzero when the network is unreachable.
std::string network_probe_script();

}  // namespace termforge
