#include <atomic>
#include <cstring>
#include <sstream>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "termforge/errors.hpp"
#include "termforge/sandbox.hpp"
#include "termforge/util.hpp"

using nlohmann::json;

namespace termforge {

namespace {

// Minimal ustar archive: enough for a build context of small text files.
class TarBuilder {
  public:
    void add_file(const std::string& name, const std::string& content) {
        char header[512];
        std::memset(header, 0, sizeof(header));
        std::snprintf(header, 100, "%s", name.c_str());
        std::snprintf(header + 100, 8, "%07o", 0644);
        std::snprintf(header + 108, 8, "%07o", 0);
        std::snprintf(header + 116, 8, "%07o", 0);
        std::snprintf(header + 124, 12, "%011lo", static_cast<unsigned long>(content.size()));
        std::snprintf(header + 136, 12, "%011o", 0);
        header[156] = '0';
        std::memcpy(header + 257, "ustar", 5);
        header[263] = '0';
        header[264] = '0';
        std::memset(header + 148, ' ', 8);
        unsigned sum = 0;
        for (unsigned char c : header) sum += c;
        std::snprintf(header + 148, 7, "%06o", sum);
        header[155] = ' ';
        data_.append(header, 512);
        data_ += content;
        size_t pad = (512 - content.size() % 512) % 512;
        data_.append(pad, '\0');
    }

    std::string finish() {
        data_.append(1024, '\0');
        return data_;
    }

  private:
    std::string data_;
};

// Demultiplexes the engine's stdcopy stream: 8-byte frame headers
// [type, 0, 0, 0, len_be32] followed by payload.
void demux_stream(const std::string& raw, std::string& out, std::string& err) {
    size_t pos = 0;
    while (pos + 8 <= raw.size()) {
        unsigned char type = static_cast<unsigned char>(raw[pos]);
        uint32_t len = (static_cast<unsigned char>(raw[pos + 4]) << 24) |
                       (static_cast<unsigned char>(raw[pos + 5]) << 16) |
                       (static_cast<unsigned char>(raw[pos + 6]) << 8) |
                       static_cast<unsigned char>(raw[pos + 7]);
        pos += 8;
        size_t take = std::min<size_t>(len, raw.size() - pos);
        if (type == 2) err.append(raw, pos, take);
        else out.append(raw, pos, take);
        pos += take;
    }
}

class DockerDriver final : public SandboxDriver {
  public:
    DockerDriver(std::string socket_path, DriverTimeouts timeouts)
        : socket_(std::move(socket_path)), timeouts_(timeouts) {}

    std::string name() const override { return "container"; }
    bool supports_isolation() const override { return true; }

    bool available() const override {
        if (!std::filesystem::exists(socket_)) return false;
        auto cli = client();
        auto res = cli->Get("/_ping");
        return res && res->status == 200;
    }

    ImageRef build_image(const EnvironmentSpec& spec) override {
        require_available();
        TarBuilder tar;
        tar.add_file("Dockerfile", spec.dockerfile_text);
        if (!spec.compose_text.empty()) tar.add_file("docker-compose.yaml", spec.compose_text);
        std::string tag = "termforge-build-" + next_id();

        std::string query = "/build?t=" + tag;
        for (const auto& [k, v] : spec.build_args)
            query += "&buildargs=" + httplib::detail::encode_url(json{{k, v}}.dump());

        auto cli = client();
        cli->set_read_timeout(static_cast<time_t>(timeouts_.exec_s), 0);
        auto res = cli->Post(query, tar.finish(), "application/x-tar");
        if (!res) throw DriverUnavailable("engine did not answer /build");

        // Stream of JSON lines; an "error" entry anywhere means failure.
        std::ostringstream log;
        bool failed = false;
        for (const auto& line : split_lines(res->body)) {
            if (trim(line).empty()) continue;
            try {
                json j = json::parse(line);
                if (j.contains("stream")) log << j["stream"].get<std::string>();
                if (j.contains("error")) {
                    log << j["error"].get<std::string>() << "\n";
                    failed = true;
                }
            } catch (const json::exception&) {
                log << line << "\n";
            }
        }
        if (failed || res->status != 200) throw BuildError(log.str());
        return {tag};
    }

    ContainerHandle launch(const ImageRef& image, const IsolationPolicy& isolation) override {
        require_available();
        json body{{"Image", image.id},
                  {"Cmd", json::array({"sleep", "infinity"})},
                  {"Labels", {{"termforge", "1"}}},
                  {"HostConfig",
                   {{"NetworkMode", isolation.network_none ? "none" : "bridge"},
                    {"AutoRemove", false}}}};
        auto cli = client();
        cli->set_read_timeout(static_cast<time_t>(timeouts_.startup_s), 0);
        auto res = cli->Post("/containers/create", body.dump(), "application/json");
        if (!res) throw StartupTimeout();
        if (res->status != 201)
            throw DriverUnavailable("container create failed: " + res->body);
        std::string id = json::parse(res->body).at("Id").get<std::string>();
        auto start = cli->Post("/containers/" + id + "/start", "", "text/plain");
        if (!start || (start->status != 204 && start->status != 304)) {
            teardown({id});
            throw StartupTimeout();
        }
        live_++;
        return {id};
    }

    ExecResult exec(const ContainerHandle& handle, const std::string& script,
                    double timeout_s) override {
        require_available();
        json body{{"AttachStdout", true},
                  {"AttachStderr", true},
                  {"Cmd", json::array({"/bin/sh", "-c", script})}};
        auto cli = client();
        double limit = timeout_s > 0 ? timeout_s : timeouts_.exec_s;
        cli->set_read_timeout(static_cast<time_t>(limit) + 5, 0);
        auto create = cli->Post("/containers/" + handle.id + "/exec", body.dump(),
                                "application/json");
        if (!create || create->status != 201)
            throw DriverUnavailable("exec create failed for " + handle.id);
        std::string exec_id = json::parse(create->body).at("Id").get<std::string>();

        auto started = std::chrono::steady_clock::now();
        auto res = cli->Post("/exec/" + exec_id + "/start",
                             json{{"Detach", false}, {"Tty", false}}.dump(), "application/json");
        ExecResult result;
        result.duration_s =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
        if (!res) {
            result.timed_out = true;
            return result;
        }
        demux_stream(res->body, result.stdout_text, result.stderr_text);

        auto inspect = cli->Get("/exec/" + exec_id + "/json");
        if (inspect && inspect->status == 200)
            result.exit_code = json::parse(inspect->body).value("ExitCode", -1);
        return result;
    }

    FsSnapshot snapshot(const ContainerHandle& handle,
                        const std::vector<std::string>& roots) override {
        FsSnapshot snap;
        snap.roots = roots;
        snap.exclusions = default_snapshot_exclusions();

        std::ostringstream prune;
        for (const auto& ex : snap.exclusions) prune << " -path '" << ex << "' -prune -o";
        for (const auto& r : roots) {
            std::ostringstream script;
            script << "[ -e '" << r << "' ] || exit 0; find '" << r << "'" << prune.str()
                   << " -print 2>/dev/null | while IFS= read -r p; do "
                      "if [ -L \"$p\" ]; then printf 'L|%s|%s\\n' \"$p\" \"$(readlink \"$p\")\"; "
                      "elif [ -d \"$p\" ]; then printf 'D|%s|\\n' \"$p\"; "
                      "else printf 'F|%s|%s|%s\\n' \"$p\" "
                      "\"$(sha256sum \"$p\" 2>/dev/null | cut -d' ' -f1 || echo '!unreadable')\" "
                      "\"$(wc -c < \"$p\" 2>/dev/null || echo 0)\"; fi; done";
            ExecResult r_exec = exec(handle, script.str(), timeouts_.exec_s);
            for (const auto& line : split_lines(r_exec.stdout_text)) {
                auto parts = split_on_pipe(line);
                if (parts.size() < 2) continue;
                FsEntry entry;
                if (parts[0] == "L") {
                    entry.kind = FsEntry::Kind::Symlink;
                    entry.digest = sha256_hex(parts.size() > 2 ? parts[2] : "");
                } else if (parts[0] == "D") {
                    entry.kind = FsEntry::Kind::Dir;
                } else {
                    entry.kind = FsEntry::Kind::File;
                    entry.digest = parts.size() > 2 ? parts[2] : "!unreadable";
                    if (entry.digest.empty()) entry.digest = "!unreadable";
                    if (parts.size() > 3) entry.size = std::stoull(parts[3]);
                }
                snap.entries[parts[1]] = entry;
            }
        }
        return snap;
    }

    void teardown(const ContainerHandle& handle) override {
        if (handle.id.empty()) return;
        auto cli = client();
        auto res = cli->Delete("/containers/" + handle.id + "?force=true&v=true");
        if (res && (res->status == 204 || res->status == 200)) {
            int expected = live_.load();
            while (expected > 0 && !live_.compare_exchange_weak(expected, expected - 1)) {}
        }
    }

    int live_containers() const override { return live_.load(); }

  private:
    void require_available() const {
        if (!std::filesystem::exists(socket_))
            throw DriverUnavailable("no engine socket at " + socket_);
    }

    std::unique_ptr<httplib::Client> client() const {
        auto cli = std::make_unique<httplib::Client>(socket_);
        cli->set_address_family(AF_UNIX);
        cli->set_default_headers({{"Host", "localhost"}});
        cli->set_connection_timeout(5, 0);
        return cli;
    }

    static std::vector<std::string> split_on_pipe(const std::string& line) {
        std::vector<std::string> parts;
        size_t pos = 0;
        while (true) {
            size_t bar = line.find('|', pos);
            if (bar == std::string::npos) {
                parts.push_back(line.substr(pos));
                break;
            }
            parts.push_back(line.substr(pos, bar - pos));
            pos = bar + 1;
        }
        return parts;
    }

    std::string next_id() {
        static std::atomic<uint64_t> counter{0};
        return std::to_string(::getpid()) + "-" + std::to_string(counter++);
    }

    std::string socket_;
    DriverTimeouts timeouts_;
    std::atomic<int> live_{0};
};

}  // namespace

std::shared_ptr<SandboxDriver> make_docker_driver(const std::string& socket_path,
                                                  DriverTimeouts timeouts) {
    return std::make_shared<DockerDriver>(socket_path, timeouts);
}

}  // namespace termforge
