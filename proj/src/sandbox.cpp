#include "termforge/sandbox.hpp"

#include <sstream>

#include "termforge/errors.hpp"
#include "termforge/util.hpp"

namespace termforge {

const std::vector<std::string>& default_snapshot_exclusions() {
    static const std::vector<std::string> ex = {"/proc", "/sys", "/dev", "/tmp", "/var/cache"};
    return ex;
}

FsDelta diff(const FsSnapshot& before, const FsSnapshot& after) {
    if (before.roots != after.roots || before.exclusions != after.exclusions)
        throw RootMismatch();
    FsDelta delta;
    for (const auto& [path, entry] : after.entries) {
        auto it = before.entries.find(path);
        if (it == before.entries.end()) {
            delta.added.insert(path);
        } else if (!(it->second.digest == entry.digest && it->second.mode == entry.mode)) {
            delta.modified.emplace_back(path, it->second.digest, entry.digest);
        }
    }
    for (const auto& [path, entry] : before.entries)
        if (!after.entries.count(path)) delta.removed.insert(path);
    return delta;
}

std::string rewrite_compose_isolation(const std::string& compose_text) {
    auto lines = split_lines(compose_text);
    std::ostringstream out;
    bool in_services = false;
    size_t service_indent = std::string::npos;
    for (size_t i = 0; i < lines.size(); ++i) {
        const std::string& line = lines[i];
        out << line << "\n";
        std::string t = trim(line);
        size_t indent = line.find_first_not_of(' ');
        if (indent == std::string::npos) indent = 0;

        if (t == "services:") {
            in_services = true;
            service_indent = std::string::npos;
            continue;
        }
        if (in_services && !t.empty() && indent == 0 && t.back() == ':' && t != "services:") {
            in_services = false;  // left the services block
            continue;
        }
        if (in_services && !t.empty() && t.back() == ':' && t.find(' ') == std::string::npos) {
            if (service_indent == std::string::npos) service_indent = indent;
            if (indent == service_indent) {
                // Service entry: inject unless the service already sets it.
                bool already = false;
                for (size_t j = i + 1; j < lines.size(); ++j) {
                    std::string jt = trim(lines[j]);
                    size_t jindent = lines[j].find_first_not_of(' ');
                    if (jt.empty()) continue;
                    if (jindent != std::string::npos && jindent <= indent) break;
                    if (jt.starts_with("network_mode:")) {
                        already = true;
                        break;
                    }
                }
                if (!already)
                    out << std::string(indent + 2, ' ') << "network_mode: none\n";
            }
        }
    }
    return out.str();
}

std::string network_probe_script() {
    // Tries a TCP connect to a public resolver with a short timeout.
    return "timeout 3 bash -c 'exec 3<>/dev/tcp/1.1.1.1/53' 2>/dev/null";
}

std::shared_ptr<SandboxDriver> make_driver(const std::string& kind,
                                           const std::filesystem::path& local_base,
                                           DriverTimeouts timeouts) {
    if (kind == "local") return make_local_driver(local_base, timeouts);
    if (kind == "container") return make_docker_driver("/var/run/docker.sock", timeouts);
    throw Error("unknown driver kind: " + kind);
}

}  // namespace termforge
