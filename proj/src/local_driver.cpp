#include <atomic>
#include <fstream>
#include <mutex>
#include <regex>
#include <sstream>

#include <nlohmann/json.hpp>

#include "termforge/errors.hpp"
#include "termforge/sandbox.hpp"
#include "termforge/util.hpp"

using nlohmann::json;

namespace termforge {

namespace {

// Maps an absolute sandbox path (e.g. /app/result.txt) into the scratch root.
std::filesystem::path map_into(const std::filesystem::path& root, const std::string& abs_path) {
    std::string rel = abs_path;
    while (!rel.empty() && rel.front() == '/') rel.erase(rel.begin());
    return rel.empty() ? root : root / rel;
}

// Replaces sandbox-root prefixes in script text with their scratch locations.
// Only whole path components are rewritten: the character after the prefix
// must be a separator, quote, whitespace, or end of text.
std::string remap_script(const std::string& script, const std::vector<std::string>& roots,
                         const std::filesystem::path& container_root) {
    std::string out = script;
    for (const auto& r : roots) {
        if (r.empty() || r == "/") continue;
        std::string replacement = map_into(container_root, r).string();
        std::string result;
        size_t pos = 0;
        while (true) {
            size_t hit = out.find(r, pos);
            if (hit == std::string::npos) {
                result += out.substr(pos);
                break;
            }
            result += out.substr(pos, hit - pos);
            char next = hit + r.size() < out.size() ? out[hit + r.size()] : '\0';
            bool boundary = next == '\0' || next == '/' || next == ' ' || next == '\t' ||
                            next == '\n' || next == '\'' || next == '"' || next == ';' ||
                            next == ')' || next == '|' || next == '&';
            result += boundary ? replacement : out.substr(hit, r.size());
            pos = hit + r.size();
        }
        out = std::move(result);
    }
    return out;
}

struct ImageMeta {
    std::string workdir = "/app";
    std::map<std::string, std::string> env;
    std::vector<std::string> roots;  // sandbox roots remapped into scratch
};

void write_meta(const std::filesystem::path& dir, const ImageMeta& meta) {
    json j{{"workdir", meta.workdir}, {"env", meta.env}, {"roots", meta.roots}};
    atomic_write_file(dir / "meta.json", j.dump(2));
}

ImageMeta read_meta(const std::filesystem::path& dir) {
    json j = json::parse(read_file(dir / "meta.json"));
    ImageMeta meta;
    meta.workdir = j.value("workdir", "/app");
    const json env = j.value("env", json::object());
    for (const auto& [k, v] : env.items()) meta.env[k] = v;
    for (auto& r : j.value("roots", json::array())) meta.roots.push_back(r.get<std::string>());
    return meta;
}

void copy_tree(const std::filesystem::path& from, const std::filesystem::path& to) {
    std::filesystem::create_directories(to);
    std::filesystem::copy(from, to,
                          std::filesystem::copy_options::recursive |
                              std::filesystem::copy_options::copy_symlinks |
                              std::filesystem::copy_options::overwrite_existing);
}

bool is_install_fragment(const std::vector<std::string>& tokens) {
    static const std::vector<std::string> managers = {"apt-get", "apt", "apk", "yum",
                                                      "dnf",     "pip", "pip3", "npm"};
    if (tokens.empty()) return false;
    for (const auto& m : managers)
        if (tokens[0] == m)
            for (const auto& t : tokens)
                if (t == "install" || t == "add") return true;
    return false;
}

class LocalDriver final : public SandboxDriver {
  public:
    LocalDriver(std::filesystem::path base, DriverTimeouts timeouts)
        : base_(std::move(base)), timeouts_(timeouts) {
        std::filesystem::create_directories(base_ / "images");
        std::filesystem::create_directories(base_ / "containers");
    }

    std::string name() const override { return "local"; }
    bool available() const override { return true; }
    bool supports_isolation() const override { return false; }

    ImageRef build_image(const EnvironmentSpec& spec) override {
        if (trim(spec.dockerfile_text).empty()) throw BuildError("empty Dockerfile");
        std::string id = "img-" + next_id();
        auto dir = base_ / "images" / id;
        auto root = dir / "root";
        std::filesystem::create_directories(root);

        ImageMeta meta;
        meta.workdir = spec.workdir;
        std::set<std::string> roots{spec.workdir, "/app"};
        std::ostringstream log;

        try {
            for (const auto& raw : split_lines(spec.dockerfile_text)) {
                std::string line = trim(raw);
                if (line.empty() || line[0] == '#') continue;
                auto space = line.find_first_of(" \t");
                std::string verb = space == std::string::npos ? line : line.substr(0, space);
                std::string rest = space == std::string::npos ? "" : trim(line.substr(space));
                log << "step: " << line << "\n";

                if (verb == "FROM" || verb == "CMD" || verb == "ENTRYPOINT" || verb == "EXPOSE" ||
                    verb == "ARG" || verb == "LABEL" || verb == "USER" || verb == "VOLUME") {
                    continue;
                } else if (verb == "WORKDIR") {
                    meta.workdir = rest;
                    roots.insert(rest);
                    std::filesystem::create_directories(map_into(root, rest));
                } else if (verb == "ENV") {
                    auto eq = rest.find('=');
                    if (eq != std::string::npos)
                        meta.env[trim(rest.substr(0, eq))] = trim(rest.substr(eq + 1));
                    else {
                        auto sp = rest.find(' ');
                        if (sp != std::string::npos)
                            meta.env[trim(rest.substr(0, sp))] = trim(rest.substr(sp + 1));
                    }
                } else if (verb == "RUN") {
                    run_build_step(rest, root, meta, roots, log);
                } else if (verb == "COPY" || verb == "ADD") {
                    throw BuildError(log.str() + "error: " + verb +
                                     " is not supported by the local driver\n");
                } else {
                    log << "warning: ignoring unknown instruction " << verb << "\n";
                }
            }
        } catch (const BuildError&) {
            std::filesystem::remove_all(dir);
            throw;
        }

        std::filesystem::create_directories(map_into(root, meta.workdir));
        meta.roots.assign(roots.begin(), roots.end());
        write_meta(dir, meta);
        return {id};
    }

    ContainerHandle launch(const ImageRef& image, const IsolationPolicy& isolation) override {
        auto image_dir = base_ / "images" / image.id;
        if (!std::filesystem::exists(image_dir / "meta.json"))
            throw DriverUnavailable("unknown image: " + image.id);
        std::string id = "ctr-" + next_id();
        auto dir = base_ / "containers" / id;
        copy_tree(image_dir / "root", dir / "root");
        ImageMeta meta = read_meta(image_dir);
        json j{{"workdir", meta.workdir},
               {"env", meta.env},
               {"roots", meta.roots},
               {"network_none", isolation.network_none}};
        atomic_write_file(dir / "meta.json", j.dump(2));
        return {id};
    }

    ExecResult exec(const ContainerHandle& handle, const std::string& script,
                    double timeout_s) override {
        auto dir = base_ / "containers" / handle.id;
        if (!std::filesystem::exists(dir / "meta.json"))
            throw DriverUnavailable("container not running: " + handle.id);
        ImageMeta meta = read_meta(dir);
        auto root = dir / "root";
        std::string remapped = remap_script(script, meta.roots, root);
        auto cwd = map_into(root, meta.workdir);
        std::filesystem::create_directories(cwd);
        auto env = meta.env;
        env["TERMFORGE_SANDBOX"] = "local";
        ProcessResult r = run_bash(remapped, cwd, env, timeout_s > 0 ? timeout_s : timeouts_.exec_s);
        return {r.exit_code, r.out, r.err, r.duration_s, r.timed_out};
    }

    FsSnapshot snapshot(const ContainerHandle& handle,
                        const std::vector<std::string>& roots) override {
        auto dir = base_ / "containers" / handle.id;
        if (!std::filesystem::exists(dir / "meta.json"))
            throw DriverUnavailable("container not running: " + handle.id);
        auto container_root = dir / "root";

        FsSnapshot snap;
        snap.roots = roots;
        snap.exclusions = default_snapshot_exclusions();
        for (const auto& r : roots) {
            auto mapped = map_into(container_root, r);
            if (!std::filesystem::exists(mapped)) continue;
            record_entry(snap, r, mapped);
            if (std::filesystem::is_directory(mapped)) {
                for (auto it = std::filesystem::recursive_directory_iterator(
                         mapped, std::filesystem::directory_options::skip_permission_denied);
                     it != std::filesystem::recursive_directory_iterator(); ++it) {
                    std::string rel = std::filesystem::relative(it->path(), mapped).string();
                    std::string logical = (r == "/" ? "" : r) + "/" + rel;
                    bool excluded = false;
                    for (const auto& ex : snap.exclusions)
                        if (logical == ex || logical.starts_with(ex + "/")) excluded = true;
                    if (excluded) {
                        it.disable_recursion_pending();
                        continue;
                    }
                    record_entry(snap, logical, it->path());
                }
            }
        }
        return snap;
    }

    void teardown(const ContainerHandle& handle) override {
        if (handle.id.empty()) return;
        std::error_code ec;
        std::filesystem::remove_all(base_ / "containers" / handle.id, ec);
    }

    int live_containers() const override {
        int n = 0;
        std::error_code ec;
        for (auto& e : std::filesystem::directory_iterator(base_ / "containers", ec)) {
            (void)e;
            ++n;
        }
        return n;
    }

  private:
    std::string next_id() {
        static std::atomic<uint64_t> counter{0};
        return std::to_string(::getpid()) + "-" + std::to_string(counter++);
    }

    void run_build_step(const std::string& command, const std::filesystem::path& root,
                        ImageMeta& meta, std::set<std::string>& roots, std::ostringstream& log) {
        for (const auto& fragment : split_compound_command(command)) {
            auto tokens = shell_tokens(fragment);
            if (is_install_fragment(tokens)) {
                // No image semantics locally: an install becomes a host
                // availability check for each requested package.
                bool past_install = false;
                for (const auto& t : tokens) {
                    if (t == "install" || t == "add") {
                        past_install = true;
                        continue;
                    }
                    if (!past_install || t.empty() || t[0] == '-' || t == "update") continue;
                    ProcessResult check =
                        run_bash("command -v '" + t + "' >/dev/null", root, {}, 10.0);
                    if (check.exit_code != 0) {
                        log << "error: package not found: " << t << "\n";
                        throw BuildError(log.str());
                    }
                    log << "ok: " << t << " available on host\n";
                }
                continue;
            }
            if (tokens.size() >= 1 && (tokens[0] == "apt-get" || tokens[0] == "apt") &&
                tokens.size() >= 2 && tokens[1] == "update")
                continue;  // no-op locally
            std::vector<std::string> rts(roots.begin(), roots.end());
            std::string remapped = remap_script(fragment, rts, root);
            ProcessResult r = run_bash(remapped, map_into(root, meta.workdir), meta.env, 60.0);
            log << r.out << r.err;
            if (r.exit_code != 0) {
                log << "error: build step failed (exit " << r.exit_code << "): " << fragment
                    << "\n";
                throw BuildError(log.str());
            }
        }
    }

    static void record_entry(FsSnapshot& snap, const std::string& logical,
                             const std::filesystem::path& real) {
        FsEntry entry;
        std::error_code ec;
        auto status = std::filesystem::symlink_status(real, ec);
        if (ec) return;
        entry.mode = static_cast<unsigned>(status.permissions()) & 0777u;
        if (std::filesystem::is_symlink(status)) {
            entry.kind = FsEntry::Kind::Symlink;
            entry.digest = sha256_hex(std::filesystem::read_symlink(real, ec).string());
        } else if (std::filesystem::is_directory(status)) {
            entry.kind = FsEntry::Kind::Dir;
            entry.digest = "";
        } else {
            entry.kind = FsEntry::Kind::File;
            entry.size = std::filesystem::file_size(real, ec);
            try {
                entry.digest = sha256_hex(read_file(real));
            } catch (...) {
                entry.digest = "!unreadable";
            }
        }
        std::string key = logical;
        while (key.size() > 1 && key.back() == '/') key.pop_back();
        snap.entries[key] = entry;
    }

    std::filesystem::path base_;
    DriverTimeouts timeouts_;
};

}  // namespace

std::shared_ptr<SandboxDriver> make_local_driver(const std::filesystem::path& base_dir,
                                                 DriverTimeouts timeouts) {
    return std::make_shared<LocalDriver>(base_dir, timeouts);
}

}  // namespace termforge
