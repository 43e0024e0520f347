#include "termforge/util.hpp"

#include <fcntl.h>
#include <openssl/evp.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <array>
#include <atomic>
#include <cctype>
#include <chrono>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>

namespace termforge {

std::string sha256_hex(std::string_view data) {
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xf]);
    }
    return out;
}

std::string trim(std::string_view s) {
    size_t b = 0, e = s.size();
    while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
    while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
    return std::string(s.substr(b, e - b));
}

std::vector<std::string> split_lines(std::string_view text) {
    std::vector<std::string> lines;
    size_t pos = 0;
    while (pos <= text.size()) {
        size_t nl = text.find('\n', pos);
        if (nl == std::string_view::npos) {
            if (pos < text.size()) lines.emplace_back(text.substr(pos));
            break;
        }
        auto line = text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        lines.emplace_back(line);
        pos = nl + 1;
    }
    return lines;
}

bool contains(std::string_view haystack, std::string_view needle) {
    return haystack.find(needle) != std::string_view::npos;
}

std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw std::runtime_error("cannot read file: " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void atomic_write_file(const std::filesystem::path& p, std::string_view content) {
    std::filesystem::create_directories(p.parent_path());
    static std::atomic<uint64_t> counter{0};
    auto tmp = p;
    tmp += ".tmp." + std::to_string(::getpid()) + "." + std::to_string(counter++);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("cannot write file: " + tmp.string());
        out.write(content.data(), static_cast<std::streamsize>(content.size()));
    }
    std::filesystem::rename(tmp, p);
}

namespace {

struct QuoteState {
    bool single = false;
    bool dquote = false;
    bool escaped = false;

    void feed(char c) {
        if (escaped) {
            escaped = false;
            return;
        }
        if (c == '\\' && !single) {
            escaped = true;
            return;
        }
        if (c == '\'' && !dquote) single = !single;
        else if (c == '"' && !single) dquote = !dquote;
    }
    bool quoted() const { return single || dquote; }
};

}  // namespace

std::vector<std::string> split_compound_command(std::string_view line) {
    std::vector<std::string> parts;
    std::string cur;
    QuoteState q;
    int depth = 0;  // parens / subshell
    for (size_t i = 0; i < line.size(); ++i) {
        char c = line[i];
        bool was_quoted = q.quoted() || q.escaped;
        q.feed(c);
        if (!was_quoted) {
            if (c == '(') ++depth;
            if (c == ')' && depth > 0) --depth;
            if (depth == 0) {
                if (c == ';' || c == '\n') {
                    if (!trim(cur).empty()) parts.push_back(trim(cur));
                    cur.clear();
                    continue;
                }
                if ((c == '&' || c == '|') && i + 1 < line.size() && line[i + 1] == c) {
                    if (!trim(cur).empty()) parts.push_back(trim(cur));
                    cur.clear();
                    ++i;
                    continue;
                }
                if (c == '|') {
                    if (!trim(cur).empty()) parts.push_back(trim(cur));
                    cur.clear();
                    continue;
                }
                if (c == '&') {
                    // ">&" is a redirection, not a terminator.
                    if (!cur.empty() && cur.back() == '>') {
                        cur.push_back(c);
                        continue;
                    }
                    // background terminator
                    if (!trim(cur).empty()) parts.push_back(trim(cur));
                    cur.clear();
                    continue;
                }
            }
        }
        cur.push_back(c);
    }
    if (!trim(cur).empty()) parts.push_back(trim(cur));
    return parts;
}

std::vector<std::string> shell_tokens(std::string_view command) {
    std::vector<std::string> tokens;
    std::string cur;
    bool in_token = false;
    QuoteState q;
    for (char c : command) {
        bool was_quoted = q.quoted() || q.escaped;
        q.feed(c);
        if (!was_quoted && !q.quoted() && !q.escaped &&
            std::isspace(static_cast<unsigned char>(c))) {
            if (in_token) {
                tokens.push_back(cur);
                cur.clear();
                in_token = false;
            }
            continue;
        }
        if (c == '\'' || c == '"') {
            in_token = true;  // quotes open/close a token without adding chars
            continue;
        }
        if (c == '\\' && q.escaped) continue;
        cur.push_back(c);
        in_token = true;
    }
    if (in_token) tokens.push_back(cur);
    return tokens;
}

std::string leading_command_token(std::string_view command) {
    static const std::vector<std::string> wrappers = {"sudo",    "env",  "time",
                                                      "nohup",   "nice", "command",
                                                      "exec",    "builtin"};
    auto tokens = shell_tokens(command);
    for (const auto& tok : tokens) {
        if (tok.find('=') != std::string::npos &&
            tok.find('=') > 0 && tok[0] != '-' && tok.find('/') == std::string::npos) {
            // VAR=value assignment prefix
            bool looks_assignment = true;
            for (size_t i = 0; i < tok.find('='); ++i) {
                char c = tok[i];
                if (!std::isalnum(static_cast<unsigned char>(c)) && c != '_') {
                    looks_assignment = false;
                    break;
                }
            }
            if (looks_assignment) continue;
        }
        if (tok[0] == '-') continue;  // stray flag (e.g. after env)
        bool is_wrapper = false;
        for (const auto& w : wrappers)
            if (tok == w) {
                is_wrapper = true;
                break;
            }
        if (is_wrapper) continue;
        auto slash = tok.rfind('/');
        return slash == std::string::npos ? tok : tok.substr(slash + 1);
    }
    return "";
}

bool shell_line_continues(std::string_view buffer) {
    QuoteState q;
    for (char c : buffer) q.feed(c);
    if (q.quoted()) return true;
    // trailing unescaped backslash
    size_t n = buffer.size();
    size_t backslashes = 0;
    while (backslashes < n && buffer[n - 1 - backslashes] == '\\') ++backslashes;
    return backslashes % 2 == 1;
}

ProcessResult run_bash(const std::string& script_text,
                       const std::filesystem::path& cwd,
                       const std::map<std::string, std::string>& extra_env,
                       double timeout_s) {
    int out_pipe[2], err_pipe[2];
    if (pipe(out_pipe) != 0 || pipe(err_pipe) != 0)
        throw std::runtime_error("pipe() failed");

    auto start = std::chrono::steady_clock::now();
    pid_t pid = fork();
    if (pid < 0) throw std::runtime_error("fork() failed");
    if (pid == 0) {
        setpgid(0, 0);
        dup2(out_pipe[1], STDOUT_FILENO);
        dup2(err_pipe[1], STDERR_FILENO);
        close(out_pipe[0]);
        close(out_pipe[1]);
        close(err_pipe[0]);
        close(err_pipe[1]);
        if (!cwd.empty() && chdir(cwd.c_str()) != 0) _exit(127);
        for (const auto& [k, v] : extra_env) setenv(k.c_str(), v.c_str(), 1);
        execl("/bin/bash", "bash", "-c", script_text.c_str(), (char*)nullptr);
        _exit(127);
    }
    close(out_pipe[1]);
    close(err_pipe[1]);

    ProcessResult res;
    std::array<struct pollfd, 2> fds{{{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}}};
    bool out_open = true, err_open = true;
    char buf[4096];
    auto deadline = start + std::chrono::duration<double>(timeout_s);

    while (out_open || err_open) {
        auto now = std::chrono::steady_clock::now();
        if (now >= deadline) {
            res.timed_out = true;
            kill(-pid, SIGKILL);
            break;
        }
        int remaining_ms = static_cast<int>(
            std::chrono::duration_cast<std::chrono::milliseconds>(deadline - now).count());
        fds[0].fd = out_open ? out_pipe[0] : -1;
        fds[1].fd = err_open ? err_pipe[0] : -1;
        int rc = poll(fds.data(), 2, std::max(1, std::min(remaining_ms, 200)));
        if (rc < 0) {
            if (errno == EINTR) continue;
            break;
        }
        if (fds[0].revents & (POLLIN | POLLHUP)) {
            ssize_t n = read(out_pipe[0], buf, sizeof(buf));
            if (n > 0) res.out.append(buf, static_cast<size_t>(n));
            else out_open = false;
        }
        if (fds[1].revents & (POLLIN | POLLHUP)) {
            ssize_t n = read(err_pipe[0], buf, sizeof(buf));
            if (n > 0) res.err.append(buf, static_cast<size_t>(n));
            else err_open = false;
        }
    }
    close(out_pipe[0]);
    close(err_pipe[0]);

    int status = 0;
    // The child may outlive its pipes; keep honoring the deadline.
    while (true) {
        pid_t w = waitpid(pid, &status, res.timed_out ? 0 : WNOHANG);
        if (w == pid || w < 0) break;
        if (std::chrono::steady_clock::now() >= deadline) {
            res.timed_out = true;
            kill(-pid, SIGKILL);
            continue;
        }
        usleep(2000);
    }
    if (res.timed_out) {
        res.exit_code = -1;
    } else if (WIFEXITED(status)) {
        res.exit_code = WEXITSTATUS(status);
    } else if (WIFSIGNALED(status)) {
        res.exit_code = 128 + WTERMSIG(status);
    }
    res.duration_s = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return res;
}

}  // namespace termforge
