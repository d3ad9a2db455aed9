#pragma once

#include <chrono>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <fcntl.h>
#include <poll.h>
#include <signal.h>
#include <sys/wait.h>
#include <unistd.h>

#include <nlohmann/json.hpp>

#include "rtc/errors.hpp"

namespace rtc {

/// External command that counts defects in code. The argument template names
/// the files to scan through the {before} and {after} placeholders.
///
/// Two shapes are supported:
///   - dual: the template mentions both placeholders. The command runs once and
///     must print two JSON lines, {"defects": n} for the before file followed by
///     {"defects": m} for the after file.
///   - per-file: the template mentions exactly one placeholder. The command runs
///     twice, bound to the before file and then the after file, printing one
///     {"defects": n} line per run.
struct OracleSpec {
    std::string command;  // executable path + argument template, whitespace separated
    std::chrono::milliseconds timeout{10000};
};

struct OracleResult {
    std::int64_t defects_before = 0;
    std::int64_t defects_after = 0;

    bool operator==(const OracleResult&) const = default;
};

inline void validate(const OracleSpec& spec) {
    if (spec.command.empty()) throw ValidationError("command must be nonempty", "command");
    bool has_before = spec.command.find("{before}") != std::string::npos;
    bool has_after = spec.command.find("{after}") != std::string::npos;
    if (!has_before && !has_after)
        throw ValidationError("command template must reference {before} or {after}", "command");
    if (spec.timeout.count() <= 0)
        throw ValidationError("timeout must be positive", "timeout");
}

namespace detail {

struct ExecResult {
    int exit_code = -1;
    std::string out;
    std::string err;
};

/// fork/exec with stdout+stderr capture and a hard deadline.
inline ExecResult run_process(const std::vector<std::string>& argv,
                              std::chrono::milliseconds timeout) {
    int out_pipe[2], err_pipe[2];
    if (pipe(out_pipe) != 0 || pipe(err_pipe) != 0)
        throw OracleExecError("pipe() failed: " + std::string(std::strerror(errno)));
    pid_t pid = fork();
    if (pid < 0) throw OracleExecError("fork() failed: " + std::string(std::strerror(errno)));
    if (pid == 0) {
        dup2(out_pipe[1], STDOUT_FILENO);
        dup2(err_pipe[1], STDERR_FILENO);
        close(out_pipe[0]);
        close(out_pipe[1]);
        close(err_pipe[0]);
        close(err_pipe[1]);
        std::vector<char*> args;
        args.reserve(argv.size() + 1);
        for (const auto& a : argv) args.push_back(const_cast<char*>(a.c_str()));
        args.push_back(nullptr);
        execvp(args[0], args.data());
        std::perror("execvp");
        _exit(127);
    }
    close(out_pipe[1]);
    close(err_pipe[1]);

    ExecResult result;
    auto deadline = std::chrono::steady_clock::now() + timeout;
    pollfd fds[2] = {{out_pipe[0], POLLIN, 0}, {err_pipe[0], POLLIN, 0}};
    bool open_streams[2] = {true, true};
    char buf[4096];
    while (open_streams[0] || open_streams[1]) {
        auto remaining = std::chrono::duration_cast<std::chrono::milliseconds>(
            deadline - std::chrono::steady_clock::now());
        if (remaining.count() <= 0) {
            kill(pid, SIGKILL);
            waitpid(pid, nullptr, 0);
            close(out_pipe[0]);
            close(err_pipe[0]);
            throw OracleTimeout("oracle exceeded " + std::to_string(timeout.count()) + " ms");
        }
        int rc = poll(fds, 2, static_cast<int>(remaining.count()));
        if (rc < 0 && errno != EINTR) {
            kill(pid, SIGKILL);
            break;
        }
        for (int i = 0; i < 2; ++i) {
            if (!open_streams[i] || !(fds[i].revents & (POLLIN | POLLHUP))) continue;
            ssize_t n = read(fds[i].fd, buf, sizeof buf);
            if (n > 0) {
                (i == 0 ? result.out : result.err).append(buf, static_cast<std::size_t>(n));
            } else {
                open_streams[i] = false;
                fds[i].fd = -1;
            }
        }
    }
    close(out_pipe[0]);
    close(err_pipe[0]);
    int status = 0;
    waitpid(pid, &status, 0);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

inline std::vector<std::string> split_command(const std::string& command) {
    std::vector<std::string> argv;
    std::istringstream in(command);
    std::string token;
    while (in >> token) argv.push_back(token);
    return argv;
}

inline std::string substitute(std::string arg, const std::string& placeholder,
                              const std::string& value) {
    for (auto pos = arg.find(placeholder); pos != std::string::npos;
         pos = arg.find(placeholder, pos + value.size()))
        arg.replace(pos, placeholder.size(), value);
    return arg;
}

/// Parses one {"defects": n} object per non-empty stdout line.
inline std::vector<std::int64_t> parse_defect_lines(const std::string& out) {
    std::vector<std::int64_t> counts;
    std::istringstream in(out);
    std::string line;
    while (std::getline(in, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
        if (j.is_discarded() || !j.is_object() || !j.contains("defects") ||
            !j["defects"].is_number_integer() || j["defects"].get<std::int64_t>() < 0)
            throw OracleProtocolError("oracle stdout is not {\"defects\": n}: " + line);
        counts.push_back(j["defects"].get<std::int64_t>());
    }
    return counts;
}

class TempFile {
public:
    explicit TempFile(const std::string& content) {
        auto tmpl = (std::filesystem::temp_directory_path() / "rtc-oracle-XXXXXX").string();
        std::vector<char> buf(tmpl.begin(), tmpl.end());
        buf.push_back('\0');
        int fd = mkstemp(buf.data());
        if (fd < 0) throw IoError("mkstemp failed: " + std::string(std::strerror(errno)));
        path_ = buf.data();
        ssize_t written = write(fd, content.data(), content.size());
        close(fd);
        if (written != static_cast<ssize_t>(content.size()))
            throw IoError("short write to " + path_);
    }
    ~TempFile() {
        std::error_code ec;
        std::filesystem::remove(path_, ec);
    }
    TempFile(const TempFile&) = delete;
    TempFile& operator=(const TempFile&) = delete;
    const std::string& path() const { return path_; }

private:
    std::string path_;
};

}  // namespace detail

/// Writes both code texts to temp files and runs the oracle command per its
/// template shape. See OracleSpec for the stdout protocol.
inline OracleResult run_oracle(const OracleSpec& spec, const std::string& before_code,
                               const std::string& after_code) {
    validate(spec);
    detail::TempFile before_file(before_code);
    detail::TempFile after_file(after_code);
    std::vector<std::string> argv = detail::split_command(spec.command);

    bool has_before = spec.command.find("{before}") != std::string::npos;
    bool has_after = spec.command.find("{after}") != std::string::npos;

    auto run_once = [&](const std::string& before_path, const std::string& after_path) {
        std::vector<std::string> bound;
        bound.reserve(argv.size());
        for (const auto& arg : argv)
            bound.push_back(detail::substitute(detail::substitute(arg, "{before}", before_path),
                                               "{after}", after_path));
        detail::ExecResult exec = detail::run_process(bound, spec.timeout);
        if (exec.exit_code != 0)
            throw OracleExecError("oracle exited with " + std::to_string(exec.exit_code) +
                                  ": " + exec.err);
        return detail::parse_defect_lines(exec.out);
    };

    if (has_before && has_after) {
        auto counts = run_once(before_file.path(), after_file.path());
        if (counts.size() != 2)
            throw OracleProtocolError("dual-mode oracle must print exactly 2 defect lines, got " +
                                      std::to_string(counts.size()));
        return {counts[0], counts[1]};
    }
    // Per-file: the single placeholder is bound to each file in turn.
    auto scan = [&](const std::string& path) {
        auto counts = run_once(path, path);
        if (counts.size() != 1)
            throw OracleProtocolError("per-file oracle must print exactly 1 defect line, got " +
                                      std::to_string(counts.size()));
        return counts[0];
    };
    return {scan(before_file.path()), scan(after_file.path())};
}

}  // namespace rtc
