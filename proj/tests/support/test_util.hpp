#pragma once

// Shared helpers for the test suites: temp files, fixture paths, spawning the
// CLI, and an independent chat-completions schema check.

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace testutil {

inline std::filesystem::path own_binary_dir() {
    return std::filesystem::read_symlink("/proc/self/exe").parent_path();
}

/// Binary locations come from ctest's environment; direct runs fall back to
/// paths relative to the test binary inside the build tree.
inline std::string locate(const char* env, const std::filesystem::path& fallback) {
    if (const char* value = std::getenv(env)) return value;
    if (std::filesystem::exists(fallback)) return fallback.string();
    throw std::runtime_error(std::string("set ") + env + " or build the full tree (missing " +
                             fallback.string() + ")");
}

inline std::string oracle_stub_path() {
    return locate("RTC_ORACLE_STUB", own_binary_dir() / "rtc_oracle_stub");
}

inline std::string cli_path() {
    return locate("RTC_BIN", own_binary_dir().parent_path() / "tools" / "rtc");
}

inline std::filesystem::path fixtures_dir() {
#ifdef RTC_TESTS_FIXTURES
    return locate("RTC_FIXTURES", RTC_TESTS_FIXTURES);
#else
    return locate("RTC_FIXTURES", {});
#endif
}

/// Unique scratch directory, removed on destruction.
class TempDir {
public:
    TempDir() {
        auto base = std::filesystem::temp_directory_path();
        std::mt19937_64 rng(std::random_device{}());
        path_ = base / ("rtc-test-" + std::to_string(rng()));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }

    std::string write(const std::string& name, const std::string& content) const {
        auto file = path_ / name;
        std::ofstream out(file, std::ios::binary);
        out << content;
        return file.string();
    }

private:
    std::filesystem::path path_;
};

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct CommandResult {
    int exit_code = -1;
    std::string output;  // stdout + stderr interleaved
};

/// Runs a command line through the shell, capturing combined output.
inline CommandResult run_command(const std::string& command_line) {
    CommandResult result;
    FILE* pipe = popen((command_line + " 2>&1").c_str(), "r");
    if (!pipe) throw std::runtime_error("popen failed");
    std::array<char, 4096> buf{};
    std::size_t n;
    while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0)
        result.output.append(buf.data(), n);
    int status = pclose(pipe);
    result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
    return result;
}

/// Independent check that a body is a well-formed chat-completions response:
/// the fields and types a standard client library relies on.
inline bool is_valid_chat_completion(const nlohmann::json& body, std::string* why = nullptr) {
    auto fail = [&](const std::string& reason) {
        if (why) *why = reason;
        return false;
    };
    if (!body.is_object()) return fail("not an object");
    if (!body.contains("id") || !body["id"].is_string()) return fail("id");
    if (body.value("object", "") != "chat.completion") return fail("object");
    if (!body.contains("created") || !body["created"].is_number_integer())
        return fail("created");
    if (!body.contains("model") || !body["model"].is_string()) return fail("model");
    if (!body.contains("choices") || !body["choices"].is_array() || body["choices"].empty())
        return fail("choices");
    for (const auto& choice : body["choices"]) {
        if (!choice.contains("index") || !choice["index"].is_number_integer())
            return fail("choices[].index");
        if (!choice.contains("message") || !choice["message"].is_object())
            return fail("choices[].message");
        if (choice["message"].value("role", "") != "assistant")
            return fail("choices[].message.role");
        if (!choice["message"].contains("content") || !choice["message"]["content"].is_string())
            return fail("choices[].message.content");
        const std::string reason = choice.value("finish_reason", "");
        if (reason != "stop" && reason != "length" && reason != "content_filter" &&
            reason != "tool_calls" && reason != "error")
            return fail("choices[].finish_reason");
    }
    if (!body.contains("usage") || !body["usage"].is_object()) return fail("usage");
    for (const char* key : {"prompt_tokens", "completion_tokens", "total_tokens"}) {
        if (!body["usage"].contains(key) || !body["usage"][key].is_number_integer() ||
            body["usage"][key].get<long long>() < 0)
            return fail(std::string("usage.") + key);
    }
    return true;
}

}  // namespace testutil
