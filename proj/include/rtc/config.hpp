#pragma once

#include <cstdlib>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <string>

#include "rtc/client.hpp"
#include "rtc/core.hpp"
#include "rtc/gateway.hpp"
#include "rtc/mock.hpp"

namespace rtc {

/// Everything the CLI and gateway need, resolved from built-in defaults, then
/// the config file, then command-line flags (later layers win).
struct Settings {
    // backend
    std::string backend = "echo";  // echo | cassette | transform | corrupt | http
    std::string cassette;
    double corrupt_rate = 1.0;
    std::uint64_t seed = 0;
    std::string base_url;
    std::string api_key_env = "OPENAI_API_KEY";
    std::string model;
    int timeout_ms = 30000;
    int max_retries = 2;
    // judge backend (llm scorer); defaults to the generating backend
    std::string judge_base_url;
    std::string judge_model;
    std::string judge_api_key_env;
    // rtc policy
    std::optional<double> threshold;       // unset -> preset default
    std::string preset = "patchflow";      // patchflow (0.8) | freeform (0.95)
    Scorer scorer = Scorer::llm;
    bool consistency_prompt = false;
    int parallelism = 1;
    // gateway
    std::string listen_host = "127.0.0.1";
    int listen_port = 8088;
    bool diagnostics_headers = true;
    // diagnostics
    std::string capture_requests;  // JSONL file receiving every outgoing request

    double effective_threshold() const {
        if (threshold) return *threshold;
        return preset == "freeform" ? 0.95 : 0.8;
    }

    RtcConfig rtc_config() const {
        RtcConfig cfg;
        cfg.threshold = effective_threshold();
        cfg.scorer = scorer;
        cfg.inject_consistency_prompt = consistency_prompt;
        return cfg;
    }

    GatewayConfig gateway_config() const {
        GatewayConfig cfg;
        cfg.host = listen_host;
        cfg.port = listen_port;
        cfg.rtc = rtc_config();
        cfg.diagnostics_headers = diagnostics_headers;
        return cfg;
    }
};

namespace detail {

inline std::string trim_copy(const std::string& s) {
    auto begin = s.find_first_not_of(" \t\r\n");
    if (begin == std::string::npos) return "";
    auto end = s.find_last_not_of(" \t\r\n");
    return s.substr(begin, end - begin + 1);
}

inline bool parse_bool(const std::string& value, const std::string& key) {
    if (value == "true" || value == "1" || value == "yes" || value == "on") return true;
    if (value == "false" || value == "0" || value == "no" || value == "off") return false;
    throw ConfigError(key + ": expected a boolean, got \"" + value + "\"");
}

}  // namespace detail

/// Parses the `key = value` config format: one pair per line, '#' starts a
/// comment, blank lines ignored.
inline std::map<std::string, std::string> parse_config_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config " + path);
    std::map<std::string, std::string> pairs;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        std::string trimmed = detail::trim_copy(line);
        if (trimmed.empty()) continue;
        auto eq = trimmed.find('=');
        if (eq == std::string::npos)
            throw ParseError("expected key = value", line_no);
        std::string key = detail::trim_copy(trimmed.substr(0, eq));
        std::string value = detail::trim_copy(trimmed.substr(eq + 1));
        if (key.empty()) throw ParseError("empty key", line_no);
        pairs[key] = value;
    }
    return pairs;
}

/// Applies config-file pairs on top of `settings`. Unknown keys are an error.
inline void apply_config(Settings& settings,
                         const std::map<std::string, std::string>& pairs) {
    for (const auto& [key, value] : pairs) {
        try {
            if (key == "backend") settings.backend = value;
            else if (key == "cassette") settings.cassette = value;
            else if (key == "corrupt_rate") settings.corrupt_rate = std::stod(value);
            else if (key == "seed") settings.seed = std::stoull(value);
            else if (key == "base_url") settings.base_url = value;
            else if (key == "api_key_env") settings.api_key_env = value;
            else if (key == "model") settings.model = value;
            else if (key == "timeout_ms") settings.timeout_ms = std::stoi(value);
            else if (key == "max_retries") settings.max_retries = std::stoi(value);
            else if (key == "judge_base_url") settings.judge_base_url = value;
            else if (key == "judge_model") settings.judge_model = value;
            else if (key == "judge_api_key_env") settings.judge_api_key_env = value;
            else if (key == "threshold") settings.threshold = std::stod(value);
            else if (key == "preset") settings.preset = value;
            else if (key == "scorer") settings.scorer = scorer_from_string(value);
            else if (key == "consistency_prompt")
                settings.consistency_prompt = detail::parse_bool(value, key);
            else if (key == "parallelism") settings.parallelism = std::stoi(value);
            else if (key == "listen_host") settings.listen_host = value;
            else if (key == "listen_port") settings.listen_port = std::stoi(value);
            else if (key == "diagnostics_headers")
                settings.diagnostics_headers = detail::parse_bool(value, key);
            else if (key == "capture_requests") settings.capture_requests = value;
            else throw ConfigError("unknown config key \"" + key + "\"");
        } catch (const std::invalid_argument&) {
            throw ConfigError(key + ": cannot parse \"" + value + "\"");
        } catch (const std::out_of_range&) {
            throw ConfigError(key + ": value out of range \"" + value + "\"");
        }
    }
    if (settings.preset != "patchflow" && settings.preset != "freeform")
        throw ConfigError("preset must be patchflow or freeform, got \"" + settings.preset +
                          "\"");
}

inline Settings load_settings(const std::string& config_path) {
    Settings settings;
    apply_config(settings, parse_config_file(config_path));
    return settings;
}

/// Owns a configured backend chain: the client itself plus the optional
/// capture decorator and its request log.
struct Backend {
    std::unique_ptr<ChatClient> base;
    std::shared_ptr<RequestLog> log;       // set when capturing
    std::unique_ptr<ChatClient> capture;   // wraps base when capturing
    std::unique_ptr<ChatClient> judge;     // set when a distinct judge is configured

    const ChatClient& client() const { return capture ? *capture : *base; }
    const ChatClient* judge_client() const { return judge ? judge.get() : nullptr; }
};

inline std::unique_ptr<ChatClient> make_base_client(const Settings& settings) {
    if (settings.backend == "echo")
        return make_mock_client(MockBehavior::Kind::echo);
    if (settings.backend == "transform")
        return make_mock_client(MockBehavior::Kind::transform);
    if (settings.backend == "cassette") {
        if (settings.cassette.empty())
            throw ConfigError("backend=cassette requires the cassette key");
        MockBehavior behavior{MockBehavior::Kind::cassette};
        behavior.cassette_path = settings.cassette;
        return make_mock_client(std::move(behavior));
    }
    if (settings.backend == "corrupt") {
        MockBehavior behavior{MockBehavior::Kind::corrupt};
        behavior.corrupt_rate = settings.corrupt_rate;
        behavior.seed = settings.seed;
        return make_mock_client(std::move(behavior));
    }
    if (settings.backend == "http") {
        if (settings.base_url.empty()) throw ConfigError("backend=http requires base_url");
        ModelEndpoint endpoint;
        endpoint.base_url = settings.base_url;
        if (const char* key = std::getenv(settings.api_key_env.c_str()))
            endpoint.api_key = key;
        endpoint.model = settings.model;
        endpoint.timeout = std::chrono::milliseconds(settings.timeout_ms);
        endpoint.max_retries = settings.max_retries;
        return std::make_unique<HttpChatClient>(std::move(endpoint));
    }
    throw ConfigError("unknown backend \"" + settings.backend +
                      "\" (expected echo, cassette, transform, corrupt or http)");
}

inline Backend make_backend(const Settings& settings) {
    Backend backend;
    backend.base = make_base_client(settings);
    if (!settings.capture_requests.empty()) {
        backend.log = std::make_shared<RequestLog>(settings.capture_requests);
        backend.capture = std::make_unique<CapturingClient>(*backend.base, backend.log);
    }
    if (!settings.judge_base_url.empty()) {
        ModelEndpoint endpoint;
        endpoint.base_url = settings.judge_base_url;
        const std::string env = settings.judge_api_key_env.empty() ? settings.api_key_env
                                                                   : settings.judge_api_key_env;
        if (const char* key = std::getenv(env.c_str())) endpoint.api_key = key;
        endpoint.model = settings.judge_model.empty() ? settings.model : settings.judge_model;
        endpoint.timeout = std::chrono::milliseconds(settings.timeout_ms);
        endpoint.max_retries = settings.max_retries;
        backend.judge = std::make_unique<HttpChatClient>(std::move(endpoint));
    }
    return backend;
}

}  // namespace rtc
