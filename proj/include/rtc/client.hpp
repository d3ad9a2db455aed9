#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <fstream>
#include <string>
#include <thread>
#include <vector>

#include <openssl/evp.h>

#include <httplib.h>

#include "rtc/errors.hpp"
#include "rtc/wire.hpp"

namespace rtc {

/// Where a model lives. Immutable after construction.
struct ModelEndpoint {
    std::string base_url;  // scheme://host[:port][/path-prefix], e.g. https://api.openai.com/v1
    std::string api_key;
    std::string model;
    std::chrono::milliseconds timeout{30000};
    int max_retries = 2;
};

inline void validate(const ModelEndpoint& endpoint) {
    if (endpoint.timeout.count() <= 0)
        throw ValidationError("timeout must be positive", "timeout");
    if (endpoint.max_retries < 0)
        throw ValidationError("max_retries must be nonnegative", "max_retries");
}

/// Per-evaluation tally of backend calls. Chat and embedding calls are counted
/// separately; every attempt that actually reached the backend counts once.
struct CallCounter {
    std::atomic<std::int64_t> chat{0};
    std::atomic<std::int64_t> embed{0};
};

/// Abstract chat/embeddings backend. Implementations are immutable after
/// construction and safe to share across concurrent evaluations; per-evaluation
/// state lives in the CallCounter the caller passes in.
class ChatClient {
public:
    virtual ~ChatClient() = default;
    virtual ChatResponse complete(const ChatRequest& request, CallCounter& calls) const = 0;
    virtual std::vector<double> embed(const std::string& text, CallCounter& calls) const = 0;
};

// -- request hashing -----------------------------------------------------------

inline std::string sha256_hex(const std::string& data) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(data.data(), data.size(), digest, &len, EVP_sha256(), nullptr);
    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[digest[i] >> 4]);
        out.push_back(hex[digest[i] & 0xf]);
    }
    return out;
}

/// Canonical form used for cassette keys: wire JSON with sorted keys and no
/// insignificant whitespace (nlohmann stores object keys sorted; a compact dump
/// is therefore canonical).
inline std::string canonical_request_json(const ChatRequest& request) {
    return to_wire_json(request).dump();
}

inline std::string request_hash(const ChatRequest& request) {
    return sha256_hex(canonical_request_json(request));
}

// -- request capture -----------------------------------------------------------

/// Thread-safe log of outgoing requests, optionally mirrored to a JSONL file.
class RequestLog {
public:
    RequestLog() = default;
    explicit RequestLog(std::string jsonl_path) : path_(std::move(jsonl_path)) {}

    void record(const ChatRequest& request) {
        std::lock_guard lock(mutex_);
        requests_.push_back(request);
        if (!path_.empty()) {
            std::ofstream out(path_, std::ios::app);
            out << canonical_request_json(request) << '\n';
        }
    }

    std::vector<ChatRequest> snapshot() const {
        std::lock_guard lock(mutex_);
        return requests_;
    }

    std::size_t size() const {
        std::lock_guard lock(mutex_);
        return requests_.size();
    }

    void clear() {
        std::lock_guard lock(mutex_);
        requests_.clear();
    }

private:
    mutable std::mutex mutex_;
    std::vector<ChatRequest> requests_;
    std::string path_;
};

/// Decorator that records every chat request before forwarding it.
class CapturingClient : public ChatClient {
public:
    CapturingClient(const ChatClient& inner, std::shared_ptr<RequestLog> log)
        : inner_(inner), log_(std::move(log)) {}

    ChatResponse complete(const ChatRequest& request, CallCounter& calls) const override {
        log_->record(request);
        return inner_.complete(request, calls);
    }

    std::vector<double> embed(const std::string& text, CallCounter& calls) const override {
        return inner_.embed(text, calls);
    }

private:
    const ChatClient& inner_;
    std::shared_ptr<RequestLog> log_;
};

// -- HTTP client ----------------------------------------------------------------

struct RetryOptions {
    std::chrono::milliseconds initial_backoff{200};
    double multiplier = 2.0;
    std::chrono::milliseconds max_backoff{5000};
};

namespace detail {

struct SplitUrl {
    std::string host;    // scheme://host[:port]
    std::string prefix;  // path prefix, possibly empty
};

inline SplitUrl split_base_url(const std::string& base_url) {
    auto scheme_end = base_url.find("://");
    if (scheme_end == std::string::npos)
        throw ConfigError("base_url must include a scheme: " + base_url);
    auto path_start = base_url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {base_url, ""};
    std::string prefix = base_url.substr(path_start);
    while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
    return {base_url.substr(0, path_start), prefix};
}

}  // namespace detail

/// Speaks the OpenAI chat-completions and embeddings wire format over HTTP(S).
///
/// Transient failures (connect errors, 429, 5xx) are retried with exponential
/// backoff up to max_retries. 401/403 raise AuthError immediately; any other
/// non-retryable status or an unparseable body raises ProtocolError. The call
/// counter ticks once per attempt that produced an HTTP status line.
class HttpChatClient : public ChatClient {
public:
    explicit HttpChatClient(ModelEndpoint endpoint, RetryOptions retry = {})
        : endpoint_(std::move(endpoint)), retry_(retry) {
        validate(endpoint_);
        url_ = detail::split_base_url(endpoint_.base_url);
    }

    const ModelEndpoint& endpoint() const { return endpoint_; }

    ChatResponse complete(const ChatRequest& request, CallCounter& calls) const override {
        validate(request);
        ChatRequest sent = request;
        if (sent.model.empty()) sent.model = endpoint_.model;
        json body = post_with_retries("/chat/completions", to_wire_json(sent), calls.chat);
        return response_from_wire_json(body);
    }

    std::vector<double> embed(const std::string& text, CallCounter& calls) const override {
        if (text.empty()) throw ValidationError("text must be nonempty", "text");
        json payload{{"model", endpoint_.model}, {"input", text}};
        json body = post_with_retries("/embeddings", payload, calls.embed);
        if (!body.contains("data") || !body["data"].is_array() || body["data"].empty() ||
            !body["data"][0].contains("embedding"))
            throw ProtocolError("embeddings response has no data[0].embedding");
        return body["data"][0]["embedding"].get<std::vector<double>>();
    }

private:
    json post_with_retries(const std::string& path, const json& payload,
                           std::atomic<std::int64_t>& tally) const {
        std::string last_error;
        auto backoff = retry_.initial_backoff;
        const int attempts = 1 + endpoint_.max_retries;
        for (int attempt = 0; attempt < attempts; ++attempt) {
            if (attempt > 0) {
                std::this_thread::sleep_for(backoff);
                backoff = std::min(
                    std::chrono::milliseconds(static_cast<std::int64_t>(
                        static_cast<double>(backoff.count()) * retry_.multiplier)),
                    retry_.max_backoff);
            }
            httplib::Client http(url_.host);
            http.set_connection_timeout(endpoint_.timeout);
            http.set_read_timeout(endpoint_.timeout);
            http.set_write_timeout(endpoint_.timeout);
            httplib::Headers headers;
            if (!endpoint_.api_key.empty())
                headers.emplace("Authorization", "Bearer " + endpoint_.api_key);
            auto result = http.Post(url_.prefix + path, headers, payload.dump(),
                                    "application/json");
            if (!result) {
                last_error = httplib::to_string(result.error());
                continue;  // never reached the backend, not counted
            }
            tally.fetch_add(1, std::memory_order_relaxed);
            const int status = result->status;
            if (status == 401 || status == 403)
                throw AuthError("backend refused credentials (HTTP " +
                                std::to_string(status) + ")");
            if (status == 429 || status >= 500) {
                last_error = "HTTP " + std::to_string(status);
                continue;
            }
            if (status < 200 || status >= 300)
                throw ProtocolError("unexpected HTTP " + std::to_string(status) + ": " +
                                    result->body);
            json body = json::parse(result->body, nullptr, false);
            if (body.is_discarded())
                throw ProtocolError("response body is not valid JSON");
            return body;
        }
        throw TransportError("gave up after " + std::to_string(attempts) +
                             " attempt(s): " + last_error);
    }

    ModelEndpoint endpoint_;
    RetryOptions retry_;
    detail::SplitUrl url_;
};

}  // namespace rtc
