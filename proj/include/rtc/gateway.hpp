#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <ctime>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <thread>

#include <httplib.h>

#include "rtc/core.hpp"

namespace rtc {

struct GatewayConfig {
    std::string host = "127.0.0.1";
    int port = 8088;
    RtcConfig rtc;
    bool diagnostics_headers = true;
};

/// OpenAI-compatible HTTP front. Two routes on one server:
///
///   POST /v1/chat/completions          - plain passthrough to the upstream
///   POST /evaluate/v1/chat/completions - runs the round-trip loop; responses
///        that fail it come back with empty content and finish_reason "stop"
///
/// Requests are handled independently and concurrently; the only shared state
/// is the metrics counters. Errors map to 400 (malformed body, streaming) and
/// 502 (upstream failure at any internal step).
class Gateway {
public:
    Gateway(const ChatClient& upstream, GatewayConfig config,
            const ChatClient* judge = nullptr, std::ostream* log = &std::clog)
        : upstream_(upstream), config_(std::move(config)), judge_(judge), log_(log) {
        validate(config_.rtc);
        server_.Post("/v1/chat/completions",
                     [this](const httplib::Request& req, httplib::Response& res) {
                         handle_passthrough(req, res);
                     });
        server_.Post("/evaluate/v1/chat/completions",
                     [this](const httplib::Request& req, httplib::Response& res) {
                         handle_evaluate(req, res);
                     });
    }

    /// Serves at the configured address. Blocks until stop().
    bool run() { return server_.listen(config_.host, config_.port); }

    /// Binds an ephemeral port and serves on a background thread. Returns the
    /// bound port. Intended for tests and embedding.
    int start() {
        int port = server_.bind_to_any_port(config_.host);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
        return port;
    }

    void stop() {
        server_.stop();
        if (thread_.joinable()) thread_.join();
    }

    ~Gateway() { stop(); }

    std::int64_t passthrough_requests() const { return passthrough_requests_.load(); }
    std::int64_t evaluate_requests() const { return evaluate_requests_.load(); }

private:
    struct ParsedBody {
        ChatRequest request;
        std::optional<std::string> reject;  // 400 reason
    };

    static ParsedBody parse_body(const std::string& body) {
        ParsedBody parsed;
        json j = json::parse(body, nullptr, false);
        if (j.is_discarded()) {
            parsed.reject = "request body is not valid JSON";
            return parsed;
        }
        try {
            parsed.request = request_from_wire_json(j);
        } catch (const RtcError& e) {
            parsed.reject = e.what();
            return parsed;
        }
        if (parsed.request.extra.value("stream", false))
            parsed.reject = "streaming is not supported; the round-trip check needs the "
                            "complete response first";
        return parsed;
    }

    static void send_error(httplib::Response& res, int status, const std::string& message) {
        res.status = status;
        res.set_content(
            json{{"error", {{"message", message}, {"type", status == 400 ? "invalid_request_error"
                                                                         : "upstream_error"}}}}
                .dump(),
            "application/json");
    }

    std::string next_id() {
        return "rtc-" + std::to_string(request_sequence_.fetch_add(1) + 1);
    }

    void log_line(const std::string& route, const std::string& id, int status,
                  std::int64_t upstream_calls, double latency_ms,
                  const std::string& verdict = "", double score = -1.0) {
        if (!log_) return;
        std::ostringstream line;
        line << "ts=" << std::time(nullptr) << " route=" << route << " id=" << id
             << " status=" << status;
        if (!verdict.empty()) line << " verdict=" << verdict << " score=" << score;
        line << " upstream_calls=" << upstream_calls << " latency_ms=" << latency_ms << '\n';
        (*log_) << line.str() << std::flush;
    }

    void handle_passthrough(const httplib::Request& req, httplib::Response& res) {
        passthrough_requests_.fetch_add(1);
        const std::string id = next_id();
        auto start = std::chrono::steady_clock::now();
        CallCounter calls;
        ParsedBody parsed = parse_body(req.body);
        if (parsed.reject) {
            send_error(res, 400, *parsed.reject);
        } else {
            try {
                ChatResponse upstream_response = upstream_.complete(parsed.request, calls);
                res.status = 200;
                res.set_content(to_wire_json(upstream_response, parsed.request.model, id,
                                             std::time(nullptr))
                                    .dump(),
                                "application/json");
            } catch (const RtcError& e) {
                send_error(res, 502, std::string("upstream failure: ") + e.what());
            }
        }
        double ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start)
                        .count();
        log_line("passthrough", id, res.status, calls.chat.load(), ms);
    }

    void handle_evaluate(const httplib::Request& req, httplib::Response& res) {
        evaluate_requests_.fetch_add(1);
        const std::string id = next_id();
        auto start = std::chrono::steady_clock::now();
        ParsedBody parsed = parse_body(req.body);
        std::string verdict;
        double score = -1.0;
        std::int64_t upstream_calls = 0;
        if (parsed.reject) {
            send_error(res, 400, *parsed.reject);
        } else {
            try {
                RoundTripTrace trace =
                    evaluate_round_trip(upstream_, config_.rtc, parsed.request, judge_);
                upstream_calls = trace.model_calls;
                verdict = to_string(trace.verdict);
                score = trace.score;
                ChatResponse out;
                out.content = trace.verdict == Verdict::pass ? trace.r : "";
                out.finish_reason = FinishReason::stop;
                out.usage.prompt_tokens =
                    static_cast<std::int64_t>(trace.q.size() / 4);
                out.usage.completion_tokens =
                    static_cast<std::int64_t>(out.content.size() / 4);
                res.status = 200;
                if (config_.diagnostics_headers) {
                    char score_buf[32];
                    std::snprintf(score_buf, sizeof score_buf, "%.6g", trace.score);
                    res.set_header("X-RTC-Score", score_buf);
                    res.set_header("X-RTC-Verdict", verdict);
                }
                res.set_content(
                    to_wire_json(out, parsed.request.model, id, std::time(nullptr)).dump(),
                    "application/json");
            } catch (const StepError& e) {
                upstream_calls = e.partial_trace().model_calls;
                send_error(res, 502, e.what());
            } catch (const RtcError& e) {
                send_error(res, 502, std::string("upstream failure: ") + e.what());
            }
        }
        double ms = std::chrono::duration<double, std::milli>(
                        std::chrono::steady_clock::now() - start)
                        .count();
        log_line("evaluate", id, res.status, upstream_calls, ms, verdict, score);
    }

    const ChatClient& upstream_;
    GatewayConfig config_;
    const ChatClient* judge_;
    std::ostream* log_;
    httplib::Server server_;
    std::thread thread_;
    std::atomic<std::int64_t> request_sequence_{0};
    std::atomic<std::int64_t> passthrough_requests_{0};
    std::atomic<std::int64_t> evaluate_requests_{0};
};

}  // namespace rtc
