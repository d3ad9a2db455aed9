#pragma once

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <utility>

#include "rtc/client.hpp"
#include "rtc/errors.hpp"
#include "rtc/prompts.hpp"
#include "rtc/similarity.hpp"
#include "rtc/wire.hpp"

namespace rtc {

enum class Verdict { pass, fail };

inline std::string to_string(Verdict v) { return v == Verdict::pass ? "pass" : "fail"; }

inline Verdict verdict_from_string(const std::string& s) {
    if (s == "pass") return Verdict::pass;
    if (s == "fail") return Verdict::fail;
    throw ValidationError("unknown verdict \"" + s + "\"", "verdict");
}

/// Policy for one round-trip evaluation.
struct RtcConfig {
    double threshold = 0.8;
    Scorer scorer = Scorer::llm;
    bool inject_consistency_prompt = false;
    std::optional<ModelEndpoint> judge_endpoint;  // defaults to the generating endpoint
};

inline void validate(const RtcConfig& cfg) {
    if (cfg.threshold < 0.0 || cfg.threshold > 1.0)
        throw ConfigError("threshold must be in [0,1], got " + std::to_string(cfg.threshold));
}

/// Strict comparison: a score exactly at the threshold fails.
inline Verdict decide_verdict(double score, double threshold) {
    if (score < 0.0 || score > 1.0)
        throw ValidationError("score must be in [0,1]", "score");
    if (threshold < 0.0 || threshold > 1.0)
        throw ValidationError("threshold must be in [0,1]", "threshold");
    return score > threshold ? Verdict::pass : Verdict::fail;
}

struct StepTimings {
    double generate_ms = 0.0;
    double invert_ms = 0.0;
    double regenerate_ms = 0.0;
    double score_ms = 0.0;
};

/// Full record of one round-trip evaluation.
struct RoundTripTrace {
    std::string q;
    std::string r;
    std::string q1;
    std::string r1;
    double score = 0.0;
    Verdict verdict = Verdict::fail;
    std::int64_t model_calls = 0;
    std::int64_t embed_calls = 0;
    double threshold = 0.0;
    Scorer scorer = Scorer::llm;
    StepTimings timings;
};

inline json to_json(const RoundTripTrace& trace) {
    return json{{"q", trace.q},
                {"r", trace.r},
                {"q1", trace.q1},
                {"r1", trace.r1},
                {"score", trace.score},
                {"verdict", to_string(trace.verdict)},
                {"model_calls", trace.model_calls},
                {"embed_calls", trace.embed_calls},
                {"threshold", trace.threshold},
                {"scorer", to_string(trace.scorer)},
                {"timings",
                 {{"generate_ms", trace.timings.generate_ms},
                  {"invert_ms", trace.timings.invert_ms},
                  {"regenerate_ms", trace.timings.regenerate_ms},
                  {"score_ms", trace.timings.score_ms}}}};
}

inline RoundTripTrace trace_from_json(const json& j) {
    RoundTripTrace trace;
    trace.q = j.value("q", "");
    trace.r = j.value("r", "");
    trace.q1 = j.value("q1", "");
    trace.r1 = j.value("r1", "");
    trace.score = j.value("score", 0.0);
    trace.verdict = verdict_from_string(j.value("verdict", "fail"));
    trace.model_calls = j.value("model_calls", 0);
    trace.embed_calls = j.value("embed_calls", 0);
    trace.threshold = j.value("threshold", 0.0);
    trace.scorer = scorer_from_string(j.value("scorer", "llm"));
    if (j.contains("timings")) {
        const json& t = j["timings"];
        trace.timings = {t.value("generate_ms", 0.0), t.value("invert_ms", 0.0),
                         t.value("regenerate_ms", 0.0), t.value("score_ms", 0.0)};
    }
    return trace;
}

enum class RtcStep { generate, invert, regenerate, score };

inline std::string to_string(RtcStep step) {
    switch (step) {
        case RtcStep::generate: return "generate";
        case RtcStep::invert: return "invert";
        case RtcStep::regenerate: return "regenerate";
        case RtcStep::score: return "score";
    }
    return "generate";
}

/// A step of the loop failed. Names the step and keeps whatever part of the
/// trace was already populated, for diagnostics.
class StepError : public RtcError {
public:
    StepError(RtcStep step, RoundTripTrace partial, const std::string& cause)
        : RtcError("step " + to_string(step) + " failed: " + cause),
          step_(step),
          partial_(std::move(partial)),
          cause_(cause) {}

    RtcStep step() const { return step_; }
    const RoundTripTrace& partial_trace() const { return partial_; }
    const std::string& cause() const { return cause_; }

private:
    RtcStep step_;
    RoundTripTrace partial_;
    std::string cause_;
};

// -- prompt construction ---------------------------------------------------------

/// Request asking the model to produce a standalone query that recreates `r`.
/// Q and R are embedded verbatim inside backtick fences long enough to survive
/// any fences they contain themselves.
inline ChatRequest build_inversion_request(const std::string& q, const std::string& r) {
    if (q.empty()) throw ValidationError("q must be nonempty", "q");
    if (r.empty()) throw ValidationError("r must be nonempty", "r");
    ChatRequest request;
    request.messages = {system_message(kInversionSystemPrompt),
                        user_message(prompts::inversion_user_content(q, r))};
    request.temperature = 0.0;
    return request;
}

namespace detail {

inline std::string trim(const std::string& s) {
    auto v = trim_view(s);
    return std::string(v);
}

/// Removes one outer markdown code fence, then a leading "Query:"/"Question:"
/// label if present. Models decorate their output; the rule is deterministic.
inline std::string strip_generated_query(const std::string& raw) {
    std::string text = trim(raw);
    // One outer fence: first line opens with 3+ backticks, last line closes.
    auto first_nl = text.find('\n');
    if (first_nl != std::string::npos) {
        std::string_view first_line = trim_view(std::string_view(text).substr(0, first_nl));
        std::size_t opened = leading_backticks(first_line);
        auto last_nl = text.rfind('\n');
        if (opened >= 3 && last_nl > first_nl) {
            std::string_view last_line = trim_view(std::string_view(text).substr(last_nl + 1));
            if (leading_backticks(last_line) >= opened &&
                last_line.size() == leading_backticks(last_line))
                text = trim(text.substr(first_nl + 1, last_nl - first_nl - 1));
        }
    }
    for (const char* label : {"Query:", "query:", "QUERY:", "Question:", "question:",
                              "QUESTION:"}) {
        if (text.rfind(label, 0) == 0) {
            text = trim(text.substr(std::string(label).size()));
            break;
        }
    }
    return text;
}

}  // namespace detail

// -- loop steps -------------------------------------------------------------------

/// Step 2: Q, R -> Q1. Returns the model's alternate query, stripped of
/// surrounding fences and labels.
inline std::string invert(const ChatClient& client, const RtcConfig& cfg, const std::string& q,
                          const std::string& r, CallCounter& calls) {
    (void)cfg;
    ChatResponse reply = client.complete(build_inversion_request(q, r), calls);
    std::string q1 = detail::strip_generated_query(reply.content);
    if (q1.empty()) throw EmptyGeneration("inversion produced a blank query");
    return q1;
}

/// Step 3: Q1 -> R1, with a fresh context. The original Q and R are not sent.
inline std::string regenerate(const ChatClient& client, const RtcConfig& cfg,
                              const std::string& q1, CallCounter& calls,
                              const std::optional<ChatMessage>& standing_system = {}) {
    (void)cfg;
    if (q1.empty()) throw ValidationError("q1 must be nonempty", "q1");
    ChatRequest request;
    if (standing_system) request.messages.push_back(*standing_system);
    request.messages.push_back(user_message(q1));
    request.temperature = 0.0;
    ChatResponse reply = client.complete(request, calls);
    if (reply.content.empty()) throw EmptyGeneration("regeneration produced a blank response");
    return reply.content;
}

// -- the full loop ------------------------------------------------------------------

/// Hooks that let patch-aware evaluations reuse the same four-step loop with
/// their own prompt shapes and scoring rule.
struct StepBuilders {
    std::function<ChatRequest(const std::string& q)> generation;
    std::function<ChatRequest(const std::string& q, const std::string& r)> inversion;
    std::function<ChatRequest(const std::string& q1)> regeneration;
    std::function<double(const std::string& r, const std::string& r1, CallCounter&)> score;
    std::function<Verdict(double score)> verdict;  // defaults to decide_verdict vs threshold
};

/// Similarity hook for the configured scorer. The llm scorer consults `judge`
/// (falling back to the generating model); cosine embeds both texts.
inline std::function<double(const std::string&, const std::string&, CallCounter&)>
make_similarity_fn(const RtcConfig& cfg, const ChatClient& model, const ChatClient* judge) {
    const ChatClient& rater = judge ? *judge : model;
    switch (cfg.scorer) {
        case Scorer::llm:
            return [&rater](const std::string& r, const std::string& r1, CallCounter& calls) {
                return llm_similarity_score(rater, r, r1, calls).value;
            };
        case Scorer::cosine:
            return [&rater](const std::string& r, const std::string& r1, CallCounter& calls) {
                return cosine_similarity(rater.embed(r, calls), rater.embed(r1, calls)).value;
            };
        case Scorer::exact:
            return [](const std::string& r, const std::string& r1, CallCounter&) {
                return exact_match(r, r1).value;
            };
    }
    throw ConfigError("unreachable scorer");
}

/// Runs generate -> invert -> regenerate -> score and fills a trace. Any step
/// failure is rethrown as StepError carrying the step name and partial trace.
inline RoundTripTrace run_round_trip(const ChatClient& model, const RtcConfig& cfg,
                                     const std::string& q, const StepBuilders& steps) {
    validate(cfg);
    if (q.empty()) throw ValidationError("q must be nonempty", "q");
    RoundTripTrace trace;
    trace.q = q;
    trace.threshold = cfg.threshold;
    trace.scorer = cfg.scorer;
    CallCounter calls;
    auto sync_calls = [&] {
        trace.model_calls = calls.chat.load();
        trace.embed_calls = calls.embed.load();
    };
    using clock = std::chrono::steady_clock;
    auto timed = [&](RtcStep step, double& slot, auto&& fn) {
        auto start = clock::now();
        try {
            fn();
        } catch (const RtcError& e) {
            sync_calls();
            throw StepError(step, trace, e.what());
        }
        slot = std::chrono::duration<double, std::milli>(clock::now() - start).count();
    };

    timed(RtcStep::generate, trace.timings.generate_ms, [&] {
        ChatRequest request = steps.generation(q);
        if (cfg.inject_consistency_prompt) request = inject_consistency_prompt(request);
        trace.r = model.complete(request, calls).content;
        if (trace.r.empty()) throw EmptyGeneration("generation produced a blank response");
    });
    timed(RtcStep::invert, trace.timings.invert_ms, [&] {
        ChatResponse reply = model.complete(steps.inversion(q, trace.r), calls);
        trace.q1 = detail::strip_generated_query(reply.content);
        if (trace.q1.empty()) throw EmptyGeneration("inversion produced a blank query");
    });
    timed(RtcStep::regenerate, trace.timings.regenerate_ms, [&] {
        ChatResponse reply = model.complete(steps.regeneration(trace.q1), calls);
        trace.r1 = reply.content;
        if (trace.r1.empty()) throw EmptyGeneration("regeneration produced a blank response");
    });
    timed(RtcStep::score, trace.timings.score_ms, [&] {
        trace.score = steps.score(trace.r, trace.r1, calls);
        trace.verdict = steps.verdict ? steps.verdict(trace.score)
                                      : decide_verdict(trace.score, cfg.threshold);
    });
    sync_calls();
    return trace;
}

/// Builds a client for cfg.judge_endpoint when no explicit judge was passed.
/// The returned owner must outlive the evaluation that uses `judge`.
inline std::unique_ptr<ChatClient> resolve_judge(const RtcConfig& cfg,
                                                 const ChatClient*& judge) {
    if (judge || !cfg.judge_endpoint) return nullptr;
    auto owned = std::make_unique<HttpChatClient>(*cfg.judge_endpoint);
    judge = owned.get();
    return owned;
}

/// The plain (freeform) evaluation: generation from the given request, inversion
/// and regeneration under the request's standing system prompt only.
inline RoundTripTrace evaluate_round_trip(const ChatClient& model, const RtcConfig& cfg,
                                          const ChatRequest& base,
                                          const ChatClient* judge = nullptr) {
    validate(base);
    auto owned_judge = resolve_judge(cfg, judge);
    std::string q = base.last_user_content();
    if (q.empty()) throw ValidationError("request has no user message", "messages");
    std::optional<ChatMessage> standing;
    if (const ChatMessage* sys = base.system()) standing = *sys;

    StepBuilders steps;
    steps.generation = [&base](const std::string&) { return base; };
    steps.inversion = [](const std::string& q_, const std::string& r_) {
        return build_inversion_request(q_, r_);
    };
    steps.regeneration = [&standing](const std::string& q1) {
        ChatRequest request;
        if (standing) request.messages.push_back(*standing);
        request.messages.push_back(user_message(q1));
        request.temperature = 0.0;
        return request;
    };
    steps.score = make_similarity_fn(cfg, model, judge);
    return run_round_trip(model, cfg, q, steps);
}

inline RoundTripTrace evaluate_round_trip(const ChatClient& model, const RtcConfig& cfg,
                                          const std::string& q,
                                          const ChatClient* judge = nullptr) {
    if (q.empty()) throw ValidationError("q must be nonempty", "q");
    ChatRequest base;
    base.messages = {user_message(q)};
    base.temperature = 0.0;
    return evaluate_round_trip(model, cfg, base, judge);
}

}  // namespace rtc
