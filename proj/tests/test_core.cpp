#include <random>

#include <catch2/catch_amalgamated.hpp>

#include "rtc/core.hpp"
#include "rtc/mock.hpp"
#include "support/clients.hpp"

using namespace rtc;

namespace {

// Scripted agent for the llm-scorer path: distinct canned replies per step.
testutil::FnClient::ReplyFn scripted_loop(const std::string& judge_says) {
    return [judge_says](const ChatRequest& request) -> std::string {
        const ChatMessage* sys = request.system();
        if (sys && sys->content.find(kInversionSystemPrompt) != std::string::npos)
            return "Q1-text";
        if (sys && sys->content.find(kJudgeSystemPrompt) != std::string::npos)
            return judge_says;
        if (request.last_user_content() == "Q1-text") return "R1-text";
        return "R-text";
    };
}

}  // namespace

TEST_CASE("decide_verdict is strictly greater-than") {
    CHECK(decide_verdict(0.95, 0.8) == Verdict::pass);
    CHECK(decide_verdict(0.8, 0.8) == Verdict::fail);
    CHECK(decide_verdict(0.0, 0.0) == Verdict::fail);
    CHECK_THROWS_AS(decide_verdict(1.2, 0.5), ValidationError);
    CHECK_THROWS_AS(decide_verdict(0.5, -0.1), ValidationError);
}

TEST_CASE("verdict property: pass iff score > threshold, over random pairs") {
    std::mt19937 rng(20240810);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int round = 0; round < 1000; ++round) {
        double score = unit(rng);
        double threshold = unit(rng);
        CHECK((decide_verdict(score, threshold) == Verdict::pass) == (score > threshold));
        CHECK(decide_verdict(threshold, threshold) == Verdict::fail);
    }
}

TEST_CASE("verdict monotonicity: raising the threshold never flips fail to pass") {
    std::mt19937 rng(99);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int round = 0; round < 200; ++round) {
        double score = unit(rng);
        double lo = unit(rng), hi = unit(rng);
        if (lo > hi) std::swap(lo, hi);
        if (decide_verdict(score, lo) == Verdict::fail)
            CHECK(decide_verdict(score, hi) == Verdict::fail);
    }
}

TEST_CASE("build_inversion_request embeds q and r verbatim") {
    ChatRequest request = build_inversion_request("fix the bug", "patched code X");
    const std::string& content = request.last_user_content();
    CHECK(content.find("fix the bug") != std::string::npos);
    CHECK(content.find("patched code X") != std::string::npos);
    REQUIRE(request.system() != nullptr);
    CHECK(request.system()->content == kInversionSystemPrompt);
    CHECK(request.temperature == 0.0);
}

TEST_CASE("inversion fences outlast fences inside the payload") {
    std::string fency = "use\n```python\ncode\n```\ndone";
    ChatRequest request = build_inversion_request(fency, "r");
    const std::string& content = request.last_user_content();
    CHECK(content.find("````\n" + fency + "\n````") != std::string::npos);
    // the embedded block survives extraction
    CHECK(detail::fenced_blocks(content).front() == fency);
}

TEST_CASE("inversion preconditions") {
    CHECK_THROWS_AS(build_inversion_request("", "r"), ValidationError);
    CHECK_THROWS_AS(build_inversion_request("q", ""), ValidationError);
}

TEST_CASE("generated queries are stripped of fences and labels") {
    CHECK(detail::strip_generated_query("```\nthe query\n```") == "the query");
    CHECK(detail::strip_generated_query("Query: the query") == "the query");
    CHECK(detail::strip_generated_query("```text\nQuestion: the query\n```") == "the query");
    CHECK(detail::strip_generated_query("  plain  ") == "plain");
    CHECK(detail::strip_generated_query("```\nquery without closing fence") ==
          "```\nquery without closing fence");
    CHECK(detail::strip_generated_query("```\n```") == "```\n```");
}

TEST_CASE("invert returns the model's alternate query") {
    testutil::FnClient client([](const ChatRequest&) { return std::string("```\nQ1\n```"); });
    CallCounter calls;
    CHECK(invert(client, RtcConfig{}, "q", "r", calls) == "Q1");
    CHECK(calls.chat.load() == 1);
}

TEST_CASE("invert on an echo backend stays nonempty after stripping") {
    MockChatClient echo(MockBehavior::Kind::echo);
    CallCounter calls;
    std::string q1 = invert(echo, RtcConfig{}, "the query", "the response", calls);
    // hand-applied rule: the echoed prompt has no outer fence and no label,
    // so stripping leaves the prompt text itself
    CHECK(q1 == detail::strip_generated_query(prompts::inversion_user_content("the query",
                                                                              "the response")));
    CHECK(!q1.empty());
}

TEST_CASE("invert surfaces blank generations") {
    testutil::FnClient blank([](const ChatRequest&) { return std::string(); });
    CallCounter calls;
    CHECK_THROWS_AS(invert(blank, RtcConfig{}, "q", "r", calls), EmptyGeneration);
}

TEST_CASE("regenerate sends a fresh context") {
    testutil::FnClient client([](const ChatRequest&) { return std::string("R1"); });
    CallCounter calls;
    CHECK(regenerate(client, RtcConfig{}, "Q1", calls) == "R1");
    auto requests = client.requests();
    REQUIRE(requests.size() == 1);
    CHECK(requests[0].messages.size() == 1);
    CHECK(requests[0].last_user_content() == "Q1");

    testutil::FnClient blank([](const ChatRequest&) { return std::string(); });
    CHECK_THROWS_AS(regenerate(blank, RtcConfig{}, "Q1", calls), EmptyGeneration);
    CHECK_THROWS_AS(regenerate(client, RtcConfig{}, "", calls), ValidationError);
}

TEST_CASE("self-invertible agent passes with the exact scorer") {
    MockChatClient agent(MockBehavior::Kind::transform);
    RtcConfig cfg;
    cfg.threshold = 0.8;
    cfg.scorer = Scorer::exact;
    RoundTripTrace trace = evaluate_round_trip(agent, cfg, "describe the retry policy");
    CHECK(trace.score == 1.0);
    CHECK(trace.verdict == Verdict::pass);
    CHECK(trace.model_calls == 3);
    CHECK(trace.r == trace.r1);
    CHECK(trace.q1 == "REDO::describe the retry policy");
}

TEST_CASE("corrupting agent fails with the exact scorer") {
    MockBehavior behavior{MockBehavior::Kind::corrupt};
    behavior.seed = 7;
    MockChatClient agent(behavior);
    RtcConfig cfg;
    cfg.threshold = 0.8;
    cfg.scorer = Scorer::exact;
    RoundTripTrace trace = evaluate_round_trip(agent, cfg, "describe the retry policy");
    CHECK(trace.score == 0.0);
    CHECK(trace.verdict == Verdict::fail);
    CHECK(trace.r != trace.r1);
}

TEST_CASE("llm scorer costs one extra model call") {
    testutil::FnClient client(scripted_loop("0.85"));
    RtcConfig cfg;
    cfg.threshold = 0.8;
    cfg.scorer = Scorer::llm;
    RoundTripTrace trace = evaluate_round_trip(client, cfg, "q");
    CHECK(trace.score == Catch::Approx(0.85));
    CHECK(trace.verdict == Verdict::pass);
    CHECK(trace.model_calls == 4);
    CHECK(trace.embed_calls == 0);
}

TEST_CASE("cosine scorer embeds instead of chatting") {
    MockChatClient agent(MockBehavior::Kind::transform);
    RtcConfig cfg;
    cfg.threshold = 0.8;
    cfg.scorer = Scorer::cosine;
    RoundTripTrace trace = evaluate_round_trip(agent, cfg, "cover the edge cases");
    CHECK(trace.model_calls == 3);
    CHECK(trace.embed_calls == 2);
    CHECK(trace.score == Catch::Approx(1.0));  // identical texts embed identically
    CHECK(trace.verdict == Verdict::pass);
}

TEST_CASE("regeneration never sees the original response") {
    MockChatClient agent(MockBehavior::Kind::transform);
    auto log = std::make_shared<RequestLog>();
    CapturingClient capture(agent, log);
    RtcConfig cfg;
    cfg.scorer = Scorer::exact;
    RoundTripTrace trace = evaluate_round_trip(capture, cfg, "how does paging work");
    auto requests = log->snapshot();
    REQUIRE(requests.size() == 3);
    const ChatRequest& regen = requests[2];
    CHECK(regen.last_user_content() == trace.q1);
    CHECK(regen.messages.size() == 1);  // no standing system prompt in the bare loop
    for (const auto& message : regen.messages)
        CHECK(message.content.find(trace.r) == std::string::npos);
}

TEST_CASE("a standing system prompt rides along into regeneration") {
    MockChatClient agent(MockBehavior::Kind::transform);
    auto log = std::make_shared<RequestLog>();
    CapturingClient capture(agent, log);
    RtcConfig cfg;
    cfg.scorer = Scorer::exact;
    ChatRequest base;
    base.messages = {system_message("You answer in one line."), user_message("what is rtc")};
    evaluate_round_trip(capture, cfg, base);
    auto requests = log->snapshot();
    REQUIRE(requests.size() == 3);
    REQUIRE(requests[2].system() != nullptr);
    CHECK(requests[2].system()->content == "You answer in one line.");
    // inversion runs under its own instruction, not the standing prompt
    CHECK(requests[1].system()->content == kInversionSystemPrompt);
}

TEST_CASE("consistency prompt applies to the generation step only") {
    MockChatClient agent(MockBehavior::Kind::transform);
    auto log = std::make_shared<RequestLog>();
    CapturingClient capture(agent, log);
    RtcConfig cfg;
    cfg.scorer = Scorer::exact;
    cfg.inject_consistency_prompt = true;
    evaluate_round_trip(capture, cfg, "how does paging work");
    auto requests = log->snapshot();
    REQUIRE(requests.size() == 3);
    REQUIRE(requests[0].system() != nullptr);
    CHECK(requests[0].system()->content == kConsistencyPrompt);
    CHECK(requests[1].system()->content == kInversionSystemPrompt);
}

TEST_CASE("step failures carry the step name and the partial trace") {
    testutil::FnClient client([](const ChatRequest& request) -> std::string {
        const ChatMessage* sys = request.system();
        if (sys && sys->content.find(kInversionSystemPrompt) != std::string::npos)
            return "";  // inversion goes blank
        return "R-text";
    });
    RtcConfig cfg;
    cfg.scorer = Scorer::exact;
    try {
        evaluate_round_trip(client, cfg, "q");
        FAIL("expected StepError");
    } catch (const StepError& e) {
        CHECK(e.step() == RtcStep::invert);
        CHECK(e.partial_trace().r == "R-text");
        CHECK(e.partial_trace().q1.empty());
        CHECK(e.partial_trace().model_calls == 2);
    }
}

TEST_CASE("invalid config and empty queries are rejected up front") {
    MockChatClient agent(MockBehavior::Kind::transform);
    RtcConfig bad;
    bad.threshold = 1.5;
    CHECK_THROWS_AS(evaluate_round_trip(agent, bad, "q"), ConfigError);
    CHECK_THROWS_AS(evaluate_round_trip(agent, RtcConfig{}, ""), ValidationError);
}

TEST_CASE("traces serialize losslessly") {
    MockChatClient agent(MockBehavior::Kind::transform);
    RtcConfig cfg;
    cfg.scorer = Scorer::exact;
    RoundTripTrace trace = evaluate_round_trip(agent, cfg, "what changed");
    RoundTripTrace reparsed = trace_from_json(to_json(trace));
    CHECK(reparsed.q == trace.q);
    CHECK(reparsed.r == trace.r);
    CHECK(reparsed.q1 == trace.q1);
    CHECK(reparsed.r1 == trace.r1);
    CHECK(reparsed.score == trace.score);
    CHECK(reparsed.verdict == trace.verdict);
    CHECK(reparsed.model_calls == trace.model_calls);
    CHECK(reparsed.threshold == trace.threshold);
}
