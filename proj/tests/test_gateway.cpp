#include <catch2/catch_amalgamated.hpp>

#include "rtc/gateway.hpp"
#include "rtc/mock.hpp"
#include "support/clients.hpp"
#include "support/test_util.hpp"

using namespace rtc;

namespace {

struct GatewayFixture {
    explicit GatewayFixture(const ChatClient& upstream, RtcConfig rtc = {},
                            bool diagnostics = true)
        : log(std::make_shared<RequestLog>()),
          capture(upstream, log),
          gateway(capture, make_config(std::move(rtc), diagnostics), nullptr, nullptr) {
        port = gateway.start();
    }

    static GatewayConfig make_config(RtcConfig rtc, bool diagnostics) {
        GatewayConfig config;
        config.rtc = std::move(rtc);
        config.diagnostics_headers = diagnostics;
        return config;
    }

    httplib::Result post(const std::string& route, const json& body) {
        httplib::Client http("127.0.0.1", port);
        http.set_read_timeout(std::chrono::seconds(10));
        return http.Post(route, body.dump(), "application/json");
    }

    httplib::Result post_raw(const std::string& route, const std::string& body) {
        httplib::Client http("127.0.0.1", port);
        return http.Post(route, body, "application/json");
    }

    std::shared_ptr<RequestLog> log;
    CapturingClient capture;
    Gateway gateway;
    int port = 0;
};

json chat_body(const std::string& text) {
    return json{{"model", "m"},
                {"messages", json::array({json{{"role", "user"}, {"content", text}}})}};
}

}  // namespace

TEST_CASE("passthrough relays the upstream answer with one upstream call") {
    MockChatClient echo(MockBehavior::Kind::echo);
    GatewayFixture fx(echo);
    auto res = fx.post("/v1/chat/completions", chat_body("hi"));
    REQUIRE(res);
    CHECK(res->status == 200);
    json body = json::parse(res->body);
    std::string why;
    CHECK(testutil::is_valid_chat_completion(body, &why));
    INFO(why);
    CHECK(body["choices"][0]["message"]["content"] == "hi");
    CHECK(fx.log->size() == 1);
    CHECK(fx.gateway.passthrough_requests() == 1);
}

TEST_CASE("malformed bodies get a 400") {
    MockChatClient echo(MockBehavior::Kind::echo);
    GatewayFixture fx(echo);
    auto res = fx.post_raw("/v1/chat/completions", "{not json");
    REQUIRE(res);
    CHECK(res->status == 400);
    res = fx.post("/evaluate/v1/chat/completions", json{{"model", "m"}});
    REQUIRE(res);
    CHECK(res->status == 400);
}

TEST_CASE("streaming requests are refused with an explanation") {
    MockChatClient echo(MockBehavior::Kind::echo);
    GatewayFixture fx(echo);
    json body = chat_body("hi");
    body["stream"] = true;
    auto res = fx.post("/evaluate/v1/chat/completions", body);
    REQUIRE(res);
    CHECK(res->status == 400);
    CHECK(json::parse(res->body)["error"]["message"].get<std::string>().find("stream") !=
          std::string::npos);
}

TEST_CASE("upstream failure surfaces as 502") {
    testutil::FnClient broken(
        [](const ChatRequest&) -> std::string { throw TransportError("down"); });
    GatewayFixture fx(broken);
    auto res = fx.post("/v1/chat/completions", chat_body("hi"));
    REQUIRE(res);
    CHECK(res->status == 502);
    res = fx.post("/evaluate/v1/chat/completions", chat_body("hi"));
    REQUIRE(res);
    CHECK(res->status == 502);
}

TEST_CASE("gated route returns R on pass with diagnostics headers") {
    MockChatClient agent(MockBehavior::Kind::transform);
    RtcConfig rtc;
    rtc.scorer = Scorer::exact;
    rtc.threshold = 0.8;
    GatewayFixture fx(agent, rtc);
    auto res = fx.post("/evaluate/v1/chat/completions", chat_body("explain the cache"));
    REQUIRE(res);
    CHECK(res->status == 200);
    json body = json::parse(res->body);
    std::string why;
    CHECK(testutil::is_valid_chat_completion(body, &why));
    INFO(why);
    CHECK(body["choices"][0]["message"]["content"] == "ANSWER[explain the cache]");
    CHECK(res->get_header_value("X-RTC-Verdict") == "pass");
    CHECK(std::stod(res->get_header_value("X-RTC-Score")) == 1.0);
    CHECK(fx.log->size() == 3);  // exact scorer: generate, invert, regenerate
}

TEST_CASE("gated route suppresses failing responses with an empty body") {
    MockBehavior corrupting{MockBehavior::Kind::corrupt};
    corrupting.seed = 17;
    MockChatClient agent(corrupting);
    RtcConfig rtc;
    rtc.scorer = Scorer::exact;
    GatewayFixture fx(agent, rtc);
    auto res = fx.post("/evaluate/v1/chat/completions", chat_body("explain the cache"));
    REQUIRE(res);
    CHECK(res->status == 200);
    json body = json::parse(res->body);
    std::string why;
    CHECK(testutil::is_valid_chat_completion(body, &why));
    INFO(why);
    CHECK(body["choices"][0]["message"]["content"] == "");
    CHECK(body["choices"][0]["finish_reason"] == "stop");
    CHECK(res->get_header_value("X-RTC-Verdict") == "fail");
}

TEST_CASE("diagnostics headers can be disabled") {
    MockChatClient agent(MockBehavior::Kind::transform);
    RtcConfig rtc;
    rtc.scorer = Scorer::exact;
    GatewayFixture fx(agent, rtc, /*diagnostics=*/false);
    auto res = fx.post("/evaluate/v1/chat/completions", chat_body("q"));
    REQUIRE(res);
    CHECK(!res->has_header("X-RTC-Verdict"));
    CHECK(!res->has_header("X-RTC-Score"));
}

TEST_CASE("gated route with the llm scorer makes four upstream calls") {
    MockChatClient agent(MockBehavior::Kind::transform);
    RtcConfig rtc;
    rtc.scorer = Scorer::llm;
    GatewayFixture fx(agent, rtc);
    auto res = fx.post("/evaluate/v1/chat/completions", chat_body("explain the cache"));
    REQUIRE(res);
    CHECK(res->status == 200);
    CHECK(fx.log->size() == 4);
    CHECK(fx.gateway.evaluate_requests() == 1);
}

TEST_CASE("requests with a leading system prompt keep it through the gated loop") {
    MockChatClient agent(MockBehavior::Kind::transform);
    RtcConfig rtc;
    rtc.scorer = Scorer::exact;
    GatewayFixture fx(agent, rtc);
    json body{{"model", "m"},
              {"messages",
               json::array({json{{"role", "system"}, {"content", "Be brief."}},
                            json{{"role", "user"}, {"content", "list the routes"}}})}};
    auto res = fx.post("/evaluate/v1/chat/completions", body);
    REQUIRE(res);
    CHECK(res->status == 200);
    auto requests = fx.log->snapshot();
    REQUIRE(requests.size() == 3);
    REQUIRE(requests[0].system() != nullptr);
    CHECK(requests[0].system()->content == "Be brief.");
    REQUIRE(requests[2].system() != nullptr);
    CHECK(requests[2].system()->content == "Be brief.");
}
