#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rtc/errors.hpp"

namespace rtc {

using json = nlohmann::json;

enum class Role { system, user, assistant };

inline std::string to_string(Role role) {
    switch (role) {
        case Role::system: return "system";
        case Role::user: return "user";
        case Role::assistant: return "assistant";
    }
    return "user";
}

inline Role role_from_string(const std::string& s) {
    if (s == "system") return Role::system;
    if (s == "user") return Role::user;
    if (s == "assistant") return Role::assistant;
    throw ValidationError("unknown role \"" + s + "\"", "role");
}

struct ChatMessage {
    Role role = Role::user;
    std::string content;

    bool operator==(const ChatMessage&) const = default;
};

inline ChatMessage system_message(std::string content) {
    return {Role::system, std::move(content)};
}
inline ChatMessage user_message(std::string content) {
    return {Role::user, std::move(content)};
}
inline ChatMessage assistant_message(std::string content) {
    return {Role::assistant, std::move(content)};
}

/// One chat-completions request. Unmodeled wire fields (top_p, seed, ...) are
/// preserved verbatim in `extra` so a proxy can forward them untouched.
struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    double temperature = 0.0;
    std::optional<int> max_tokens;
    json extra = json::object();

    bool operator==(const ChatRequest& other) const {
        return model == other.model && messages == other.messages &&
               temperature == other.temperature && max_tokens == other.max_tokens &&
               extra == other.extra;
    }

    /// Last user message, or empty string when there is none.
    std::string last_user_content() const {
        for (auto it = messages.rbegin(); it != messages.rend(); ++it)
            if (it->role == Role::user) return it->content;
        return "";
    }

    const ChatMessage* system() const {
        if (!messages.empty() && messages.front().role == Role::system) return &messages.front();
        return nullptr;
    }
};

/// Throws ValidationError unless the request satisfies the type invariants:
/// nonempty messages, at most one system message and only in the leading slot,
/// temperature >= 0, and empty content only on assistant messages.
inline void validate(const ChatRequest& request) {
    if (request.messages.empty())
        throw ValidationError("messages must be nonempty", "messages");
    for (std::size_t i = 0; i < request.messages.size(); ++i) {
        const auto& m = request.messages[i];
        if (m.role == Role::system && i != 0)
            throw ValidationError("system message allowed only in the leading slot", "messages");
        if (m.content.empty() && m.role != Role::assistant)
            throw ValidationError("content may be empty only for assistant messages", "messages");
    }
    if (request.temperature < 0)
        throw ValidationError("temperature must be >= 0", "temperature");
    if (request.max_tokens && *request.max_tokens <= 0)
        throw ValidationError("max_tokens must be positive", "max_tokens");
}

enum class FinishReason { stop, length, error };

inline std::string to_string(FinishReason r) {
    switch (r) {
        case FinishReason::stop: return "stop";
        case FinishReason::length: return "length";
        case FinishReason::error: return "error";
    }
    return "stop";
}

inline FinishReason finish_reason_from_string(const std::string& s) {
    if (s == "length") return FinishReason::length;
    if (s == "error") return FinishReason::error;
    return FinishReason::stop;
}

struct TokenUsage {
    std::int64_t prompt_tokens = 0;
    std::int64_t completion_tokens = 0;

    bool operator==(const TokenUsage&) const = default;
};

struct ChatResponse {
    std::string content;
    FinishReason finish_reason = FinishReason::stop;
    TokenUsage usage;

    bool operator==(const ChatResponse&) const = default;
};

// -- OpenAI chat-completions JSON ----------------------------------------------

inline json to_wire_json(const ChatMessage& m) {
    return json{{"role", to_string(m.role)}, {"content", m.content}};
}

/// Request body per the chat-completions schema. Modeled fields overwrite any
/// duplicates carried in `extra`.
inline json to_wire_json(const ChatRequest& request) {
    json body = request.extra.is_object() ? request.extra : json::object();
    body["model"] = request.model;
    body["temperature"] = request.temperature;
    json msgs = json::array();
    for (const auto& m : request.messages) msgs.push_back(to_wire_json(m));
    body["messages"] = std::move(msgs);
    if (request.max_tokens) body["max_tokens"] = *request.max_tokens;
    return body;
}

/// Parses a request body. Throws ProtocolError on malformed shape and
/// ValidationError when the parsed request violates type invariants.
inline ChatRequest request_from_wire_json(const json& body) {
    if (!body.is_object()) throw ProtocolError("request body must be a JSON object");
    ChatRequest request;
    if (!body.contains("messages") || !body["messages"].is_array())
        throw ProtocolError("request is missing the messages array");
    for (const auto& m : body["messages"]) {
        if (!m.is_object() || !m.contains("role") || !m.contains("content") ||
            !m["content"].is_string())
            throw ProtocolError("malformed message entry");
        request.messages.push_back({role_from_string(m["role"].get<std::string>()),
                                    m["content"].get<std::string>()});
    }
    request.model = body.value("model", "");
    request.temperature = body.value("temperature", 0.0);
    if (body.contains("max_tokens") && !body["max_tokens"].is_null())
        request.max_tokens = body["max_tokens"].get<int>();
    for (const auto& [key, value] : body.items()) {
        if (key == "model" || key == "messages" || key == "temperature" || key == "max_tokens")
            continue;
        request.extra[key] = value;
    }
    validate(request);
    return request;
}

/// First-choice content, finish_reason and usage from a response body.
inline ChatResponse response_from_wire_json(const json& body) {
    if (!body.is_object() || !body.contains("choices") || !body["choices"].is_array() ||
        body["choices"].empty())
        throw ProtocolError("response has no choices");
    const json& choice = body["choices"][0];
    if (!choice.contains("message") || !choice["message"].contains("content"))
        throw ProtocolError("choice has no message.content");
    ChatResponse response;
    const json& content = choice["message"]["content"];
    response.content = content.is_null() ? "" : content.get<std::string>();
    response.finish_reason =
        finish_reason_from_string(choice.value("finish_reason", "stop"));
    if (body.contains("usage") && body["usage"].is_object()) {
        response.usage.prompt_tokens = body["usage"].value("prompt_tokens", 0);
        response.usage.completion_tokens = body["usage"].value("completion_tokens", 0);
    }
    if (response.usage.prompt_tokens < 0 || response.usage.completion_tokens < 0)
        throw ProtocolError("usage counters must be nonnegative");
    return response;
}

/// Builds a complete chat.completion response body around `response`.
inline json to_wire_json(const ChatResponse& response, const std::string& model,
                         const std::string& id, std::int64_t created) {
    return json{
        {"id", id},
        {"object", "chat.completion"},
        {"created", created},
        {"model", model},
        {"choices",
         json::array({json{{"index", 0},
                           {"message", {{"role", "assistant"}, {"content", response.content}}},
                           {"finish_reason", to_string(response.finish_reason)}}})},
        {"usage",
         {{"prompt_tokens", response.usage.prompt_tokens},
          {"completion_tokens", response.usage.completion_tokens},
          {"total_tokens", response.usage.prompt_tokens + response.usage.completion_tokens}}}};
}

}  // namespace rtc
