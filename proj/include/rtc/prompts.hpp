#pragma once

#include <algorithm>
#include <string>

#include "rtc/wire.hpp"

namespace rtc {

/// Fixed prefix shown to improve response consistency. Prepended verbatim to
/// the system message of generation requests when enabled.
inline constexpr const char* kConsistencyPrompt =
    "Respond with clarity, consistency, and precision, maintaining a structured format "
    "throughout.";

inline constexpr const char* kInversionSystemPrompt =
    "You are given an original query and the response it produced. Write one standalone "
    "query that would be sufficient for the same model to recreate that response without "
    "seeing this conversation. Output only the query text, with no labels, commentary, or "
    "code fences.";

inline constexpr const char* kJudgeSystemPrompt =
    "You compare two texts and rate how semantically equivalent they are. Reply with a "
    "single number between 0 and 1, where 1 means they convey the same content and 0 means "
    "they are unrelated. Output only the number.";

namespace prompts {

inline std::size_t longest_backtick_run(const std::string& text) {
    std::size_t longest = 0, run = 0;
    for (char c : text) {
        run = (c == '`') ? run + 1 : 0;
        longest = std::max(longest, run);
    }
    return longest;
}

/// Wraps `text` in a backtick fence long enough that any fence inside the text
/// survives embedding (one backtick longer than the longest run, minimum 3).
inline std::string fenced(const std::string& text) {
    std::string fence(std::max<std::size_t>(3, longest_backtick_run(text) + 1), '`');
    return fence + "\n" + text + "\n" + fence;
}

/// Labeled fenced section: "Label:\n```...```".
inline std::string section(const std::string& label, const std::string& text) {
    return label + ":\n" + fenced(text);
}

inline std::string inversion_user_content(const std::string& q, const std::string& r) {
    return section("Original query", q) + "\n\n" + section("Response", r);
}

inline std::string judge_user_content(const std::string& a, const std::string& b) {
    return section("Text A", a) + "\n\n" + section("Text B", b);
}

}  // namespace prompts

/// Prepends the consistency prompt plus a single newline to the system message,
/// creating one when the request has none. Idempotent: a system message already
/// starting with the prompt is left alone. No other field is touched.
inline ChatRequest inject_consistency_prompt(ChatRequest request) {
    const std::string prompt = kConsistencyPrompt;
    if (!request.messages.empty() && request.messages.front().role == Role::system) {
        std::string& content = request.messages.front().content;
        if (content.rfind(prompt, 0) != 0) content = prompt + "\n" + content;
    } else {
        request.messages.insert(request.messages.begin(), system_message(prompt));
    }
    return request;
}

}  // namespace rtc
