#pragma once

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "rtc/client.hpp"
#include "rtc/errors.hpp"
#include "rtc/prompts.hpp"

namespace rtc {

enum class Scorer { llm, cosine, exact };

inline std::string to_string(Scorer s) {
    switch (s) {
        case Scorer::llm: return "llm";
        case Scorer::cosine: return "cosine";
        case Scorer::exact: return "exact";
    }
    return "llm";
}

inline Scorer scorer_from_string(const std::string& s) {
    if (s == "llm") return Scorer::llm;
    if (s == "cosine") return Scorer::cosine;
    if (s == "exact") return Scorer::exact;
    throw ConfigError("unknown scorer \"" + s + "\" (expected llm, cosine or exact)");
}

struct Score {
    double value = 0.0;  // always in [0,1]
    Scorer scorer = Scorer::exact;
};

// -- text normalization ----------------------------------------------------------

/// Canonicalizes whitespace artifacts and nothing else: line endings become LF,
/// trailing whitespace is stripped per line, trailing blank lines are removed.
/// Comments and formatting are preserved. Idempotent.
inline std::string normalize_code(const std::string& text) {
    std::string out;
    out.reserve(text.size());
    std::string line;
    auto flush_line = [&] {
        while (!line.empty() && (line.back() == ' ' || line.back() == '\t')) line.pop_back();
        out += line;
        out += '\n';
        line.clear();
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (c == '\r') {
            if (i + 1 < text.size() && text[i + 1] == '\n') ++i;
            flush_line();
        } else if (c == '\n') {
            flush_line();
        } else {
            line += c;
        }
    }
    if (!line.empty()) flush_line();
    while (!out.empty() && out.back() == '\n') out.pop_back();
    return out;
}

/// 1.0 when the two texts are identical up to normalize_code, else 0.0.
inline Score exact_match(const std::string& a, const std::string& b) {
    return {normalize_code(a) == normalize_code(b) ? 1.0 : 0.0, Scorer::exact};
}

// -- code block extraction --------------------------------------------------------

namespace detail {

inline std::string_view trim_view(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

inline std::size_t leading_backticks(std::string_view line) {
    std::size_t n = 0;
    while (n < line.size() && line[n] == '`') ++n;
    return n;
}

/// All fenced blocks in `text`, in order. A fence opens on a line starting with
/// 3+ backticks (rest of the line is the info string, ignored) and closes on a
/// line of at least as many backticks. An unterminated block runs to the end.
inline std::vector<std::string> fenced_blocks(const std::string& text) {
    std::vector<std::string> blocks;
    std::vector<std::string_view> lines;
    std::string_view rest = text;
    while (true) {
        auto nl = rest.find('\n');
        lines.push_back(rest.substr(0, nl));
        if (nl == std::string_view::npos) break;
        rest.remove_prefix(nl + 1);
    }
    std::size_t i = 0;
    while (i < lines.size()) {
        auto opened = leading_backticks(trim_view(lines[i]));
        if (opened >= 3) {
            std::string block;
            ++i;
            bool first = true;
            while (i < lines.size()) {
                auto t = trim_view(lines[i]);
                if (leading_backticks(t) >= opened && t.size() == leading_backticks(t)) break;
                if (!first) block += '\n';
                block += std::string(lines[i]);
                first = false;
                ++i;
            }
            blocks.push_back(std::move(block));
        }
        ++i;
    }
    return blocks;
}

}  // namespace detail

/// Content of the first fenced code block, or the whole response when no fence
/// is present. The fence's language tag is ignored.
inline std::string extract_code_block(const std::string& response) {
    auto blocks = detail::fenced_blocks(response);
    if (blocks.empty()) return response;
    return blocks.front();
}

// -- score parsing ------------------------------------------------------------------

/// First decimal number in the text, with "N/M" ratios and "N%" percentages
/// normalized, clamped to [0,1]. Throws ScoreParseError when no number is present.
inline double parse_score(const std::string& raw) {
    std::size_t i = 0;
    auto parse_number = [&](std::size_t from, double& value, std::size_t& end) -> bool {
        std::size_t p = from;
        bool digits = false, dot = false;
        std::string buf;
        if (p < raw.size() && (raw[p] == '+' || raw[p] == '-')) buf += raw[p++];
        while (p < raw.size()) {
            if (std::isdigit(static_cast<unsigned char>(raw[p]))) {
                digits = true;
                buf += raw[p++];
            } else if (raw[p] == '.' && !dot) {
                dot = true;
                buf += raw[p++];
            } else {
                break;
            }
        }
        if (!digits) return false;
        value = std::stod(buf);
        end = p;
        return true;
    };
    for (; i < raw.size(); ++i) {
        char c = raw[i];
        bool starts = std::isdigit(static_cast<unsigned char>(c)) ||
                      ((c == '+' || c == '-' || c == '.') && i + 1 < raw.size() &&
                       std::isdigit(static_cast<unsigned char>(raw[i + 1])));
        if (!starts) continue;
        double value = 0;
        std::size_t end = 0;
        if (!parse_number(i, value, end)) continue;
        std::size_t after = end;
        while (after < raw.size() && raw[after] == ' ') ++after;
        if (after < raw.size() && raw[after] == '%') {
            value /= 100.0;
        } else if (after < raw.size() && raw[after] == '/') {
            ++after;
            while (after < raw.size() && raw[after] == ' ') ++after;
            double denom = 0;
            std::size_t denom_end = 0;
            if (parse_number(after, denom, denom_end) && denom != 0.0) value /= denom;
        }
        return std::clamp(value, 0.0, 1.0);
    }
    throw ScoreParseError("no number found in \"" + raw + "\"");
}

// -- scorers ------------------------------------------------------------------------

/// dot(a,b) / (|a||b|), with negatives clamped to 0 so the score stays in [0,1].
inline Score cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty() || b.empty() || a.size() != b.size())
        throw DimensionMismatch("vectors must have equal nonzero dimensions (" +
                                std::to_string(a.size()) + " vs " + std::to_string(b.size()) +
                                ")");
    double dot = 0, na = 0, nb = 0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        dot += a[i] * b[i];
        na += a[i] * a[i];
        nb += b[i] * b[i];
    }
    if (na == 0.0 || nb == 0.0) throw ZeroVector("cosine similarity of an all-zero vector");
    return {std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), 0.0, 1.0), Scorer::cosine};
}

inline ChatRequest build_judge_request(const std::string& r, const std::string& r1) {
    ChatRequest request;
    request.messages = {system_message(kJudgeSystemPrompt),
                        user_message(prompts::judge_user_content(r, r1))};
    request.temperature = 0.0;
    return request;
}

/// Asks the judge model to rate semantic equivalence of r and r1 on [0,1].
inline Score llm_similarity_score(const ChatClient& judge, const std::string& r,
                                  const std::string& r1, CallCounter& calls) {
    if (r.empty() || r1.empty())
        throw ValidationError("texts to compare must be nonempty", "r");
    ChatResponse reply = judge.complete(build_judge_request(r, r1), calls);
    return {parse_score(reply.content), Scorer::llm};
}

}  // namespace rtc
