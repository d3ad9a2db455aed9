#pragma once

#include <cstdint>
#include <fstream>
#include <memory>
#include <string>
#include <vector>

#include "rtc/client.hpp"
#include "rtc/prompts.hpp"
#include "rtc/similarity.hpp"
#include "rtc/wire.hpp"

namespace rtc {

/// Deterministic offline stand-ins for a model backend.
///
///   echo      - replies with the last user message verbatim.
///   cassette  - replays recorded responses keyed by request hash.
///   transform - a self-invertible agent: it answers queries deterministically,
///               inverts its own answers into "REDO::<query>" form, and judges
///               equal texts as 1.0. Queries containing "[[unstable]]" get a
///               divergent answer on regeneration (and only a partial patch
///               fix), which makes the round trip fail on purpose.
///   corrupt   - echo with seeded character corruption at the given rate.
struct MockBehavior {
    enum class Kind { echo, cassette, transform, corrupt };

    MockBehavior() = default;
    MockBehavior(Kind k) : kind(k) {}

    Kind kind = Kind::echo;
    std::string cassette_path;   // cassette only
    double corrupt_rate = 1.0;   // corrupt only, in [0,1]
    std::uint64_t seed = 0;      // corrupt only
};

/// Marker that makes the transform agent regenerate inconsistently.
inline constexpr const char* kUnstableMarker = "[[unstable]]";

namespace detail {

inline std::uint64_t fnv1a64(std::string_view data, std::uint64_t h = 14695981039346656037ull) {
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

/// Splittable deterministic RNG (splitmix64).
inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace detail

/// Embedding rule shared by all mock kinds, documented so tests can recompute
/// it independently: a 32-bucket histogram where byte window [max(0,i-2)..i]
/// at every position i adds 1.0 to bucket fnv1a64(window) % 32.
inline std::vector<double> mock_embedding(const std::string& text) {
    if (text.empty()) throw ValidationError("text must be nonempty", "text");
    std::vector<double> v(32, 0.0);
    for (std::size_t i = 0; i < text.size(); ++i) {
        std::size_t from = i >= 2 ? i - 2 : 0;
        std::string_view window(text.data() + from, i - from + 1);
        v[detail::fnv1a64(window) % v.size()] += 1.0;
    }
    return v;
}

class MockChatClient : public ChatClient {
public:
    explicit MockChatClient(MockBehavior behavior) : behavior_(std::move(behavior)) {
        if (behavior_.corrupt_rate < 0.0 || behavior_.corrupt_rate > 1.0)
            throw ValidationError("corrupt rate must be in [0,1]", "corrupt_rate");
        if (behavior_.kind == MockBehavior::Kind::cassette) {
            std::ifstream in(behavior_.cassette_path);
            if (!in) throw IoError("cannot open cassette " + behavior_.cassette_path);
            cassette_ = json::parse(in, nullptr, false);
            if (cassette_.is_discarded() || !cassette_.is_object())
                throw ParseError("cassette must be a JSON object of {hash: response}");
        }
    }

    ChatResponse complete(const ChatRequest& request, CallCounter& calls) const override {
        validate(request);
        calls.chat.fetch_add(1, std::memory_order_relaxed);
        switch (behavior_.kind) {
            case MockBehavior::Kind::echo:
                return make_response(request.last_user_content(), request);
            case MockBehavior::Kind::cassette:
                return replay(request);
            case MockBehavior::Kind::transform:
                return make_response(transform_reply(request), request);
            case MockBehavior::Kind::corrupt:
                return make_response(corrupt(request.last_user_content(), request), request);
        }
        throw ProtocolError("unreachable mock kind");
    }

    std::vector<double> embed(const std::string& text, CallCounter& calls) const override {
        calls.embed.fetch_add(1, std::memory_order_relaxed);
        return mock_embedding(text);
    }

private:
    static ChatResponse make_response(std::string content, const ChatRequest& request) {
        ChatResponse response;
        response.usage.prompt_tokens = static_cast<std::int64_t>(
            canonical_request_json(request).size() / 4);
        response.usage.completion_tokens = static_cast<std::int64_t>(content.size() / 4);
        response.content = std::move(content);
        return response;
    }

    ChatResponse replay(const ChatRequest& request) const {
        const std::string key = request_hash(request);
        auto it = cassette_.find(key);
        if (it == cassette_.end())
            throw ProtocolError("cassette has no entry for request hash " + key);
        if (it->is_object() && it->contains("choices")) return response_from_wire_json(*it);
        if (it->is_object() && it->contains("content")) {
            ChatResponse response;
            response.content = (*it)["content"].get<std::string>();
            response.finish_reason =
                finish_reason_from_string(it->value("finish_reason", "stop"));
            return response;
        }
        if (it->is_string()) {
            ChatResponse response;
            response.content = it->get<std::string>();
            return response;
        }
        throw ProtocolError("cassette entry for " + key + " is neither a wire response nor "
                            "{\"content\": ...}");
    }

    // -- transform agent -------------------------------------------------------

    struct ParsedQuery {
        std::string q;
        std::vector<std::string> blocks;  // fenced code sections after the query text
        bool redo = false;
    };

    /// Splits a generation-style user message into the query text and any
    /// embedded code sections. Assumes fixture queries themselves carry no
    /// fenced blocks.
    static ParsedQuery parse_query(const std::string& content) {
        ParsedQuery parsed;
        auto marker = content.find("\n\nBefore code:");
        parsed.q = marker == std::string::npos ? content : content.substr(0, marker);
        if (marker != std::string::npos)
            parsed.blocks = detail::fenced_blocks(content.substr(marker));
        if (parsed.q.rfind("REDO::", 0) == 0) {
            parsed.redo = true;
            parsed.q.erase(0, 6);
        }
        return parsed;
    }

    static bool unstable(const std::string& q) {
        return q.find(kUnstableMarker) != std::string::npos;
    }

    /// Replaces occurrences of "eval(" with "sanitize(". `which` selects all (-1),
    /// only the first (0) or only the last (1) occurrence.
    static std::string fix_code(const std::string& code, int which) {
        static const std::string defect = "eval(";
        static const std::string repair = "sanitize(";
        std::vector<std::size_t> hits;
        for (auto pos = code.find(defect); pos != std::string::npos;
             pos = code.find(defect, pos + defect.size()))
            hits.push_back(pos);
        std::string out = code;
        if (hits.empty()) return out;
        auto apply = [&](std::size_t pos) { out.replace(pos, defect.size(), repair); };
        if (which == 0) {
            apply(hits.front());
        } else if (which == 1) {
            apply(hits.back());
        } else {
            for (auto it = hits.rbegin(); it != hits.rend(); ++it) apply(*it);
        }
        return out;
    }

    std::string transform_reply(const ChatRequest& request) const {
        const ChatMessage* sys = request.system();
        const std::string content = request.last_user_content();
        if (sys && sys->content.find(kInversionSystemPrompt) != std::string::npos) {
            // Invert: Q1 = "REDO::<original query>"; re-running it reproduces R.
            auto blocks = detail::fenced_blocks(content);
            return "REDO::" + (blocks.empty() ? content : blocks.front());
        }
        if (sys && sys->content.find(kJudgeSystemPrompt) != std::string::npos) {
            auto blocks = detail::fenced_blocks(content);
            if (blocks.size() >= 2)
                return normalize_code(blocks[0]) == normalize_code(blocks[1]) ? "1.0" : "0.0";
            return "0.0";
        }
        ParsedQuery parsed = parse_query(content);
        const bool diverge = parsed.redo && unstable(parsed.q);
        if (parsed.blocks.size() >= 2) {
            // Patch as input: a deterministic review of the diff.
            std::string review = "REVIEW[" + parsed.q + "|" +
                                 std::to_string(detail::fnv1a64(parsed.blocks[0] + "|" +
                                                                parsed.blocks[1]) %
                                                100000) +
                                 "]";
            return diverge ? review + " (alternate take)" : review;
        }
        if (parsed.blocks.size() == 1) {
            // Patch as output: emit a fixed version of the code. Unstable cases
            // repair only one defect, and a different one on regeneration.
            int which = unstable(parsed.q) ? (parsed.redo ? 1 : 0) : -1;
            return "Here is the updated code:\n```\n" + fix_code(parsed.blocks[0], which) +
                   "\n```";
        }
        std::string answer = "ANSWER[" + parsed.q + "]";
        return diverge ? answer + " (alternate take)" : answer;
    }

    // -- corruptor ---------------------------------------------------------------

    std::string corrupt(const std::string& text, const ChatRequest& request) const {
        std::uint64_t state =
            behavior_.seed ^ detail::fnv1a64(canonical_request_json(request));
        std::string out = text;
        for (char& c : out) {
            std::uint64_t roll = detail::splitmix64(state);
            if (behavior_.corrupt_rate >= 1.0 ||
                static_cast<double>(roll % 1000000) / 1000000.0 < behavior_.corrupt_rate) {
                char replacement = static_cast<char>('a' + (detail::splitmix64(state) % 26));
                if (replacement == c) replacement = replacement == 'z' ? 'a' : replacement + 1;
                c = replacement;
            }
        }
        return out;
    }

    MockBehavior behavior_;
    json cassette_ = json::object();
};

inline std::unique_ptr<ChatClient> make_mock_client(MockBehavior behavior) {
    return std::make_unique<MockChatClient>(std::move(behavior));
}

}  // namespace rtc
