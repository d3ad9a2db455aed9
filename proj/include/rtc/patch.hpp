#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "rtc/core.hpp"
#include "rtc/similarity.hpp"

namespace rtc {

/// A before/after pair of code. Multi-file patches are carried as one document
/// with "=== path ===" marker lines separating files (see concat_documents).
struct Patch {
    std::string before_code;
    std::optional<std::string> after_code;
    std::optional<std::string> path;
    std::optional<std::string> language_tag;

    bool operator==(const Patch&) const = default;
};

enum class PatchMode { patch_input, patch_output };

inline std::string to_string(PatchMode mode) {
    return mode == PatchMode::patch_input ? "patch_input" : "patch_output";
}

/// Joins multiple files into the single-document form used for patches.
inline std::string concat_documents(
    const std::vector<std::pair<std::string, std::string>>& files) {
    std::string out;
    for (const auto& [path, content] : files) {
        if (!out.empty()) out += '\n';
        out += "=== " + path + " ===\n" + content;
    }
    return out;
}

namespace prompts {

/// Generation/regeneration user content: the query followed by the embedded
/// code sections. before_code is always present; after_code only for tasks that
/// take a patch as input.
inline std::string patch_user_content(const std::string& q, const std::string& before_code,
                                      const std::optional<std::string>& after_code) {
    std::string content = q + "\n\n" + section("Before code", before_code);
    if (after_code) content += "\n\n" + section("After code", *after_code);
    return content;
}

inline std::string patch_inversion_content(const std::string& q,
                                           const std::string& before_code,
                                           const std::optional<std::string>& after_code,
                                           const std::string& r) {
    std::string content = section("Original query", q) + "\n\n" +
                          section("Before code", before_code);
    if (after_code) content += "\n\n" + section("After code", *after_code);
    content += "\n\n" + section("Response", r);
    return content;
}

}  // namespace prompts

/// Case 1, patch as input: the patch rides along in every prompt of the loop
/// and R vs R1 are scored with the configured similarity (llm or cosine).
inline RoundTripTrace evaluate_patch_input(const ChatClient& model, const RtcConfig& cfg,
                                           const std::string& q, const Patch& patch,
                                           const ChatClient* judge = nullptr) {
    if (patch.before_code.empty())
        throw ValidationError("before_code must be nonempty", "patch.before_code");
    if (!patch.after_code)
        throw ValidationError("patch-as-input tasks require after_code", "patch.after_code");
    auto owned_judge = resolve_judge(cfg, judge);

    StepBuilders steps;
    steps.generation = [&](const std::string& q_) {
        ChatRequest request;
        request.messages = {
            user_message(prompts::patch_user_content(q_, patch.before_code, patch.after_code))};
        request.temperature = 0.0;
        return request;
    };
    steps.inversion = [&](const std::string& q_, const std::string& r) {
        ChatRequest request;
        request.messages = {system_message(kInversionSystemPrompt),
                            user_message(prompts::patch_inversion_content(
                                q_, patch.before_code, patch.after_code, r))};
        request.temperature = 0.0;
        return request;
    };
    steps.regeneration = [&](const std::string& q1) {
        ChatRequest request;
        request.messages = {
            user_message(prompts::patch_user_content(q1, patch.before_code, patch.after_code))};
        request.temperature = 0.0;
        return request;
    };
    steps.score = make_similarity_fn(cfg, model, judge);
    return run_round_trip(model, cfg, q, steps);
}

/// Case 2, patch as output: the model generates after_code from (q, before_code),
/// the loop regenerates after_code1 from (q1, before_code), and the score is an
/// exact match of the two extracted code blocks. The verdict is pass exactly
/// when they match; the configured threshold plays no role here.
inline RoundTripTrace evaluate_patch_output(const ChatClient& model, const RtcConfig& cfg,
                                            const std::string& q,
                                            const std::string& before_code) {
    if (before_code.empty())
        throw ValidationError("before_code must be nonempty", "before_code");

    StepBuilders steps;
    steps.generation = [&](const std::string& q_) {
        ChatRequest request;
        request.messages = {
            user_message(prompts::patch_user_content(q_, before_code, std::nullopt))};
        request.temperature = 0.0;
        return request;
    };
    steps.inversion = [&](const std::string& q_, const std::string& r) {
        ChatRequest request;
        request.messages = {
            system_message(kInversionSystemPrompt),
            user_message(prompts::patch_inversion_content(
                q_, before_code, extract_code_block(r), r))};
        request.temperature = 0.0;
        return request;
    };
    steps.regeneration = [&](const std::string& q1) {
        ChatRequest request;
        request.messages = {
            user_message(prompts::patch_user_content(q1, before_code, std::nullopt))};
        request.temperature = 0.0;
        return request;
    };
    steps.score = [](const std::string& r, const std::string& r1, CallCounter&) {
        return exact_match(extract_code_block(r), extract_code_block(r1)).value;
    };
    steps.verdict = [](double score) {
        return score == 1.0 ? Verdict::pass : Verdict::fail;
    };
    return run_round_trip(model, cfg, q, steps);
}

}  // namespace rtc
