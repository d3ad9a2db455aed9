#pragma once

#include <algorithm>
#include <atomic>
#include <fstream>
#include <optional>
#include <map>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "rtc/core.hpp"
#include "rtc/oracle.hpp"
#include "rtc/patch.hpp"
#include "rtc/stats.hpp"

namespace rtc {

enum class TaskMode { freeform, patch_input, patch_output };

inline std::string to_string(TaskMode mode) {
    switch (mode) {
        case TaskMode::freeform: return "freeform";
        case TaskMode::patch_input: return "patch_input";
        case TaskMode::patch_output: return "patch_output";
    }
    return "freeform";
}

inline TaskMode task_mode_from_string(const std::string& s) {
    if (s == "freeform") return TaskMode::freeform;
    if (s == "patch_input") return TaskMode::patch_input;
    if (s == "patch_output") return TaskMode::patch_output;
    throw ValidationError("unknown mode \"" + s + "\"", "mode");
}

/// One dataset row.
struct TaskCase {
    std::string id;
    TaskMode mode = TaskMode::freeform;
    std::string query;
    std::optional<Patch> patch;
    std::optional<OracleSpec> oracle;
    std::vector<std::string> tags;
};

inline void validate(const TaskCase& task) {
    if (task.id.empty()) throw ValidationError("id must be nonempty", "id");
    if (task.query.empty()) throw ValidationError("query must be nonempty", "query");
    if (task.mode == TaskMode::freeform) {
        if (task.patch) throw ValidationError("freeform cases must not carry a patch", "patch");
        if (task.oracle)
            throw ValidationError("oracles require patch code to scan", "oracle");
    } else {
        if (!task.patch) throw ValidationError("patch cases require a patch", "patch");
        if (task.patch->before_code.empty())
            throw ValidationError("before_code must be nonempty", "patch.before_code");
        if (task.mode == TaskMode::patch_input && !task.patch->after_code)
            throw ValidationError("patch_input cases require after_code", "patch.after_code");
        // A case that provides after_code AND claims to produce one is claiming
        // both patchflow shapes at once.
        if (task.mode == TaskMode::patch_output && task.patch->after_code)
            throw ValidationError("patch_output cases must not carry after_code",
                                  "patch.after_code");
    }
    if (task.oracle) validate(*task.oracle);
}

// -- dataset ------------------------------------------------------------------------

inline TaskCase task_from_json(const json& j) {
    TaskCase task;
    task.id = j.value("id", "");
    task.mode = task_mode_from_string(j.value("mode", "freeform"));
    task.query = j.value("query", "");
    if (j.contains("patch") && !j["patch"].is_null()) {
        const json& p = j["patch"];
        Patch patch;
        patch.before_code = p.value("before_code", "");
        if (p.contains("after_code") && !p["after_code"].is_null())
            patch.after_code = p["after_code"].get<std::string>();
        if (p.contains("path") && !p["path"].is_null())
            patch.path = p["path"].get<std::string>();
        if (p.contains("language") && !p["language"].is_null())
            patch.language_tag = p["language"].get<std::string>();
        task.patch = std::move(patch);
    }
    if (j.contains("oracle") && !j["oracle"].is_null()) {
        OracleSpec oracle;
        oracle.command = j["oracle"].value("command", "");
        oracle.timeout = std::chrono::milliseconds(j["oracle"].value("timeout_ms", 10000));
        task.oracle = std::move(oracle);
    }
    if (j.contains("tags")) task.tags = j["tags"].get<std::vector<std::string>>();
    validate(task);
    return task;
}

inline json to_json(const TaskCase& task) {
    json j{{"id", task.id}, {"mode", to_string(task.mode)}, {"query", task.query}};
    if (task.patch) {
        json p{{"before_code", task.patch->before_code}};
        if (task.patch->after_code) p["after_code"] = *task.patch->after_code;
        if (task.patch->path) p["path"] = *task.patch->path;
        if (task.patch->language_tag) p["language"] = *task.patch->language_tag;
        j["patch"] = std::move(p);
    }
    if (task.oracle)
        j["oracle"] = {{"command", task.oracle->command},
                       {"timeout_ms", task.oracle->timeout.count()}};
    if (!task.tags.empty()) j["tags"] = task.tags;
    return j;
}

/// Loads a JSONL dataset: one case object per line, blank lines ignored.
/// Parse failures carry the line number; duplicate ids are rejected.
inline std::vector<TaskCase> load_dataset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset " + path);
    std::vector<TaskCase> cases;
    std::set<std::string> seen_ids;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ParseError("invalid JSON", line_no);
        TaskCase task;
        try {
            task = task_from_json(j);
        } catch (const ValidationError& e) {
            throw ValidationError(std::string(e.what()) + " (line " +
                                  std::to_string(line_no) + ")", e.field());
        }
        if (!seen_ids.insert(task.id).second)
            throw ValidationError("duplicate id \"" + task.id + "\" (line " +
                                  std::to_string(line_no) + ")", "id");
        cases.push_back(std::move(task));
    }
    return cases;
}

// -- per-case results ------------------------------------------------------------------

struct CaseError {
    std::string step;  // RTC step name, or "setup"
    std::string message;

    bool operator==(const CaseError&) const = default;
};

struct CaseResult {
    std::string id;
    TaskMode mode = TaskMode::freeform;
    std::vector<std::string> tags;
    std::optional<RoundTripTrace> trace;
    std::optional<RoundTripTrace> partial_trace;  // populated when error is set
    std::optional<CaseError> error;
    std::optional<OracleResult> oracle;
    std::optional<std::string> oracle_error;
    std::optional<double> fix_pct;  // absent (flagged) when defects_before == 0
};

/// Aggregated results of one dataset run.
struct EvalReport {
    json config_snapshot = json::object();
    std::vector<CaseResult> cases;
    int cases_total = 0;
    int cases_evaluated = 0;  // errored cases are excluded from pass_rate's denominator
    int cases_errored = 0;
    int cases_passed = 0;
    double pass_rate = 0.0;
    std::optional<double> fix_pct_overall;
    std::optional<double> fix_pct_rtc_pass;
    std::optional<double> fix_pct_rtc_fail;
    std::int64_t total_model_calls = 0;
    std::int64_t total_embed_calls = 0;
};

struct FixRateSplit {
    std::optional<double> fix_pct_rtc_pass;
    std::optional<double> fix_pct_rtc_fail;
};

/// Fix% pooled over defect counts within each verdict group (sum of befores,
/// sum of afters), the same vulnerability-level arithmetic as an oracle table.
/// A group with no counted cases yields an absent value, not 0. Cases with
/// zero defects before are excluded (they are flagged per case instead).
inline FixRateSplit split_fix_rates(const EvalReport& report) {
    std::int64_t before[2] = {0, 0}, after[2] = {0, 0};
    bool any[2] = {false, false};
    for (const auto& c : report.cases) {
        if (!c.trace || !c.oracle || c.oracle->defects_before == 0) continue;
        int g = c.trace->verdict == Verdict::pass ? 0 : 1;
        before[g] += c.oracle->defects_before;
        after[g] += c.oracle->defects_after;
        any[g] = true;
    }
    FixRateSplit split;
    if (any[0]) split.fix_pct_rtc_pass = fix_percentage(before[0], after[0]);
    if (any[1]) split.fix_pct_rtc_fail = fix_percentage(before[1], after[1]);
    return split;
}

// -- the batch runner --------------------------------------------------------------------

struct EvalOptions {
    RtcConfig rtc;
    int parallelism = 1;
};

namespace detail {

inline void evaluate_case(const TaskCase& task, const ChatClient& model,
                          const RtcConfig& cfg, const ChatClient* judge, CaseResult& out) {
    out.id = task.id;
    out.mode = task.mode;
    out.tags = task.tags;
    try {
        switch (task.mode) {
            case TaskMode::freeform:
                out.trace = evaluate_round_trip(model, cfg, task.query, judge);
                break;
            case TaskMode::patch_input:
                out.trace = evaluate_patch_input(model, cfg, task.query, *task.patch, judge);
                break;
            case TaskMode::patch_output:
                out.trace =
                    evaluate_patch_output(model, cfg, task.query, task.patch->before_code);
                break;
        }
    } catch (const StepError& e) {
        out.error = CaseError{to_string(e.step()), e.cause()};
        out.partial_trace = e.partial_trace();
        return;
    } catch (const RtcError& e) {
        out.error = CaseError{"setup", e.what()};
        return;
    }
    if (!task.oracle) return;
    const std::string& before = task.patch->before_code;
    const std::string after = task.mode == TaskMode::patch_input
                                  ? *task.patch->after_code
                                  : extract_code_block(out.trace->r);
    try {
        out.oracle = run_oracle(*task.oracle, before, after);
        try {
            out.fix_pct = fix_percentage(out.oracle->defects_before, out.oracle->defects_after);
        } catch (const DivisionByZero&) {
            // flagged: fix_pct stays absent, case excluded from pooled aggregates
        }
    } catch (const RtcError& e) {
        out.oracle_error = e.what();
    }
}

}  // namespace detail

/// Evaluates every case once with the mode-appropriate loop. Per-case failures
/// are recorded and never abort the batch. Cases run under a parallelism bound;
/// aggregation is a single-threaded reduction afterwards.
inline EvalReport run_eval(const std::vector<TaskCase>& dataset, const ChatClient& model,
                           const EvalOptions& options, const ChatClient* judge = nullptr) {
    validate(options.rtc);
    if (dataset.empty()) throw ConfigError("dataset is empty");
    if (options.parallelism < 1) throw ConfigError("parallelism must be >= 1");

    EvalReport report;
    report.config_snapshot = {{"threshold", options.rtc.threshold},
                              {"scorer", to_string(options.rtc.scorer)},
                              {"consistency_prompt", options.rtc.inject_consistency_prompt},
                              {"parallelism", options.parallelism}};
    report.cases.resize(dataset.size());
    report.cases_total = static_cast<int>(dataset.size());

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        while (true) {
            std::size_t i = next.fetch_add(1);
            if (i >= dataset.size()) return;
            detail::evaluate_case(dataset[i], model, options.rtc, judge, report.cases[i]);
        }
    };
    const int threads =
        std::min<int>(options.parallelism, static_cast<int>(dataset.size()));
    if (threads <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(threads));
        for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    std::int64_t pooled_before = 0, pooled_after = 0;
    bool any_oracle = false;
    for (const auto& c : report.cases) {
        if (c.error) {
            ++report.cases_errored;
            if (c.partial_trace) {
                report.total_model_calls += c.partial_trace->model_calls;
                report.total_embed_calls += c.partial_trace->embed_calls;
            }
            continue;
        }
        ++report.cases_evaluated;
        report.total_model_calls += c.trace->model_calls;
        report.total_embed_calls += c.trace->embed_calls;
        if (c.trace->verdict == Verdict::pass) ++report.cases_passed;
        if (c.oracle && c.oracle->defects_before > 0) {
            pooled_before += c.oracle->defects_before;
            pooled_after += c.oracle->defects_after;
            any_oracle = true;
        }
    }
    report.pass_rate = report.cases_evaluated == 0
                           ? 0.0
                           : static_cast<double>(report.cases_passed) /
                                 static_cast<double>(report.cases_evaluated);
    if (any_oracle) report.fix_pct_overall = fix_percentage(pooled_before, pooled_after);
    FixRateSplit split = split_fix_rates(report);
    report.fix_pct_rtc_pass = split.fix_pct_rtc_pass;
    report.fix_pct_rtc_fail = split.fix_pct_rtc_fail;
    return report;
}

// -- report serialization ---------------------------------------------------------------

inline json to_json(const CaseResult& c) {
    json j{{"id", c.id}, {"mode", to_string(c.mode)}, {"tags", c.tags}};
    if (c.trace) j["trace"] = to_json(*c.trace);
    if (c.partial_trace) j["partial_trace"] = to_json(*c.partial_trace);
    if (c.error) j["error"] = {{"step", c.error->step}, {"message", c.error->message}};
    if (c.oracle)
        j["oracle"] = {{"defects_before", c.oracle->defects_before},
                       {"defects_after", c.oracle->defects_after}};
    if (c.oracle_error) j["oracle_error"] = *c.oracle_error;
    if (c.fix_pct) j["fix_pct"] = *c.fix_pct;
    return j;
}

inline json to_json(const EvalReport& report) {
    json cases = json::array();
    for (const auto& c : report.cases) cases.push_back(to_json(c));
    json j{{"config", report.config_snapshot},
           {"cases", std::move(cases)},
           {"aggregates",
            {{"cases_total", report.cases_total},
             {"cases_evaluated", report.cases_evaluated},
             {"cases_errored", report.cases_errored},
             {"cases_passed", report.cases_passed},
             {"pass_rate", report.pass_rate},
             {"total_model_calls", report.total_model_calls},
             {"total_embed_calls", report.total_embed_calls}}}};
    auto& agg = j["aggregates"];
    if (report.fix_pct_overall) agg["fix_pct_overall"] = *report.fix_pct_overall;
    if (report.fix_pct_rtc_pass) agg["fix_pct_rtc_pass"] = *report.fix_pct_rtc_pass;
    if (report.fix_pct_rtc_fail) agg["fix_pct_rtc_fail"] = *report.fix_pct_rtc_fail;
    return j;
}

inline EvalReport report_from_json(const json& j) {
    EvalReport report;
    report.config_snapshot = j.value("config", json::object());
    for (const json& cj : j.value("cases", json::array())) {
        CaseResult c;
        c.id = cj.value("id", "");
        c.mode = task_mode_from_string(cj.value("mode", "freeform"));
        if (cj.contains("tags")) c.tags = cj["tags"].get<std::vector<std::string>>();
        if (cj.contains("trace")) c.trace = trace_from_json(cj["trace"]);
        if (cj.contains("partial_trace")) c.partial_trace = trace_from_json(cj["partial_trace"]);
        if (cj.contains("error"))
            c.error = CaseError{cj["error"].value("step", ""), cj["error"].value("message", "")};
        if (cj.contains("oracle"))
            c.oracle = OracleResult{cj["oracle"].value("defects_before", std::int64_t{0}),
                                    cj["oracle"].value("defects_after", std::int64_t{0})};
        if (cj.contains("oracle_error")) c.oracle_error = cj["oracle_error"].get<std::string>();
        if (cj.contains("fix_pct")) c.fix_pct = cj["fix_pct"].get<double>();
        report.cases.push_back(std::move(c));
    }
    const json& agg = j.at("aggregates");
    report.cases_total = agg.value("cases_total", 0);
    report.cases_evaluated = agg.value("cases_evaluated", 0);
    report.cases_errored = agg.value("cases_errored", 0);
    report.cases_passed = agg.value("cases_passed", 0);
    report.pass_rate = agg.value("pass_rate", 0.0);
    if (agg.contains("fix_pct_overall"))
        report.fix_pct_overall = agg["fix_pct_overall"].get<double>();
    if (agg.contains("fix_pct_rtc_pass"))
        report.fix_pct_rtc_pass = agg["fix_pct_rtc_pass"].get<double>();
    if (agg.contains("fix_pct_rtc_fail"))
        report.fix_pct_rtc_fail = agg["fix_pct_rtc_fail"].get<double>();
    report.total_model_calls = agg.value("total_model_calls", std::int64_t{0});
    report.total_embed_calls = agg.value("total_embed_calls", std::int64_t{0});
    return report;
}

enum class ReportFormat { json, csv, markdown };

inline ReportFormat report_format_from_string(const std::string& s) {
    if (s == "json") return ReportFormat::json;
    if (s == "csv") return ReportFormat::csv;
    if (s == "markdown" || s == "md") return ReportFormat::markdown;
    throw ConfigError("unknown report format \"" + s + "\"");
}

namespace detail {

inline std::string csv_escape(const std::string& field) {
    if (field.find_first_of(",\"\n") == std::string::npos) return field;
    std::string out = "\"";
    for (char c : field) {
        if (c == '"') out += '"';
        out += c;
    }
    out += '"';
    return out;
}

inline std::string format_pct(std::optional<double> value) {
    if (!value) return "-";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.1f", *value * 100.0);
    return buf;
}

}  // namespace detail

inline std::string report_to_csv(const EvalReport& report) {
    std::string out = "id,mode,tags,score,verdict,defects_before,defects_after,fix_pct,error\n";
    for (const auto& c : report.cases) {
        std::string tags;
        for (const auto& t : c.tags) tags += (tags.empty() ? "" : ";") + t;
        out += detail::csv_escape(c.id) + ',' + to_string(c.mode) + ',' +
               detail::csv_escape(tags) + ',';
        out += c.trace ? std::to_string(c.trace->score) : "";
        out += ',';
        out += c.trace ? to_string(c.trace->verdict) : "";
        out += ',';
        out += c.oracle ? std::to_string(c.oracle->defects_before) : "";
        out += ',';
        out += c.oracle ? std::to_string(c.oracle->defects_after) : "";
        out += ',';
        out += c.fix_pct ? std::to_string(*c.fix_pct) : "";
        out += ',';
        out += c.error ? detail::csv_escape(c.error->step + ": " + c.error->message) : "";
        out += '\n';
    }
    return out;
}

/// Markdown report: overall aggregates followed by one table row per tag group
/// (first tag wins; untagged cases group under "untagged").
inline std::string report_to_markdown(const EvalReport& report) {
    std::string out = "# Evaluation report\n\n";
    out += "- cases: " + std::to_string(report.cases_total) + " (" +
           std::to_string(report.cases_evaluated) + " evaluated, " +
           std::to_string(report.cases_errored) + " errored)\n";
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4f", report.pass_rate);
    out += "- pass rate: " + std::string(buf) + "\n";
    out += "- model calls: " + std::to_string(report.total_model_calls) +
           " (embeddings: " + std::to_string(report.total_embed_calls) + ")\n";
    if (report.fix_pct_overall)
        out += "- fix% overall: " + detail::format_pct(report.fix_pct_overall) + "\n";
    if (report.fix_pct_rtc_pass || report.fix_pct_rtc_fail) {
        out += "- fix% (RTC pass / RTC fail): " + detail::format_pct(report.fix_pct_rtc_pass) +
               " / " + detail::format_pct(report.fix_pct_rtc_fail) + "\n";
        if (report.fix_pct_rtc_pass && report.fix_pct_rtc_fail &&
            *report.fix_pct_rtc_fail != 0.0) {
            Improvement delta = relative_improvement(*report.fix_pct_rtc_fail * 100.0,
                                                     *report.fix_pct_rtc_pass * 100.0);
            std::snprintf(buf, sizeof buf, "%+.1f points, %+.1f%% relative", delta.absolute,
                          delta.relative_pct);
            out += "- pass-group delta vs fail group: " + std::string(buf) + "\n";
        }
    }
    out += "\n| tag | cases | errors | pass rate | fix% |\n";
    out += "|-----|-------|--------|-----------|------|\n";
    std::map<std::string, std::vector<const CaseResult*>> groups;
    for (const auto& c : report.cases)
        groups[c.tags.empty() ? "untagged" : c.tags.front()].push_back(&c);
    for (const auto& [tag, cases] : groups) {
        int evaluated = 0, passed = 0, errored = 0;
        std::int64_t before = 0, after = 0;
        bool any_oracle = false;
        for (const CaseResult* c : cases) {
            if (c->error) {
                ++errored;
                continue;
            }
            ++evaluated;
            if (c->trace->verdict == Verdict::pass) ++passed;
            if (c->oracle && c->oracle->defects_before > 0) {
                before += c->oracle->defects_before;
                after += c->oracle->defects_after;
                any_oracle = true;
            }
        }
        std::snprintf(buf, sizeof buf, "%.4f",
                      evaluated == 0 ? 0.0 : static_cast<double>(passed) / evaluated);
        out += "| " + tag + " | " + std::to_string(cases.size()) + " | " +
               std::to_string(errored) + " | " + buf + " | " +
               detail::format_pct(any_oracle
                                      ? std::optional<double>(fix_percentage(before, after))
                                      : std::nullopt) +
               " |\n";
    }
    return out;
}

/// Writes the report in the requested format. JSON is lossless and can be read
/// back with report_from_json.
inline void write_report(const EvalReport& report, ReportFormat format,
                         const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write report to " + path);
    switch (format) {
        case ReportFormat::json: out << to_json(report).dump(2) << '\n'; break;
        case ReportFormat::csv: out << report_to_csv(report); break;
        case ReportFormat::markdown: out << report_to_markdown(report); break;
    }
    if (!out) throw IoError("write failed for " + path);
}

}  // namespace rtc
