// rtc: round-trip-correctness evaluation for LLM responses.
//
//   rtc run        batch-evaluate a JSONL dataset and write a report
//   rtc serve      OpenAI-compatible gateway with an RTC-gated route
//   rtc score      one-shot similarity between two files
//   rtc correlate  Pearson correlation between two CSV columns
//
// Exit codes: 0 success, 1 configuration error, 2 I/O error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "rtc/rtc.hpp"

namespace {

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw rtc::IoError("cannot open " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

struct RunFlags {
    std::string dataset_path;
    std::string config_path;
    std::optional<double> threshold;
    std::optional<std::string> scorer;
    bool consistency_prompt = false;
    std::optional<int> parallelism;
    std::string out_path;
    std::string format = "json";
};

rtc::Settings resolve_settings(const std::string& config_path) {
    rtc::Settings settings;
    if (!config_path.empty()) rtc::apply_config(settings, rtc::parse_config_file(config_path));
    return settings;
}

int cmd_run(const RunFlags& flags) {
    rtc::Settings settings = resolve_settings(flags.config_path);
    if (flags.threshold) {
        if (*flags.threshold < 0.0 || *flags.threshold > 1.0)
            throw rtc::ConfigError("--threshold must be in [0,1], got " +
                                   std::to_string(*flags.threshold));
        settings.threshold = *flags.threshold;
    }
    if (flags.scorer) settings.scorer = rtc::scorer_from_string(*flags.scorer);
    if (flags.consistency_prompt) settings.consistency_prompt = true;
    if (flags.parallelism) {
        if (*flags.parallelism < 1)
            throw rtc::ConfigError("--parallelism must be >= 1");
        settings.parallelism = *flags.parallelism;
    }

    rtc::ReportFormat format = rtc::report_format_from_string(flags.format);
    std::string out_path = flags.out_path;
    if (out_path.empty())
        out_path = format == rtc::ReportFormat::json
                       ? "report.json"
                       : (format == rtc::ReportFormat::csv ? "report.csv" : "report.md");

    std::vector<rtc::TaskCase> dataset = rtc::load_dataset(flags.dataset_path);
    rtc::Backend backend = rtc::make_backend(settings);
    rtc::EvalOptions options{settings.rtc_config(), settings.parallelism};
    rtc::EvalReport report =
        rtc::run_eval(dataset, backend.client(), options, backend.judge_client());
    rtc::write_report(report, format, out_path);

    std::printf("cases: %d (evaluated %d, errored %d)\n", report.cases_total,
                report.cases_evaluated, report.cases_errored);
    std::printf("pass_rate: %.4f\n", report.pass_rate);
    if (report.fix_pct_overall) std::printf("fix_pct_overall: %.4f\n", *report.fix_pct_overall);
    if (report.fix_pct_rtc_pass)
        std::printf("fix_pct_rtc_pass: %.4f\n", *report.fix_pct_rtc_pass);
    if (report.fix_pct_rtc_fail)
        std::printf("fix_pct_rtc_fail: %.4f\n", *report.fix_pct_rtc_fail);
    std::printf("model_calls: %lld\n", static_cast<long long>(report.total_model_calls));
    std::printf("report: %s\n", out_path.c_str());
    return 0;
}

int cmd_serve(const std::string& config_path) {
    rtc::Settings settings = resolve_settings(config_path);
    rtc::Backend backend = rtc::make_backend(settings);
    rtc::Gateway gateway(backend.client(), settings.gateway_config(),
                         backend.judge_client());
    std::printf("listening on %s:%d (routes: /v1/chat/completions, "
                "/evaluate/v1/chat/completions)\n",
                settings.listen_host.c_str(), settings.listen_port);
    std::fflush(stdout);
    if (!gateway.run())
        throw rtc::ConfigError("cannot bind " + settings.listen_host + ":" +
                               std::to_string(settings.listen_port));
    return 0;
}

int cmd_score(const std::string& a_path, const std::string& b_path,
              const std::string& scorer_name, const std::string& config_path) {
    rtc::Settings settings = resolve_settings(config_path);
    settings.scorer = rtc::scorer_from_string(scorer_name);
    std::string a = read_file(a_path);
    std::string b = read_file(b_path);
    double score = 0.0;
    rtc::CallCounter calls;
    switch (settings.scorer) {
        case rtc::Scorer::exact:
            score = rtc::exact_match(a, b).value;
            break;
        case rtc::Scorer::cosine: {
            rtc::Backend backend = rtc::make_backend(settings);
            score = rtc::cosine_similarity(backend.client().embed(a, calls),
                                           backend.client().embed(b, calls))
                        .value;
            break;
        }
        case rtc::Scorer::llm: {
            rtc::Backend backend = rtc::make_backend(settings);
            score = rtc::llm_similarity_score(backend.client(), a, b, calls).value;
            break;
        }
    }
    std::printf("%.4f\n", score);
    return 0;
}

int cmd_correlate(const std::string& csv_path, const std::string& x_col,
                  const std::string& y_col) {
    std::ifstream in(csv_path);
    if (!in) throw rtc::IoError("cannot open " + csv_path);
    auto split = [](const std::string& line) {
        std::vector<std::string> fields;
        std::string field;
        std::istringstream row(line);
        while (std::getline(row, field, ',')) fields.push_back(field);
        return fields;
    };
    std::string line;
    if (!std::getline(in, line)) throw rtc::ParseError("empty CSV", 1);
    auto header = split(line);
    auto find_col = [&](const std::string& name) {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return i;
        throw rtc::ConfigError("CSV has no column \"" + name + "\"");
    };
    std::size_t xi = find_col(x_col), yi = find_col(y_col);
    std::vector<double> xs, ys;
    int line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        auto fields = split(line);
        if (fields.size() <= std::max(xi, yi))
            throw rtc::ParseError("row has too few columns", line_no);
        try {
            xs.push_back(std::stod(fields[xi]));
            ys.push_back(std::stod(fields[yi]));
        } catch (const std::exception&) {
            throw rtc::ParseError("non-numeric value", line_no);
        }
    }
    std::printf("%.4f\n", rtc::pearson(xs, ys));
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"round-trip-correctness evaluation for LLM responses"};
    app.require_subcommand(1);

    RunFlags run_flags;
    auto* run = app.add_subcommand("run", "evaluate a JSONL dataset and write a report");
    run->add_option("--dataset", run_flags.dataset_path, "JSONL dataset path")->required();
    run->add_option("--config", run_flags.config_path, "key = value config file");
    double threshold_value = 0.0;
    auto* threshold_opt =
        run->add_option("--threshold", threshold_value, "pass threshold in [0,1]");
    std::string scorer_value;
    auto* scorer_opt =
        run->add_option("--scorer", scorer_value, "similarity scorer: llm, cosine or exact");
    run->add_flag("--consistency-prompt", run_flags.consistency_prompt,
                  "prepend the consistency prompt to generation requests");
    int parallelism_value = 1;
    auto* parallelism_opt =
        run->add_option("--parallelism", parallelism_value, "concurrent cases");
    run->add_option("--out", run_flags.out_path, "report output path");
    run->add_option("--format", run_flags.format, "report format: json, csv or markdown");

    std::string serve_config;
    auto* serve = app.add_subcommand("serve", "start the OpenAI-compatible gateway");
    serve->add_option("--config", serve_config, "key = value config file")->required();

    std::string score_a, score_b, score_scorer = "exact", score_config;
    auto* score = app.add_subcommand("score", "similarity between two files");
    score->add_option("--a", score_a, "first file")->required();
    score->add_option("--b", score_b, "second file")->required();
    score->add_option("--scorer", score_scorer, "llm, cosine or exact");
    score->add_option("--config", score_config, "backend config for llm/cosine");

    std::string corr_csv, corr_x, corr_y;
    auto* correlate = app.add_subcommand("correlate", "Pearson r between two CSV columns");
    correlate->add_option("--csv", corr_csv, "CSV file with a header row")->required();
    correlate->add_option("--x", corr_x, "first column name")->required();
    correlate->add_option("--y", corr_y, "second column name")->required();

    try {
        app.parse(argc, argv);
        if (*threshold_opt) run_flags.threshold = threshold_value;
        if (*scorer_opt) run_flags.scorer = scorer_value;
        if (*parallelism_opt) run_flags.parallelism = parallelism_value;

        if (run->parsed()) return cmd_run(run_flags);
        if (serve->parsed()) return cmd_serve(serve_config);
        if (score->parsed()) return cmd_score(score_a, score_b, score_scorer, score_config);
        if (correlate->parsed()) return cmd_correlate(corr_csv, corr_x, corr_y);
        return 1;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const rtc::IoError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const rtc::ParseError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const rtc::ValidationError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    } catch (const rtc::RtcError& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
}
