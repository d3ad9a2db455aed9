#include <csignal>
#include <sys/wait.h>
#include <unistd.h>

#include <catch2/catch_amalgamated.hpp>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "support/test_util.hpp"

using nlohmann::json;
using testutil::run_command;

namespace {

std::string shellq(const std::string& s) { return "'" + s + "'"; }

std::string write_dataset(const testutil::TempDir& dir, int stable, int unstable) {
    std::string jsonl;
    for (int i = 0; i < stable; ++i)
        jsonl += json{{"id", "s" + std::to_string(i)},
                      {"mode", "freeform"},
                      {"query", "stable question " + std::to_string(i)}}
                     .dump() +
                 "\n";
    for (int i = 0; i < unstable; ++i)
        jsonl += json{{"id", "u" + std::to_string(i)},
                      {"mode", "freeform"},
                      {"query", "odd [[unstable]] question " + std::to_string(i)}}
                     .dump() +
                 "\n";
    return dir.write("cases.jsonl", jsonl);
}

json report_config(const std::string& report_path) {
    return json::parse(testutil::read_file(report_path))["config"];
}

}  // namespace

TEST_CASE("run evaluates a dataset and writes the report") {
    testutil::TempDir dir;
    std::string dataset = write_dataset(dir, 3, 1);
    std::string config = dir.write("rtc.conf", "backend = transform\nscorer = exact\n");
    std::string out = (dir.path() / "report.json").string();

    auto result = run_command(testutil::cli_path() + " run --dataset " + shellq(dataset) +
                              " --config " + shellq(config) + " --out " + shellq(out));
    INFO(result.output);
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("pass_rate: 0.7500") != std::string::npos);
    json report = json::parse(testutil::read_file(out));
    CHECK(report["aggregates"]["cases_total"] == 4);
}

TEST_CASE("run rejects an out-of-range threshold naming the flag") {
    testutil::TempDir dir;
    std::string dataset = write_dataset(dir, 1, 0);
    auto result = run_command(testutil::cli_path() + " run --dataset " + shellq(dataset) +
                              " --threshold 1.5");
    CHECK(result.exit_code == 1);
    CHECK(result.output.find("--threshold") != std::string::npos);
}

TEST_CASE("run exits 2 when the dataset is missing") {
    auto result = run_command(testutil::cli_path() + " run --dataset /does/not/exist.jsonl");
    CHECK(result.exit_code == 2);
}

TEST_CASE("flag > config file > built-in default precedence") {
    testutil::TempDir dir;
    std::string dataset = write_dataset(dir, 1, 0);
    std::string out = (dir.path() / "report.json").string();
    std::string base_cmd = testutil::cli_path() + " run --dataset " + shellq(dataset) +
                           " --out " + shellq(out);
    std::string config =
        dir.write("rtc.conf", "backend = transform\nscorer = exact\nthreshold = 0.6\n");

    // built-in default
    auto result = run_command(base_cmd);
    REQUIRE(result.exit_code == 0);
    CHECK(report_config(out)["threshold"] == 0.8);
    // config file overrides the default
    result = run_command(base_cmd + " --config " + shellq(config));
    REQUIRE(result.exit_code == 0);
    CHECK(report_config(out)["threshold"] == 0.6);
    // flag overrides the config file
    result = run_command(base_cmd + " --config " + shellq(config) + " --threshold 0.9");
    REQUIRE(result.exit_code == 0);
    CHECK(report_config(out)["threshold"] == 0.9);
}

TEST_CASE("the freeform preset raises the default threshold to 0.95") {
    testutil::TempDir dir;
    std::string dataset = write_dataset(dir, 1, 0);
    std::string out = (dir.path() / "report.json").string();
    std::string config =
        dir.write("rtc.conf", "backend = transform\nscorer = exact\npreset = freeform\n");
    auto result = run_command(testutil::cli_path() + " run --dataset " + shellq(dataset) +
                              " --config " + shellq(config) + " --out " + shellq(out));
    REQUIRE(result.exit_code == 0);
    CHECK(report_config(out)["threshold"] == 0.95);
}

TEST_CASE("the consistency flag changes only the generation system prompt") {
    testutil::TempDir dir;
    std::string dataset = write_dataset(dir, 1, 0);
    std::string plain_capture = (dir.path() / "plain.jsonl").string();
    std::string injected_capture = (dir.path() / "injected.jsonl").string();
    std::string out = (dir.path() / "report.json").string();

    auto run_with_capture = [&](const std::string& capture, const std::string& extra_flags) {
        std::string config = dir.write(
            "capture.conf",
            "backend = transform\nscorer = exact\ncapture_requests = " + capture + "\n");
        auto result = run_command(testutil::cli_path() + " run --dataset " + shellq(dataset) +
                                  " --config " + shellq(config) + " --out " + shellq(out) +
                                  extra_flags);
        REQUIRE(result.exit_code == 0);
    };
    run_with_capture(plain_capture, "");
    run_with_capture(injected_capture, " --consistency-prompt");

    std::istringstream plain(testutil::read_file(plain_capture));
    std::istringstream injected(testutil::read_file(injected_capture));
    std::string plain_line, injected_line;
    REQUIRE(std::getline(plain, plain_line));
    REQUIRE(std::getline(injected, injected_line));
    json without = json::parse(plain_line);
    json with = json::parse(injected_line);
    REQUIRE(with["messages"].size() == without["messages"].size() + 1);
    CHECK(with["messages"][0]["role"] == "system");
    std::string system_text = with["messages"][0]["content"];
    CHECK(system_text.rfind("Respond with clarity, consistency, and precision, maintaining a "
                            "structured format throughout.",
                            0) == 0);
    with["messages"].erase(0);
    CHECK(with.dump() == without.dump());
}

TEST_CASE("score prints 1.0 for identical files under the exact scorer") {
    testutil::TempDir dir;
    std::string a = dir.write("a.py", "def f():\n    return 1\n");
    std::string b = dir.write("b.py", "def f():\n    return 1\r\n\r\n");
    auto result = run_command(testutil::cli_path() + " score --a " + shellq(a) + " --b " +
                              shellq(b) + " --scorer exact");
    CHECK(result.exit_code == 0);
    CHECK(result.output.find("1.0000") != std::string::npos);
}

TEST_CASE("correlate reproduces the five-model Pearson value") {
    std::string csv = (testutil::fixtures_dir() / "models.csv").string();
    auto result = run_command(testutil::cli_path() + " correlate --csv " + shellq(csv) +
                              " --x rtc --y arena");
    REQUIRE(result.exit_code == 0);
    double r = std::stod(result.output);
    CHECK(r == Catch::Approx(0.81).margin(0.01));

    auto missing = run_command(testutil::cli_path() + " correlate --csv " + shellq(csv) +
                               " --x nope --y arena");
    CHECK(missing.exit_code == 1);
}

TEST_CASE("serve answers schema-valid bodies on the gated route") {
    testutil::TempDir dir;
    int port = 20000 + static_cast<int>(getpid() % 10000);
    std::string config = dir.write("gw.conf", "backend = transform\nscorer = exact\n"
                                              "listen_port = " +
                                                  std::to_string(port) + "\n");
    pid_t pid = fork();
    REQUIRE(pid >= 0);
    if (pid == 0) {
        std::string bin = testutil::cli_path();
        execl(bin.c_str(), bin.c_str(), "serve", "--config", config.c_str(),
              static_cast<char*>(nullptr));
        _exit(127);
    }
    httplib::Client http("127.0.0.1", port);
    http.set_connection_timeout(std::chrono::milliseconds(200));
    json body{{"model", "m"},
              {"messages", json::array({json{{"role", "user"}, {"content", "ping"}}})}};
    httplib::Result res;
    for (int attempt = 0; attempt < 50; ++attempt) {
        res = http.Post("/evaluate/v1/chat/completions", body.dump(), "application/json");
        if (res) break;
        usleep(100000);
    }
    kill(pid, SIGTERM);
    waitpid(pid, nullptr, 0);
    REQUIRE(res);
    CHECK(res->status == 200);
    std::string why;
    CHECK(testutil::is_valid_chat_completion(json::parse(res->body), &why));
    INFO(why);
}
