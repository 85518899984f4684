#include <gtest/gtest.h>

#include <sstream>

#include <json.hpp>

#include "kcmf/cli.hpp"
#include "support.hpp"

namespace kcmf::cli {
namespace {

using testing::data_path;
using testing::read_file;
using testing::TempDir;

struct Result {
    int code;
    std::string out;
    std::string err;
};

Result run_cli(std::vector<std::string> args) {
    args.insert(args.begin(), "kcmf");
    std::vector<const char*> argv;
    for (const auto& a : args) argv.push_back(a.c_str());
    std::ostringstream out, err;
    const int code = run(static_cast<int>(argv.size()), argv.data(), out, err);
    return {code, out.str(), err.str()};
}

/// A private copy of the fixture tree, so caches and outputs stay isolated.
struct Workspace {
    TempDir dir;
    Workspace() { std::filesystem::copy(data_path(""), dir.path(), std::filesystem::copy_options::recursive); }
    std::string config() const { return (dir / "e2e/config.json").string(); }
    std::string mock() const { return (dir / "e2e/mock.jsonl").string(); }
    std::filesystem::path out() const { return dir / "e2e/out"; }
};

TEST(Cli, HelpAndUsageErrors) {
    const auto help = run_cli({"--help"});
    EXPECT_EQ(help.code, kOk);
    EXPECT_NE(help.out.find("match"), std::string::npos);
    EXPECT_EQ(run_cli({}).code, kConfigError);
    EXPECT_EQ(run_cli({"frobnicate"}).code, kConfigError);
    EXPECT_EQ(run_cli({"match", "--bogus"}).code, kConfigError);
    EXPECT_EQ(run_cli({"--workers", "0", "match"}).code, kConfigError);
    EXPECT_EQ(run_cli({"render"}).code, kConfigError);
}

TEST(Cli, ConfigErrors) {
    EXPECT_EQ(run_cli({"match"}).code, kConfigError);
    const auto missing = run_cli({"--config", "/nonexistent/config.json", "match"});
    EXPECT_EQ(missing.code, kConfigError);
    EXPECT_NE(missing.err.find("config error"), std::string::npos);
    Workspace ws;
    testing::write_file(ws.dir / "bad.json", "{ not json");
    EXPECT_EQ(run_cli({"--config", (ws.dir / "bad.json").string(), "match"}).code, kConfigError);
    EXPECT_EQ(run_cli({"--config", ws.config(), "--mock", (ws.dir / "nope.jsonl").string(), "match"}).code, kConfigError);
}

TEST(Cli, MatchReproducesTheAnswerKeyAtAnyWorkerCount) {
    Workspace ws;
    std::string log, report;
    for (const char* workers : {"1", "4", "16"}) {
        std::filesystem::remove_all(ws.out());
        std::filesystem::remove_all(ws.dir / "e2e/cache");
        const auto r = run_cli({"--config", ws.config(), "--mock", ws.mock(), "--workers", workers, "match"});
        ASSERT_EQ(r.code, kOk) << r.err;
        const auto this_log = read_file(ws.out() / "run_1.jsonl");
        const auto this_report = read_file(ws.out() / "report.json");
        if (log.empty()) {
            log = this_log;
            report = this_report;
        }
        EXPECT_EQ(this_log, log) << "workers " << workers;
        EXPECT_EQ(this_report, report) << "workers " << workers;
    }
    const auto j = nlohmann::json::parse(report);
    const auto& run = j.at("runs").at(0);
    EXPECT_EQ(run.at("tp"), 6);
    EXPECT_EQ(run.at("fp"), 2);
    EXPECT_EQ(run.at("fn"), 2);
    EXPECT_EQ(run.at("tn"), 10);
    EXPECT_DOUBLE_EQ(j.at("accuracy").get<double>(), 0.8);
    EXPECT_DOUBLE_EQ(j.at("f1").get<double>(), 0.75);
    EXPECT_EQ(j.at("audit").at("eliminated"), 3);
    EXPECT_EQ(j.at("audit").at("badly_formatted"), 2);
    EXPECT_EQ(j.at("audit").at("well_formatted"), 15);
    EXPECT_TRUE(std::filesystem::exists(ws.out() / "report.txt"));

    // eval re-scores the log it just wrote
    const auto ev = run_cli({"--config", ws.config(), "eval", "--log", (ws.out() / "run_1.jsonl").string()});
    ASSERT_EQ(ev.code, kOk) << ev.err;
    EXPECT_NE(ev.out.find("\"f1\": 0.75"), std::string::npos);

    // render reads knowledge from the cache that match filled and never calls a backend
    const auto pool = load_pool(ws.dir / "e2e/pool.jsonl", TaskKind::SM);
    const auto rr = run_cli({"--config", ws.config(), "render", "--pair", pool.pairs.front().id});
    ASSERT_EQ(rr.code, kOk) << rr.err;
    EXPECT_NE(rr.out.find("=== source: Null ==="), std::string::npos);
    EXPECT_NE(rr.out.find("=== source: EaK* ==="), std::string::npos);
    EXPECT_EQ(run_cli({"--config", ws.config(), "render", "--pair", "no-such-pair"}).code, kDataError);
}

TEST(Cli, UnscriptedPromptExhaustsTheBackend) {
    Workspace ws;
    testing::write_file(ws.dir / "e2e/empty.jsonl", "");
    const auto r = run_cli({"--config", ws.config(), "--mock", (ws.dir / "e2e/empty.jsonl").string(), "match"});
    EXPECT_EQ(r.code, kBackendError);
    EXPECT_NE(r.err.find("backend error"), std::string::npos);
}

TEST(Cli, DataErrors) {
    Workspace ws;
    testing::write_file(ws.dir / "e2e/pool.jsonl", "{\"id\": 1}\n");
    EXPECT_EQ(run_cli({"--config", ws.config(), "--mock", ws.mock(), "match"}).code, kDataError);
    testing::write_file(ws.dir / "log.jsonl", "garbage\n");
    EXPECT_EQ(run_cli({"--config", ws.config(), "eval", "--log", (ws.dir / "log.jsonl").string()}).code, kDataError);
}

TEST(Cli, KnowledgeBuild) {
    Workspace ws;
    const auto null = run_cli({"--config", ws.config(), "knowledge", "build", "--source", "Null"});
    EXPECT_EQ(null.code, kOk);
    EXPECT_NE(null.out.find("nothing to build"), std::string::npos);
    EXPECT_EQ(run_cli({"--config", ws.config(), "knowledge", "build", "--source", "Gossip"}).code, kConfigError);

    const auto first = run_cli({"--config", ws.config(), "--mock", ws.mock(), "knowledge", "build", "--source", "EaK*"});
    ASSERT_EQ(first.code, kOk) << first.err;
    EXPECT_NE(first.out.find("0 cache hits"), std::string::npos) << first.out;
    const auto second = run_cli({"--config", ws.config(), "--mock", ws.mock(), "knowledge", "build", "--source", "EaK*"});
    ASSERT_EQ(second.code, kOk) << second.err;
    EXPECT_NE(second.out.find("20 pairs, 20 cache hits, 0 built"), std::string::npos) << second.out;

    std::filesystem::remove(ws.dir / "e2e/kb.jsonl");
    EXPECT_EQ(run_cli({"--config", ws.config(), "--mock", ws.mock(), "knowledge", "build", "--source", "EaK"}).code,
              kConfigError);
}

TEST(Cli, DatasetBuild) {
    TempDir dir;
    std::string mentions;
    for (int c = 0; c < 4; ++c) {
        for (int k = 0; k < 3; ++k) {
            mentions += nlohmann::json{{"surface", "term" + std::to_string(c) + std::string(k + 1, 'x')},
                                       {"concept_id", "C" + std::to_string(c)},
                                       {"sentence", "A sentence."}}
                            .dump() +
                        "\n";
        }
    }
    testing::write_file(dir / "m.jsonl", mentions);
    const auto out = (dir / "pool.jsonl").string();
    const auto r = run_cli({"--seed", "5", "dataset", "build", "--input", (dir / "m.jsonl").string(), "--output", out, "--quota", "3"});
    ASSERT_EQ(r.code, kOk) << r.err;
    EXPECT_NE(r.out.find("wrote 7 pairs (4 positive, 3 negative)"), std::string::npos) << r.out;
    const auto pool = load_pool(out, TaskKind::EM);
    EXPECT_EQ(pool.pairs.size(), 7u);
    const auto again = (dir / "again.jsonl").string();
    run_cli({"--seed", "5", "dataset", "build", "--input", (dir / "m.jsonl").string(), "--output", again, "--quota", "3"});
    EXPECT_EQ(read_file(out), read_file(again));

    EXPECT_EQ(run_cli({"dataset", "build", "--input", (dir / "missing.jsonl").string(), "--output", out}).code, kDataError);
    EXPECT_EQ(run_cli({"dataset", "build", "--input", (dir / "m.jsonl").string(), "--output", out, "--similarity", "x"}).code,
              kConfigError);
}

} // namespace
} // namespace kcmf::cli
