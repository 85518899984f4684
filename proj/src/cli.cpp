#include "kcmf/cli.hpp"

#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "kcmf/commands.hpp"
#include "kcmf/config.hpp"
#include "kcmf/error.hpp"
#include "kcmf/http.hpp"
#include "kcmf/llm.hpp"

namespace kcmf::cli {

namespace {

void use_stderr_logger() {
    static const bool installed = [] {
        auto logger = spdlog::stderr_color_mt("kcmf");
        logger->set_pattern("[%l] %v");
        spdlog::set_default_logger(logger);
        return true;
    }();
    (void)installed;
}

} // namespace

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
    use_stderr_logger();

    CLI::App app{"Knowledge-compliant schema and entity matching with LLM prompts", "kcmf"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string mock_path;
    std::size_t workers = 1;
    std::optional<std::uint64_t> seed;
    bool trace = false;
    app.add_option("--config", config_path, "Run configuration (JSON)");
    app.add_option("--mock", mock_path, "Use a scripted mock backend instead of the HTTP endpoint");
    app.add_option("--workers", workers, "Parallel workers")->check(CLI::PositiveNumber);
    app.add_option("--seed", seed, "Override the configured seed");
    app.add_flag("--trace", trace, "Log request and response bodies (keys redacted)");

    auto* match = app.add_subcommand("match", "Classify every pair of the dataset and write logs and a report");

    auto* knowledge = app.add_subcommand("knowledge", "Knowledge cache maintenance");
    knowledge->require_subcommand(1);
    auto* knowledge_build = knowledge->add_subcommand("build", "Build and cache knowledge for every pair");
    std::string source;
    knowledge_build->add_option("--source", source, "Knowledge source name, e.g. EaK or Wikipedia+EaK")->required();

    auto* dataset = app.add_subcommand("dataset", "Dataset generation");
    dataset->require_subcommand(1);
    auto* dataset_build = dataset->add_subcommand("build", "Build an entity-matching pool from a mention corpus");
    std::string input, output;
    datasetgen::GenConfig gen;
    dataset_build->add_option("--input", input, "Mentions JSONL")->required();
    dataset_build->add_option("--output", output, "Pair JSONL to write")->required();
    dataset_build->add_option("--quota", gen.negative_quota, "Number of negative pairs")->capture_default_str();
    dataset_build->add_option("--similarity", gen.similarity, "Similarity function id")->capture_default_str();
    dataset_build->add_flag("--random-negatives", gen.random_negatives, "Sample negatives uniformly at random");

    auto* render = app.add_subcommand("render", "Print the prompts of one pair without calling a backend");
    std::string pair_id;
    render->add_option("--pair", pair_id, "Pair id")->required();

    auto* evaluate = app.add_subcommand("eval", "Score an existing run log");
    std::string log_path;
    evaluate->add_option("--log", log_path, "Run log JSONL")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp&) {
        out << app.help();
        return kOk;
    } catch (const CLI::CallForAllHelp&) {
        out << app.help("", CLI::AppFormatMode::All);
        return kOk;
    } catch (const CLI::ParseError& e) {
        err << "error: " << e.what() << "\n";
        return kConfigError;
    }

    if (trace) spdlog::set_level(spdlog::level::debug);

    auto load = [&] {
        if (config_path.empty()) throw ConfigError("--config is required for this command");
        auto cfg = load_config(config_path);
        if (!mock_path.empty()) cfg.mock = mock_path;
        if (seed) cfg.seed = *seed;
        cfg.workers = workers;
        cfg.trace = trace;
        return cfg;
    };

    try {
        if (match->parsed()) {
            commands::cmd_match(load(), out);
        } else if (knowledge_build->parsed()) {
            commands::cmd_knowledge(load(), source, out);
        } else if (dataset_build->parsed()) {
            if (seed) gen.seed = *seed;
            commands::cmd_dataset(input, output, gen, out);
        } else if (render->parsed()) {
            commands::cmd_render(load(), pair_id, out);
        } else if (evaluate->parsed()) {
            commands::cmd_eval(load(), log_path, out);
        }
    } catch (const ConfigError& e) {
        err << "config error: " << e.what() << "\n";
        return kConfigError;
    } catch (const llm::BackendError& e) {
        err << "backend error (" << llm::to_string(e.kind()) << "): " << e.what() << "\n";
        return kBackendError;
    } catch (const http::TransportError& e) {
        err << "knowledge backend error: " << e.what() << "\n";
        return kBackendError;
    } catch (const DataError& e) {
        err << "data error: " << e.what() << "\n";
        return kDataError;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kFailure;
    }
    return kOk;
}

} // namespace kcmf::cli
