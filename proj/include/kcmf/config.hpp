#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "kcmf/core.hpp"
#include "kcmf/eval.hpp"
#include "kcmf/llm.hpp"
#include "kcmf/prompt.hpp"

namespace kcmf {

struct LlmSettings {
    std::string base_url;
    int timeout_ms = 60000;
    int max_attempts = 5;
    int base_delay_ms = 1000;
};

struct KnowledgeSettings {
    std::string terminology_url;
    std::string terminology_branch = "MAIN";
    std::string wikidata_api = "https://www.wikidata.org/w/api.php";
    std::string sparql_url = "https://query.wikidata.org/sparql";
    std::string wikipedia_api = "https://en.wikipedia.org/w/api.php";
    /// Serve knowledge-base traffic from this fixture file instead of the network.
    std::filesystem::path replay;
    /// Append live knowledge-base traffic to this fixture file.
    std::filesystem::path record;
    std::filesystem::path blacklist;
    int max_children = 3;
    int top_k = 1;
    int max_facts = 5;
    std::size_t max_words = 1000;
};

/// A run configuration as read from its JSON file. Relative paths are
/// resolved against the directory of the file.
struct RunConfig {
    std::filesystem::path dataset;
    TaskKind task = TaskKind::SM;
    std::filesystem::path pseudocode;
    std::filesystem::path demonstrations;  // optional when shots == 0
    std::vector<std::string> sources;
    std::size_t shots = 4;
    std::filesystem::path template_path;  // empty: built-in layout
    llm::GenerationParams generation;
    prompt::PromptOptions flags;
    std::filesystem::path cache_dir;
    std::filesystem::path output_dir;
    std::uint64_t seed = 0;
    int runs = 1;
    eval::Aggregation aggregation = eval::Aggregation::BestF1;
    LlmSettings llm;
    KnowledgeSettings knowledge;

    // command-line overrides
    std::optional<std::filesystem::path> mock;
    std::size_t workers = 1;
    bool trace = false;
};

/// Throws ConfigError naming the offending field.
RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir);
RunConfig load_config(const std::filesystem::path& path);

/// Checks cross-field invariants and that referenced files exist.
void validate_config(const RunConfig& cfg);

} // namespace kcmf
