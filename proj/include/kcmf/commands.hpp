#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "kcmf/clients.hpp"
#include "kcmf/config.hpp"
#include "kcmf/datasetgen.hpp"
#include "kcmf/ensemble.hpp"
#include "kcmf/http.hpp"
#include "kcmf/knowledge.hpp"
#include "kcmf/llm.hpp"

// The runnable pipelines behind each CLI subcommand. Errors are thrown
// (ConfigError, DataError, llm::BackendError); the CLI maps them to exit codes.
namespace kcmf::commands {

/// Backends, clients, cache and knowledge builder wired from a config.
class Services {
public:
    /// `with_backend` false leaves the LLM backend unset even if one is configured.
    Services(const RunConfig& cfg, const MappingPool& pool, bool with_backend);
    ~Services();

    llm::Backend* backend() { return backend_.get(); }
    knowledge::KnowledgeBuilder& builder() { return *builder_; }
    knowledge::KnowledgeCache& cache() { return *cache_; }
    /// Calls made to the knowledge-base transport so far.
    std::size_t kb_calls() const;

private:
    std::unique_ptr<llm::Backend> backend_;
    std::unique_ptr<http::Transport> base_transport_;
    std::unique_ptr<http::Transport> recorder_;
    std::unique_ptr<clients::TerminologyClient> terminology_;
    std::unique_ptr<clients::EntitySearchClient> search_;
    std::unique_ptr<clients::FactClient> facts_;
    std::unique_ptr<clients::ExtractClient> extracts_;
    std::unique_ptr<knowledge::KnowledgeCache> cache_;
    std::optional<knowledge::DakIndex> dak_;
    std::unique_ptr<knowledge::KnowledgeBuilder> builder_;
};

/// Classifies the pool `cfg.runs` times and writes run_N.jsonl, report.json
/// and report.txt to the output directory once every run has finished.
void cmd_match(const RunConfig& cfg, std::ostream& out);

/// Fills the knowledge cache of `source` for every pair of the pool.
void cmd_knowledge(const RunConfig& cfg, const std::string& source, std::ostream& out);

void cmd_dataset(const std::filesystem::path& input, const std::filesystem::path& output,
                 const datasetgen::GenConfig& gen, std::ostream& out);

/// Prints the prompt of every source for one pair. Never calls a backend:
/// knowledge comes from the DaK index and the cache, and self-indicators not
/// carried by the demonstrations show as a placeholder.
void cmd_render(const RunConfig& cfg, const std::string& pair_id, std::ostream& out);

/// Scores an existing run log against the labels of the configured dataset.
void cmd_eval(const RunConfig& cfg, const std::filesystem::path& log, std::ostream& out);

} // namespace kcmf::commands
