#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <string_view>
#include <vector>

#include "kcmf/clients.hpp"
#include "kcmf/core.hpp"
#include "kcmf/llm.hpp"

// Knowledge lists for candidate pairs: dataset-as-knowledge (DaK) mined from
// the pool itself, examples-as-knowledge (EaK) phrased from terminology
// parent/child relations, encyclopedia facts and extracts, and the empty
// Null source. Built lists are cached per source by pair content digest.
namespace kcmf::knowledge {

enum class SourceKind { DaK, EaK, Wikidata, Wikipedia, Null };

std::string_view to_string(SourceKind kind);
SourceKind parse_source_kind(std::string_view s);

struct KnowledgeItem {
    SourceKind source = SourceKind::Null;
    std::string text;
    std::string origin_key;  // object name or keyword the item was found for

    friend bool operator==(const KnowledgeItem&, const KnowledgeItem&) = default;
};

nlohmann::json to_json(const KnowledgeItem& item);
KnowledgeItem item_from_json(const nlohmann::json& j);

// ---------------------------------------------------------------- DaK

/// Object name (lowercased) -> table descriptions that mention it, sorted and unique.
struct DakIndex {
    std::map<std::string, std::vector<std::string>> entries;

    friend bool operator==(const DakIndex&, const DakIndex&) = default;
};

/// Table-name token of a schema item, lowercased.
std::string object_name(const SchemaItem& item);

/// Table-description segment of a schema item (text before the first
/// semicolon of its rendered description), trimmed.
std::string table_segment(const SchemaItem& item);

/// For every pair i, its objects are searched (whole word, case-insensitive)
/// in the table segments of every other pair j != i; hits become metadata of
/// the object. Throws DataError for an EM pool.
DakIndex build_dak_index(const MappingPool& pool);

/// One "{object}: {metadata}" item per metadata text of every index key that
/// occurs as a whole word in either rendered name of the pair, in key order.
std::vector<KnowledgeItem> dak_lookup(const DakIndex& index, const CandidatePair& pair);

// ------------------------------------------------------------ keywords

struct KeywordSet {
    std::vector<std::string> raw;
    std::vector<std::string> filtered;
};

std::string keyword_extraction_prompt(const Item& item);
std::string list_filter_prompt(const std::vector<std::string>& candidates);
std::string term_filter_prompt(const std::string& keyword);

/// Splits on commas, normalizes, drops empties and duplicates (first wins).
std::vector<std::string> parse_keyword_list(std::string_view response);

/// One extraction call per side of the pair, merged in order.
std::vector<std::string> extract_keywords(const CandidatePair& pair, llm::Backend& backend,
                                          const llm::GenerationParams& params);

/// SM keeps the candidates the list-filter answer names; EM asks per keyword.
/// Blacklisted keywords are removed afterwards.
std::vector<std::string> filter_keywords(const std::vector<std::string>& raw, TaskKind kind, llm::Backend& backend,
                                         const llm::GenerationParams& params,
                                         const std::vector<std::string>& blacklist);

/// One normalized entry per non-empty line.
std::vector<std::string> load_blacklist(const std::filesystem::path& path);

// ----------------------------------------------------------------- EaK

struct EakOptions {
    int max_children = 3;
    int top_k = 1;
    std::uint64_t seed = 0;
};

/// `k` distinct indices out of [0, n), ascending, drawn with a seeded
/// generator. Returns all indices when k >= n.
std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed);

/// Per-keyword stable seed derived from the run seed.
std::uint64_t keyword_seed(std::uint64_t seed, std::string_view keyword);

/// Builds "One of {parent} is {child}" items. Keywords with no hit or with a
/// failing request are skipped; `degraded` is set in the latter case.
std::vector<KnowledgeItem> eak_build(const std::vector<std::string>& keywords, clients::TerminologyClient& kb,
                                     const EakOptions& opts, bool* degraded = nullptr);

// -------------------------------------------------------- encyclopedia

struct EncyclopediaClients {
    clients::EntitySearchClient* search = nullptr;
    clients::FactClient* facts = nullptr;      // Wikidata items when set
    clients::ExtractClient* extracts = nullptr;  // Wikipedia items when set
};

struct EncyclopediaOptions {
    int top_k = 1;
    int max_facts = 5;
    std::size_t max_words = 1000;
};

std::string extract_summary_prompt(const std::string& content);

/// Facts become "{entity}: {property} {value}" items; extracts longer than
/// `max_words` are summarized by `summarizer`, falling back to truncation.
std::vector<KnowledgeItem> encyclopedia_fetch(const std::vector<std::string>& keywords,
                                              const EncyclopediaClients& clients, llm::Backend* summarizer,
                                              const llm::GenerationParams& params,
                                              const EncyclopediaOptions& opts, bool* degraded = nullptr);

// -------------------------------------------------------------- sources

/// A named knowledge source. Composite names such as "Wikipedia+EaK"
/// concatenate their members; a trailing '*' disables the self-indicator
/// for prompts built from this source.
struct SourceSpec {
    std::string name;
    std::vector<SourceKind> members;
    bool self_indicator = true;
};

SourceSpec parse_source(std::string_view name);

struct SourceSet {
    std::vector<SourceSpec> sources;

    /// Throws ConfigError when empty or names repeat.
    static SourceSet parse(const std::vector<std::string>& names);
};

// ---------------------------------------------------------------- cache

/// JSONL-backed cache, one file per source ({source}.jsonl) plus
/// keywords.jsonl. Records: {"digest", "items": [{"source","text","origin_key"}]}
/// and {"digest", "raw": [...], "filtered": [...]} respectively.
/// An empty directory path keeps everything in memory.
class KnowledgeCache {
public:
    explicit KnowledgeCache(std::filesystem::path dir = {});

    std::optional<std::vector<KnowledgeItem>> get(SourceKind source, const std::string& digest) const;
    void put(SourceKind source, const std::string& digest, const std::vector<KnowledgeItem>& items);

    std::optional<KeywordSet> get_keywords(const std::string& digest) const;
    void put_keywords(const std::string& digest, const KeywordSet& keywords);

    std::size_t size(SourceKind source) const;
    /// Records skipped while loading because they could not be decoded.
    std::size_t corrupt_records() const { return corrupt_; }

private:
    void load_file(const std::string& bucket);
    void append(const std::string& bucket, const nlohmann::json& record);

    std::filesystem::path dir_;
    mutable std::shared_mutex mutex_;
    std::map<std::string, std::map<std::string, nlohmann::json>> buckets_;
    std::size_t corrupt_ = 0;
};

// -------------------------------------------------------------- builder

struct BuilderServices {
    const DakIndex* dak = nullptr;
    llm::Backend* backend = nullptr;
    llm::GenerationParams params;
    clients::TerminologyClient* terminology = nullptr;
    EncyclopediaClients encyclopedia;
    std::vector<std::string> blacklist;
    EakOptions eak;
    EncyclopediaOptions encyclopedia_opts;
};

struct BuildStats {
    std::atomic<std::size_t> hits{0};
    std::atomic<std::size_t> misses{0};
    std::atomic<std::size_t> degraded{0};  // built lists not persisted because a request failed
    std::atomic<std::size_t> items{0};
};

/// Dispatches a pair to the builder of one source. Safe to share across threads.
class KnowledgeBuilder {
public:
    KnowledgeBuilder(BuilderServices services, KnowledgeCache& cache);

    /// Keyword pipeline (extract + filter), cached per pair.
    KeywordSet keywords(const CandidatePair& pair, bool* degraded = nullptr);
    std::vector<KnowledgeItem> build(const CandidatePair& pair, SourceKind source, bool* degraded = nullptr);

    KnowledgeCache& cache() { return cache_; }
    BuildStats& stats() { return stats_; }

private:
    BuilderServices svc_;
    KnowledgeCache& cache_;
    BuildStats stats_;
};

/// Cache-first retrieval of every member of `source`, concatenated in order.
std::vector<KnowledgeItem> retrieve(const CandidatePair& pair, const SourceSpec& source, KnowledgeBuilder& builder);

} // namespace kcmf::knowledge
