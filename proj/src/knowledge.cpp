#include "kcmf/knowledge.hpp"

#include <fstream>
#include <mutex>
#include <random>
#include <set>

#include <spdlog/spdlog.h>

#include "kcmf/digest.hpp"
#include "kcmf/error.hpp"
#include "kcmf/text.hpp"

namespace kcmf::knowledge {

std::string_view to_string(SourceKind kind) {
    switch (kind) {
    case SourceKind::DaK: return "DaK";
    case SourceKind::EaK: return "EaK";
    case SourceKind::Wikidata: return "Wikidata";
    case SourceKind::Wikipedia: return "Wikipedia";
    case SourceKind::Null: return "Null";
    }
    return "";
}

SourceKind parse_source_kind(std::string_view s) {
    const auto lower = text::to_lower(s);
    for (auto k : {SourceKind::DaK, SourceKind::EaK, SourceKind::Wikidata, SourceKind::Wikipedia, SourceKind::Null}) {
        if (text::to_lower(to_string(k)) == lower) return k;
    }
    throw ConfigError("unknown knowledge source '" + std::string(s) + "'");
}

nlohmann::json to_json(const KnowledgeItem& item) {
    return {{"source", std::string(to_string(item.source))}, {"text", item.text}, {"origin_key", item.origin_key}};
}

KnowledgeItem item_from_json(const nlohmann::json& j) {
    KnowledgeItem item;
    try {
        item.source = parse_source_kind(j.at("source").get<std::string>());
    } catch (const ConfigError& e) {
        throw DataError(e.what());
    }
    item.text = j.at("text").get<std::string>();
    item.origin_key = j.value("origin_key", std::string{});
    return item;
}

// ---------------------------------------------------------------- DaK

std::string object_name(const SchemaItem& item) {
    const auto name = render_item(item).name;
    return text::normalize(name.substr(0, name.find('-')));
}

std::string table_segment(const SchemaItem& item) {
    const auto desc = render_item(item).description;
    return std::string(text::trim(std::string_view(desc).substr(0, desc.find(';'))));
}

DakIndex build_dak_index(const MappingPool& pool) {
    if (pool.task_kind != TaskKind::SM) throw DataError("DaK needs a schema-matching pool");

    // Pools repeat the same tables many times, so match unique objects against
    // unique segments and only keep track of which pairs each came from.
    // A match needs some i != j; with at most two distinct pair indices per
    // side that is decidable exactly.
    auto note = [](std::vector<std::size_t>& where, std::size_t i) {
        if (where.size() < 2 && std::find(where.begin(), where.end(), i) == where.end()) where.push_back(i);
    };
    std::map<std::string, std::vector<std::size_t>> objects;
    std::map<std::string, std::vector<std::size_t>> segments;
    for (std::size_t i = 0; i < pool.pairs.size(); ++i) {
        const auto& p = pool.pairs[i];
        for (const Item* side : {&p.left, &p.right}) {
            const auto& s = std::get<SchemaItem>(*side);
            note(objects[object_name(s)], i);
            if (auto seg = table_segment(s); !seg.empty()) note(segments[seg], i);
        }
    }

    DakIndex index;
    for (const auto& [object, obj_pairs] : objects) {
        if (object.empty()) continue;
        std::set<std::string> found;
        for (const auto& [segment, seg_pairs] : segments) {
            const bool same_single_pair = obj_pairs.size() == 1 && seg_pairs.size() == 1 && obj_pairs[0] == seg_pairs[0];
            if (same_single_pair) continue;
            if (text::contains_word(segment, object)) found.insert(segment);
        }
        if (!found.empty()) index.entries[object] = {found.begin(), found.end()};
    }
    return index;
}

std::vector<KnowledgeItem> dak_lookup(const DakIndex& index, const CandidatePair& pair) {
    std::vector<KnowledgeItem> out;
    const auto left = render_item(pair.left).name;
    const auto right = render_item(pair.right).name;
    for (const auto& [object, metadata] : index.entries) {
        if (!text::contains_word(left, object) && !text::contains_word(right, object)) continue;
        for (const auto& m : metadata) out.push_back({SourceKind::DaK, object + ": " + m, object});
    }
    return out;
}

// ------------------------------------------------------------ keywords

namespace {

constexpr std::string_view kSchemaKeywordInstruction =
    "You need to extract all the keywords in the schema that require special domain knowledge to understand, "
    "keywords should be separated by commas.";

constexpr std::string_view kSchemaKeywordExamples =
    "Example 1:\n"
    "Schema: provider-npi\n"
    "Schema description: the provider table contains a list of uniquely identified healthcare providers. these are "
    "individuals providing hands-on healthcare to patients, such as physicians, nurses, midwives, physical therapists "
    "etc.;the national provider identifier (npi) of the provider.\n"
    "Answer: national provider identifier, npi\n"
    "\n"
    "Example 2:\n"
    "Schema: imaging_studies-sop description\n"
    "Schema description: patient imaging metadata.;description of the sop code.\n"
    "Answer: sop\n"
    "\n"
    "Example 3:\n"
    "Schema: procedure_occurrence-modifier_concept_id\n"
    "Schema description: the procedure_occurrence table contains records of activities or processes ordered by, or "
    "carried out by, a healthcare provider on the patient to have a diagnostic or therapeutic purpose. procedures are "
    "present in various data sources in different forms with varying levels of standardization.;a foreign key to a "
    "standard concept identifier for a modifier to the procedure (e.g. bilateral). these concepts are typically "
    "distinguished by 'modifier' concept classes (e.g., 'cpt4 modifier' as part of the 'cpt4' vocabulary).\n"
    "Answer: foreign key, identifier, cpt4\n"
    "\n";

constexpr std::string_view kEntityKeywordInstruction =
    "You need to extract all the keywords in the entity that require special domain knowledge to understand, "
    "keywords should be separated by commas.";

constexpr std::string_view kListFilterPrompt =
    "You need to find out which of the given keywords are relevant to the database or medical field and return "
    "them, keywords should be separated by commas.\n"
    "\n"
    "Example 1:\n"
    "birthday, home, dcm, location, primary key\n"
    "Answer: dcm, primary key\n"
    "\n"
    "Example 2:\n"
    "endtime, id, recognition, observation, data model, algorithm, artificial\n"
    "Answer: id, data model\n"
    "\n"
    "Your turn:\n";

constexpr std::string_view kTermFilterPrompt =
    "Tell if the given word is a hard-to-understand biomedical domain term, only yes or no.\n"
    "\n"
    "Example 1:\n"
    "leaf\n"
    "Answer: no\n"
    "\n"
    "Example 2:\n"
    "deoxynivalenol\n"
    "Answer: yes\n"
    "\n"
    "Your turn:\n";

} // namespace

std::string keyword_extraction_prompt(const Item& item) {
    const auto r = render_item(item);
    std::string out;
    if (item_kind(item) == TaskKind::SM) {
        out.append(kSchemaKeywordInstruction).append("\n\n").append(kSchemaKeywordExamples);
        out += "Your turn:\nSchema: " + r.name + "\nSchema description: " + r.description + "\nAnswer:";
    } else {
        out.append(kEntityKeywordInstruction).append("\n\n");
        out += "Your turn:\nEntity: " + r.name + "\nEntity attributes: " + r.description + "\nAnswer:";
    }
    return out;
}

std::string list_filter_prompt(const std::vector<std::string>& candidates) {
    return std::string(kListFilterPrompt) + text::join(candidates, ", ") + "\nAnswer:";
}

std::string term_filter_prompt(const std::string& keyword) {
    return std::string(kTermFilterPrompt) + keyword + "\nAnswer:";
}

std::vector<std::string> parse_keyword_list(std::string_view response) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    auto body = text::trim(response);
    // tolerate an echoed "Answer:" prefix
    if (text::starts_with_ci(body, "answer:")) body = text::trim(body.substr(7));
    for (const auto& part : text::split(body, ',')) {
        auto kw = text::normalize(part);
        while (!kw.empty() && kw.back() == '.') kw.pop_back();
        if (!kw.empty() && seen.insert(kw).second) out.push_back(std::move(kw));
    }
    return out;
}

std::vector<std::string> extract_keywords(const CandidatePair& pair, llm::Backend& backend,
                                          const llm::GenerationParams& params) {
    std::vector<std::string> out;
    std::set<std::string> seen;
    for (const Item* side : {&pair.left, &pair.right}) {
        const auto reply = backend.complete({keyword_extraction_prompt(*side), std::string(llm::tags::keywords), {}}, params);
        for (auto& kw : parse_keyword_list(reply.text)) {
            if (seen.insert(kw).second) out.push_back(std::move(kw));
        }
    }
    return out;
}

std::vector<std::string> filter_keywords(const std::vector<std::string>& raw, TaskKind kind, llm::Backend& backend,
                                         const llm::GenerationParams& params,
                                         const std::vector<std::string>& blacklist) {
    std::vector<std::string> kept;
    if (raw.empty()) return kept;
    if (kind == TaskKind::SM) {
        const auto reply = backend.complete({list_filter_prompt(raw), std::string(llm::tags::keyword_filter), {}}, params);
        const auto named = parse_keyword_list(reply.text);
        const std::set<std::string> accepted(named.begin(), named.end());
        for (const auto& kw : raw) {
            if (accepted.contains(text::normalize(kw))) kept.push_back(kw);
        }
    } else {
        for (const auto& kw : raw) {
            const auto reply = backend.complete({term_filter_prompt(kw), std::string(llm::tags::keyword_filter), {}}, params);
            if (llm::parse_verdict(reply.text) == llm::ParsedVerdict::Yes) kept.push_back(kw);
        }
    }
    std::set<std::string> banned;
    for (const auto& b : blacklist) banned.insert(text::normalize(b));
    std::erase_if(kept, [&](const std::string& kw) { return banned.contains(text::normalize(kw)); });
    return kept;
}

std::vector<std::string> load_blacklist(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open blacklist " + path.string());
    std::vector<std::string> out;
    for (std::string line; std::getline(in, line);) {
        auto entry = text::normalize(line);
        if (!entry.empty()) out.push_back(std::move(entry));
    }
    return out;
}

// ----------------------------------------------------------------- EaK

std::vector<std::size_t> sample_indices(std::size_t n, std::size_t k, std::uint64_t seed) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (k >= n) return idx;
    std::mt19937_64 gen(seed);
    // unbiased draw in [0, bound); uniform_int_distribution is not portable across standard libraries
    auto below = [&gen](std::uint64_t bound) {
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t v;
        do {
            v = gen();
        } while (v >= limit);
        return v % bound;
    };
    for (std::size_t i = 0; i < k; ++i) {
        const auto j = i + below(n - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(k);
    std::sort(idx.begin(), idx.end());
    return idx;
}

std::uint64_t keyword_seed(std::uint64_t seed, std::string_view keyword) {
    const auto hex = sha256_hex(keyword).substr(0, 16);
    return seed ^ std::stoull(hex, nullptr, 16);
}

std::vector<KnowledgeItem> eak_build(const std::vector<std::string>& keywords, clients::TerminologyClient& kb,
                                     const EakOptions& opts, bool* degraded) {
    std::vector<KnowledgeItem> out;
    for (const auto& kw : keywords) {
        try {
            for (const auto& parent : kb.search(kw, opts.top_k)) {
                const auto children = kb.children(parent.id);
                const auto picks = sample_indices(children.size(), static_cast<std::size_t>(std::max(opts.max_children, 0)),
                                                  keyword_seed(opts.seed, kw + "\x1f" + parent.id));
                const auto parent_term = text::normalize(parent.term);
                for (auto i : picks) {
                    out.push_back({SourceKind::EaK, "One of " + parent_term + " is " + text::normalize(children[i].term), kw});
                }
            }
        } catch (const Error& e) {
            spdlog::warn("EaK: skipping keyword '{}': {}", kw, e.what());
            if (degraded) *degraded = true;
        }
    }
    return out;
}

// -------------------------------------------------------- encyclopedia

std::string extract_summary_prompt(const std::string& content) {
    return "Instruction: You need to summarize the given text into a paragraph less than 1000 words.\n" + content +
           "\nYour answer:";
}

std::vector<KnowledgeItem> encyclopedia_fetch(const std::vector<std::string>& keywords,
                                              const EncyclopediaClients& clients, llm::Backend* summarizer,
                                              const llm::GenerationParams& params,
                                              const EncyclopediaOptions& opts, bool* degraded) {
    std::vector<KnowledgeItem> out;
    if (!clients.search) return out;
    for (const auto& kw : keywords) {
        try {
            const auto hits = clients.search->search(kw, opts.top_k);
            for (const auto& hit : hits) {
                const auto label = hit.label.empty() ? kw : hit.label;
                if (clients.facts) {
                    for (const auto& f : clients.facts->facts(hit.id, opts.max_facts)) {
                        out.push_back({SourceKind::Wikidata, label + ": " + f.property + " " + f.value, kw});
                    }
                }
                if (!clients.extracts) continue;
                const auto title = clients.search->enwiki_title(hit.id);
                if (!title) continue;
                auto extract = text::squash_whitespace(clients.extracts->extract(*title));
                if (extract.empty()) continue;
                if (text::word_count(extract) > opts.max_words) {
                    std::string summary;
                    if (summarizer) {
                        try {
                            summary = text::squash_whitespace(
                                summarizer->complete({extract_summary_prompt(extract), std::string(llm::tags::summarize_extract), {}}, params).text);
                        } catch (const llm::BackendError& e) {
                            if (e.fatal()) throw;
                            spdlog::warn("summarizing extract for '{}' failed, truncating: {}", kw, e.what());
                        }
                    }
                    extract = summary.empty() ? text::first_words(extract, opts.max_words)
                                              : text::first_words(summary, opts.max_words);
                }
                out.push_back({SourceKind::Wikipedia, extract, kw});
            }
        } catch (const llm::BackendError&) {
            throw;
        } catch (const Error& e) {
            spdlog::warn("encyclopedia: skipping keyword '{}': {}", kw, e.what());
            if (degraded) *degraded = true;
        }
    }
    return out;
}

// -------------------------------------------------------------- sources

SourceSpec parse_source(std::string_view name) {
    SourceSpec spec;
    std::string_view body = text::trim(name);
    if (!body.empty() && body.back() == '*') {
        spec.self_indicator = false;
        body.remove_suffix(1);
    }
    if (body.empty()) throw ConfigError("empty knowledge source name");
    for (const auto& part : text::split(body, '+')) {
        const auto kind = parse_source_kind(text::trim(part));
        if (std::find(spec.members.begin(), spec.members.end(), kind) != spec.members.end()) {
            throw ConfigError("knowledge source '" + std::string(name) + "' repeats a member");
        }
        spec.members.push_back(kind);
    }
    spec.name = std::string(text::trim(name));
    return spec;
}

SourceSet SourceSet::parse(const std::vector<std::string>& names) {
    if (names.empty()) throw ConfigError("at least one knowledge source is required");
    SourceSet set;
    std::set<std::string> seen;
    for (const auto& n : names) {
        auto spec = parse_source(n);
        if (!seen.insert(spec.name).second) throw ConfigError("knowledge source '" + spec.name + "' listed twice");
        set.sources.push_back(std::move(spec));
    }
    return set;
}

// ---------------------------------------------------------------- cache

namespace {

constexpr const char* kKeywordBucket = "keywords";

bool valid_record(const std::string& bucket, const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("digest") || !j.at("digest").is_string()) return false;
    if (bucket == kKeywordBucket) {
        for (const char* f : {"raw", "filtered"}) {
            if (!j.contains(f) || !j.at(f).is_array()) return false;
            for (const auto& v : j.at(f)) {
                if (!v.is_string()) return false;
            }
        }
        return true;
    }
    if (!j.contains("items") || !j.at("items").is_array()) return false;
    for (const auto& it : j.at("items")) {
        try {
            if (to_string(item_from_json(it).source) != bucket) return false;
        } catch (const std::exception&) {
            return false;
        }
    }
    return true;
}

} // namespace

KnowledgeCache::KnowledgeCache(std::filesystem::path dir) : dir_(std::move(dir)) {
    if (dir_.empty()) return;
    std::filesystem::create_directories(dir_);
    for (auto k : {SourceKind::DaK, SourceKind::EaK, SourceKind::Wikidata, SourceKind::Wikipedia}) {
        load_file(std::string(to_string(k)));
    }
    load_file(kKeywordBucket);
}

void KnowledgeCache::load_file(const std::string& bucket) {
    std::ifstream in(dir_ / (bucket + ".jsonl"));
    if (!in) return;
    auto& records = buckets_[bucket];
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (text::trim(line).empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error&) {
        }
        if (!valid_record(bucket, j)) {
            ++corrupt_;
            spdlog::warn("knowledge cache {}.jsonl:{}: corrupt record ignored, entry will be rebuilt", bucket, n);
            continue;
        }
        auto digest = j.at("digest").get<std::string>();
        records[std::move(digest)] = std::move(j);
    }
}

void KnowledgeCache::append(const std::string& bucket, const nlohmann::json& record) {
    if (dir_.empty()) return;
    std::ofstream out(dir_ / (bucket + ".jsonl"), std::ios::app);
    if (!out) throw Error("cannot write knowledge cache " + (dir_ / (bucket + ".jsonl")).string());
    out << record.dump() << '\n';
}

std::optional<std::vector<KnowledgeItem>> KnowledgeCache::get(SourceKind source, const std::string& digest) const {
    std::shared_lock lock(mutex_);
    const auto b = buckets_.find(std::string(to_string(source)));
    if (b == buckets_.end()) return std::nullopt;
    const auto r = b->second.find(digest);
    if (r == b->second.end()) return std::nullopt;
    std::vector<KnowledgeItem> items;
    for (const auto& it : r->second.at("items")) items.push_back(item_from_json(it));
    return items;
}

void KnowledgeCache::put(SourceKind source, const std::string& digest, const std::vector<KnowledgeItem>& items) {
    if (source == SourceKind::Null) return;
    nlohmann::json record = {{"digest", digest}, {"items", nlohmann::json::array()}};
    for (const auto& it : items) record["items"].push_back(to_json(it));
    const std::string bucket(to_string(source));
    std::unique_lock lock(mutex_);
    auto& slot = buckets_[bucket][digest];
    if (slot == record) return;
    slot = record;
    append(bucket, record);
}

std::optional<KeywordSet> KnowledgeCache::get_keywords(const std::string& digest) const {
    std::shared_lock lock(mutex_);
    const auto b = buckets_.find(kKeywordBucket);
    if (b == buckets_.end()) return std::nullopt;
    const auto r = b->second.find(digest);
    if (r == b->second.end()) return std::nullopt;
    return KeywordSet{r->second.at("raw").get<std::vector<std::string>>(),
                      r->second.at("filtered").get<std::vector<std::string>>()};
}

void KnowledgeCache::put_keywords(const std::string& digest, const KeywordSet& keywords) {
    const nlohmann::json record = {{"digest", digest}, {"raw", keywords.raw}, {"filtered", keywords.filtered}};
    std::unique_lock lock(mutex_);
    auto& slot = buckets_[kKeywordBucket][digest];
    if (slot == record) return;
    slot = record;
    append(kKeywordBucket, record);
}

std::size_t KnowledgeCache::size(SourceKind source) const {
    std::shared_lock lock(mutex_);
    const auto b = buckets_.find(std::string(to_string(source)));
    return b == buckets_.end() ? 0 : b->second.size();
}

// -------------------------------------------------------------- builder

KnowledgeBuilder::KnowledgeBuilder(BuilderServices services, KnowledgeCache& cache)
    : svc_(std::move(services)), cache_(cache) {}

KeywordSet KnowledgeBuilder::keywords(const CandidatePair& pair, bool* degraded) {
    const auto digest = pair_digest(pair);
    if (auto cached = cache_.get_keywords(digest)) return *cached;
    if (!svc_.backend) throw ConfigError("keyword extraction needs an LLM backend");
    KeywordSet set;
    try {
        set.raw = extract_keywords(pair, *svc_.backend, svc_.params);
        set.filtered = filter_keywords(set.raw, pair.kind(), *svc_.backend, svc_.params, svc_.blacklist);
    } catch (const llm::BackendError& e) {
        if (e.fatal()) throw;
        spdlog::warn("keyword pipeline failed for pair '{}': {}", pair.id, e.what());
        if (degraded) *degraded = true;
        return {};
    }
    cache_.put_keywords(digest, set);
    return set;
}

std::vector<KnowledgeItem> KnowledgeBuilder::build(const CandidatePair& pair, SourceKind source, bool* degraded) {
    switch (source) {
    case SourceKind::Null:
        return {};
    case SourceKind::DaK:
        if (!svc_.dak) throw ConfigError("DaK source needs a DaK index");
        return dak_lookup(*svc_.dak, pair);
    case SourceKind::EaK: {
        if (!svc_.terminology) throw ConfigError("EaK source needs a terminology client");
        const auto kw = keywords(pair, degraded);
        return eak_build(kw.filtered, *svc_.terminology, svc_.eak, degraded);
    }
    case SourceKind::Wikidata:
    case SourceKind::Wikipedia: {
        EncyclopediaClients c = svc_.encyclopedia;
        if (source == SourceKind::Wikidata) c.extracts = nullptr;
        if (source == SourceKind::Wikipedia) c.facts = nullptr;
        if (!c.search || (source == SourceKind::Wikidata ? !c.facts : !c.extracts)) {
            throw ConfigError(std::string(to_string(source)) + " source needs its encyclopedia clients");
        }
        const auto kw = keywords(pair, degraded);
        return encyclopedia_fetch(kw.filtered, c, svc_.backend, svc_.params, svc_.encyclopedia_opts, degraded);
    }
    }
    return {};
}

std::vector<KnowledgeItem> retrieve(const CandidatePair& pair, const SourceSpec& source, KnowledgeBuilder& builder) {
    std::vector<KnowledgeItem> out;
    const auto digest = pair_digest(pair);
    for (auto member : source.members) {
        if (member == SourceKind::Null) continue;
        if (auto cached = builder.cache().get(member, digest)) {
            ++builder.stats().hits;
            out.insert(out.end(), cached->begin(), cached->end());
            continue;
        }
        ++builder.stats().misses;
        bool degraded = false;
        auto items = builder.build(pair, member, &degraded);
        if (degraded) {
            ++builder.stats().degraded;
        } else {
            builder.cache().put(member, digest, items);
        }
        builder.stats().items += items.size();
        out.insert(out.end(), items.begin(), items.end());
    }
    return out;
}

} // namespace kcmf::knowledge
