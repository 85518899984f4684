#pragma once

// Helpers shared by the unit tests and the acceptance runner: fixture paths,
// scratch directories, golden prompt rendering and brute-force oracles.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <optional>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <regex>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <unordered_set>
#include <vector>

#include "kcmf/clients.hpp"
#include "kcmf/core.hpp"
#include "kcmf/datasetgen.hpp"
#include "kcmf/ensemble.hpp"
#include "kcmf/eval.hpp"
#include "kcmf/http.hpp"
#include "kcmf/knowledge.hpp"
#include "kcmf/llm.hpp"
#include "kcmf/prompt.hpp"
#include "kcmf/pseudocode.hpp"
#include "kcmf/text.hpp"

namespace kcmf::testing {

inline std::filesystem::path data_path(const std::string& rel) {
    return std::filesystem::path(KCMF_TEST_DATA_DIR) / rel;
}

inline std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    out << content;
}

/// Scratch directory removed on destruction.
class TempDir {
public:
    TempDir() {
        static std::atomic<int> counter{0};
        std::random_device rd;
        path_ = std::filesystem::temp_directory_path() /
                ("kcmf-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
        std::filesystem::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const std::filesystem::path& path() const { return path_; }
    std::filesystem::path operator/(const std::string& rel) const { return path_ / rel; }

private:
    std::filesystem::path path_;
};

// ------------------------------------------------------------ knowledge replay

inline const std::string kSnow = "http://snowstorm.test/snowstorm/snomed-ct";
inline const std::string kWikidata = "http://wikidata.test/w/api.php";
inline const std::string kSparql = "http://query.wikidata.test/sparql";
inline const std::string kWikipedia = "http://wikipedia.test/w/api.php";

inline llm::MockRule mock_rule(std::string tag, std::string regex, std::string response) {
    return {std::nullopt, std::move(regex), std::move(tag), std::nullopt, std::move(response), std::nullopt};
}

/// Backend for the replay fixture: every pair yields the three fixture
/// keywords, every keyword passes the filter, long extracts get a fixed summary.
inline llm::MockBackend fixture_backend() {
    return llm::MockBackend({mock_rule("keywords", ".", "artery disease, aorta, unknownterm"),
                             mock_rule("keyword-filter", "^", "Answer: yes"),
                             mock_rule("summarize-extract", ".", "Arterial disease narrows and hardens the arteries.")});
}

inline CandidatePair em_pair() { return *load_pool(data_path("pools/em_small.jsonl"), TaskKind::EM).find("mmm-1"); }

/// All clients over one replay fixture, plus a builder and its cache.
struct ReplayWorld {
    explicit ReplayWorld(std::filesystem::path cache_dir = {}, llm::Backend* backend = nullptr)
        : transport(data_path("replay/kb.jsonl")),
          snow(transport, kSnow),
          search(transport, kWikidata),
          facts(transport, kSparql),
          extracts(transport, kWikipedia),
          cache(std::move(cache_dir)) {
        knowledge::BuilderServices bs;
        bs.backend = backend;
        bs.terminology = &snow;
        bs.encyclopedia = {&search, &facts, &extracts};
        bs.eak.seed = 7;
        builder = std::make_unique<knowledge::KnowledgeBuilder>(bs, cache);
    }
    http::ReplayTransport transport;
    clients::TerminologyClient snow;
    clients::EntitySearchClient search;
    clients::FactClient facts;
    clients::ExtractClient extracts;
    knowledge::KnowledgeCache cache;
    std::unique_ptr<knowledge::KnowledgeBuilder> builder;
};

// ------------------------------------------------------------ golden prompts

/// SM, four shots, DaK knowledge over the two-pair provider pool, no backend.
inline std::string render_sm_golden() {
    const auto code = pseudocode::load_pseudocode(data_path("pseudocode/sm.txt"), TaskKind::SM);
    const auto pool = load_pool(data_path("pools/provider.jsonl"), TaskKind::SM);
    const auto dak = knowledge::build_dak_index(pool);
    knowledge::KnowledgeCache cache;
    knowledge::BuilderServices bs;
    bs.dak = &dak;
    knowledge::KnowledgeBuilder builder(bs, cache);
    ensemble::PipelineConfig pc;
    pc.code = &code;
    pc.sources = knowledge::SourceSet::parse({"DaK"});
    pc.demos = prompt::load_demonstrations(data_path("demos/sm.jsonl"), code);
    pc.shots = 4;
    pc.builder = &builder;
    ensemble::Pipeline pipeline(pc);
    pipeline.prepare();
    return pipeline.render(*pool.find("provider-1")).at(0).bundle.body;
}

/// EM, two shots, EaK knowledge served from a pre-filled cache, no backend.
inline std::string render_em_golden() {
    const auto code = pseudocode::load_pseudocode(data_path("pseudocode/em.txt"), TaskKind::EM);
    const auto pool = load_pool(data_path("pools/em_small.jsonl"), TaskKind::EM);
    const auto demos = prompt::load_demonstrations(data_path("demos/em.jsonl"), code);
    using knowledge::KnowledgeItem;
    using knowledge::SourceKind;
    knowledge::KnowledgeCache cache;
    cache.put(SourceKind::EaK, pair_digest(*pool.find("mmm-1")),
              {KnowledgeItem{SourceKind::EaK, "One of disorder of artery is arteritis", "arteritis"},
               KnowledgeItem{SourceKind::EaK, "One of vasculitis is arteritis", "arteritis"}});
    cache.put(SourceKind::EaK, pair_digest(demos[0].pair),
              {KnowledgeItem{SourceKind::EaK, "One of ischemic heart disease is myocardial infarction", "mi"}});
    cache.put(SourceKind::EaK, pair_digest(demos[1].pair),
              {KnowledgeItem{SourceKind::EaK, "One of trichothecene is deoxynivalenol", "deoxynivalenol"}});
    knowledge::KnowledgeBuilder builder({}, cache);
    ensemble::PipelineConfig pc;
    pc.code = &code;
    pc.sources = knowledge::SourceSet::parse({"EaK"});
    pc.demos = demos;
    pc.shots = 2;
    pc.builder = &builder;
    ensemble::Pipeline pipeline(pc);
    pipeline.prepare();
    return pipeline.render(*pool.find("mmm-1")).at(0).bundle.body;
}

// ------------------------------------------------------------------ oracles

/// Literal double loop: every object of pair i against the table segments of
/// every other pair j, matched by a case-insensitive whole-word regex.
inline knowledge::DakIndex dak_oracle(const MappingPool& pool) {
    auto lower = [](std::string s) {
        std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
        return s;
    };
    auto escape = [](const std::string& s) {
        static const std::regex special(R"([.^$|()\[\]{}*+?\\])");
        return std::regex_replace(s, special, R"(\$&)");
    };
    auto segment = [](const SchemaItem& s) {
        auto seg = s.table_description;
        const auto b = seg.find_first_not_of(" \t\r\n");
        const auto e = seg.find_last_not_of(" \t\r\n");
        return b == std::string::npos ? std::string{} : seg.substr(b, e - b + 1);
    };
    std::map<std::string, std::set<std::string>> found;
    for (std::size_t i = 0; i < pool.pairs.size(); ++i) {
        const auto& pi = pool.pairs[i];
        for (const auto* si : {&std::get<SchemaItem>(pi.left), &std::get<SchemaItem>(pi.right)}) {
            const auto object = lower(si->table_name);
            if (object.empty()) continue;
            const std::regex word("(^|[^A-Za-z0-9_])" + escape(object) + "($|[^A-Za-z0-9_])", std::regex::icase);
            for (std::size_t j = 0; j < pool.pairs.size(); ++j) {
                if (j == i) continue;
                const auto& pj = pool.pairs[j];
                for (const auto* sj : {&std::get<SchemaItem>(pj.left), &std::get<SchemaItem>(pj.right)}) {
                    const auto seg = segment(*sj);
                    if (!seg.empty() && std::regex_search(seg, word)) found[object].insert(seg);
                }
            }
        }
    }
    knowledge::DakIndex out;
    for (auto& [k, v] : found) out.entries[k] = {v.begin(), v.end()};
    return out;
}

/// Trigram Jaccard computed from hashed gram sets.
inline double trigram_oracle(const std::string& a, const std::string& b) {
    auto norm = [](const std::string& s) {
        std::string out;
        bool space = false;
        for (unsigned char c : s) {
            if (std::isspace(c)) {
                space = !out.empty();
                continue;
            }
            if (space) out.push_back(' ');
            space = false;
            out.push_back(static_cast<char>(std::tolower(c)));
        }
        return out;
    };
    const auto na = norm(a), nb = norm(b);
    if (na == nb) return 1.0;
    auto grams = [](const std::string& s) {
        std::unordered_set<std::string> g;
        if (s.size() < 3) g.insert(s);
        for (std::size_t i = 0; i + 3 <= s.size(); ++i) g.insert(s.substr(i, 3));
        return g;
    };
    const auto ga = grams(na), gb = grams(nb);
    std::unordered_set<std::string> uni(ga.begin(), ga.end());
    uni.insert(gb.begin(), gb.end());
    std::size_t inter = 0;
    for (const auto& g : ga) inter += gb.count(g) ? 1 : 0;
    const double j = static_cast<double>(inter) / static_cast<double>(uni.size());
    return j >= 1.0 ? std::nextafter(1.0, 0.0) : j;
}

struct Confusion {
    int tp = 0, fp = 0, tn = 0, fn = 0;
};

inline Confusion confusion_oracle(const std::vector<std::pair<bool, bool>>& predicted_actual) {
    Confusion c;
    for (const auto& [p, a] : predicted_actual) {
        c.tp += p && a;
        c.fp += p && !a;
        c.tn += !p && !a;
        c.fn += !p && a;
    }
    return c;
}

/// Pool construction by plain enumeration. Negatives are returned as the
/// full ranked candidate list (similarity descending) so that callers can
/// check the top-quota selection while allowing any order among ties.
struct PoolOracle {
    struct Pair {
        std::string left_surface, left_concept, right_surface, right_concept;
        double sim;
        std::string left_context, right_context;
    };
    std::vector<Pair> positives;
    std::vector<Pair> negative_candidates;
};

inline PoolOracle pool_oracle(const std::vector<datasetgen::Mention>& mentions) {
    auto norm = [](const std::string& s) { return text::normalize(s); };
    std::vector<datasetgen::Mention> reps;
    for (const auto& m : mentions) {
        bool best = true;
        for (const auto& o : mentions) {
            if (o.concept_id == m.concept_id && norm(o.surface) == norm(m.surface) &&
                std::tie(o.surface, o.sentence) < std::tie(m.surface, m.sentence)) {
                best = false;
            }
        }
        const bool dup = std::any_of(reps.begin(), reps.end(), [&](const auto& r) {
            return r.concept_id == m.concept_id && norm(r.surface) == norm(m.surface);
        });
        if (best && !dup) reps.push_back(m);
    }
    PoolOracle out;
    std::set<std::string> concepts;
    for (const auto& r : reps) concepts.insert(r.concept_id);
    for (const auto& c : concepts) {
        std::vector<datasetgen::Mention> group;
        for (const auto& r : reps) {
            if (r.concept_id == c) group.push_back(r);
        }
        std::sort(group.begin(), group.end(), [&](const auto& a, const auto& b) { return norm(a.surface) < norm(b.surface); });
        std::optional<PoolOracle::Pair> best;
        for (std::size_t i = 0; i < group.size(); ++i) {
            for (std::size_t j = i + 1; j < group.size(); ++j) {
                const double s = trigram_oracle(group[i].surface, group[j].surface);
                if (!best || s < best->sim) {
                    best = PoolOracle::Pair{group[i].surface, c, group[j].surface, c, s, group[i].sentence, group[j].sentence};
                }
            }
        }
        if (best) out.positives.push_back(*best);
    }
    for (std::size_t i = 0; i < reps.size(); ++i) {
        for (std::size_t j = 0; j < reps.size(); ++j) {
            if (reps[i].concept_id >= reps[j].concept_id) continue;
            out.negative_candidates.push_back(
                {reps[i].surface, reps[i].concept_id, reps[j].surface, reps[j].concept_id,
                 trigram_oracle(reps[i].surface, reps[j].surface), reps[i].sentence, reps[j].sentence});
        }
    }
    std::stable_sort(out.negative_candidates.begin(), out.negative_candidates.end(),
                     [](const auto& a, const auto& b) { return a.sim > b.sim; });
    return out;
}

/// Random mention corpus over a handful of concepts with overlapping surfaces.
inline std::vector<datasetgen::Mention> random_mentions(std::mt19937& rng, std::size_t max_mentions) {
    static const std::vector<std::string> stems = {"arter", "aort", "myocard", "infarct", "mi", "heart", "ab", "x"};
    static const std::vector<std::string> tails = {"itis", "ia", "al disease", "", " attack", "osis", "IS", "  itis"};
    std::vector<datasetgen::Mention> out;
    const auto n = std::uniform_int_distribution<std::size_t>(2, max_mentions)(rng);
    for (std::size_t i = 0; i < n; ++i) {
        datasetgen::Mention m;
        m.surface = stems[rng() % stems.size()] + tails[rng() % tails.size()];
        m.concept_id = "C" + std::to_string(rng() % 5);
        m.sentence = "sentence " + std::to_string(rng() % 4) + " about " + m.surface;
        out.push_back(std::move(m));
    }
    return out;
}

/// Compares a built pool with plain enumeration. Returns an empty string when
/// they agree, otherwise a description of the first difference.
inline std::string pool_oracle_mismatch(const std::vector<datasetgen::Mention>& mentions,
                                        const datasetgen::GenConfig& cfg, const MappingPool& pool) {
    const auto oracle = pool_oracle(mentions);
    auto surface = [](const Item& it) { return std::get<EntityItem>(it).name; };
    auto context = [](const Item& it) { return std::get<EntityItem>(it).attrs.at(0).value; };
    std::vector<const CandidatePair*> pos, neg;
    for (const auto& p : pool.pairs) (p.label == true ? pos : neg).push_back(&p);

    if (pos.size() != oracle.positives.size()) {
        return "positive count " + std::to_string(pos.size()) + " != " + std::to_string(oracle.positives.size());
    }
    for (std::size_t i = 0; i < pos.size(); ++i) {
        const auto& o = oracle.positives[i];
        if (surface(pos[i]->left) != o.left_surface || surface(pos[i]->right) != o.right_surface) {
            return "positive " + pos[i]->id + " differs: " + surface(pos[i]->left) + " / " + surface(pos[i]->right) +
                   " vs " + o.left_surface + " / " + o.right_surface;
        }
    }

    const auto quota = std::min(cfg.negative_quota, oracle.negative_candidates.size());
    if (neg.size() != quota) return "negative count " + std::to_string(neg.size()) + " != " + std::to_string(quota);
    std::multiset<double> expected, got;
    for (std::size_t i = 0; i < quota; ++i) expected.insert(oracle.negative_candidates[i].sim);
    // identical-looking negatives may come from different concept pairs, so
    // each rendered pair may occur as often as it occurs among the candidates
    using Key = std::tuple<std::string, std::string, std::string, std::string>;
    std::map<Key, std::vector<const PoolOracle::Pair*>> available;
    for (const auto& c : oracle.negative_candidates) {
        available[{c.left_surface, c.right_surface, c.left_context, c.right_context}].push_back(&c);
    }
    for (const auto* p : neg) {
        const auto l = surface(p->left), r = surface(p->right);
        auto& slots = available[{l, r, context(p->left), context(p->right)}];
        if (slots.empty()) return "negative " + p->id + " (" + l + " / " + r + ") is not a candidate or repeats";
        if (slots.back()->left_concept == slots.back()->right_concept) return "negative " + p->id + " is intra-concept";
        got.insert(slots.back()->sim);
        slots.pop_back();
    }
    if (!cfg.random_negatives && got != expected) return "negative similarity multiset differs from the top candidates";
    return {};
}

/// Random SM pool of up to `max_pairs` pairs drawn from a small vocabulary so
/// that table names frequently appear inside other descriptions.
inline MappingPool random_sm_pool(std::mt19937& rng, std::size_t max_pairs) {
    static const std::vector<std::string> tables = {"provider", "person", "visit", "care_site", "drug", "Person", "note"};
    static const std::vector<std::string> words = {"provider", "person", "visit", "care", "site", "care_site", "drug",
                                                   "the", "table", "providers", "PERSON", "notes", "note", "of"};
    auto pick = [&](const std::vector<std::string>& v) { return v[std::uniform_int_distribution<std::size_t>(0, v.size() - 1)(rng)]; };
    auto sentence = [&] {
        const auto n = std::uniform_int_distribution<int>(0, 5)(rng);
        std::string s;
        for (int i = 0; i < n; ++i) s += (i ? " " : "") + pick(words);
        return s;
    };
    auto item = [&] { return SchemaItem{pick(tables), "col" + std::to_string(rng() % 5), sentence(), sentence()}; };
    MappingPool pool;
    const auto n = std::uniform_int_distribution<std::size_t>(1, max_pairs)(rng);
    for (std::size_t i = 0; i < n; ++i) {
        pool.pairs.push_back({"p" + std::to_string(i), item(), item(), rng() % 2 == 0, std::nullopt});
    }
    return pool;
}

} // namespace kcmf::testing
