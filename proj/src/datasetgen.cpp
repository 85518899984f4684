#include "kcmf/datasetgen.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <queue>
#include <set>
#include <tuple>

#include "kcmf/error.hpp"
#include "kcmf/knowledge.hpp"
#include "kcmf/text.hpp"

namespace kcmf::datasetgen {

namespace {

std::set<std::string> trigrams(const std::string& s) {
    if (s.size() < 3) return {s};
    std::set<std::string> out;
    for (std::size_t i = 0; i + 3 <= s.size(); ++i) out.insert(s.substr(i, 3));
    return out;
}

double jaccard_normalized(const std::string& a, const std::string& b) {
    if (a == b) return 1.0;
    const auto ga = trigrams(a);
    const auto gb = trigrams(b);
    std::size_t common = 0;
    for (const auto& g : ga) common += gb.count(g);
    const double j = static_cast<double>(common) / static_cast<double>(ga.size() + gb.size() - common);
    return j >= 1.0 ? std::nextafter(1.0, 0.0) : j;
}

std::uint64_t fnv1a(std::string_view s, std::uint64_t h = 1469598103934665603ULL) {
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

struct Representative {
    Mention mention;
    std::string norm;
};

struct Candidate {
    double sim;
    std::uint64_t tie;
    std::size_t a;
    std::size_t b;
};

// true when x ranks ahead of y
bool ranks_before(const Candidate& x, const Candidate& y) {
    if (x.sim != y.sim) return x.sim > y.sim;
    if (x.tie != y.tie) return x.tie < y.tie;
    return std::tie(x.a, x.b) < std::tie(y.a, y.b);
}

std::string pair_id(const char* prefix, std::size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s-%06zu", prefix, n);
    return buf;
}

} // namespace

double similarity(std::string_view a, std::string_view b) {
    return jaccard_normalized(text::normalize(a), text::normalize(b));
}

SimilarityFn similarity_function(std::string_view id) {
    if (id == "trigram_jaccard") return [](std::string_view a, std::string_view b) { return similarity(a, b); };
    throw ConfigError("unknown similarity '" + std::string(id) + "' (expected trigram_jaccard)");
}

EntityItem to_item(const Mention& m) { return EntityItem{m.surface, {{"context", m.sentence}}}; }

MappingPool build_pool(const std::vector<Mention>& mentions, const GenConfig& cfg) {
    if (mentions.size() < 2) throw DataError("at least two mentions are needed to build a pool");
    const auto sim = similarity_function(cfg.similarity);

    std::map<std::pair<std::string, std::string>, Mention> chosen;
    for (const auto& m : mentions) {
        if (text::trim(m.surface).empty() || text::trim(m.concept_id).empty() || text::trim(m.sentence).empty()) {
            throw DataError("mention fields must be non-empty (surface '" + m.surface + "', concept '" + m.concept_id + "')");
        }
        const auto key = std::make_pair(m.concept_id, text::normalize(m.surface));
        const auto it = chosen.find(key);
        if (it == chosen.end() || std::tie(m.surface, m.sentence) < std::tie(it->second.surface, it->second.sentence)) {
            chosen[key] = m;
        }
    }
    // map order: by concept, then normalized surface
    std::vector<Representative> reps;
    for (const auto& [key, m] : chosen) reps.push_back({m, key.second});

    MappingPool pool;
    pool.task_kind = TaskKind::EM;
    auto emit = [&](const char* prefix, std::size_t n, const Representative& l, const Representative& r, bool label) {
        pool.pairs.push_back({pair_id(prefix, n), to_item(l.mention), to_item(r.mention), label, std::nullopt});
    };

    std::size_t positives = 0;
    for (std::size_t start = 0; start < reps.size();) {
        std::size_t end = start;
        while (end < reps.size() && reps[end].mention.concept_id == reps[start].mention.concept_id) ++end;
        std::optional<std::tuple<double, std::size_t, std::size_t>> best;
        for (std::size_t i = start; i < end; ++i) {
            for (std::size_t j = i + 1; j < end; ++j) {
                const double s = sim(reps[i].mention.surface, reps[j].mention.surface);
                if (!best || s < std::get<0>(*best)) best = {s, i, j};
            }
        }
        if (best) emit("pos", ++positives, reps[std::get<1>(*best)], reps[std::get<2>(*best)], true);
        start = end;
    }

    std::vector<Candidate> negatives;
    if (cfg.negative_quota > 0) {
        auto tie_of = [&](std::size_t a, std::size_t b) {
            auto h = fnv1a(reps[a].mention.concept_id);
            h = fnv1a(reps[a].norm, fnv1a("\x1f", h));
            h = fnv1a(reps[b].mention.concept_id, fnv1a("\x1e", h));
            h = fnv1a(reps[b].norm, fnv1a("\x1f", h));
            return splitmix(h ^ splitmix(cfg.seed));
        };
        if (cfg.random_negatives) {
            std::vector<std::pair<std::size_t, std::size_t>> all;
            for (std::size_t a = 0; a < reps.size(); ++a) {
                for (std::size_t b = a + 1; b < reps.size(); ++b) {
                    if (reps[a].mention.concept_id != reps[b].mention.concept_id) all.emplace_back(a, b);
                }
            }
            for (auto i : knowledge::sample_indices(all.size(), cfg.negative_quota, cfg.seed)) {
                const auto [a, b] = all[i];
                negatives.push_back({sim(reps[a].mention.surface, reps[b].mention.surface), 0, a, b});
            }
        } else {
            // min-heap on rank keeps the best `negative_quota` candidates seen so far
            auto worse_on_top = [](const Candidate& x, const Candidate& y) { return ranks_before(x, y); };
            std::priority_queue<Candidate, std::vector<Candidate>, decltype(worse_on_top)> heap(worse_on_top);
            for (std::size_t a = 0; a < reps.size(); ++a) {
                for (std::size_t b = a + 1; b < reps.size(); ++b) {
                    if (reps[a].mention.concept_id == reps[b].mention.concept_id) continue;
                    Candidate c{sim(reps[a].mention.surface, reps[b].mention.surface), tie_of(a, b), a, b};
                    if (heap.size() < cfg.negative_quota) {
                        heap.push(c);
                    } else if (ranks_before(c, heap.top())) {
                        heap.pop();
                        heap.push(c);
                    }
                }
            }
            while (!heap.empty()) {
                negatives.push_back(heap.top());
                heap.pop();
            }
            std::sort(negatives.begin(), negatives.end(), ranks_before);
        }
    }
    std::size_t n = 0;
    for (const auto& c : negatives) emit("neg", ++n, reps[c.a], reps[c.b], false);
    return pool;
}

std::vector<Mention> read_mentions(std::istream& in, std::string_view origin) {
    std::vector<Mention> out;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (text::trim(line).empty()) continue;
        const auto where = std::string(origin) + ":" + std::to_string(n);
        try {
            const auto j = nlohmann::json::parse(line);
            Mention m;
            for (auto [field, dest] : {std::pair{"surface", &m.surface}, std::pair{"concept_id", &m.concept_id},
                                       std::pair{"sentence", &m.sentence}}) {
                if (!j.contains(field) || !j.at(field).is_string()) {
                    throw DataError(where + ": field '" + field + "' must be a string");
                }
                *dest = j.at(field).get<std::string>();
            }
            out.push_back(std::move(m));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + ": " + e.what());
        }
    }
    return out;
}

std::vector<Mention> load_mentions(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open mention file " + path.string());
    return read_mentions(in, path.string());
}

} // namespace kcmf::datasetgen
