#include "kcmf/ensemble.hpp"

#include <algorithm>
#include <atomic>
#include <exception>
#include <fstream>
#include <mutex>
#include <thread>

#include <spdlog/spdlog.h>

#include "kcmf/digest.hpp"
#include "kcmf/error.hpp"
#include "kcmf/text.hpp"

namespace kcmf::ensemble {

std::string_view to_string(VoteOutcome v) {
    switch (v) {
    case VoteOutcome::Yes: return "yes";
    case VoteOutcome::No: return "no";
    case VoteOutcome::BadlyFormatted: return "badly_formatted";
    case VoteOutcome::Undecided: return "undecided";
    }
    return "";
}

VoteOutcome parse_vote_outcome(std::string_view s) {
    for (auto v : {VoteOutcome::Yes, VoteOutcome::No, VoteOutcome::BadlyFormatted, VoteOutcome::Undecided}) {
        if (to_string(v) == s) return v;
    }
    throw DataError("unknown vote outcome '" + std::string(s) + "'");
}

VoteOutcome from_parsed(llm::ParsedVerdict v) {
    switch (v) {
    case llm::ParsedVerdict::Yes: return VoteOutcome::Yes;
    case llm::ParsedVerdict::No: return VoteOutcome::No;
    case llm::ParsedVerdict::BadlyFormatted: return VoteOutcome::BadlyFormatted;
    }
    return VoteOutcome::BadlyFormatted;
}

std::string_view to_string(FormatClass f) {
    switch (f) {
    case FormatClass::WellFormatted: return "well_formatted";
    case FormatClass::Eliminated: return "eliminated";
    case FormatClass::BadlyFormatted: return "badly_formatted";
    }
    return "";
}

FormatClass parse_format_class(std::string_view s) {
    for (auto f : {FormatClass::WellFormatted, FormatClass::Eliminated, FormatClass::BadlyFormatted}) {
        if (to_string(f) == s) return f;
    }
    throw DataError("unknown format class '" + std::string(s) + "'");
}

VoteResult vote(const std::vector<VoteOutcome>& votes) {
    if (votes.empty()) throw Error("cannot vote over an empty list");
    std::size_t yes = 0, bad = 0;
    for (auto v : votes) {
        if (v == VoteOutcome::Yes) ++yes;
        if (v == VoteOutcome::BadlyFormatted || v == VoteOutcome::Undecided) ++bad;
    }
    auto majority = [&](std::size_t y) { return 2 * y > votes.size() ? Verdict::Yes : Verdict::No; };
    VoteResult r;
    r.final = majority(yes);
    if (bad == 0) {
        r.format_class = FormatClass::WellFormatted;
    } else {
        r.format_class = majority(yes + bad) == r.final ? FormatClass::Eliminated : FormatClass::BadlyFormatted;
    }
    return r;
}

nlohmann::json to_json(const Decision& d) {
    nlohmann::json votes = nlohmann::json::array();
    for (const auto& v : d.votes) votes.push_back({{"source", v.source}, {"outcome", std::string(to_string(v.outcome))}});
    return {{"pair_id", d.pair_id},
            {"votes", votes},
            {"final", std::string(to_string(d.final))},
            {"format_class", std::string(to_string(d.format_class))},
            {"prompt_digests", d.prompt_digests},
            {"responses", d.responses}};
}

Decision decision_from_json(const nlohmann::json& j) {
    Decision d;
    try {
        d.pair_id = j.at("pair_id").get<std::string>();
        for (const auto& v : j.at("votes")) {
            d.votes.push_back({v.at("source").get<std::string>(), parse_vote_outcome(v.at("outcome").get<std::string>())});
        }
        const auto final = j.at("final").get<std::string>();
        if (final != "yes" && final != "no") throw DataError("field 'final' must be yes or no");
        d.final = final == "yes" ? Verdict::Yes : Verdict::No;
        d.format_class = parse_format_class(j.at("format_class").get<std::string>());
        if (j.contains("prompt_digests")) d.prompt_digests = j.at("prompt_digests").get<std::vector<std::string>>();
        if (j.contains("responses")) d.responses = j.at("responses").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("bad decision record: ") + e.what());
    }
    return d;
}

void write_run_log(std::ostream& out, const std::vector<Decision>& decisions) {
    for (const auto& d : decisions) out << to_json(d).dump() << '\n';
}

void save_run_log(const std::filesystem::path& path, const std::vector<Decision>& decisions) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write run log " + path.string());
    write_run_log(out, decisions);
}

std::vector<Decision> load_run_log(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open run log " + path.string());
    std::vector<Decision> out;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (text::trim(line).empty()) continue;
        try {
            out.push_back(decision_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

// ------------------------------------------------------------- pipeline

namespace {

constexpr const char* kSelfIndicatorPlaceholder = "{Self-indicator}";

} // namespace

Pipeline::Pipeline(PipelineConfig cfg) : cfg_(std::move(cfg)) {
    if (!cfg_.code) throw ConfigError("pipeline needs pseudo-code");
    if (cfg_.sources.sources.empty()) throw ConfigError("pipeline needs at least one knowledge source");
    if (cfg_.demos.size() < cfg_.shots) {
        throw ConfigError("configured " + std::to_string(cfg_.shots) + " shots but only " +
                          std::to_string(cfg_.demos.size()) + " demonstrations are available");
    }
    cfg_.demos.resize(cfg_.shots);
    if (!cfg_.builder) throw ConfigError("pipeline needs a knowledge builder");
}

prompt::PromptOptions Pipeline::options_for(const knowledge::SourceSpec& source) const {
    auto opts = cfg_.options;
    opts.self_indicator = opts.self_indicator && source.self_indicator;
    return opts;
}

void Pipeline::prepare() {
    std::vector<prompt::Demonstration> base = cfg_.demos;
    if (cfg_.options.summary != prompt::SummaryStrategy::None && cfg_.backend) {
        for (auto& d : base) {
            if (!d.summary_left || !d.summary_right) d = prompt::summarize_demo(d, *cfg_.backend, cfg_.params);
        }
    }
    demos_by_source_.clear();
    for (const auto& source : cfg_.sources.sources) {
        const auto opts = options_for(source);
        auto demos = base;
        for (auto& d : demos) {
            d.knowledge = knowledge::retrieve(d.pair, source, *cfg_.builder);
            if (!opts.self_indicator) {
                d.self_indicator.reset();
            } else if (!d.self_indicator) {
                if (cfg_.backend) {
                    d.self_indicator = prompt::extract_self_indicator(d.pair, d.knowledge, *cfg_.backend, cfg_.params, source.name);
                } else {
                    d.self_indicator = prompt::SelfIndicator{kSelfIndicatorPlaceholder};
                }
            }
        }
        demos_by_source_.push_back(std::move(demos));
    }
    prepared_ = true;
}

prompt::Target Pipeline::make_target(const CandidatePair& pair, const knowledge::SourceSpec& source, bool si_enabled) {
    prompt::Target t;
    t.pair = &pair;
    t.knowledge = knowledge::retrieve(pair, source, *cfg_.builder);
    if (si_enabled) {
        if (cfg_.backend) {
            t.self_indicator = prompt::extract_self_indicator(pair, t.knowledge, *cfg_.backend, cfg_.params, source.name);
        } else {
            t.self_indicator = prompt::SelfIndicator{kSelfIndicatorPlaceholder};
        }
    }
    if (cfg_.options.summary == prompt::SummaryStrategy::All && cfg_.backend) {
        t.summary_left = prompt::summarize_item(pair.left, *cfg_.backend, cfg_.params);
        t.summary_right = prompt::summarize_item(pair.right, *cfg_.backend, cfg_.params);
    }
    return t;
}

std::vector<RenderedSource> Pipeline::render(const CandidatePair& pair) {
    if (!prepared_) throw Error("Pipeline::prepare() must run before rendering");
    std::vector<RenderedSource> out;
    for (std::size_t s = 0; s < cfg_.sources.sources.size(); ++s) {
        const auto& source = cfg_.sources.sources[s];
        const auto opts = options_for(source);
        const auto target = make_target(pair, source, opts.self_indicator);
        out.push_back({source, prompt::render_prompt(*cfg_.code, target, demos_by_source_[s], cfg_.shots, opts,
                                                     source.name, cfg_.layout)});
    }
    return out;
}

Decision Pipeline::classify(const CandidatePair& pair) {
    if (!cfg_.backend) throw ConfigError("classification needs an LLM backend");
    Decision d;
    d.pair_id = pair.id;
    std::vector<VoteOutcome> outcomes;
    for (auto& [source, bundle] : render(pair)) {
        d.prompt_digests.push_back(sha256_hex(bundle.body));
        VoteOutcome outcome;
        try {
            const auto reply = cfg_.backend->complete({bundle.body, std::string(llm::tags::match), source.name}, cfg_.params);
            outcome = from_parsed(llm::parse_verdict(reply.text));
            d.responses.push_back(reply.text);
        } catch (const llm::BackendError& e) {
            if (e.fatal()) throw;
            spdlog::warn("pair '{}', source {}: {}; counted as undecided", pair.id, source.name, e.what());
            outcome = VoteOutcome::Undecided;
            d.responses.emplace_back();
        }
        d.votes.push_back({source.name, outcome});
        outcomes.push_back(outcome);
    }
    const auto r = vote(outcomes);
    d.final = r.final;
    d.format_class = r.format_class;
    return d;
}

Decision intge_classify(const CandidatePair& pair, Pipeline& pipeline) { return pipeline.classify(pair); }

std::vector<Decision> classify_pool(const MappingPool& pool, Pipeline& pipeline, std::size_t workers) {
    std::vector<Decision> results(pool.pairs.size());
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex error_mutex;

    auto work = [&] {
        while (!failed.load()) {
            const auto i = next++;
            if (i >= pool.pairs.size()) return;
            try {
                results[i] = pipeline.classify(pool.pairs[i]);
            } catch (...) {
                std::lock_guard lock(error_mutex);
                if (!error) error = std::current_exception();
                failed = true;
            }
        }
    };

    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(pool.pairs.size(), 1));
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> threads;
        for (std::size_t w = 0; w < workers; ++w) threads.emplace_back(work);
        for (auto& t : threads) t.join();
    }
    if (error) std::rethrow_exception(error);

    std::sort(results.begin(), results.end(), [](const Decision& a, const Decision& b) { return a.pair_id < b.pair_id; });
    return results;
}

} // namespace kcmf::ensemble
