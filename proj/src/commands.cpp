#include "kcmf/commands.hpp"

#include <atomic>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <mutex>
#include <ostream>
#include <thread>

#include <spdlog/spdlog.h>

#include "kcmf/error.hpp"
#include "kcmf/eval.hpp"
#include "kcmf/prompt.hpp"
#include "kcmf/pseudocode.hpp"

namespace kcmf::commands {

namespace {

bool uses(const knowledge::SourceSet& set, knowledge::SourceKind kind) {
    for (const auto& s : set.sources) {
        if (std::find(s.members.begin(), s.members.end(), kind) != s.members.end()) return true;
    }
    return false;
}

std::unique_ptr<llm::Backend> make_backend(const RunConfig& cfg) {
    if (cfg.mock) return std::make_unique<llm::MockBackend>(llm::MockBackend::read_script(*cfg.mock));
    if (cfg.llm.base_url.empty()) return nullptr;
    llm::HttpBackendOptions o;
    o.base_url = cfg.llm.base_url;
    if (const char* key = std::getenv("KCMF_LLM_API_KEY")) o.api_key = key;
    o.timeout = std::chrono::milliseconds(cfg.llm.timeout_ms);
    o.max_attempts = cfg.llm.max_attempts;
    o.base_delay = std::chrono::milliseconds(cfg.llm.base_delay_ms);
    o.trace = cfg.trace;
    return std::make_unique<llm::HttpBackend>(o);
}

template <class Fn>
void parallel_for(std::size_t n, std::size_t workers, Fn fn) {
    std::atomic<std::size_t> next{0};
    std::atomic<bool> failed{false};
    std::exception_ptr error;
    std::mutex m;
    auto work = [&] {
        while (!failed) {
            const auto i = next++;
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard lock(m);
                if (!error) error = std::current_exception();
                failed = true;
            }
        }
    };
    workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(n, 1));
    std::vector<std::thread> threads;
    for (std::size_t w = 1; w < workers; ++w) threads.emplace_back(work);
    work();
    for (auto& t : threads) t.join();
    if (error) std::rethrow_exception(error);
}

struct Loaded {
    MappingPool pool;
    pseudocode::PseudoCode code;
    std::vector<prompt::Demonstration> demos;
    std::string layout;
};

Loaded load_inputs(const RunConfig& cfg) {
    validate_config(cfg);
    Loaded in;
    in.pool = load_pool(cfg.dataset, cfg.task);
    in.code = pseudocode::load_pseudocode(cfg.pseudocode, cfg.task);
    if (cfg.shots > 0) in.demos = prompt::load_demonstrations(cfg.demonstrations, in.code);
    in.layout = cfg.template_path.empty() ? std::string(prompt::builtin_template()) : prompt::load_template(cfg.template_path);
    return in;
}

ensemble::PipelineConfig pipeline_config(const RunConfig& cfg, Loaded& in, Services& svc) {
    ensemble::PipelineConfig pc;
    pc.code = &in.code;
    pc.sources = knowledge::SourceSet::parse(cfg.sources);
    pc.demos = in.demos;
    pc.shots = cfg.shots;
    pc.options = cfg.flags;
    pc.layout = in.layout;
    pc.backend = svc.backend();
    pc.params = cfg.generation;
    pc.builder = &svc.builder();
    return pc;
}

void write_text(const std::filesystem::path& path, const std::string& content) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << content;
}

} // namespace

Services::Services(const RunConfig& cfg, const MappingPool& pool, bool with_backend) {
    const auto sources = knowledge::SourceSet::parse(cfg.sources);
    if (with_backend) backend_ = make_backend(cfg);

    if (!cfg.knowledge.replay.empty()) {
        if (!std::filesystem::is_regular_file(cfg.knowledge.replay)) {
            throw ConfigError("config field 'knowledge.replay': no such file " + cfg.knowledge.replay.string());
        }
        base_transport_ = std::make_unique<http::ReplayTransport>(cfg.knowledge.replay);
    } else {
        http::LiveOptions lo;
        lo.trace = cfg.trace;
        base_transport_ = std::make_unique<http::LiveTransport>(lo);
    }
    http::Transport* transport = base_transport_.get();
    if (!cfg.knowledge.record.empty()) {
        recorder_ = std::make_unique<http::RecordingTransport>(*base_transport_, cfg.knowledge.record);
        transport = recorder_.get();
    }

    knowledge::BuilderServices bs;
    bs.backend = backend_.get();
    bs.params = cfg.generation;
    if (uses(sources, knowledge::SourceKind::DaK)) {
        dak_ = knowledge::build_dak_index(pool);
        bs.dak = &*dak_;
    }
    if (uses(sources, knowledge::SourceKind::EaK)) {
        if (cfg.knowledge.terminology_url.empty()) {
            throw ConfigError("EaK source needs config field 'knowledge.terminology_url'");
        }
        terminology_ = std::make_unique<clients::TerminologyClient>(*transport, cfg.knowledge.terminology_url,
                                                                    cfg.knowledge.terminology_branch);
        bs.terminology = terminology_.get();
    }
    if (uses(sources, knowledge::SourceKind::Wikidata) || uses(sources, knowledge::SourceKind::Wikipedia)) {
        search_ = std::make_unique<clients::EntitySearchClient>(*transport, cfg.knowledge.wikidata_api);
        bs.encyclopedia.search = search_.get();
    }
    if (uses(sources, knowledge::SourceKind::Wikidata)) {
        facts_ = std::make_unique<clients::FactClient>(*transport, cfg.knowledge.sparql_url);
        bs.encyclopedia.facts = facts_.get();
    }
    if (uses(sources, knowledge::SourceKind::Wikipedia)) {
        extracts_ = std::make_unique<clients::ExtractClient>(*transport, cfg.knowledge.wikipedia_api);
        bs.encyclopedia.extracts = extracts_.get();
    }
    if (!cfg.knowledge.blacklist.empty() && !std::filesystem::is_regular_file(cfg.knowledge.blacklist)) {
        throw ConfigError("config field 'knowledge.blacklist': no such file " + cfg.knowledge.blacklist.string());
    }
    if (!cfg.knowledge.blacklist.empty()) bs.blacklist = knowledge::load_blacklist(cfg.knowledge.blacklist);
    bs.eak.max_children = cfg.knowledge.max_children;
    bs.eak.top_k = cfg.knowledge.top_k;
    bs.eak.seed = cfg.seed;
    bs.encyclopedia_opts.top_k = cfg.knowledge.top_k;
    bs.encyclopedia_opts.max_facts = cfg.knowledge.max_facts;
    bs.encyclopedia_opts.max_words = cfg.knowledge.max_words;

    cache_ = std::make_unique<knowledge::KnowledgeCache>(cfg.cache_dir);
    if (cache_->corrupt_records() > 0) {
        spdlog::warn("knowledge cache: {} corrupt records skipped", cache_->corrupt_records());
    }
    builder_ = std::make_unique<knowledge::KnowledgeBuilder>(std::move(bs), *cache_);
}

Services::~Services() = default;

std::size_t Services::kb_calls() const { return base_transport_ ? base_transport_->calls() : 0; }

void cmd_match(const RunConfig& cfg, std::ostream& out) {
    if (cfg.output_dir.empty()) throw ConfigError("config field 'output_dir' is required for match");
    auto in = load_inputs(cfg);
    Services svc(cfg, in.pool, true);
    if (!svc.backend()) throw ConfigError("no LLM backend: set config field 'llm.base_url' or pass --mock");

    ensemble::Pipeline pipeline(pipeline_config(cfg, in, svc));
    pipeline.prepare();

    std::vector<std::vector<ensemble::Decision>> runs;
    for (int r = 0; r < cfg.runs; ++r) {
        spdlog::info("run {}/{}: classifying {} pairs with {} workers", r + 1, cfg.runs, in.pool.pairs.size(), cfg.workers);
        runs.push_back(ensemble::classify_pool(in.pool, pipeline, cfg.workers));
    }

    std::filesystem::create_directories(cfg.output_dir);
    for (std::size_t r = 0; r < runs.size(); ++r) {
        ensemble::save_run_log(cfg.output_dir / ("run_" + std::to_string(r + 1) + ".jsonl"), runs[r]);
    }

    const auto labels = eval::labels_of(in.pool);
    if (labels.size() != in.pool.pairs.size()) {
        out << "dataset is not fully labeled; run logs written to " << cfg.output_dir.string() << ", no report\n";
        return;
    }
    std::vector<eval::RunSummary> summaries;
    for (const auto& decisions : runs) summaries.push_back({eval::score(decisions, labels), eval::audit(decisions)});
    const auto report = eval::make_report(summaries, cfg.aggregation);
    const auto text = eval::to_text(report);
    write_text(cfg.output_dir / "report.json", eval::to_json(report).dump(2) + "\n");
    write_text(cfg.output_dir / "report.txt", text);
    out << text;
}

void cmd_knowledge(const RunConfig& cfg, const std::string& source, std::ostream& out) {
    const auto spec = knowledge::parse_source(source);
    if (std::all_of(spec.members.begin(), spec.members.end(),
                    [](auto k) { return k == knowledge::SourceKind::Null; })) {
        out << "source " << spec.name << " carries no knowledge; nothing to build\n";
        return;
    }
    if (cfg.dataset.empty() || !std::filesystem::is_regular_file(cfg.dataset)) {
        throw ConfigError("config field 'dataset': no such file " + cfg.dataset.string());
    }
    const auto pool = load_pool(cfg.dataset, cfg.task);
    auto cfg_for_source = cfg;
    cfg_for_source.sources = {spec.name};
    Services svc(cfg_for_source, pool, true);

    std::atomic<std::size_t> empty_lists{0};
    parallel_for(pool.pairs.size(), cfg.workers, [&](std::size_t i) {
        if (knowledge::retrieve(pool.pairs[i], spec, svc.builder()).empty()) ++empty_lists;
    });
    const auto& st = svc.builder().stats();
    out << "source " << spec.name << ": " << pool.pairs.size() << " pairs, " << st.hits << " cache hits, " << st.misses
        << " built, " << st.degraded << " degraded (not cached), " << st.items << " new items, " << empty_lists
        << " pairs without knowledge\n";
}

void cmd_dataset(const std::filesystem::path& input, const std::filesystem::path& output,
                 const datasetgen::GenConfig& gen, std::ostream& out) {
    const auto mentions = datasetgen::load_mentions(input);
    if (mentions.empty()) throw DataError("mention file " + input.string() + " is empty");
    const auto pool = datasetgen::build_pool(mentions, gen);
    save_pool(output, pool);
    const auto stats = pool_stats(pool);
    out << "wrote " << stats.n_instances << " pairs (" << stats.n_positive << " positive, "
        << stats.n_instances - stats.n_positive << " negative) to " << output.string() << "\n";
}

void cmd_render(const RunConfig& cfg, const std::string& pair_id, std::ostream& out) {
    auto in = load_inputs(cfg);
    const auto* pair = in.pool.find(pair_id);
    if (!pair) throw DataError("no pair with id '" + pair_id + "' in " + cfg.dataset.string());
    Services svc(cfg, in.pool, false);
    ensemble::Pipeline pipeline(pipeline_config(cfg, in, svc));
    pipeline.prepare();
    bool first = true;
    for (const auto& r : pipeline.render(*pair)) {
        if (!first) out << "\n";
        first = false;
        out << "=== source: " << r.source.name << " ===\n" << r.bundle.body << "\n";
    }
}

void cmd_eval(const RunConfig& cfg, const std::filesystem::path& log, std::ostream& out) {
    if (cfg.dataset.empty() || !std::filesystem::is_regular_file(cfg.dataset)) {
        throw ConfigError("config field 'dataset': no such file " + cfg.dataset.string());
    }
    const auto pool = load_pool(cfg.dataset, cfg.task);
    const auto decisions = ensemble::load_run_log(log);
    const auto summary = eval::RunSummary{eval::score(decisions, eval::labels_of(pool)), eval::audit(decisions)};
    const auto report = eval::make_report({summary}, eval::Aggregation::BestF1);
    out << eval::to_text(report);
    out << eval::to_json(report).dump(2) << "\n";
}

} // namespace kcmf::commands
