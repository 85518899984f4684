#include "kcmf/config.hpp"

#include <fstream>

#include "kcmf/error.hpp"
#include "kcmf/knowledge.hpp"

namespace kcmf {

namespace {

using nlohmann::json;

class Reader {
public:
    Reader(const json& j, std::string prefix, const std::filesystem::path& base)
        : j_(j), prefix_(std::move(prefix)), base_(base) {}

    template <class T>
    void get(const char* field, T& dest) const {
        if (!j_.contains(field) || j_.at(field).is_null()) return;
        try {
            dest = j_.at(field).get<T>();
        } catch (const json::exception&) {
            throw ConfigError("config field '" + prefix_ + field + "' has the wrong type");
        }
    }

    void path(const char* field, std::filesystem::path& dest) const {
        std::string s;
        get(field, s);
        if (s.empty()) return;
        std::filesystem::path p(s);
        dest = p.is_absolute() ? p : base_ / p;
    }

    Reader sub(const char* field) const {
        static const json empty = json::object();
        if (!j_.contains(field) || j_.at(field).is_null()) return Reader(empty, prefix_ + field + ".", base_);
        if (!j_.at(field).is_object()) throw ConfigError("config field '" + prefix_ + field + "' must be an object");
        return Reader(j_.at(field), prefix_ + field + ".", base_);
    }

    void reject_unknown(std::initializer_list<const char*> known) const {
        for (const auto& [key, value] : j_.items()) {
            if (std::find_if(known.begin(), known.end(), [&](const char* k) { return key == k; }) == known.end()) {
                throw ConfigError("unknown config field '" + prefix_ + key + "'");
            }
        }
    }

private:
    const json& j_;
    std::string prefix_;
    std::filesystem::path base_;
};

} // namespace

RunConfig parse_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    if (!j.is_object()) throw ConfigError("config must be a JSON object");
    RunConfig c;
    Reader r(j, "", base_dir);
    r.reject_unknown({"dataset", "task", "pseudocode", "demonstrations", "sources", "shots", "template", "generation",
                      "flags", "cache_dir", "output_dir", "seed", "runs", "aggregation", "llm", "knowledge"});

    std::string task;
    r.get("task", task);
    if (task.empty()) throw ConfigError("config field 'task' is required (SM or EM)");
    try {
        c.task = parse_task_kind(task);
    } catch (const Error&) {
        throw ConfigError("config field 'task' must be SM or EM");
    }
    c.shots = c.task == TaskKind::SM ? 4 : 2;

    r.path("dataset", c.dataset);
    r.path("pseudocode", c.pseudocode);
    r.path("demonstrations", c.demonstrations);
    r.path("template", c.template_path);
    r.path("cache_dir", c.cache_dir);
    r.path("output_dir", c.output_dir);
    r.get("sources", c.sources);
    long long shots = static_cast<long long>(c.shots);
    r.get("shots", shots);
    if (shots < 0) throw ConfigError("config field 'shots' must be >= 0");
    c.shots = static_cast<std::size_t>(shots);
    r.get("seed", c.seed);
    r.get("runs", c.runs);
    std::string aggregation;
    r.get("aggregation", aggregation);
    if (!aggregation.empty()) c.aggregation = eval::parse_aggregation(aggregation);

    const auto g = r.sub("generation");
    g.reject_unknown({"temperature", "top_p", "max_tokens", "model"});
    g.get("temperature", c.generation.temperature);
    g.get("top_p", c.generation.top_p);
    g.get("max_tokens", c.generation.max_tokens);
    g.get("model", c.generation.model_id);

    const auto f = r.sub("flags");
    f.reject_unknown({"task_oriented_instruction", "rules_terminology", "u_indices", "instruction_extraction",
                      "self_indicator", "keep_preamble", "summary"});
    f.get("task_oriented_instruction", c.flags.task_oriented_instruction);
    f.get("rules_terminology", c.flags.rules_terminology);
    f.get("u_indices", c.flags.u_indices);
    f.get("instruction_extraction", c.flags.instruction_extraction);
    f.get("self_indicator", c.flags.self_indicator);
    f.get("keep_preamble", c.flags.keep_preamble);
    std::string summary;
    f.get("summary", summary);
    if (!summary.empty()) c.flags.summary = prompt::parse_summary_strategy(summary);

    const auto l = r.sub("llm");
    l.reject_unknown({"base_url", "timeout_ms", "max_attempts", "base_delay_ms"});
    l.get("base_url", c.llm.base_url);
    l.get("timeout_ms", c.llm.timeout_ms);
    l.get("max_attempts", c.llm.max_attempts);
    l.get("base_delay_ms", c.llm.base_delay_ms);

    const auto k = r.sub("knowledge");
    k.reject_unknown({"terminology_url", "terminology_branch", "wikidata_api", "sparql_url", "wikipedia_api", "replay",
                      "record", "blacklist", "max_children", "top_k", "max_facts", "max_words"});
    k.get("terminology_url", c.knowledge.terminology_url);
    k.get("terminology_branch", c.knowledge.terminology_branch);
    k.get("wikidata_api", c.knowledge.wikidata_api);
    k.get("sparql_url", c.knowledge.sparql_url);
    k.get("wikipedia_api", c.knowledge.wikipedia_api);
    k.path("replay", c.knowledge.replay);
    k.path("record", c.knowledge.record);
    k.path("blacklist", c.knowledge.blacklist);
    k.get("max_children", c.knowledge.max_children);
    k.get("top_k", c.knowledge.top_k);
    k.get("max_facts", c.knowledge.max_facts);
    k.get("max_words", c.knowledge.max_words);
    return c;
}

RunConfig load_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config file " + path.string() + " is not valid JSON: " + e.what());
    }
    auto base = std::filesystem::absolute(path).parent_path();
    return parse_config(j, base);
}

void validate_config(const RunConfig& c) {
    auto require_file = [](const std::filesystem::path& p, const char* field) {
        if (p.empty()) throw ConfigError(std::string("config field '") + field + "' is required");
        if (!std::filesystem::is_regular_file(p)) {
            throw ConfigError(std::string("config field '") + field + "': no such file " + p.string());
        }
    };
    require_file(c.dataset, "dataset");
    require_file(c.pseudocode, "pseudocode");
    if (c.shots > 0) require_file(c.demonstrations, "demonstrations");
    if (!c.template_path.empty()) require_file(c.template_path, "template");
    if (!c.knowledge.blacklist.empty()) require_file(c.knowledge.blacklist, "knowledge.blacklist");
    if (!c.knowledge.replay.empty()) require_file(c.knowledge.replay, "knowledge.replay");
    knowledge::SourceSet::parse(c.sources);
    if (c.runs < 1) throw ConfigError("config field 'runs' must be >= 1");
    if (c.workers < 1) throw ConfigError("--workers must be >= 1");
    if (c.generation.max_tokens < 1) throw ConfigError("config field 'generation.max_tokens' must be >= 1");
    if (c.knowledge.max_children < 0) throw ConfigError("config field 'knowledge.max_children' must be >= 0");
    if (c.knowledge.top_k < 1) throw ConfigError("config field 'knowledge.top_k' must be >= 1");
    if (c.llm.max_attempts < 1) throw ConfigError("config field 'llm.max_attempts' must be >= 1");
}

} // namespace kcmf
