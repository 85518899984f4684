#include "kcmf/prompt.hpp"

#include <fstream>
#include <sstream>

#include <spdlog/spdlog.h>

#include "kcmf/error.hpp"
#include "kcmf/text.hpp"

namespace kcmf::prompt {

void attach_reasoning(Demonstration& demo, const pseudocode::PseudoCode& code) {
    auto steps = pseudocode::construct_reasoning(code, demo.trace);
    const bool says_yes = steps.final_verdict == Verdict::Yes;
    if (says_yes != demo.label) {
        throw DataError("demonstration '" + demo.demo_id + "': trace leads to " +
                        std::string(to_string(steps.final_verdict)) + " but the label is " + (demo.label ? "yes" : "no"));
    }
    demo.reasoning = std::move(steps);
}

namespace {

std::optional<std::string> optional_string(const nlohmann::json& j, const char* field, const std::string& where) {
    if (!j.contains(field) || j.at(field).is_null()) return std::nullopt;
    if (!j.at(field).is_string()) throw DataError(where + ": field '" + field + "' must be a string");
    return j.at(field).get<std::string>();
}

} // namespace

std::vector<Demonstration> load_demonstrations(const std::filesystem::path& path, const pseudocode::PseudoCode& code) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open demonstration file " + path.string());
    std::vector<Demonstration> out;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (text::trim(line).empty()) continue;
        const auto where = path.string() + ":" + std::to_string(n);
        try {
            const auto j = nlohmann::json::parse(line);
            const auto ann = pseudocode::annotation_from_json(j);
            if (!j.contains("pair") || !j.at("pair").is_object()) {
                throw DataError("demonstration '" + ann.demo_id + "' needs an object 'pair'");
            }
            auto pair_json = j.at("pair");
            if (!pair_json.contains("id")) pair_json["id"] = ann.demo_id;
            if (!pair_json.contains("kind")) pair_json["kind"] = std::string(to_string(code.task_kind));

            Demonstration d;
            d.demo_id = ann.demo_id;
            d.pair = pair_from_json(pair_json, code.task_kind);
            d.trace = ann.trace;
            d.label = ann.label;
            d.summary_left = optional_string(j, "summary_left", "demonstration '" + d.demo_id + "'");
            d.summary_right = optional_string(j, "summary_right", "demonstration '" + d.demo_id + "'");
            if (auto si = optional_string(j, "self_indicator", "demonstration '" + d.demo_id + "'")) {
                d.self_indicator = SelfIndicator{*si};
            }
            attach_reasoning(d, code);
            out.push_back(std::move(d));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(where + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError(where + ": " + e.what());
        }
    }
    return out;
}

std::string_view to_string(SummaryStrategy s) {
    switch (s) {
    case SummaryStrategy::None: return "none";
    case SummaryStrategy::DemoOnly: return "demo_only";
    case SummaryStrategy::All: return "all";
    }
    return "";
}

SummaryStrategy parse_summary_strategy(std::string_view s) {
    for (auto v : {SummaryStrategy::None, SummaryStrategy::DemoOnly, SummaryStrategy::All}) {
        if (to_string(v) == text::to_lower(s)) return v;
    }
    throw ConfigError("unknown summary strategy '" + std::string(s) + "' (expected none, demo_only or all)");
}

// ------------------------------------------------------------ templates

namespace {

constexpr std::string_view kBuiltinTemplate =
    "[instruction]\n"
    "[demonstrations]\n"
    "Your turn:\n"
    "[target_instruction]\n"
    "[target]\n"
    "Knowledge for the task:\n"
    "[knowledge]\n"
    "Reasoning:\n"
    "[reasoning]\n"
    "Please continue the reasoning until you draw a final answer ONLY yes or no:";

bool is_name(std::string_view s) {
    if (s.empty()) return false;
    return std::all_of(s.begin(), s.end(), [](char c) { return (c >= 'a' && c <= 'z') || c == '_'; });
}

std::string substitute_scalars(std::string_view line, const TemplateValues& values) {
    std::string out;
    std::size_t i = 0;
    while (i < line.size()) {
        const auto open = line.find('{', i);
        if (open == std::string_view::npos) break;
        const auto close = line.find('}', open + 1);
        if (close == std::string_view::npos) break;
        const auto name = line.substr(open + 1, close - open - 1);
        out.append(line.substr(i, open - i));
        if (is_name(name)) {
            const auto it = values.scalars.find(std::string(name));
            if (it == values.scalars.end()) throw ConfigError("template refers to unknown value {" + std::string(name) + "}");
            out += it->second;
        } else {
            out.append(line.substr(open, close - open + 1));
        }
        i = close + 1;
    }
    out.append(line.substr(i));
    return out;
}

} // namespace

std::string fill_template(std::string_view tmpl, const TemplateValues& values) {
    std::vector<std::string> lines;
    std::size_t start = 0;
    while (true) {
        const auto nl = tmpl.find('\n', start);
        const auto line = tmpl.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start);
        const auto t = text::trim(line);
        if (t.size() > 2 && t.front() == '[' && t.back() == ']' && is_name(t.substr(1, t.size() - 2))) {
            const std::string name(t.substr(1, t.size() - 2));
            const auto it = values.lists.find(name);
            if (it == values.lists.end()) throw ConfigError("template refers to unknown list [" + name + "]");
            lines.insert(lines.end(), it->second.begin(), it->second.end());
        } else {
            lines.push_back(substitute_scalars(line, values));
        }
        if (nl == std::string_view::npos) break;
        start = nl + 1;
    }
    return text::join(lines, "\n");
}

std::string_view builtin_template() { return kBuiltinTemplate; }

std::string load_template(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open template " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    auto s = ss.str();
    if (!s.empty() && s.back() == '\n') s.pop_back();
    return s;
}

std::string letter_index(std::size_t i) {
    std::string out;
    ++i;
    while (i > 0) {
        --i;
        out.insert(out.begin(), static_cast<char>('a' + i % 26));
        i /= 26;
    }
    return out;
}

std::string question_text(TaskKind kind, bool task_oriented) {
    if (kind == TaskKind::SM) {
        if (!task_oriented) return "Are schema A and B matched? Let's think step by step.";
        return "Can records in schema B be transformed and stored in schema A? The task should be solved by completing "
               "the reasoning steps and concluding a final answer ONLY yes or no. Do not stop until you draw a final "
               "answer. Schema name is the table and column names of the schema separated by a dash.";
    }
    if (!task_oriented) return "Are entity A and B matched? Let's think step by step.";
    return "Do entity A and entity B refer to the same real-world concept? You must think step by step, and finally "
           "draw an answer only yes or no.";
}

// ------------------------------------------------------------- pretasks

namespace {

std::vector<std::string> pair_lines(const CandidatePair& pair, const std::optional<std::string>& summary_left,
                                    const std::optional<std::string>& summary_right) {
    const bool sm = pair.kind() == TaskKind::SM;
    const std::string noun = sm ? "Schema" : "Entity";
    const std::string detail = sm ? "Description of schema" : "Attributes of entity";
    std::vector<std::string> out;
    const std::pair<const Item*, const std::optional<std::string>*> sides[] = {{&pair.left, &summary_left},
                                                                              {&pair.right, &summary_right}};
    char letter = 'A';
    for (const auto& [item, summary] : sides) {
        const auto r = render_item(*item);
        const auto desc = *summary ? **summary : r.description;
        out.push_back(noun + " " + letter + ": " + r.name);
        out.push_back(detail + " " + letter + ":" + (desc.empty() ? "" : " " + desc));
        ++letter;
    }
    return out;
}

std::vector<std::string> knowledge_lines(const std::vector<knowledge::KnowledgeItem>& items, bool u_indices) {
    std::vector<std::string> out;
    for (std::size_t i = 0; i < items.size(); ++i) {
        out.push_back((u_indices ? letter_index(i) : std::to_string(i + 1)) + ". " + items[i].text);
    }
    return out;
}

std::string answer_of(const std::string& response) {
    return std::string(text::trim(response));
}

} // namespace

std::string demo_summary_prompt(const Item& item) {
    const auto r = render_item(item);
    if (item_kind(item) == TaskKind::SM) {
        return "Instruction: You need to summarize the given schema based on its schema name and description. The "
               "summary should be focused on retaining and explaining concepts in the database domain. Schema name is "
               "the table and column names of the schema separated by a dash. Schema description is the table and "
               "column descriptions of the schema separated by a semicolon.\n\nYour turn:\nSchema name: " +
               r.name + "\nSchema description: " + r.description + "\nAnswer:";
    }
    return "Instruction: You need to summarize the given entity based on its name and attributes. The summary should "
           "be focused on retaining and explaining concepts in the biomedical domain.\n\nYour turn:\nEntity name: " +
           r.name + "\nEntity attributes: " + r.description + "\nAnswer:";
}

std::string self_indicator_prompt(const CandidatePair& pair, const std::vector<knowledge::KnowledgeItem>& knowledge) {
    std::string out = pair.kind() == TaskKind::SM
                          ? "Instruction: Given two schemas, you need to summarize the column and table for each "
                            "considering the given knowledge.\n"
                          : "Instruction: Given two entities, you need to summarize each entity considering the given "
                            "knowledge.\n";
    out += "Your turn:\n";
    for (const auto& l : pair_lines(pair, std::nullopt, std::nullopt)) out += l + "\n";
    out += "Knowledge for the task:\n";
    for (const auto& l : knowledge_lines(knowledge, true)) out += l + "\n";
    out += "Answer:";
    return out;
}

std::optional<std::string> summarize_item(const Item& item, llm::Backend& backend, const llm::GenerationParams& params) {
    try {
        auto s = answer_of(backend.complete({demo_summary_prompt(item), std::string(llm::tags::summarize_demo), {}}, params).text);
        if (s.empty()) return std::nullopt;
        return s;
    } catch (const llm::BackendError& e) {
        if (e.fatal()) throw;
        spdlog::warn("summary request failed: {}", e.what());
        return std::nullopt;
    }
}

Demonstration summarize_demo(const Demonstration& demo, llm::Backend& backend, const llm::GenerationParams& params) {
    auto left = summarize_item(demo.pair.left, backend, params);
    auto right = summarize_item(demo.pair.right, backend, params);
    if (!left || !right) {
        spdlog::warn("demonstration '{}' left unsummarized", demo.demo_id);
        return demo;
    }
    Demonstration out = demo;
    out.summary_left = std::move(left);
    out.summary_right = std::move(right);
    return out;
}

std::optional<SelfIndicator> extract_self_indicator(const CandidatePair& pair,
                                                    const std::vector<knowledge::KnowledgeItem>& knowledge,
                                                    llm::Backend& backend, const llm::GenerationParams& params,
                                                    const std::string& source) {
    try {
        const auto reply = backend.complete({self_indicator_prompt(pair, knowledge), std::string(llm::tags::self_indicator), source}, params);
        auto t = answer_of(reply.text);
        if (t.empty()) return std::nullopt;
        return SelfIndicator{std::move(t)};
    } catch (const llm::BackendError& e) {
        if (e.fatal()) throw;
        spdlog::warn("self-indicator for pair '{}' unavailable: {}", pair.id, e.what());
        return std::nullopt;
    }
}

// -------------------------------------------------------------- render

namespace {

std::string instruction_block(const pseudocode::PseudoCode& code, TaskKind kind, const PromptOptions& opts) {
    std::string out = "Question:\n" + question_text(kind, opts.task_oriented_instruction) + "\n\n";
    out += opts.rules_terminology ? "Rules for the task:\n" : "Knowledge for the task:\n";
    for (const auto& st : code.statements) {
        if (st.is_preamble && !opts.keep_preamble) continue;
        const auto index = opts.u_indices ? st.index : std::to_string(pseudocode::from_roman(st.index));
        out += index + ": " + st.text + "\n";
    }
    return out;
}

std::vector<std::string> reasoning_lines(const std::vector<std::string>& steps, const std::optional<SelfIndicator>& si) {
    std::vector<std::string> out;
    int n = 1;
    if (si) out.push_back(std::to_string(n++) + ". " + si->text);
    for (const auto& s : steps) out.push_back(std::to_string(n++) + ". " + s);
    return out;
}

} // namespace

PromptBundle render_prompt(const pseudocode::PseudoCode& code, const Target& target,
                           const std::vector<Demonstration>& demos, std::size_t k, const PromptOptions& opts,
                           const std::string& source, std::string_view layout) {
    if (!target.pair) throw DataError("render_prompt needs a target pair");
    const auto kind = target.pair->kind();
    if (kind != code.task_kind) throw DataError("pair '" + target.pair->id + "' does not match the pseudo-code task kind");
    if (demos.size() != k) {
        throw ConfigError("expected " + std::to_string(k) + " demonstrations, got " + std::to_string(demos.size()));
    }

    const auto instruction = instruction_block(code, kind, opts);
    const bool use_demo_summary = opts.summary != SummaryStrategy::None;
    const bool use_target_summary = opts.summary == SummaryStrategy::All;

    std::vector<std::string> demo_blocks;
    for (std::size_t i = 0; i < demos.size(); ++i) {
        const auto& d = demos[i];
        if (d.pair.kind() != kind) throw DataError("demonstration '" + d.demo_id + "' has the wrong task kind");
        if (d.reasoning.steps.empty()) throw DataError("demonstration '" + d.demo_id + "' has no reasoning");
        std::string block = "Example " + std::to_string(i + 1) + ":\n";
        if (!opts.instruction_extraction) block += instruction + "\n";
        const auto lines = use_demo_summary ? pair_lines(d.pair, d.summary_left, d.summary_right)
                                            : pair_lines(d.pair, std::nullopt, std::nullopt);
        for (const auto& l : lines) block += l + "\n";
        block += "Knowledge for the task:\n";
        for (const auto& l : knowledge_lines(d.knowledge, opts.u_indices)) block += l + "\n";
        block += "Reasoning:\n";
        const auto si = opts.self_indicator ? d.self_indicator : std::nullopt;
        for (const auto& l : reasoning_lines(d.reasoning.steps, si)) block += l + "\n";
        block += "Answer: " + std::string(to_string(d.reasoning.final_verdict)) + "\n";
        demo_blocks.push_back(std::move(block));
    }

    TemplateValues v;
    v.lists["instruction"] = opts.instruction_extraction ? std::vector<std::string>{instruction} : std::vector<std::string>{};
    v.lists["demonstrations"] = std::move(demo_blocks);
    v.lists["target_instruction"] = opts.instruction_extraction ? std::vector<std::string>{} : std::vector<std::string>{instruction};
    v.lists["target"] = use_target_summary ? pair_lines(*target.pair, target.summary_left, target.summary_right)
                                           : pair_lines(*target.pair, std::nullopt, std::nullopt);
    v.lists["knowledge"] = knowledge_lines(target.knowledge, opts.u_indices);
    v.lists["reasoning"] = reasoning_lines({}, opts.self_indicator ? target.self_indicator : std::nullopt);
    v.scalars["question"] = question_text(kind, opts.task_oriented_instruction);
    v.scalars["source"] = source;

    PromptBundle b;
    b.template_id = kind;
    b.body = fill_template(layout, v);
    b.k = k;
    b.source = source;
    b.options = opts;
    return b;
}

} // namespace kcmf::prompt
