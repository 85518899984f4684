#include "kcmf/pseudocode.hpp"

#include <array>
#include <fstream>
#include <sstream>

#include "kcmf/error.hpp"
#include "kcmf/text.hpp"

namespace kcmf::pseudocode {

std::string_view to_string(Branch b) {
    switch (b) {
    case Branch::Yes: return "yes";
    case Branch::No: return "no";
    case Branch::Next: return "next";
    }
    return "";
}

std::vector<const Statement*> PseudoCode::rules() const {
    std::vector<const Statement*> out;
    for (const auto& s : statements) {
        if (!s.is_preamble) out.push_back(&s);
    }
    return out;
}

std::vector<std::string> ReasoningSteps::numbered(int first) const {
    std::vector<std::string> out;
    out.reserve(steps.size());
    for (const auto& s : steps) out.push_back(std::to_string(first++) + ". " + s);
    return out;
}

std::string to_roman(int value) {
    static constexpr std::array<std::pair<int, const char*>, 13> table{{{1000, "M"},
                                                                        {900, "CM"},
                                                                        {500, "D"},
                                                                        {400, "CD"},
                                                                        {100, "C"},
                                                                        {90, "XC"},
                                                                        {50, "L"},
                                                                        {40, "XL"},
                                                                        {10, "X"},
                                                                        {9, "IX"},
                                                                        {5, "V"},
                                                                        {4, "IV"},
                                                                        {1, "I"}}};
    std::string out;
    for (const auto& [v, sym] : table) {
        while (value >= v) {
            out += sym;
            value -= v;
        }
    }
    return out;
}

int from_roman(std::string_view s) {
    if (s.empty()) return 0;
    auto digit = [](char c) {
        switch (c) {
        case 'I': return 1;
        case 'V': return 5;
        case 'X': return 10;
        case 'L': return 50;
        case 'C': return 100;
        case 'D': return 500;
        case 'M': return 1000;
        default: return 0;
        }
    };
    int total = 0;
    for (std::size_t i = 0; i < s.size(); ++i) {
        const int v = digit(s[i]);
        if (v == 0) return 0;
        const int next = i + 1 < s.size() ? digit(s[i + 1]) : 0;
        total += v < next ? -v : v;
    }
    // reject non-canonical spellings such as "IIII" or "VX"
    return total > 0 && to_roman(total) == s ? total : 0;
}

namespace {

std::string strip_clause(std::string_view s) {
    s = text::trim(s);
    while (!s.empty() && (s.front() == ',' || s.front() == ' ')) s.remove_prefix(1);
    while (!s.empty() && (s.back() == '.' || s.back() == ',' || s.back() == ' ')) s.remove_suffix(1);
    return std::string(s);
}

std::size_t rfind_ci(std::string_view hay, std::string_view needle) {
    return text::to_lower(hay).rfind(text::to_lower(needle));
}

// "the answer is yes" | "the answer is no" | "check rule IV"
Branch parse_clause(std::string_view clause, std::string& target, const std::string& where) {
    const std::string c = text::normalize(strip_clause(clause));
    if (c == "the answer is yes") return Branch::Yes;
    if (c == "the answer is no") return Branch::No;
    constexpr std::string_view check = "check rule ";
    if (c.starts_with(check)) {
        // keep original case for the Roman numeral
        const auto raw = strip_clause(clause);
        target = raw.substr(raw.rfind(' ') + 1);
        if (from_roman(target) == 0) throw DataError(where + ": '" + target + "' is not a rule index");
        return Branch::Next;
    }
    throw DataError(where + ": cannot parse clause '" + std::string(text::trim(clause)) + "'");
}

Statement parse_line(std::string_view line, std::size_t line_no, std::string& then_target, std::string& else_target) {
    const std::string where = "pseudo-code line " + std::to_string(line_no);
    const auto colon = line.find(':');
    if (colon == std::string_view::npos) throw DataError(where + ": missing 'N:' index");
    Statement st;
    st.index = std::string(text::trim(line.substr(0, colon)));
    if (from_roman(st.index) == 0) throw DataError(where + ": '" + st.index + "' is not a Roman numeral");
    st.text = std::string(text::trim(line.substr(colon + 1)));
    if (st.text.empty()) throw DataError(where + ": empty statement");
    if (!text::starts_with_ci(st.text, "if ")) {
        st.is_preamble = true;
        return st;
    }

    const std::string_view body = std::string_view(st.text).substr(3);
    const auto otherwise = rfind_ci(body, "otherwise");
    if (otherwise == std::string::npos) throw DataError(where + ": conditional statement has no 'otherwise' branch");
    const std::string_view head = body.substr(0, otherwise);
    const std::string_view else_clause = body.substr(otherwise + std::string_view("otherwise").size());

    auto then_pos = rfind_ci(head, "the answer is");
    const auto check_pos = rfind_ci(head, "check rule");
    if (then_pos == std::string::npos || (check_pos != std::string::npos && check_pos > then_pos)) then_pos = check_pos;
    if (then_pos == std::string::npos) throw DataError(where + ": conditional statement has no consequence");

    st.condition = strip_clause(head.substr(0, then_pos));
    if (st.condition.empty()) throw DataError(where + ": empty condition");
    st.then_branch = parse_clause(head.substr(then_pos), then_target, where);
    st.else_branch = parse_clause(else_clause, else_target, where);
    return st;
}

} // namespace

void validate(const PseudoCode& code) {
    const auto rules = code.rules();
    if (rules.empty()) throw DataError("pseudo-code has no conditional statements");
    int prev = 0;
    for (const auto& st : code.statements) {
        const int idx = from_roman(st.index);
        if (idx == 0) throw DataError("statement index '" + st.index + "' is not a Roman numeral");
        if (idx <= prev) throw DataError("statement indices must be strictly increasing at '" + st.index + "'");
        prev = idx;
    }
    for (std::size_t i = 0; i < rules.size(); ++i) {
        const auto& r = *rules[i];
        const int nexts = (r.then_branch == Branch::Next) + (r.else_branch == Branch::Next);
        if (i + 1 == rules.size()) {
            if (nexts != 0) throw DataError("terminal statement " + r.index + " does not cover all cases");
        } else if (nexts != 1) {
            throw DataError("statement " + r.index + " must continue to the next rule in exactly one branch");
        }
    }
}

PseudoCode parse_pseudocode(std::string_view text, TaskKind kind) {
    PseudoCode code;
    code.task_kind = kind;
    std::vector<std::pair<std::string, std::string>> targets;  // per statement: then/else "check rule" target
    const auto lines = text::split_lines(text);
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (text::trim(lines[i]).empty()) continue;
        std::string then_target, else_target;
        code.statements.push_back(parse_line(lines[i], i + 1, then_target, else_target));
        targets.emplace_back(std::move(then_target), std::move(else_target));
    }
    validate(code);
    // "check rule N" must name the statement that follows
    for (std::size_t i = 0; i < code.statements.size(); ++i) {
        for (const auto* target : {&targets[i].first, &targets[i].second}) {
            if (target->empty()) continue;
            std::string expected;
            for (std::size_t j = i + 1; j < code.statements.size(); ++j) {
                if (!code.statements[j].is_preamble) {
                    expected = code.statements[j].index;
                    break;
                }
            }
            if (*target != expected) {
                throw DataError("statement " + code.statements[i].index + " refers to rule " + *target +
                                " but the next rule is " + (expected.empty() ? "<none>" : expected));
            }
        }
    }
    return code;
}

PseudoCode load_pseudocode(const std::filesystem::path& path, TaskKind kind) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open pseudo-code file " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_pseudocode(ss.str(), kind);
}

ConditionTrace trace_for(const PseudoCode& code, const std::vector<bool>& conditions) {
    ConditionTrace trace;
    const auto rules = code.rules();
    for (std::size_t i = 0; i < rules.size() && i < conditions.size(); ++i) {
        trace.outcomes.push_back(conditions[i]);
        const Branch b = conditions[i] ? rules[i]->then_branch : rules[i]->else_branch;
        if (b != Branch::Next) break;
    }
    return trace;
}

ReasoningSteps construct_reasoning(const PseudoCode& code, const ConditionTrace& trace) {
    const auto rules = code.rules();
    if (trace.outcomes.size() > rules.size()) {
        throw DataError("condition trace has " + std::to_string(trace.outcomes.size()) + " entries but the pseudo-code has only " +
                        std::to_string(rules.size()) + " rules");
    }
    ReasoningSteps out;
    for (std::size_t i = 0; i < trace.outcomes.size(); ++i) {
        const Statement& rule = *rules[i];
        const bool held = trace.outcomes[i];
        const Branch branch = held ? rule.then_branch : rule.else_branch;
        std::string step = "Checking rule " + rule.index + ": " + rule.condition + " — " + (held ? "holds" : "does not hold");
        if (branch == Branch::Next) {
            if (i + 1 == rules.size()) {
                throw DataError("rule " + rule.index + " is the last rule but continues to a next rule");
            }
            out.steps.push_back(step + "; proceeding to the next rule.");
            continue;
        }
        out.steps.push_back(step + "; therefore the answer is " + std::string(to_string(branch)) + ".");
        if (i + 1 != trace.outcomes.size()) {
            throw DataError("condition trace continues past rule " + rule.index + ", which already yields an answer");
        }
        out.final_verdict = branch == Branch::Yes ? Verdict::Yes : Verdict::No;
        return out;
    }
    throw DataError("condition trace ends before the pseudo-code yields an answer");
}

DemoAnnotation annotation_from_json(const nlohmann::json& j) {
    if (!j.is_object() || !j.contains("demo_id") || !j.at("demo_id").is_string()) {
        throw DataError("demonstration annotation needs a string 'demo_id'");
    }
    DemoAnnotation a;
    a.demo_id = j.at("demo_id").get<std::string>();
    if (!j.contains("trace") || !j.at("trace").is_array()) {
        throw DataError("demonstration '" + a.demo_id + "' needs a boolean array 'trace'");
    }
    for (const auto& v : j.at("trace")) {
        if (!v.is_boolean()) throw DataError("demonstration '" + a.demo_id + "': trace entries must be booleans");
        a.trace.outcomes.push_back(v.get<bool>());
    }
    if (!j.contains("label") || !j.at("label").is_boolean()) {
        throw DataError("demonstration '" + a.demo_id + "' needs a boolean 'label'");
    }
    a.label = j.at("label").get<bool>();
    return a;
}

std::vector<DemoAnnotation> load_demo_annotations(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open annotation file " + path.string());
    std::vector<DemoAnnotation> out;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (text::trim(line).empty()) continue;
        try {
            out.push_back(annotation_from_json(nlohmann::json::parse(line)));
        } catch (const nlohmann::json::exception& e) {
            throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
        } catch (const DataError& e) {
            throw DataError(path.string() + ":" + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

} // namespace kcmf::pseudocode
