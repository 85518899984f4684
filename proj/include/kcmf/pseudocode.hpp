#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "kcmf/core.hpp"

namespace kcmf::pseudocode {

/// Where a statement's branch leads: a final answer or the next statement.
enum class Branch { Yes, No, Next };

std::string_view to_string(Branch b);

/// One line of pseudo-code. Preamble lines carry no condition and no branches.
struct Statement {
    std::string index;      // Roman numeral as written, e.g. "III"
    std::string text;       // line body after "III: "
    std::string condition;  // the p of "If p, ..."
    Branch then_branch = Branch::Next;
    Branch else_branch = Branch::Next;
    bool is_preamble = false;
};

/// An ordered list of conditional statements checked sequentially.
struct PseudoCode {
    std::vector<Statement> statements;
    TaskKind task_kind = TaskKind::SM;

    /// Non-preamble statements in order.
    std::vector<const Statement*> rules() const;
};

/// Condition outcomes for the statements actually evaluated, in order.
struct ConditionTrace {
    std::vector<bool> outcomes;
};

/// Reasoning lines (unnumbered) and the verdict they lead to.
struct ReasoningSteps {
    std::vector<std::string> steps;
    Verdict final_verdict = Verdict::No;

    /// Lines prefixed "n. " starting at `first`.
    std::vector<std::string> numbered(int first = 1) const;
};

std::string to_roman(int value);
/// Returns 0 when `s` is not a canonical Roman numeral.
int from_roman(std::string_view s);

/// Parses "I: ..." lines. Throws DataError on unparseable lines, non-increasing
/// indices, a non-terminal without exactly one "next" branch, or a terminal
/// statement that can still fall through.
PseudoCode parse_pseudocode(std::string_view text, TaskKind kind);
PseudoCode load_pseudocode(const std::filesystem::path& path, TaskKind kind);

/// Validates structure of a programmatically built pseudo-code.
void validate(const PseudoCode& code);

/// Walks the rules with the given outcomes (one per rule, extra ignored)
/// and returns the prefix actually evaluated.
ConditionTrace trace_for(const PseudoCode& code, const std::vector<bool>& conditions);

/// Emits one reasoning step per evaluated rule and stops at the first branch
/// that yields an answer. Throws DataError when the trace does not end exactly
/// where the pseudo-code yields an answer.
ReasoningSteps construct_reasoning(const PseudoCode& code, const ConditionTrace& trace);

/// Per-demonstration annotation: which conditions held and the known label.
struct DemoAnnotation {
    std::string demo_id;
    ConditionTrace trace;
    bool label = false;
};

DemoAnnotation annotation_from_json(const nlohmann::json& j);
std::vector<DemoAnnotation> load_demo_annotations(const std::filesystem::path& path);

} // namespace kcmf::pseudocode
