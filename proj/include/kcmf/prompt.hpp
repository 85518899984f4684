#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kcmf/core.hpp"
#include "kcmf/knowledge.hpp"
#include "kcmf/llm.hpp"
#include "kcmf/pseudocode.hpp"

// Prompt assembly: a layout template filled with the instruction, the rules,
// k demonstrations and the target pair with its knowledge and reasoning stub.
namespace kcmf::prompt {

/// Short LLM summary of a pair, shown as the first reasoning step.
struct SelfIndicator {
    std::string text;
};

/// A labeled example pair with its annotated condition trace.
struct Demonstration {
    std::string demo_id;
    CandidatePair pair;
    pseudocode::ConditionTrace trace;
    bool label = false;
    /// Replace the rendered descriptions of the two sides when present.
    std::optional<std::string> summary_left;
    std::optional<std::string> summary_right;
    std::optional<SelfIndicator> self_indicator;
    /// Knowledge for this demonstration under the source being rendered.
    std::vector<knowledge::KnowledgeItem> knowledge;
    pseudocode::ReasoningSteps reasoning;
};

/// Builds the reasoning for `demo` and checks that it ends in the label.
void attach_reasoning(Demonstration& demo, const pseudocode::PseudoCode& code);

/// JSONL {"demo_id", "pair", "trace", "label", "self_indicator"?, "summary_left"?,
/// "summary_right"?}. Throws DataError when a trace does not reach its label.
std::vector<Demonstration> load_demonstrations(const std::filesystem::path& path, const pseudocode::PseudoCode& code);

enum class SummaryStrategy { None, DemoOnly, All };

std::string_view to_string(SummaryStrategy s);
SummaryStrategy parse_summary_strategy(std::string_view s);

struct PromptOptions {
    bool task_oriented_instruction = true;
    /// Title the pseudo-code block "Rules for the task" rather than presenting it as knowledge.
    bool rules_terminology = true;
    /// Roman numerals for rules, letters for knowledge, digits for steps; all digits when off.
    bool u_indices = true;
    /// Question and rules once at the top; repeated in every example when off.
    bool instruction_extraction = true;
    bool self_indicator = true;
    bool keep_preamble = true;
    SummaryStrategy summary = SummaryStrategy::DemoOnly;
};

struct PromptBundle {
    TaskKind template_id = TaskKind::SM;
    std::string body;
    std::size_t k = 0;
    std::string source;
    PromptOptions options;
};

// ------------------------------------------------------------ templates

/// "{name}" is replaced by a scalar. A line consisting only of "[name]"
/// expands to the list elements, one per line, and disappears when the
/// list is empty. Unknown names throw ConfigError.
struct TemplateValues {
    std::map<std::string, std::string> scalars;
    std::map<std::string, std::vector<std::string>> lists;
};

std::string fill_template(std::string_view tmpl, const TemplateValues& values);

/// The layout used when no template file is configured.
std::string_view builtin_template();
std::string load_template(const std::filesystem::path& path);

/// "a".."z", "aa", "ab", ...
std::string letter_index(std::size_t i);

std::string question_text(TaskKind kind, bool task_oriented);

// ------------------------------------------------------------- pretasks

std::string demo_summary_prompt(const Item& item);
std::string self_indicator_prompt(const CandidatePair& pair, const std::vector<knowledge::KnowledgeItem>& knowledge);

/// Summarizes each side with its own call. On a non-fatal backend failure the
/// demonstration is returned unchanged.
Demonstration summarize_demo(const Demonstration& demo, llm::Backend& backend, const llm::GenerationParams& params);

/// Summary of one item for the "All" strategy; nullopt on a non-fatal failure.
std::optional<std::string> summarize_item(const Item& item, llm::Backend& backend, const llm::GenerationParams& params);

/// nullopt when the call fails (non-fatally) or the answer is empty.
std::optional<SelfIndicator> extract_self_indicator(const CandidatePair& pair,
                                                    const std::vector<knowledge::KnowledgeItem>& knowledge,
                                                    llm::Backend& backend, const llm::GenerationParams& params,
                                                    const std::string& source = {});

// -------------------------------------------------------------- render

/// Everything shown for the pair being classified.
struct Target {
    const CandidatePair* pair = nullptr;
    std::vector<knowledge::KnowledgeItem> knowledge;
    std::optional<SelfIndicator> self_indicator;
    std::optional<std::string> summary_left;
    std::optional<std::string> summary_right;
};

/// Throws DataError when a demonstration has no reasoning or its kind
/// differs from the target, and ConfigError when `demos.size() != k`.
PromptBundle render_prompt(const pseudocode::PseudoCode& code, const Target& target,
                           const std::vector<Demonstration>& demos, std::size_t k, const PromptOptions& opts,
                           const std::string& source = {}, std::string_view layout = builtin_template());

} // namespace kcmf::prompt
