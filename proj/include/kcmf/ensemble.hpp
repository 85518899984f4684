#pragma once

#include <filesystem>
#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "kcmf/core.hpp"
#include "kcmf/knowledge.hpp"
#include "kcmf/llm.hpp"
#include "kcmf/prompt.hpp"
#include "kcmf/pseudocode.hpp"

// One prompt per knowledge source, one vote per prompt, majority decides.
namespace kcmf::ensemble {

/// Undecided marks a source whose backend call failed; it votes like BadlyFormatted.
enum class VoteOutcome { Yes, No, BadlyFormatted, Undecided };

std::string_view to_string(VoteOutcome v);
VoteOutcome parse_vote_outcome(std::string_view s);
VoteOutcome from_parsed(llm::ParsedVerdict v);

enum class FormatClass { WellFormatted, Eliminated, BadlyFormatted };

std::string_view to_string(FormatClass f);
FormatClass parse_format_class(std::string_view s);

struct VoteResult {
    Verdict final = Verdict::No;
    FormatClass format_class = FormatClass::WellFormatted;
};

/// Strict majority of Yes wins, everything else (ties included) is No.
/// BadlyFormatted and Undecided count as No. The result is Eliminated when
/// such votes exist but counting them as Yes would not change the verdict.
/// Throws Error on an empty list.
VoteResult vote(const std::vector<VoteOutcome>& votes);

struct SourceVote {
    std::string source;
    VoteOutcome outcome = VoteOutcome::Undecided;

    friend bool operator==(const SourceVote&, const SourceVote&) = default;
};

struct Decision {
    std::string pair_id;
    std::vector<SourceVote> votes;
    Verdict final = Verdict::No;
    FormatClass format_class = FormatClass::WellFormatted;
    std::vector<std::string> prompt_digests;
    std::vector<std::string> responses;

    friend bool operator==(const Decision&, const Decision&) = default;
};

nlohmann::json to_json(const Decision& d);
Decision decision_from_json(const nlohmann::json& j);

/// One JSON record per line, in the order given.
void write_run_log(std::ostream& out, const std::vector<Decision>& decisions);
void save_run_log(const std::filesystem::path& path, const std::vector<Decision>& decisions);
std::vector<Decision> load_run_log(const std::filesystem::path& path);

// ------------------------------------------------------------- pipeline

struct PipelineConfig {
    const pseudocode::PseudoCode* code = nullptr;
    knowledge::SourceSet sources;
    std::vector<prompt::Demonstration> demos;  // exactly `shots` of them are used
    std::size_t shots = 0;
    prompt::PromptOptions options;
    std::string layout = std::string(prompt::builtin_template());
    /// May be null for render-only use; pretasks then fall back to what the demonstrations carry.
    llm::Backend* backend = nullptr;
    llm::GenerationParams params;
    knowledge::KnowledgeBuilder* builder = nullptr;
};

/// Per-source prompts for one pair, ready to send.
struct RenderedSource {
    knowledge::SourceSpec source;
    prompt::PromptBundle bundle;
};

/// Shared, read-mostly state of a matching run. prepare() must be called once
/// before classify() or render(); both are then safe to call concurrently.
class Pipeline {
public:
    explicit Pipeline(PipelineConfig cfg);

    /// Summarizes demonstrations and gathers their knowledge and
    /// self-indicators for every source.
    void prepare();

    std::vector<RenderedSource> render(const CandidatePair& pair);
    Decision classify(const CandidatePair& pair);

    const PipelineConfig& config() const { return cfg_; }

private:
    prompt::Target make_target(const CandidatePair& pair, const knowledge::SourceSpec& source, bool si_enabled);
    prompt::PromptOptions options_for(const knowledge::SourceSpec& source) const;

    PipelineConfig cfg_;
    std::vector<std::vector<prompt::Demonstration>> demos_by_source_;
    bool prepared_ = false;
};

/// Classifies one pair across every configured source.
Decision intge_classify(const CandidatePair& pair, Pipeline& pipeline);

/// Classifies all pairs with `workers` threads; the result is ordered by pair
/// id. A fatal backend error stops the run and is rethrown.
std::vector<Decision> classify_pool(const MappingPool& pool, Pipeline& pipeline, std::size_t workers);

} // namespace kcmf::ensemble
