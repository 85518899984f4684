#include <gtest/gtest.h>

#include "kcmf/prompt.hpp"
#include "support.hpp"

namespace kcmf::prompt {
namespace {

using testing::data_path;
using testing::TempDir;

pseudocode::PseudoCode sm_code() { return pseudocode::load_pseudocode(data_path("pseudocode/sm.txt"), TaskKind::SM); }
pseudocode::PseudoCode em_code() { return pseudocode::load_pseudocode(data_path("pseudocode/em.txt"), TaskKind::EM); }

std::size_t count(const std::string& hay, const std::string& needle) {
    std::size_t n = 0;
    for (auto pos = hay.find(needle); pos != std::string::npos; pos = hay.find(needle, pos + 1)) ++n;
    return n;
}

struct SmFixture {
    pseudocode::PseudoCode code = sm_code();
    MappingPool pool = load_pool(data_path("pools/provider.jsonl"), TaskKind::SM);
    std::vector<Demonstration> demos = load_demonstrations(data_path("demos/sm.jsonl"), code);

    PromptBundle render(const PromptOptions& opts, std::vector<knowledge::KnowledgeItem> kn = {},
                        std::optional<SelfIndicator> si = SelfIndicator{"SI TEXT"}) {
        Target t;
        t.pair = &pool.pairs[0];
        t.knowledge = std::move(kn);
        t.self_indicator = std::move(si);
        return render_prompt(code, t, demos, demos.size(), opts, "DaK");
    }
};

TEST(Template, ScalarsAndLists) {
    TemplateValues v;
    v.scalars["name"] = "X";
    v.lists["items"] = {"a", "b"};
    v.lists["none"] = {};
    EXPECT_EQ(fill_template("head {name}\n[items]\n[none]\ntail {not a name} {}", v), "head X\na\nb\ntail {not a name} {}");
    EXPECT_EQ(fill_template("  [items]  ", v), "a\nb");
    EXPECT_EQ(fill_template("x [items] y", v), "x [items] y");
    EXPECT_THROW(fill_template("{missing}", v), ConfigError);
    EXPECT_THROW(fill_template("[missing]", v), ConfigError);
    EXPECT_EQ(fill_template("", v), "");
    EXPECT_EQ(fill_template("a\n\nb", v), "a\n\nb");
}

TEST(Template, FileMatchesBuiltin) {
    EXPECT_EQ(load_template(std::filesystem::path(KCMF_TEMPLATE_DIR) / "default.tmpl"), builtin_template());
    EXPECT_THROW(load_template("/nonexistent.tmpl"), ConfigError);
}

TEST(Template, LetterIndices) {
    EXPECT_EQ(letter_index(0), "a");
    EXPECT_EQ(letter_index(25), "z");
    EXPECT_EQ(letter_index(26), "aa");
    EXPECT_EQ(letter_index(27), "ab");
    EXPECT_EQ(letter_index(26 + 26 * 26), "aaa");
}

TEST(Demonstrations, LoadWithReasoning) {
    const auto code = sm_code();
    const auto demos = load_demonstrations(data_path("demos/sm.jsonl"), code);
    ASSERT_EQ(demos.size(), 4u);
    EXPECT_EQ(demos[0].demo_id, "sm-d1");
    EXPECT_EQ(demos[0].pair.id, "sm-d1");
    EXPECT_TRUE(demos[0].label);
    EXPECT_EQ(demos[0].reasoning.steps.size(), 3u);
    EXPECT_EQ(demos[1].reasoning.final_verdict, Verdict::No);
    EXPECT_TRUE(demos[0].self_indicator.has_value());
    EXPECT_TRUE(demos[0].summary_left.has_value());
}

TEST(Demonstrations, TraceMustReachLabel) {
    TempDir dir;
    testing::write_file(dir / "d.jsonl",
                        R"({"demo_id":"x","pair":{"left":{"table":"a","column":"b"},"right":{"table":"c","column":"d"}},"trace":[true],"label":true})");
    EXPECT_THROW(load_demonstrations(dir / "d.jsonl", sm_code()), DataError);
    testing::write_file(dir / "e.jsonl", R"({"demo_id":"x","trace":[true],"label":false})");
    EXPECT_THROW(load_demonstrations(dir / "e.jsonl", sm_code()), DataError);
    testing::write_file(dir / "f.jsonl",
                        R"({"demo_id":"x","pair":{"left":{"table":"a","column":"b"},"right":{"table":"c","column":"d"}},"trace":[true],"label":false,"summary_left":3})");
    EXPECT_THROW(load_demonstrations(dir / "f.jsonl", sm_code()), DataError);
    EXPECT_THROW(load_demonstrations(dir / "missing.jsonl", sm_code()), DataError);
    EXPECT_THROW(load_demonstrations(data_path("demos/em.jsonl"), sm_code()), DataError);
}

TEST(Render, GoldenSchemaFourShot) {
    EXPECT_EQ(testing::render_sm_golden(), testing::read_file(data_path("golden/sm_4shot.txt")));
}

TEST(Render, GoldenEntityTwoShot) {
    EXPECT_EQ(testing::render_em_golden(), testing::read_file(data_path("golden/em_2shot.txt")));
}

TEST(Render, DefaultLayout) {
    SmFixture f;
    const auto body = f.render({}, {{knowledge::SourceKind::DaK, "provider: x", "provider"}}).body;
    EXPECT_EQ(body.rfind("Question:\n", 0), 0u);
    EXPECT_NE(body.find("\n\nRules for the task:\nI: Rules II, III, and IV MUST"), std::string::npos);
    EXPECT_NE(body.find("\nIV: If the columns"), std::string::npos);
    EXPECT_EQ(count(body, "Rules for the task:"), 1u);
    for (int i = 1; i <= 4; ++i) EXPECT_EQ(count(body, "Example " + std::to_string(i) + ":\n"), 1u);
    EXPECT_NE(body.find("Your turn:\nSchema A: provider-npi\nDescription of schema A:"), std::string::npos);
    EXPECT_NE(body.find("Knowledge for the task:\na. provider: x\nReasoning:\n1. SI TEXT\n"
                        "Please continue the reasoning until you draw a final answer ONLY yes or no:"),
              std::string::npos);
    EXPECT_NE(body.back(), '\n');
    EXPECT_EQ(count(body, "Answer: yes\n"), 2u);
    EXPECT_EQ(count(body, "Answer: no\n"), 2u);
    // demo summaries replace the descriptions, target descriptions stay
    EXPECT_NE(body.find("Description of schema A: " + *f.demos[0].summary_left), std::string::npos);
    EXPECT_EQ(body.find("Description of schema A: " + render_item(f.demos[0].pair.left).description), std::string::npos);
}

TEST(Render, SelfIndicatorIsFirstStep) {
    SmFixture f;
    const auto body = f.render({}).body;
    const auto& d = f.demos[0];
    EXPECT_NE(body.find("Reasoning:\n1. " + d.self_indicator->text + "\n2. Checking rule II"), std::string::npos);
    PromptOptions off;
    off.self_indicator = false;
    const auto plain = f.render(off).body;
    EXPECT_EQ(plain.find(d.self_indicator->text), std::string::npos);
    EXPECT_NE(plain.find("Reasoning:\n1. Checking rule II"), std::string::npos);
    EXPECT_NE(plain.find("Reasoning:\nPlease continue"), std::string::npos);
}

TEST(Render, NumericIndicesWhenUIndicesOff) {
    SmFixture f;
    PromptOptions opts;
    opts.u_indices = false;
    const auto body = f.render(opts, {{knowledge::SourceKind::DaK, "k1", "o"}, {knowledge::SourceKind::DaK, "k2", "o"}}).body;
    EXPECT_NE(body.find("\n2: If the columns of the two schemas can not"), std::string::npos);
    EXPECT_NE(body.find("\n1: Rules II, III, and IV"), std::string::npos);
    EXPECT_NE(body.find("Knowledge for the task:\n1. k1\n2. k2\n"), std::string::npos);
    EXPECT_EQ(body.find("\nII: "), std::string::npos);
}

TEST(Render, InstructionRepeatedWhenNotExtracted) {
    SmFixture f;
    PromptOptions opts;
    opts.instruction_extraction = false;
    const auto body = f.render(opts).body;
    EXPECT_EQ(count(body, "Question:\n"), 5u);
    EXPECT_EQ(body.rfind("Example 1:\nQuestion:\n", 0), 0u);
    EXPECT_NE(body.find("Your turn:\nQuestion:\n"), std::string::npos);
}

TEST(Render, TerminologyPreambleAndQuestion) {
    SmFixture f;
    PromptOptions opts;
    opts.rules_terminology = false;
    opts.keep_preamble = false;
    opts.task_oriented_instruction = false;
    const auto body = f.render(opts).body;
    EXPECT_EQ(body.find("Rules for the task:"), std::string::npos);
    EXPECT_EQ(body.find("MUST be checked SEQUENTIALLY"), std::string::npos);
    EXPECT_EQ(body.rfind("Question:\nAre schema A and B matched? Let's think step by step.\n\nKnowledge for the task:\nII:", 0), 0u);
}

TEST(Render, SummaryStrategies) {
    SmFixture f;
    PromptOptions none;
    none.summary = SummaryStrategy::None;
    EXPECT_EQ(f.render(none).body.find(*f.demos[0].summary_left), std::string::npos);

    PromptOptions all;
    all.summary = SummaryStrategy::All;
    Target t;
    t.pair = &f.pool.pairs[0];
    t.summary_left = "TARGET LEFT SUMMARY";
    t.summary_right = "TARGET RIGHT SUMMARY";
    const auto body = render_prompt(f.code, t, f.demos, 4, all).body;
    EXPECT_NE(body.find("Your turn:\nSchema A: provider-npi\nDescription of schema A: TARGET LEFT SUMMARY\n"), std::string::npos);
    EXPECT_EQ(parse_summary_strategy("ALL"), SummaryStrategy::All);
    EXPECT_THROW(parse_summary_strategy("some"), ConfigError);
}

TEST(Render, CustomLayoutWithScalars) {
    SmFixture f;
    Target t;
    t.pair = &f.pool.pairs[0];
    const auto body = render_prompt(f.code, t, {}, 0, {}, "DaK", "source={source}\n[target]\n{question}").body;
    EXPECT_EQ(body.rfind("source=DaK\nSchema A: provider-npi\n", 0), 0u);
    EXPECT_NE(body.find("Can records in schema B be transformed"), std::string::npos);
}

TEST(Render, Errors) {
    SmFixture f;
    Target t;
    t.pair = &f.pool.pairs[0];
    EXPECT_THROW(render_prompt(f.code, t, f.demos, 3, {}), ConfigError);
    EXPECT_THROW(render_prompt(f.code, Target{}, {}, 0, {}), DataError);
    auto no_reasoning = f.demos;
    no_reasoning[0].reasoning.steps.clear();
    EXPECT_THROW(render_prompt(f.code, t, no_reasoning, 4, {}), DataError);
    const auto em_demos = load_demonstrations(data_path("demos/em.jsonl"), em_code());
    EXPECT_THROW(render_prompt(f.code, t, em_demos, 2, {}), DataError);
    EXPECT_THROW(render_prompt(em_code(), t, {}, 0, {}), DataError);
}

TEST(Render, EntityLayout) {
    const auto code = em_code();
    const auto pool = load_pool(data_path("pools/em_small.jsonl"), TaskKind::EM);
    const auto demos = load_demonstrations(data_path("demos/em.jsonl"), code);
    Target t;
    t.pair = &pool.pairs[0];
    const auto body = render_prompt(code, t, demos, 2, {}).body;
    EXPECT_NE(body.find("Your turn:\nEntity A: arteritis\nAttributes of entity A: context: "), std::string::npos);
    EXPECT_NE(body.find("Do entity A and entity B refer to the same real-world concept?"), std::string::npos);
    EXPECT_NE(body.find("Answer: yes\n"), std::string::npos);
}

TEST(Pretasks, PromptsAndFailures) {
    SmFixture f;
    const auto sp = demo_summary_prompt(f.pool.pairs[0].left);
    EXPECT_NE(sp.find("Your turn:\nSchema name: provider-npi\nSchema description: "), std::string::npos);
    const auto sip = self_indicator_prompt(f.pool.pairs[0], {{knowledge::SourceKind::DaK, "provider: t", "provider"}});
    EXPECT_NE(sip.find("Knowledge for the task:\na. provider: t\nAnswer:"), std::string::npos);

    llm::CallbackBackend echo([](const llm::Prompt& p) { return "  summary of " + p.tag + "  "; });
    const auto summarized = summarize_demo(f.demos[0], echo, {});
    EXPECT_EQ(summarized.summary_left, std::optional<std::string>("summary of summarize-demo"));
    EXPECT_EQ(echo.calls(), 2u);
    std::string seen_source;
    llm::CallbackBackend si([&](const llm::Prompt& p) {
        seen_source = p.source;
        return "Schema A is x.";
    });
    EXPECT_EQ(extract_self_indicator(f.pool.pairs[0], {}, si, {}, "EaK")->text, "Schema A is x.");
    EXPECT_EQ(seen_source, "EaK");

    llm::CallbackBackend empty([](const llm::Prompt&) { return "   "; });
    EXPECT_FALSE(extract_self_indicator(f.pool.pairs[0], {}, empty, {}).has_value());

    llm::MockBackend timeout({llm::MockRule{std::nullopt, std::string("."), std::nullopt, std::nullopt, "",
                                            llm::BackendErrorKind::Timeout}});
    auto bare = f.demos[0];
    bare.summary_left.reset();
    bare.summary_right.reset();
    const auto unchanged = summarize_demo(bare, timeout, {});
    EXPECT_FALSE(unchanged.summary_left.has_value());
    EXPECT_FALSE(extract_self_indicator(f.pool.pairs[0], {}, timeout, {}).has_value());

    llm::MockBackend none({});
    EXPECT_THROW(summarize_demo(bare, none, {}), llm::BackendError);
    EXPECT_THROW(extract_self_indicator(f.pool.pairs[0], {}, none, {}), llm::BackendError);
}

} // namespace
} // namespace kcmf::prompt
