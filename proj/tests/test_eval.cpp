#include <gtest/gtest.h>

#include <random>

#include "kcmf/eval.hpp"
#include "support.hpp"

namespace kcmf::eval {
namespace {

ensemble::Decision decision(const std::string& id, bool yes, ensemble::FormatClass fc = ensemble::FormatClass::WellFormatted) {
    ensemble::Decision d;
    d.pair_id = id;
    d.final = yes ? Verdict::Yes : Verdict::No;
    d.format_class = fc;
    return d;
}

TEST(Score, MatchesConfusionOracleOnRandomSets) {
    std::mt19937 rng(99);
    for (int round = 0; round < 100; ++round) {
        const int n = static_cast<int>(rng() % 40) + 1;
        std::vector<ensemble::Decision> decisions;
        std::map<std::string, bool> labels;
        std::vector<std::pair<bool, bool>> pa;
        for (int i = 0; i < n; ++i) {
            const bool p = rng() % 2, a = rng() % 3 == 0;
            const auto id = "d" + std::to_string(i);
            decisions.push_back(decision(id, p));
            labels[id] = a;
            pa.emplace_back(p, a);
        }
        const auto c = testing::confusion_oracle(pa);
        const auto m = score(decisions, labels);
        EXPECT_EQ(m.tp, c.tp);
        EXPECT_EQ(m.fp, c.fp);
        EXPECT_EQ(m.tn, c.tn);
        EXPECT_EQ(m.fn, c.fn);
        EXPECT_DOUBLE_EQ(m.accuracy, double(c.tp + c.tn) / n);
        const double prec = c.tp + c.fp ? double(c.tp) / (c.tp + c.fp) : 0;
        const double rec = c.tp + c.fn ? double(c.tp) / (c.tp + c.fn) : 0;
        EXPECT_DOUBLE_EQ(m.precision, prec);
        EXPECT_DOUBLE_EQ(m.recall, rec);
        EXPECT_NEAR(m.f1, prec + rec > 0 ? 2 * prec * rec / (prec + rec) : 0, 1e-12);
    }
}

TEST(Score, DegenerateAllNegativePredictor) {
    std::vector<ensemble::Decision> ds;
    std::map<std::string, bool> labels;
    for (int i = 0; i < 100; ++i) {
        ds.push_back(decision("p" + std::to_string(i), false));
        labels["p" + std::to_string(i)] = i < 4;
    }
    const auto m = score(ds, labels);
    EXPECT_EQ(m.f1, 0);
    EXPECT_EQ(m.precision, 0);
    EXPECT_DOUBLE_EQ(m.accuracy, 0.96);
}

TEST(Score, Errors) {
    EXPECT_THROW(score({}, {}), DataError);
    EXPECT_THROW(score({decision("x", true)}, {{"y", true}}), DataError);
}

TEST(Metrics, ZeroDenominators) {
    const auto m = from_counts(0, 0, 0, 0);
    EXPECT_EQ(m, Metrics{});
}

TEST(Audit, CountsClasses) {
    using ensemble::FormatClass;
    const auto a = audit({decision("a", true), decision("b", false, FormatClass::Eliminated),
                          decision("c", false, FormatClass::BadlyFormatted), decision("d", true, FormatClass::Eliminated)});
    EXPECT_EQ(a, (FormatAudit{1, 1, 2}));
}

TEST(Labels, OnlyLabeledPairs) {
    MappingPool pool;
    pool.pairs.push_back({"a", SchemaItem{"t", "c", "", ""}, SchemaItem{"t", "d", "", ""}, true, std::nullopt});
    pool.pairs.push_back({"b", SchemaItem{"t", "c", "", ""}, SchemaItem{"t", "d", "", ""}, std::nullopt, std::nullopt});
    EXPECT_EQ(labels_of(pool), (std::map<std::string, bool>{{"a", true}}));
}

TEST(Aggregate, BestF1PicksFirstMaximum) {
    const std::vector<Metrics> runs = {from_counts(1, 1, 1, 1), from_counts(2, 0, 2, 0), from_counts(2, 0, 1, 0)};
    std::optional<std::size_t> sel;
    const auto m = aggregate_runs(runs, Aggregation::BestF1, &sel);
    EXPECT_EQ(sel, std::optional<std::size_t>(1));
    EXPECT_EQ(m, runs[1]);
    EXPECT_THROW(aggregate_runs({}, Aggregation::Mean), Error);
}

TEST(Aggregate, MeanAveragesEveryField) {
    const std::vector<Metrics> runs = {from_counts(1, 1, 1, 1), from_counts(3, 1, 3, 1)};
    std::optional<std::size_t> sel = 5;
    const auto m = aggregate_runs(runs, Aggregation::Mean, &sel);
    EXPECT_FALSE(sel.has_value());
    EXPECT_DOUBLE_EQ(m.tp, 2);
    EXPECT_DOUBLE_EQ(m.accuracy, (0.5 + 0.75) / 2);
    EXPECT_DOUBLE_EQ(m.f1, (runs[0].f1 + runs[1].f1) / 2);
    EXPECT_EQ(parse_aggregation("mean"), Aggregation::Mean);
    EXPECT_THROW(parse_aggregation("median"), ConfigError);
}

TEST(Report, JsonAndText) {
    const std::vector<RunSummary> runs = {{from_counts(1, 1, 1, 1), {3, 1, 0}}, {from_counts(2, 0, 2, 0), {2, 0, 2}}};
    const auto best = make_report(runs, Aggregation::BestF1);
    EXPECT_EQ(best.selected_run, std::optional<std::size_t>(1));
    EXPECT_EQ(best.audit, (FormatAudit{2, 0, 2}));
    const auto j = to_json(best);
    EXPECT_EQ(j.at("selected_run"), 2);
    EXPECT_EQ(j.at("aggregation"), "best_f1");
    EXPECT_EQ(j.at("f1"), 1.0);
    EXPECT_EQ(j.at("runs").size(), 2u);
    EXPECT_EQ(j.at("runs")[0].at("run"), 1);
    for (const auto* key : {"accuracy", "f1", "precision", "recall", "audit"}) EXPECT_TRUE(j.contains(key)) << key;
    const auto text = to_text(best);
    EXPECT_NE(text.find("2 *"), std::string::npos);
    EXPECT_NE(text.find("best_f1"), std::string::npos);

    const auto mean = make_report(runs, Aggregation::Mean);
    EXPECT_FALSE(mean.selected_run.has_value());
    EXPECT_EQ(mean.audit, (FormatAudit{5, 1, 2}));
    EXPECT_TRUE(to_json(mean).at("selected_run").is_null());
}

} // namespace
} // namespace kcmf::eval
