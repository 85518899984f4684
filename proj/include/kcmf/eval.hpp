#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "kcmf/ensemble.hpp"

// Scoring of decisions against labels, format audits and multi-run reports.
namespace kcmf::eval {

/// Counts are stored as reals so that mean aggregation keeps the same shape.
struct Metrics {
    double accuracy = 0;
    double precision = 0;
    double recall = 0;
    double f1 = 0;
    double tp = 0;
    double fp = 0;
    double tn = 0;
    double fn = 0;

    friend bool operator==(const Metrics&, const Metrics&) = default;
};

/// Fills the ratios from the confusion counts. Ratios with a zero denominator are 0.
Metrics from_counts(double tp, double fp, double tn, double fn);

/// Throws DataError when a decision has no label or `decisions` is empty.
Metrics score(const std::vector<ensemble::Decision>& decisions, const std::map<std::string, bool>& labels);

std::map<std::string, bool> labels_of(const MappingPool& pool);

struct FormatAudit {
    std::size_t well_formatted = 0;
    std::size_t badly_formatted = 0;
    std::size_t eliminated = 0;

    friend bool operator==(const FormatAudit&, const FormatAudit&) = default;
};

FormatAudit audit(const std::vector<ensemble::Decision>& decisions);

enum class Aggregation { BestF1, Mean };

std::string_view to_string(Aggregation a);
Aggregation parse_aggregation(std::string_view s);

/// BestF1 returns the first run with maximal f1 and stores its index in
/// `selected`; Mean averages every field and leaves `selected` empty.
/// Throws Error on an empty list.
Metrics aggregate_runs(const std::vector<Metrics>& runs, Aggregation mode, std::optional<std::size_t>* selected = nullptr);

struct RunSummary {
    Metrics metrics;
    FormatAudit audit;
};

struct Report {
    Metrics metrics;
    FormatAudit audit;  // of the selected run, or summed over runs for Mean
    std::vector<RunSummary> runs;
    std::optional<std::size_t> selected_run;
    Aggregation aggregation = Aggregation::BestF1;
};

Report make_report(const std::vector<RunSummary>& runs, Aggregation mode);

/// {"accuracy", "f1", "precision", "recall", "audit", "runs", "selected_run", "aggregation"}.
nlohmann::json to_json(const Report& r);
nlohmann::json to_json(const Metrics& m);
nlohmann::json to_json(const FormatAudit& a);

/// Human-readable table, one row per run plus the aggregate.
std::string to_text(const Report& r);

} // namespace kcmf::eval
