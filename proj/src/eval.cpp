#include "kcmf/eval.hpp"

#include <cstdio>

#include "kcmf/error.hpp"

namespace kcmf::eval {

Metrics from_counts(double tp, double fp, double tn, double fn) {
    Metrics m;
    m.tp = tp;
    m.fp = fp;
    m.tn = tn;
    m.fn = fn;
    const double total = tp + fp + tn + fn;
    m.accuracy = total > 0 ? (tp + tn) / total : 0;
    m.precision = tp + fp > 0 ? tp / (tp + fp) : 0;
    m.recall = tp + fn > 0 ? tp / (tp + fn) : 0;
    m.f1 = m.precision + m.recall > 0 ? 2 * m.precision * m.recall / (m.precision + m.recall) : 0;
    return m;
}

Metrics score(const std::vector<ensemble::Decision>& decisions, const std::map<std::string, bool>& labels) {
    if (decisions.empty()) throw DataError("no decisions to score");
    std::size_t tp = 0, fp = 0, tn = 0, fn = 0;
    for (const auto& d : decisions) {
        const auto it = labels.find(d.pair_id);
        if (it == labels.end()) throw DataError("no label for pair '" + d.pair_id + "'");
        const bool predicted = d.final == Verdict::Yes;
        if (predicted && it->second) ++tp;
        else if (predicted) ++fp;
        else if (it->second) ++fn;
        else ++tn;
    }
    return from_counts(static_cast<double>(tp), static_cast<double>(fp), static_cast<double>(tn), static_cast<double>(fn));
}

std::map<std::string, bool> labels_of(const MappingPool& pool) {
    std::map<std::string, bool> out;
    for (const auto& p : pool.pairs) {
        if (p.label) out[p.id] = *p.label;
    }
    return out;
}

FormatAudit audit(const std::vector<ensemble::Decision>& decisions) {
    FormatAudit a;
    for (const auto& d : decisions) {
        switch (d.format_class) {
        case ensemble::FormatClass::WellFormatted: ++a.well_formatted; break;
        case ensemble::FormatClass::BadlyFormatted: ++a.badly_formatted; break;
        case ensemble::FormatClass::Eliminated: ++a.eliminated; break;
        }
    }
    return a;
}

std::string_view to_string(Aggregation a) { return a == Aggregation::BestF1 ? "best_f1" : "mean"; }

Aggregation parse_aggregation(std::string_view s) {
    if (s == "best_f1") return Aggregation::BestF1;
    if (s == "mean") return Aggregation::Mean;
    throw ConfigError("unknown aggregation '" + std::string(s) + "' (expected best_f1 or mean)");
}

Metrics aggregate_runs(const std::vector<Metrics>& runs, Aggregation mode, std::optional<std::size_t>* selected) {
    if (runs.empty()) throw Error("cannot aggregate zero runs");
    if (selected) selected->reset();
    if (mode == Aggregation::BestF1) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < runs.size(); ++i) {
            if (runs[i].f1 > runs[best].f1) best = i;
        }
        if (selected) *selected = best;
        return runs[best];
    }
    Metrics m;
    for (const auto& r : runs) {
        m.accuracy += r.accuracy;
        m.precision += r.precision;
        m.recall += r.recall;
        m.f1 += r.f1;
        m.tp += r.tp;
        m.fp += r.fp;
        m.tn += r.tn;
        m.fn += r.fn;
    }
    const double n = static_cast<double>(runs.size());
    for (double* f : {&m.accuracy, &m.precision, &m.recall, &m.f1, &m.tp, &m.fp, &m.tn, &m.fn}) *f /= n;
    return m;
}

Report make_report(const std::vector<RunSummary>& runs, Aggregation mode) {
    std::vector<Metrics> metrics;
    for (const auto& r : runs) metrics.push_back(r.metrics);
    Report rep;
    rep.aggregation = mode;
    rep.runs = runs;
    rep.metrics = aggregate_runs(metrics, mode, &rep.selected_run);
    if (rep.selected_run) {
        rep.audit = runs[*rep.selected_run].audit;
    } else {
        for (const auto& r : runs) {
            rep.audit.well_formatted += r.audit.well_formatted;
            rep.audit.badly_formatted += r.audit.badly_formatted;
            rep.audit.eliminated += r.audit.eliminated;
        }
    }
    return rep;
}

nlohmann::json to_json(const Metrics& m) {
    return {{"accuracy", m.accuracy}, {"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1},
            {"tp", m.tp},             {"fp", m.fp},               {"tn", m.tn},         {"fn", m.fn}};
}

nlohmann::json to_json(const FormatAudit& a) {
    return {{"well_formatted", a.well_formatted}, {"badly_formatted", a.badly_formatted}, {"eliminated", a.eliminated}};
}

nlohmann::json to_json(const Report& r) {
    nlohmann::json runs = nlohmann::json::array();
    for (std::size_t i = 0; i < r.runs.size(); ++i) {
        auto j = to_json(r.runs[i].metrics);
        j["run"] = i + 1;
        j["audit"] = to_json(r.runs[i].audit);
        runs.push_back(std::move(j));
    }
    return {{"accuracy", r.metrics.accuracy},
            {"f1", r.metrics.f1},
            {"precision", r.metrics.precision},
            {"recall", r.metrics.recall},
            {"audit", to_json(r.audit)},
            {"runs", runs},
            {"selected_run", r.selected_run ? nlohmann::json(*r.selected_run + 1) : nlohmann::json(nullptr)},
            {"aggregation", std::string(to_string(r.aggregation))}};
}

namespace {

std::string row(const std::string& label, const Metrics& m, const FormatAudit& a) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-10s %8.4f %8.4f %8.4f %8.4f %6.0f %6.0f %6.0f %6.0f %6zu %6zu %6zu\n", label.c_str(),
                  m.accuracy, m.precision, m.recall, m.f1, m.tp, m.fp, m.tn, m.fn, a.well_formatted, a.eliminated,
                  a.badly_formatted);
    return buf;
}

} // namespace

std::string to_text(const Report& r) {
    std::string out;
    char header[256];
    std::snprintf(header, sizeof header, "%-10s %8s %8s %8s %8s %6s %6s %6s %6s %6s %6s %6s\n", "run", "acc", "prec",
                  "recall", "f1", "tp", "fp", "tn", "fn", "well", "elim", "bad");
    out += header;
    for (std::size_t i = 0; i < r.runs.size(); ++i) {
        const bool chosen = r.selected_run && *r.selected_run == i;
        out += row(std::to_string(i + 1) + (chosen ? " *" : ""), r.runs[i].metrics, r.runs[i].audit);
    }
    out += row(std::string(to_string(r.aggregation)), r.metrics, r.audit);
    return out;
}

} // namespace kcmf::eval
