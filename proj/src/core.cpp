#include "kcmf/core.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "kcmf/digest.hpp"
#include "kcmf/error.hpp"
#include "kcmf/text.hpp"

namespace kcmf {

std::string_view to_string(TaskKind kind) {
    return kind == TaskKind::SM ? "SM" : "EM";
}

TaskKind parse_task_kind(std::string_view s) {
    if (s == "SM") return TaskKind::SM;
    if (s == "EM") return TaskKind::EM;
    throw DataError("unknown task kind '" + std::string(s) + "' (expected SM or EM)");
}

std::string_view to_string(Verdict v) {
    return v == Verdict::Yes ? "yes" : "no";
}

TaskKind item_kind(const Item& item) {
    return std::holds_alternative<SchemaItem>(item) ? TaskKind::SM : TaskKind::EM;
}

std::string_view to_string(ErrorTag tag) {
    switch (tag) {
    case ErrorTag::IR: return "IR";
    case ErrorTag::OM: return "OM";
    case ErrorTag::PM: return "PM";
    }
    return "";
}

ErrorTag parse_error_tag(std::string_view s) {
    if (s == "IR") return ErrorTag::IR;
    if (s == "OM") return ErrorTag::OM;
    if (s == "PM") return ErrorTag::PM;
    throw DataError("unknown error_tag '" + std::string(s) + "'");
}

const CandidatePair* MappingPool::find(std::string_view id) const {
    for (const auto& p : pairs) {
        if (p.id == id) return &p;
    }
    return nullptr;
}

RenderedItem render_item(const Item& item) {
    if (const auto* s = std::get_if<SchemaItem>(&item)) {
        return {s->table_name + "-" + s->column_name,
                s->table_description + ";" + s->column_description};
    }
    const auto& e = std::get<EntityItem>(item);
    std::vector<std::string> segments;
    segments.reserve(e.attrs.size());
    for (const auto& a : e.attrs) segments.push_back(a.key + ": " + a.value);
    return {e.name, text::join(segments, "; ")};
}

SchemaItem parse_schema_rendering(std::string_view name, std::string_view description) {
    SchemaItem out;
    const auto dash = name.find('-');
    if (dash == std::string_view::npos) {
        throw DataError("schema rendering '" + std::string(name) + "' has no dash separator");
    }
    out.table_name = std::string(name.substr(0, dash));
    out.column_name = std::string(name.substr(dash + 1));
    const auto semi = description.find(';');
    if (semi == std::string_view::npos) {
        out.table_description = std::string(description);
    } else {
        out.table_description = std::string(description.substr(0, semi));
        out.column_description = std::string(description.substr(semi + 1));
    }
    return out;
}

EntityItem parse_entity_rendering(std::string_view name, std::string_view description) {
    EntityItem out;
    out.name = std::string(name);
    if (description.empty()) return out;
    std::size_t start = 0;
    for (;;) {
        const auto end = description.find("; ", start);
        const auto segment = description.substr(start, end == std::string_view::npos ? std::string_view::npos : end - start);
        const auto colon = segment.find(": ");
        if (colon == std::string_view::npos) {
            throw DataError("entity attribute segment '" + std::string(segment) + "' has no ': ' separator");
        }
        out.attrs.push_back({std::string(segment.substr(0, colon)), std::string(segment.substr(colon + 2))});
        if (end == std::string_view::npos) break;
        start = end + 2;
    }
    return out;
}

void validate_item(const Item& item) {
    if (const auto* s = std::get_if<SchemaItem>(&item)) {
        if (s->table_name.empty()) throw DataError("schema item has empty table name");
        if (s->column_name.empty()) throw DataError("schema item has empty column name");
        return;
    }
    const auto& e = std::get<EntityItem>(item);
    if (e.name.empty()) throw DataError("entity item has empty name");
    std::set<std::string> keys;
    for (const auto& a : e.attrs) {
        if (!keys.insert(a.key).second) {
            throw DataError("entity '" + e.name + "' has duplicate attribute key '" + a.key + "'");
        }
    }
}

void validate_pair(const CandidatePair& pair) {
    if (pair.id.empty()) throw DataError("pair has empty id");
    if (item_kind(pair.left) != item_kind(pair.right)) {
        throw DataError("pair '" + pair.id + "' mixes schema and entity items");
    }
    validate_item(pair.left);
    validate_item(pair.right);
}

nlohmann::json item_to_json(const Item& item) {
    if (const auto* s = std::get_if<SchemaItem>(&item)) {
        return {{"table", s->table_name},
                {"column", s->column_name},
                {"table_desc", s->table_description},
                {"column_desc", s->column_description}};
    }
    const auto& e = std::get<EntityItem>(item);
    auto attrs = nlohmann::json::array();
    for (const auto& a : e.attrs) attrs.push_back({{"k", a.key}, {"v", a.value}});
    return {{"name", e.name}, {"attrs", std::move(attrs)}};
}

namespace {

std::string required_string(const nlohmann::json& j, const char* field, std::string_view where) {
    if (!j.is_object() || !j.contains(field)) {
        throw DataError(std::string(where) + ": missing field '" + field + "'");
    }
    const auto& v = j.at(field);
    if (!v.is_string()) {
        throw DataError(std::string(where) + ": field '" + field + "' must be a string");
    }
    return v.get<std::string>();
}

std::string optional_string(const nlohmann::json& j, const char* field, std::string_view where) {
    if (!j.contains(field) || j.at(field).is_null()) return {};
    return required_string(j, field, where);
}

} // namespace

Item item_from_json(const nlohmann::json& j, TaskKind kind) {
    if (!j.is_object()) throw DataError("item must be a JSON object");
    if (kind == TaskKind::SM) {
        return SchemaItem{required_string(j, "table", "schema item"),
                          required_string(j, "column", "schema item"),
                          optional_string(j, "table_desc", "schema item"),
                          optional_string(j, "column_desc", "schema item")};
    }
    EntityItem e;
    e.name = required_string(j, "name", "entity item");
    if (j.contains("attrs")) {
        const auto& attrs = j.at("attrs");
        if (!attrs.is_array()) throw DataError("entity item: field 'attrs' must be an array");
        for (const auto& a : attrs) {
            e.attrs.push_back({required_string(a, "k", "entity attr"), optional_string(a, "v", "entity attr")});
        }
    }
    return e;
}

nlohmann::json pair_to_json(const CandidatePair& pair) {
    nlohmann::json j = {{"id", pair.id},
                        {"kind", std::string(to_string(pair.kind()))},
                        {"left", item_to_json(pair.left)},
                        {"right", item_to_json(pair.right)}};
    if (pair.label) j["label"] = *pair.label;
    if (pair.error_tag) j["error_tag"] = std::string(to_string(*pair.error_tag));
    return j;
}

CandidatePair pair_from_json(const nlohmann::json& j, TaskKind expected) {
    if (!j.is_object()) throw DataError("pair record must be a JSON object");
    CandidatePair p;
    p.id = required_string(j, "id", "pair record");
    const auto where = "pair '" + p.id + "'";
    const auto kind = parse_task_kind(required_string(j, "kind", where));
    if (kind != expected) {
        throw DataError(where + ": kind " + std::string(to_string(kind)) + " does not match task kind " +
                        std::string(to_string(expected)));
    }
    for (const char* side : {"left", "right"}) {
        if (!j.contains(side)) throw DataError(where + ": missing field '" + side + "'");
    }
    try {
        p.left = item_from_json(j.at("left"), kind);
        p.right = item_from_json(j.at("right"), kind);
    } catch (const DataError& e) {
        throw DataError(where + ": " + e.what());
    }
    if (j.contains("label") && !j.at("label").is_null()) {
        if (!j.at("label").is_boolean()) throw DataError(where + ": field 'label' must be a boolean");
        p.label = j.at("label").get<bool>();
    }
    if (j.contains("error_tag") && !j.at("error_tag").is_null()) {
        p.error_tag = parse_error_tag(required_string(j, "error_tag", where));
    }
    try {
        validate_pair(p);
    } catch (const DataError& e) {
        throw DataError(where + ": " + e.what());
    }
    return p;
}

MappingPool read_pool(std::istream& in, TaskKind kind, std::string_view origin) {
    MappingPool pool;
    pool.task_kind = kind;
    std::set<std::string> ids;
    std::string line;
    for (std::size_t line_no = 1; std::getline(in, line); ++line_no) {
        if (text::trim(line).empty()) continue;
        const auto where = std::string(origin) + ":" + std::to_string(line_no);
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::parse_error& e) {
            throw DataError(where + ": malformed JSON: " + e.what());
        }
        CandidatePair pair;
        try {
            pair = pair_from_json(j, kind);
        } catch (const DataError& e) {
            throw DataError(where + ": " + e.what());
        }
        if (!ids.insert(pair.id).second) {
            throw DataError(where + ": duplicate pair id '" + pair.id + "'");
        }
        pool.pairs.push_back(std::move(pair));
    }
    return pool;
}

MappingPool load_pool(const std::filesystem::path& path, TaskKind kind) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open pool file " + path.string());
    return read_pool(in, kind, path.string());
}

void write_pool(std::ostream& out, const MappingPool& pool) {
    for (const auto& p : pool.pairs) out << pair_to_json(p).dump() << '\n';
}

void save_pool(const std::filesystem::path& path, const MappingPool& pool) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write pool file " + path.string());
    write_pool(out, pool);
}

DatasetStats pool_stats(const MappingPool& pool) {
    DatasetStats stats;
    for (const auto& p : pool.pairs) {
        if (!p.label) throw DataError("pair '" + p.id + "' has no label");
        ++stats.n_instances;
        if (*p.label) ++stats.n_positive;
    }
    if (stats.n_positive > 0) {
        stats.imbalance_ratio = static_cast<double>(stats.n_instances) / static_cast<double>(stats.n_positive);
    }
    return stats;
}

std::string pair_digest(const CandidatePair& pair) {
    const nlohmann::json content = {{"kind", std::string(to_string(pair.kind()))},
                                    {"left", item_to_json(pair.left)},
                                    {"right", item_to_json(pair.right)}};
    return sha256_hex(content.dump());
}

} // namespace kcmf
