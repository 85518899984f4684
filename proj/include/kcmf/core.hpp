#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <json.hpp>

// Domain model: candidate pairs of schema or entity items, pools of pairs,
// their JSONL encoding and dataset statistics.
namespace kcmf {

enum class TaskKind { SM, EM };

std::string_view to_string(TaskKind kind);
TaskKind parse_task_kind(std::string_view s);

/// Binary match outcome.
enum class Verdict { Yes, No };

std::string_view to_string(Verdict v);

/// One column of a database schema: table and column names plus descriptions.
struct SchemaItem {
    std::string table_name;
    std::string column_name;
    std::string table_description;
    std::string column_description;

    friend bool operator==(const SchemaItem&, const SchemaItem&) = default;
};

struct EntityAttr {
    std::string key;
    std::string value;

    friend bool operator==(const EntityAttr&, const EntityAttr&) = default;
};

/// A record reduced to its name and an ordered list of attributes.
struct EntityItem {
    std::string name;
    std::vector<EntityAttr> attrs;

    friend bool operator==(const EntityItem&, const EntityItem&) = default;
};

using Item = std::variant<SchemaItem, EntityItem>;

TaskKind item_kind(const Item& item);

/// Manual error-analysis annotation; never produced by the pipeline.
enum class ErrorTag { IR, OM, PM };

std::string_view to_string(ErrorTag tag);
ErrorTag parse_error_tag(std::string_view s);

struct CandidatePair {
    std::string id;
    Item left;
    Item right;
    std::optional<bool> label;
    std::optional<ErrorTag> error_tag;

    TaskKind kind() const { return item_kind(left); }

    friend bool operator==(const CandidatePair&, const CandidatePair&) = default;
};

struct MappingPool {
    TaskKind task_kind = TaskKind::SM;
    std::vector<CandidatePair> pairs;

    const CandidatePair* find(std::string_view id) const;

    friend bool operator==(const MappingPool&, const MappingPool&) = default;
};

struct DatasetStats {
    std::size_t n_instances = 0;
    std::size_t n_positive = 0;
    /// Absent when the pool has no positives.
    std::optional<double> imbalance_ratio;
};

/// Prompt-facing text of one item.
struct RenderedItem {
    std::string name;
    std::string description;
};

/// SM: "table-column" / "table_desc;column_desc". EM: name / "k: v; k: v".
RenderedItem render_item(const Item& item);

/// Inverse of render_item for schema items; the first dash and the first
/// semicolon are the separators.
SchemaItem parse_schema_rendering(std::string_view name, std::string_view description);

/// Inverse of render_item for entity items; segments split on "; ", key on the first ": ".
EntityItem parse_entity_rendering(std::string_view name, std::string_view description);

/// Throws DataError when the item violates its invariants.
void validate_item(const Item& item);
void validate_pair(const CandidatePair& pair);

nlohmann::json item_to_json(const Item& item);
Item item_from_json(const nlohmann::json& j, TaskKind kind);
nlohmann::json pair_to_json(const CandidatePair& pair);
/// Parses one pair record; the record's "kind" must equal `expected`.
CandidatePair pair_from_json(const nlohmann::json& j, TaskKind expected);

MappingPool load_pool(const std::filesystem::path& path, TaskKind kind);
/// `origin` names the stream in error messages.
MappingPool read_pool(std::istream& in, TaskKind kind, std::string_view origin = "<stream>");
void write_pool(std::ostream& out, const MappingPool& pool);
void save_pool(const std::filesystem::path& path, const MappingPool& pool);

/// Throws DataError when any pair is unlabeled.
DatasetStats pool_stats(const MappingPool& pool);

/// Digest of the pair's content (both items), independent of id and label.
std::string pair_digest(const CandidatePair& pair);

} // namespace kcmf
