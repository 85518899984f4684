#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "kcmf/core.hpp"

// Entity-matching pools from entity-linking corpora: mentions grouped by
// concept become hard positives (least similar surfaces of one concept) and
// hard negatives (most similar surfaces of different concepts).
namespace kcmf::datasetgen {

struct Mention {
    std::string surface;
    std::string concept_id;
    std::string sentence;
};

using SimilarityFn = std::function<double(std::string_view, std::string_view)>;

/// Character-trigram Jaccard of the normalized strings. Strings shorter than
/// three characters are a single gram. Exactly 1.0 only for equal normalized
/// strings.
double similarity(std::string_view a, std::string_view b);

/// "trigram_jaccard" is the only built-in id.
SimilarityFn similarity_function(std::string_view id);

struct GenConfig {
    std::size_t negative_quota = 100000;
    std::string similarity = "trigram_jaccard";
    std::uint64_t seed = 0;
    /// Draw negatives uniformly at random instead of taking the most similar ones.
    bool random_negatives = false;
};

/// Mentions sharing a concept and a normalized surface collapse to one
/// representative (smallest surface, then sentence). Each concept with two or
/// more representatives yields its least similar pair as one positive (ties:
/// lexicographically smallest normalized surfaces). Negatives are the
/// `negative_quota` most similar cross-concept pairs, ties ordered by a seeded
/// hash. Pair ids are "pos-NNNNNN" then "neg-NNNNNN".
/// Throws DataError with fewer than two mentions or an empty field.
MappingPool build_pool(const std::vector<Mention>& mentions, const GenConfig& cfg);

/// JSONL {"surface", "concept_id", "sentence"}.
std::vector<Mention> read_mentions(std::istream& in, std::string_view origin = "<stream>");
std::vector<Mention> load_mentions(const std::filesystem::path& path);

/// EntityItem with a single "context" attribute holding the sentence.
EntityItem to_item(const Mention& m);

} // namespace kcmf::datasetgen
