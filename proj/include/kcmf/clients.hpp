#pragma once

#include <optional>
#include <string>
#include <vector>

#include "kcmf/http.hpp"

// Thin clients for the remote knowledge bases. Each one only builds requests
// and decodes replies; all I/O goes through an http::Transport.
namespace kcmf::clients {

struct Concept {
    std::string id;
    std::string term;
};

/// SNOMED CT browser (Snowstorm) style terminology server.
///   search:   GET {base}/{branch}/concepts?term=..&activeFilter=true&limit=k
///   children: GET {base}/browser/{branch}/concepts/{id}/children?form=inferred
class TerminologyClient {
public:
    TerminologyClient(http::Transport& transport, std::string base_url, std::string branch = "MAIN");

    std::vector<Concept> search(const std::string& term, int limit);
    std::vector<Concept> children(const std::string& concept_id);

private:
    http::Transport& transport_;
    std::string base_url_;
    std::string branch_;
};

struct EntityHit {
    std::string id;
    std::string label;
};

/// Wikidata action API: wbsearchentities and the enwiki sitelink of an entity.
class EntitySearchClient {
public:
    EntitySearchClient(http::Transport& transport, std::string api_url = "https://www.wikidata.org/w/api.php");

    std::vector<EntityHit> search(const std::string& term, int limit);
    std::optional<std::string> enwiki_title(const std::string& entity_id);

private:
    http::Transport& transport_;
    std::string api_url_;
};

struct Fact {
    std::string property;
    std::string value;
};

/// SPARQL endpoint returning labelled direct claims of an entity.
class FactClient {
public:
    FactClient(http::Transport& transport, std::string endpoint = "https://query.wikidata.org/sparql");

    static std::string facts_query(const std::string& entity_id, int limit);
    std::vector<Fact> facts(const std::string& entity_id, int limit);

private:
    http::Transport& transport_;
    std::string endpoint_;
};

/// MediaWiki extracts API (plain-text page intro and body).
class ExtractClient {
public:
    ExtractClient(http::Transport& transport, std::string api_url = "https://en.wikipedia.org/w/api.php");

    /// Empty when the page does not exist or has no extract.
    std::string extract(const std::string& title);

private:
    http::Transport& transport_;
    std::string api_url_;
};

} // namespace kcmf::clients
