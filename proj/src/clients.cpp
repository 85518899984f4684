#include "kcmf/clients.hpp"

#include <json.hpp>

namespace kcmf::clients {

namespace {

// nullopt on 404; throws on other failures or an undecodable body.
std::optional<nlohmann::json> fetch_json(http::Transport& transport, const http::Request& req) {
    const auto reply = transport.get(req);
    if (reply.status == 404) return std::nullopt;
    if (reply.status < 200 || reply.status > 299) {
        throw http::TransportError(http::FailureKind::Exhausted,
                                   "GET " + req.key() + " returned HTTP " + std::to_string(reply.status));
    }
    try {
        return nlohmann::json::parse(reply.body);
    } catch (const nlohmann::json::parse_error& e) {
        throw Error("GET " + req.key() + " returned invalid JSON: " + e.what());
    }
}

std::string strip_slash(std::string s) {
    while (!s.empty() && s.back() == '/') s.pop_back();
    return s;
}

Concept to_concept(const nlohmann::json& j) {
    Concept c;
    c.id = j.value("conceptId", std::string{});
    if (j.contains("pt") && j.at("pt").is_object()) c.term = j.at("pt").value("term", std::string{});
    if (c.term.empty() && j.contains("fsn") && j.at("fsn").is_object()) c.term = j.at("fsn").value("term", std::string{});
    return c;
}

} // namespace

TerminologyClient::TerminologyClient(http::Transport& transport, std::string base_url, std::string branch)
    : transport_(transport), base_url_(strip_slash(std::move(base_url))), branch_(std::move(branch)) {}

std::vector<Concept> TerminologyClient::search(const std::string& term, int limit) {
    http::Request req{base_url_ + "/" + branch_ + "/concepts",
                      {{"term", term}, {"activeFilter", "true"}, {"limit", std::to_string(limit)}}};
    std::vector<Concept> out;
    const auto j = fetch_json(transport_, req);
    if (!j || !j->contains("items")) return out;
    for (const auto& item : j->at("items")) {
        auto c = to_concept(item);
        if (!c.id.empty() && !c.term.empty()) out.push_back(std::move(c));
        if (static_cast<int>(out.size()) >= limit) break;
    }
    return out;
}

std::vector<Concept> TerminologyClient::children(const std::string& concept_id) {
    http::Request req{base_url_ + "/browser/" + branch_ + "/concepts/" + concept_id + "/children", {{"form", "inferred"}}};
    std::vector<Concept> out;
    const auto j = fetch_json(transport_, req);
    if (!j || !j->is_array()) return out;
    for (const auto& item : *j) {
        auto c = to_concept(item);
        if (!c.id.empty() && !c.term.empty()) out.push_back(std::move(c));
    }
    return out;
}

EntitySearchClient::EntitySearchClient(http::Transport& transport, std::string api_url)
    : transport_(transport), api_url_(std::move(api_url)) {}

std::vector<EntityHit> EntitySearchClient::search(const std::string& term, int limit) {
    http::Request req{api_url_,
                      {{"action", "wbsearchentities"},
                       {"search", term},
                       {"language", "en"},
                       {"type", "item"},
                       {"limit", std::to_string(limit)},
                       {"format", "json"}}};
    std::vector<EntityHit> out;
    const auto j = fetch_json(transport_, req);
    if (!j || !j->contains("search")) return out;
    for (const auto& hit : j->at("search")) {
        EntityHit h{hit.value("id", std::string{}), hit.value("label", std::string{})};
        if (!h.id.empty()) out.push_back(std::move(h));
        if (static_cast<int>(out.size()) >= limit) break;
    }
    return out;
}

std::optional<std::string> EntitySearchClient::enwiki_title(const std::string& entity_id) {
    http::Request req{api_url_,
                      {{"action", "wbgetentities"},
                       {"ids", entity_id},
                       {"props", "sitelinks"},
                       {"sitefilter", "enwiki"},
                       {"format", "json"}}};
    const auto j = fetch_json(transport_, req);
    if (!j) return std::nullopt;
    const auto ptr = nlohmann::json::json_pointer("/entities/" + entity_id + "/sitelinks/enwiki/title");
    if (!j->contains(ptr) || !j->at(ptr).is_string()) return std::nullopt;
    return j->at(ptr).get<std::string>();
}

FactClient::FactClient(http::Transport& transport, std::string endpoint)
    : transport_(transport), endpoint_(std::move(endpoint)) {}

std::string FactClient::facts_query(const std::string& entity_id, int limit) {
    return "SELECT ?propLabel ?valueLabel WHERE { wd:" + entity_id +
           " ?p ?value . ?prop wikibase:directClaim ?p . "
           "SERVICE wikibase:label { bd:serviceParam wikibase:language \"en\". } } LIMIT " +
           std::to_string(limit);
}

std::vector<Fact> FactClient::facts(const std::string& entity_id, int limit) {
    http::Request req{endpoint_, {{"query", facts_query(entity_id, limit)}, {"format", "json"}}};
    std::vector<Fact> out;
    const auto j = fetch_json(transport_, req);
    const auto ptr = nlohmann::json::json_pointer("/results/bindings");
    if (!j || !j->contains(ptr)) return out;
    for (const auto& b : j->at(ptr)) {
        Fact f;
        if (b.contains("propLabel")) f.property = b.at("propLabel").value("value", std::string{});
        if (b.contains("valueLabel")) f.value = b.at("valueLabel").value("value", std::string{});
        if (!f.property.empty() && !f.value.empty()) out.push_back(std::move(f));
    }
    return out;
}

ExtractClient::ExtractClient(http::Transport& transport, std::string api_url)
    : transport_(transport), api_url_(std::move(api_url)) {}

std::string ExtractClient::extract(const std::string& title) {
    http::Request req{api_url_,
                      {{"action", "query"},
                       {"prop", "extracts"},
                       {"explaintext", "1"},
                       {"redirects", "1"},
                       {"titles", title},
                       {"format", "json"}}};
    const auto j = fetch_json(transport_, req);
    const auto ptr = nlohmann::json::json_pointer("/query/pages");
    if (!j || !j->contains(ptr)) return {};
    for (const auto& [page_id, page] : j->at(ptr).items()) {
        if (page.contains("extract") && page.at("extract").is_string()) return page.at("extract").get<std::string>();
    }
    return {};
}

} // namespace kcmf::clients
