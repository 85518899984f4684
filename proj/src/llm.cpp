#include "kcmf/llm.hpp"

#include <fstream>
#include <thread>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "kcmf/digest.hpp"
#include "kcmf/http.hpp"
#include "kcmf/text.hpp"

namespace kcmf::llm {

std::string_view to_string(BackendErrorKind kind) {
    switch (kind) {
    case BackendErrorKind::RetriesExhausted: return "exhausted";
    case BackendErrorKind::Timeout: return "timeout";
    case BackendErrorKind::Auth: return "auth";
    case BackendErrorKind::Unreachable: return "unreachable";
    case BackendErrorKind::Protocol: return "protocol";
    case BackendErrorKind::Unscripted: return "unscripted";
    }
    return "";
}

namespace {

BackendErrorKind parse_error_kind(std::string_view s) {
    for (auto k : {BackendErrorKind::RetriesExhausted, BackendErrorKind::Timeout, BackendErrorKind::Auth,
                   BackendErrorKind::Unreachable, BackendErrorKind::Protocol, BackendErrorKind::Unscripted}) {
        if (to_string(k) == s) return k;
    }
    throw ConfigError("unknown backend error kind '" + std::string(s) + "' in mock script");
}

} // namespace

bool BackendError::fatal() const {
    return kind_ == BackendErrorKind::Auth || kind_ == BackendErrorKind::Unreachable ||
           kind_ == BackendErrorKind::Unscripted;
}

MockBackend::MockBackend(std::vector<MockRule> rules) {
    rules_.reserve(rules.size());
    for (auto& r : rules) {
        Compiled c{std::move(r), std::nullopt};
        if (c.rule.pattern) {
            try {
                c.re.emplace(*c.rule.pattern, std::regex::ECMAScript);
            } catch (const std::regex_error& e) {
                throw ConfigError("mock rule has invalid regex '" + *c.rule.pattern + "': " + e.what());
            }
        }
        rules_.push_back(std::move(c));
    }
}

std::vector<MockRule> MockBackend::read_script(const std::filesystem::path& script) {
    std::ifstream in(script);
    if (!in) throw ConfigError("cannot open mock script " + script.string());
    std::vector<MockRule> rules;
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        const auto t = text::trim(line);
        if (t.empty() || t.front() == '#') continue;
        const auto where = script.string() + ":" + std::to_string(n);
        try {
            const auto j = nlohmann::json::parse(t);
            MockRule r;
            if (j.contains("digest")) r.digest = j.at("digest").get<std::string>();
            if (j.contains("regex")) r.pattern = j.at("regex").get<std::string>();
            if (j.contains("tag")) r.tag = j.at("tag").get<std::string>();
            if (j.contains("source")) r.source = j.at("source").get<std::string>();
            if (j.contains("error")) r.error = parse_error_kind(j.at("error").get<std::string>());
            if (j.contains("response")) {
                r.response = j.at("response").get<std::string>();
            } else if (!r.error) {
                throw ConfigError("rule needs 'response' or 'error'");
            }
            rules.push_back(std::move(r));
        } catch (const nlohmann::json::exception& e) {
            throw ConfigError(where + ": bad mock rule: " + e.what());
        } catch (const ConfigError& e) {
            throw ConfigError(where + ": " + e.what());
        }
    }
    return rules;
}

LlmResponse MockBackend::complete(const Prompt& prompt, const GenerationParams&) {
    count_call();
    std::optional<std::string> digest;
    for (const auto& c : rules_) {
        const auto& r = c.rule;
        if (r.tag && *r.tag != prompt.tag) continue;
        if (r.source && *r.source != prompt.source) continue;
        if (r.digest) {
            if (!digest) digest = sha256_hex(prompt.body);
            if (*r.digest != *digest) continue;
        }
        std::string text = r.response;
        if (c.re) {
            std::smatch m;
            if (!std::regex_search(prompt.body, m, *c.re)) continue;
            text = m.format(r.response);
        }
        if (r.error) throw BackendError(*r.error, "mock rule scripted failure: " + std::string(to_string(*r.error)));
        return LlmResponse{std::move(text), std::chrono::milliseconds{0}, id(), 1};
    }
    throw BackendError(BackendErrorKind::Unscripted,
                       "mock backend has no rule for " + prompt.tag + " prompt (source '" + prompt.source +
                           "', digest " + sha256_hex(prompt.body) + ")");
}

LlmResponse CallbackBackend::complete(const Prompt& prompt, const GenerationParams&) {
    count_call();
    return LlmResponse{fn_(prompt), std::chrono::milliseconds{0}, id_, 1};
}

HttpBackend::HttpBackend(HttpBackendOptions opts) : opts_(std::move(opts)) {
    while (!opts_.base_url.empty() && opts_.base_url.back() == '/') opts_.base_url.pop_back();
    if (opts_.base_url.empty()) throw ConfigError("HTTP backend needs a base URL");
    if (opts_.max_attempts < 1) throw ConfigError("HTTP backend needs max_attempts >= 1");
}

LlmResponse HttpBackend::complete(const Prompt& prompt, const GenerationParams& params) {
    count_call();
    const nlohmann::json request = {{"model", params.model_id},
                                    {"messages", {{{"role", "user"}, {"content", prompt.body}}}},
                                    {"temperature", params.temperature},
                                    {"top_p", params.top_p},
                                    {"max_tokens", params.max_tokens}};
    const std::string url = opts_.base_url + "/chat/completions";
    http::Headers headers{{"Accept", "application/json"}};
    if (!opts_.api_key.empty()) headers.emplace_back("Authorization", "Bearer " + opts_.api_key);
    if (opts_.trace) spdlog::info("POST {} (authorization redacted) body={}", url, request.dump());

    const auto start = std::chrono::steady_clock::now();
    BackendErrorKind last_kind = BackendErrorKind::RetriesExhausted;
    std::string last_message;
    for (int attempt = 1; attempt <= opts_.max_attempts; ++attempt) {
        if (attempt > 1) std::this_thread::sleep_for(opts_.base_delay * (1 << (attempt - 2)));
        http::Reply reply;
        try {
            reply = http::send_post(url, headers, request.dump(), "application/json", opts_.timeout);
        } catch (const http::TransportError& e) {
            last_kind = e.kind() == http::FailureKind::Timeout ? BackendErrorKind::Timeout : BackendErrorKind::Unreachable;
            last_message = e.what();
            spdlog::warn("chat completion attempt {}/{} failed: {}", attempt, opts_.max_attempts, last_message);
            continue;
        }
        if (opts_.trace) spdlog::info("<- {} body={}", reply.status, reply.body);
        if (reply.status == 401 || reply.status == 403) {
            throw BackendError(BackendErrorKind::Auth, "chat completion rejected credentials (HTTP " + std::to_string(reply.status) + ")");
        }
        if (http::is_transient_status(reply.status)) {
            last_kind = BackendErrorKind::RetriesExhausted;
            last_message = "HTTP " + std::to_string(reply.status);
            spdlog::warn("chat completion attempt {}/{} failed: {}", attempt, opts_.max_attempts, last_message);
            continue;
        }
        if (reply.status != 200) {
            throw BackendError(BackendErrorKind::Protocol, "chat completion returned HTTP " + std::to_string(reply.status));
        }
        try {
            const auto j = nlohmann::json::parse(reply.body);
            const auto& content = j.at("choices").at(0).at("message").at("content");
            LlmResponse out;
            out.text = content.is_null() ? std::string{} : content.get<std::string>();
            out.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - start);
            out.backend_id = id();
            out.attempts = attempt;
            if (attempt > 1) spdlog::info("chat completion succeeded after {} retries", attempt - 1);
            return out;
        } catch (const nlohmann::json::exception& e) {
            throw BackendError(BackendErrorKind::Protocol, std::string("unexpected chat completion body: ") + e.what());
        }
    }
    throw BackendError(last_kind, "chat completion failed after " + std::to_string(opts_.max_attempts) +
                                      " attempts: " + last_message);
}

std::string_view to_string(ParsedVerdict v) {
    switch (v) {
    case ParsedVerdict::Yes: return "yes";
    case ParsedVerdict::No: return "no";
    case ParsedVerdict::BadlyFormatted: return "badly_formatted";
    }
    return "";
}

namespace {

struct Token {
    std::string word;  // lowercased
    std::size_t pos;
};

std::vector<Token> words(std::string_view s) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < s.size()) {
        if (!text::is_word_char(s[i])) {
            ++i;
            continue;
        }
        const auto start = i;
        while (i < s.size() && text::is_word_char(s[i])) ++i;
        out.push_back({text::to_lower(s.substr(start, i - start)), start});
    }
    return out;
}

enum class Decided { None, Yes, No, Ambiguous };

Decided decide(const std::vector<Token>& tokens, std::size_t from) {
    bool yes = false, no = false;
    for (const auto& t : tokens) {
        if (t.pos < from) continue;
        yes = yes || t.word == "yes";
        no = no || t.word == "no";
    }
    if (yes && no) return Decided::Ambiguous;
    if (yes) return Decided::Yes;
    if (no) return Decided::No;
    return Decided::None;
}

ParsedVerdict to_verdict(Decided d) {
    return d == Decided::Yes ? ParsedVerdict::Yes : d == Decided::No ? ParsedVerdict::No : ParsedVerdict::BadlyFormatted;
}

} // namespace

ParsedVerdict parse_verdict(std::string_view response) {
    const auto body = text::trim(response);
    if (body.empty()) return ParsedVerdict::BadlyFormatted;
    const auto tokens = words(body);

    std::optional<std::size_t> cue_end;
    for (const auto& t : tokens) {
        if (t.word == "answer") cue_end = t.pos + t.word.size();
    }
    if (cue_end) {
        const auto d = decide(tokens, *cue_end);
        if (d != Decided::None) return to_verdict(d);
    }
    const auto last_newline = body.rfind('\n');
    const std::size_t line_start = last_newline == std::string_view::npos ? 0 : last_newline + 1;
    return to_verdict(decide(tokens, line_start));
}

} // namespace kcmf::llm
