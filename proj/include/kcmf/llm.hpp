#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <optional>
#include <regex>
#include <string>
#include <string_view>
#include <vector>

#include "kcmf/error.hpp"

namespace kcmf::llm {

/// Sampling settings; defaults are the deterministic ones used for matching.
struct GenerationParams {
    double temperature = 0.0;
    double top_p = 0.1;
    int max_tokens = 1024;
    std::string model_id = "gpt-3.5-turbo-1106";
};

/// Purpose tags attached to every request. Mock scripts may filter on them.
namespace tags {
inline constexpr std::string_view match = "match";
inline constexpr std::string_view keywords = "keywords";
inline constexpr std::string_view keyword_filter = "keyword-filter";
inline constexpr std::string_view self_indicator = "self-indicator";
inline constexpr std::string_view summarize_demo = "summarize-demo";
inline constexpr std::string_view summarize_extract = "summarize-extract";
} // namespace tags

struct Prompt {
    std::string body;
    std::string tag;
    /// Knowledge source the prompt was built for; empty for pretasks without one.
    std::string source;
};

struct LlmResponse {
    std::string text;
    std::chrono::milliseconds latency{0};
    std::string backend_id;
    int attempts = 1;
};

enum class BackendErrorKind {
    RetriesExhausted,  // transient failures (429/5xx) on every attempt
    Timeout,
    Auth,
    Unreachable,
    Protocol,    // response arrived but could not be understood
    Unscripted,  // mock backend has no rule for the prompt
};

std::string_view to_string(BackendErrorKind kind);

class BackendError : public Error {
public:
    BackendError(BackendErrorKind kind, const std::string& what) : Error(what), kind_(kind) {}
    BackendErrorKind kind() const { return kind_; }
    /// Errors that would repeat for every request; they abort a run instead of
    /// being recorded as a per-source undecided vote.
    bool fatal() const;

private:
    BackendErrorKind kind_;
};

/// A completion endpoint. Implementations must be safe to call concurrently.
class Backend {
public:
    virtual ~Backend() = default;
    virtual LlmResponse complete(const Prompt& prompt, const GenerationParams& params) = 0;
    virtual std::string id() const = 0;

    std::size_t calls() const { return calls_.load(); }

protected:
    void count_call() { ++calls_; }

private:
    std::atomic<std::size_t> calls_{0};
};

inline LlmResponse complete(Backend& backend, const Prompt& prompt, const GenerationParams& params) {
    return backend.complete(prompt, params);
}

/// One scripted reply. A rule matches when every present matcher matches;
/// "$1"-style references in `response` expand to regex captures.
struct MockRule {
    std::optional<std::string> digest;
    std::optional<std::string> pattern;
    std::optional<std::string> tag;
    std::optional<std::string> source;
    std::string response;
    std::optional<BackendErrorKind> error;
};

/// Deterministic scripted backend: ordered rules, first match wins, an
/// unmatched prompt throws BackendError(Unscripted).
class MockBackend : public Backend {
public:
    explicit MockBackend(std::vector<MockRule> rules);
    /// JSONL: {"digest"|"regex", "tag"?, "source"?, "response"|"error"}; '#' lines are comments.
    static std::vector<MockRule> read_script(const std::filesystem::path& script);
    static MockBackend from_file(const std::filesystem::path& script) { return MockBackend(read_script(script)); }

    LlmResponse complete(const Prompt& prompt, const GenerationParams& params) override;
    std::string id() const override { return "mock"; }

private:
    struct Compiled {
        MockRule rule;
        std::optional<std::regex> re;
    };
    std::vector<Compiled> rules_;
};

/// Backend driven by a callable, mostly for tests.
class CallbackBackend : public Backend {
public:
    using Fn = std::function<std::string(const Prompt&)>;
    explicit CallbackBackend(Fn fn, std::string id = "callback") : fn_(std::move(fn)), id_(std::move(id)) {}
    LlmResponse complete(const Prompt& prompt, const GenerationParams& params) override;
    std::string id() const override { return id_; }

private:
    Fn fn_;
    std::string id_;
};

struct HttpBackendOptions {
    /// e.g. https://api.openai.com/v1 ; requests go to {base_url}/chat/completions.
    std::string base_url;
    std::string api_key;
    std::chrono::milliseconds timeout{60000};
    int max_attempts = 5;
    std::chrono::milliseconds base_delay{1000};
    bool trace = false;
};

/// OpenAI-style chat-completion client with exponential backoff on 429/5xx,
/// timeouts and connection failures.
class HttpBackend : public Backend {
public:
    explicit HttpBackend(HttpBackendOptions opts);
    LlmResponse complete(const Prompt& prompt, const GenerationParams& params) override;
    std::string id() const override { return "http:" + opts_.base_url; }

private:
    HttpBackendOptions opts_;
};

/// Outcome of reading a final answer out of a completion.
enum class ParsedVerdict { Yes, No, BadlyFormatted };

std::string_view to_string(ParsedVerdict v);

/// The last answer cue ("answer") decides: the yes/no tokens after it must be
/// all of one kind. Without a cue, or with no token after it, the final
/// non-empty line decides the same way. Anything else is BadlyFormatted.
ParsedVerdict parse_verdict(std::string_view response);

} // namespace kcmf::llm
