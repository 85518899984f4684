#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include "kcmf/error.hpp"

// HTTP plumbing for the knowledge-base clients and the chat backend. Every
// knowledge request goes through a Transport so that traffic can be recorded
// to a fixture file and replayed offline.
namespace kcmf::http {

using Params = std::vector<std::pair<std::string, std::string>>;
using Headers = std::vector<std::pair<std::string, std::string>>;

struct Request {
    std::string url;
    Params params;

    /// url?k=v&... with percent-encoded values; the fixture lookup key.
    std::string key() const;
};

struct Reply {
    int status = 0;
    std::string body;
};

enum class FailureKind { Connection, Timeout, Exhausted, NoFixture };

class TransportError : public Error {
public:
    TransportError(FailureKind kind, const std::string& what) : Error(what), kind_(kind) {}
    FailureKind kind() const { return kind_; }

private:
    FailureKind kind_;
};

std::string url_encode(std::string_view s);

/// Single attempt. Throws TransportError(Connection|Timeout) when no HTTP
/// response was received.
Reply send_get(const std::string& url, const Headers& headers, std::chrono::milliseconds timeout);
Reply send_post(const std::string& url, const Headers& headers, const std::string& body,
                const std::string& content_type, std::chrono::milliseconds timeout);

/// 429 and 5xx.
bool is_transient_status(int status);

class Transport {
public:
    virtual ~Transport() = default;

    Reply get(const Request& req) {
        ++calls_;
        return do_get(req);
    }
    std::size_t calls() const { return calls_.load(); }

protected:
    virtual Reply do_get(const Request& req) = 0;

private:
    std::atomic<std::size_t> calls_{0};
};

struct LiveOptions {
    std::chrono::milliseconds timeout{20000};
    int max_attempts = 3;
    std::chrono::milliseconds base_delay{500};
    /// Minimum spacing between requests to the same host.
    std::chrono::milliseconds min_interval{100};
    std::string user_agent = "kcmf/0.1";
    bool trace = false;
};

/// Real network access with bounded retries and per-host pacing.
class LiveTransport : public Transport {
public:
    explicit LiveTransport(LiveOptions opts = {}) : opts_(std::move(opts)) {}

protected:
    Reply do_get(const Request& req) override;

private:
    void pace(const std::string& host);

    LiveOptions opts_;
    std::mutex pace_mutex_;
    std::map<std::string, std::chrono::steady_clock::time_point> last_request_;
};

/// Serves replies from a JSONL fixture file of {"request", "status", "body"}.
/// Unknown requests throw TransportError(NoFixture).
class ReplayTransport : public Transport {
public:
    explicit ReplayTransport(const std::filesystem::path& fixture);
    std::size_t size() const { return replies_.size(); }

protected:
    Reply do_get(const Request& req) override;

private:
    std::map<std::string, Reply> replies_;
};

/// Forwards to another transport and appends each exchange to a fixture file.
class RecordingTransport : public Transport {
public:
    RecordingTransport(Transport& inner, std::filesystem::path fixture) : inner_(inner), fixture_(std::move(fixture)) {}

protected:
    Reply do_get(const Request& req) override;

private:
    Transport& inner_;
    std::filesystem::path fixture_;
    std::mutex write_mutex_;
};

} // namespace kcmf::http
