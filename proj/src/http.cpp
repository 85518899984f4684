#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "kcmf/http.hpp"

#include <fstream>
#include <thread>

#include <json.hpp>
#include <spdlog/spdlog.h>

#include "kcmf/text.hpp"

namespace kcmf::http {

std::string url_encode(std::string_view s) {
    static constexpr char hex[] = "0123456789ABCDEF";
    std::string out;
    for (unsigned char c : s) {
        if (std::isalnum(c) || c == '-' || c == '_' || c == '.' || c == '~') {
            out.push_back(static_cast<char>(c));
        } else {
            out.push_back('%');
            out.push_back(hex[c >> 4]);
            out.push_back(hex[c & 0x0f]);
        }
    }
    return out;
}

std::string Request::key() const {
    std::string out = url;
    for (std::size_t i = 0; i < params.size(); ++i) {
        out += i == 0 ? '?' : '&';
        out += url_encode(params[i].first) + "=" + url_encode(params[i].second);
    }
    return out;
}

bool is_transient_status(int status) {
    return status == 429 || (status >= 500 && status <= 599);
}

namespace {

struct SplitUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;    // /path?query
    std::string host;
};

SplitUrl split_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error("malformed URL '" + url + "'");
    const auto path_start = url.find('/', scheme_end + 3);
    SplitUrl out;
    out.origin = url.substr(0, path_start);
    out.path = path_start == std::string::npos ? "/" : url.substr(path_start);
    out.host = url.substr(scheme_end + 3, path_start == std::string::npos ? std::string::npos : path_start - scheme_end - 3);
    return out;
}

httplib::Client make_client(const SplitUrl& u, std::chrono::milliseconds timeout) {
    httplib::Client cli(u.origin);
    cli.set_connection_timeout(timeout);
    cli.set_read_timeout(timeout);
    cli.set_write_timeout(timeout);
    cli.set_follow_location(true);
    return cli;
}

Reply finish(httplib::Result res, const std::string& url) {
    if (!res) {
        const auto err = res.error();
        const auto kind = err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read
                              ? FailureKind::Timeout
                              : FailureKind::Connection;
        throw TransportError(kind, "request to " + url + " failed: " + httplib::to_string(err));
    }
    return Reply{res->status, res->body};
}

httplib::Headers to_headers(const Headers& headers) {
    httplib::Headers out;
    for (const auto& [k, v] : headers) out.emplace(k, v);
    return out;
}

} // namespace

Reply send_get(const std::string& url, const Headers& headers, std::chrono::milliseconds timeout) {
    const auto u = split_url(url);
    auto cli = make_client(u, timeout);
    return finish(cli.Get(u.path, to_headers(headers)), url);
}

Reply send_post(const std::string& url, const Headers& headers, const std::string& body,
                const std::string& content_type, std::chrono::milliseconds timeout) {
    const auto u = split_url(url);
    auto cli = make_client(u, timeout);
    return finish(cli.Post(u.path, to_headers(headers), body, content_type), url);
}

void LiveTransport::pace(const std::string& host) {
    std::unique_lock lock(pace_mutex_);
    const auto now = std::chrono::steady_clock::now();
    auto& last = last_request_[host];
    const auto ready = last + opts_.min_interval;
    last = std::max(now, ready);
    lock.unlock();
    if (ready > now) std::this_thread::sleep_until(ready);
}

Reply LiveTransport::do_get(const Request& req) {
    const std::string url = req.key();
    const Headers headers{{"User-Agent", opts_.user_agent}, {"Accept", "application/json"}};
    FailureKind last_failure = FailureKind::Exhausted;
    std::string last_message;
    for (int attempt = 0; attempt < opts_.max_attempts; ++attempt) {
        if (attempt > 0) std::this_thread::sleep_for(opts_.base_delay * (1 << (attempt - 1)));
        pace(split_url(req.url).host);
        if (opts_.trace) spdlog::debug("GET {}", url);
        try {
            Reply reply = send_get(url, headers, opts_.timeout);
            if (opts_.trace) spdlog::debug("<- {} ({} bytes)", reply.status, reply.body.size());
            if (!is_transient_status(reply.status)) return reply;
            last_failure = FailureKind::Exhausted;
            last_message = "HTTP " + std::to_string(reply.status);
        } catch (const TransportError& e) {
            last_failure = e.kind();
            last_message = e.what();
        }
        spdlog::warn("GET {} attempt {}/{} failed: {}", req.url, attempt + 1, opts_.max_attempts, last_message);
    }
    throw TransportError(last_failure, "GET " + url + " failed after " + std::to_string(opts_.max_attempts) +
                                           " attempts: " + last_message);
}

ReplayTransport::ReplayTransport(const std::filesystem::path& fixture) {
    std::ifstream in(fixture);
    if (!in) throw Error("cannot open fixture file " + fixture.string());
    std::string line;
    for (std::size_t n = 1; std::getline(in, line); ++n) {
        if (text::trim(line).empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            replies_[j.at("request").get<std::string>()] = Reply{j.value("status", 200), j.at("body").get<std::string>()};
        } catch (const nlohmann::json::exception& e) {
            throw Error(fixture.string() + ":" + std::to_string(n) + ": bad fixture record: " + e.what());
        }
    }
}

Reply ReplayTransport::do_get(const Request& req) {
    const auto it = replies_.find(req.key());
    if (it == replies_.end()) throw TransportError(FailureKind::NoFixture, "no recorded reply for " + req.key());
    return it->second;
}

Reply RecordingTransport::do_get(const Request& req) {
    Reply reply = inner_.get(req);
    const nlohmann::json rec = {{"request", req.key()}, {"status", reply.status}, {"body", reply.body}};
    std::lock_guard lock(write_mutex_);
    std::ofstream out(fixture_, std::ios::app);
    out << rec.dump() << '\n';
    return reply;
}

} // namespace kcmf::http
