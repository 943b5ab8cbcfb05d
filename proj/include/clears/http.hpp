#pragma once

// Minimal HTTP transport seam. Production code talks through HttplibTransport;
// tests substitute counting fakes.

#include <chrono>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include <httplib.h>

#include "clears/error.hpp"

namespace clears {

struct HttpResponse {
    int status = 0;  // 0: no HTTP response (connection failure, timeout)
    std::string body;
    std::string error;
};

using HttpHeaders = std::vector<std::pair<std::string, std::string>>;

class Transport {
public:
    virtual ~Transport() = default;
    virtual HttpResponse post(const std::string& url, const std::string& body, const HttpHeaders& headers) = 0;
    virtual HttpResponse get(const std::string& url, const HttpHeaders& headers) = 0;
};

struct ParsedUrl {
    std::string origin;  // scheme://host[:port]
    std::string path;    // always starts with '/'
};

inline ParsedUrl parse_url(const std::string& url) {
    const auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) throw Error("URL without scheme: " + url);
    const auto path_start = url.find('/', scheme_end + 3);
    if (path_start == std::string::npos) return {url, "/"};
    return {url.substr(0, path_start), url.substr(path_start)};
}

inline std::string join_url(std::string base, std::string_view suffix) {
    while (!base.empty() && base.back() == '/') base.pop_back();
    return base + std::string(suffix);
}

class HttplibTransport final : public Transport {
public:
    explicit HttplibTransport(std::chrono::seconds timeout = std::chrono::seconds(120)) : timeout_(timeout) {}

    HttpResponse post(const std::string& url, const std::string& body, const HttpHeaders& headers) override {
        const auto u = parse_url(url);
        auto cli = client(u.origin);
        auto res = cli.Post(u.path, to_headers(headers), body, "application/json");
        return convert(res);
    }

    HttpResponse get(const std::string& url, const HttpHeaders& headers) override {
        const auto u = parse_url(url);
        auto cli = client(u.origin);
        auto res = cli.Get(u.path, to_headers(headers));
        return convert(res);
    }

private:
    httplib::Client client(const std::string& origin) const {
        httplib::Client cli(origin);
        cli.set_connection_timeout(timeout_);
        cli.set_read_timeout(timeout_);
        cli.set_write_timeout(timeout_);
        return cli;
    }

    static httplib::Headers to_headers(const HttpHeaders& headers) {
        httplib::Headers h;
        for (const auto& [k, v] : headers) h.emplace(k, v);
        return h;
    }

    static HttpResponse convert(const httplib::Result& res) {
        if (!res) return {0, {}, httplib::to_string(res.error())};
        return {res->status, res->body, {}};
    }

    std::chrono::seconds timeout_;
};

}  // namespace clears
