#pragma once

#include <atomic>
#include <filesystem>
#include <functional>
#include <mutex>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "clears/embedder.hpp"
#include "clears/extract.hpp"
#include "clears/http.hpp"
#include "clears/text.hpp"

namespace testsupport {

namespace fs = std::filesystem;

inline fs::path data_dir() { return CLEARS_DATA_DIR; }
inline fs::path test_data_dir() { return CLEARS_TEST_DATA_DIR; }
inline fs::path oracle_dir() { return CLEARS_ORACLE_DIR; }

inline nlohmann::json load_json(const fs::path& p) { return nlohmann::json::parse(clears::text::read_file(p)); }

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("clears-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;

    const fs::path& path() const { return path_; }

private:
    fs::path path_;
};

/// Scripted transport that records every call.
class FakeTransport final : public clears::Transport {
public:
    using Handler = std::function<clears::HttpResponse(const std::string& url, const std::string& body)>;

    explicit FakeTransport(Handler post_handler = nullptr, Handler get_handler = nullptr)
        : post_(std::move(post_handler)), get_(std::move(get_handler)) {}

    clears::HttpResponse post(const std::string& url, const std::string& body, const clears::HttpHeaders& headers) override {
        std::lock_guard lock(m_);
        ++posts;
        urls.push_back(url);
        bodies.push_back(body);
        last_headers = headers;
        return post_ ? post_(url, body) : clears::HttpResponse{0, {}, "no handler"};
    }

    clears::HttpResponse get(const std::string& url, const clears::HttpHeaders&) override {
        std::lock_guard lock(m_);
        ++gets;
        urls.push_back(url);
        return get_ ? get_(url, {}) : clears::HttpResponse{0, {}, "no handler"};
    }

    int posts = 0;
    int gets = 0;
    std::vector<std::string> urls;
    std::vector<std::string> bodies;
    clears::HttpHeaders last_headers;

private:
    Handler post_;
    Handler get_;
    std::mutex m_;
};

/// Transport serving the /embed and /healthz contract from the builtin stub.
inline std::shared_ptr<FakeTransport> stub_service_transport() {
    return std::make_shared<FakeTransport>(
        [](const std::string& url, const std::string& body) -> clears::HttpResponse {
            if (!url.ends_with("/embed")) return {404, "{}", {}};
            nlohmann::json req;
            try {
                req = nlohmann::json::parse(body);
            } catch (...) {
                return {422, R"({"error":"bad json"})", {}};
            }
            const auto reply = clears::serve_stub_embed(req);
            return {reply.status, reply.body.dump(), {}};
        },
        [](const std::string& url, const std::string&) -> clears::HttpResponse {
            if (!url.ends_with("/healthz")) return {404, "{}", {}};
            return {200, clears::stub_healthz().dump(), {}};
        });
}

/// Random UTF-8 text drawn from ASCII, Spanish letters, quotes, backslashes,
/// control characters, braces and astral-plane symbols.
inline std::string random_text(std::mt19937_64& rng, std::size_t max_len = 60) {
    static const std::vector<std::string> pool = {
        "a", "b", "z", "E", " ", " ", ".", ",", "\"", "'", "\\", "{", "}", ":", "=", "\n", "\t", "\r",
        "\x01", "\x1f", "á", "é", "í", "ó", "ú", "ñ", "Ñ", "ü", "¿", "¡", "«", "»", "—", "€", "😀", "𝄞",
        "0", "7", "simple", "\\u00e9", "\\n", "e\xCC\x81"};
    std::uniform_int_distribution<std::size_t> len(1, max_len);
    std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
    std::string s;
    const auto n = len(rng);
    for (std::size_t i = 0; i < n; ++i) s += pool[pick(rng)];
    return s;
}

inline std::vector<std::string> repair_names(const std::vector<clears::Repair>& rs) {
    std::vector<std::string> out;
    for (auto r : rs) out.push_back(clears::to_string(r));
    return out;
}

}  // namespace testsupport
