#pragma once

// Chat-completion client: OpenAI-compatible HTTP backend or deterministic mock,
// behind a content-addressed response cache with per-key single-flight.

#include <atomic>
#include <chrono>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <semaphore>
#include <sstream>
#include <string>
#include <thread>

#include <json.hpp>

#include "clears/error.hpp"
#include "clears/extract.hpp"
#include "clears/http.hpp"
#include "clears/prompts.hpp"
#include "clears/text.hpp"

namespace clears {

enum class BackendKind { http, mock };
enum class MockMode { fixtures, echo_input, degrade };

inline BackendKind parse_backend_kind(std::string_view s) {
    if (s == "http") return BackendKind::http;
    if (s == "mock") return BackendKind::mock;
    throw Error("unknown backend '" + std::string(s) + "' (expected http or mock)");
}

inline MockMode parse_mock_mode(std::string_view s) {
    if (s == "fixtures") return MockMode::fixtures;
    if (s == "echo_input") return MockMode::echo_input;
    if (s == "degrade") return MockMode::degrade;
    throw Error("unknown mock mode '" + std::string(s) + "'");
}

inline std::string to_string(BackendKind k) { return k == BackendKind::http ? "http" : "mock"; }
inline std::string to_string(MockMode m) {
    switch (m) {
        case MockMode::fixtures: return "fixtures";
        case MockMode::echo_input: return "echo_input";
        case MockMode::degrade: return "degrade";
    }
    return {};
}

struct Backend {
    BackendKind kind = BackendKind::mock;
    std::optional<std::string> endpoint_url;
    std::optional<std::string> auth_token_env;
    /// Fixture responses keyed by cache_key(request), "doc:<target id>@<variant>" or "doc:<target id>".
    std::optional<std::map<std::string, std::string>> mock_script;
    std::optional<MockMode> mock_mode;
    std::string model_id = "mock";
    int retries = 3;
    std::chrono::milliseconds backoff_base{1000};
    std::size_t in_flight = 4;
    std::chrono::seconds timeout{120};

    void validate() const {
        if (kind == BackendKind::http && (!endpoint_url || endpoint_url->empty()))
            throw Error("http backend requires endpoint_url");
        if (kind == BackendKind::mock && !mock_script && !mock_mode)
            throw Error("mock backend requires a mock script or a mock mode");
        if (retries < 0) throw Error("retries must be >= 0");
        if (in_flight == 0) throw Error("in-flight limit must be >= 1");
    }

    MockMode effective_mock_mode() const { return mock_mode.value_or(MockMode::fixtures); }
};

/// Loads a fixture script: a JSON object mapping keys to response texts.
inline std::map<std::string, std::string> load_mock_script(const std::filesystem::path& path) {
    try {
        return nlohmann::json::parse(text::read_file(path)).get<std::map<std::string, std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(path.string() + ": bad mock fixture file: " + e.what());
    }
}

struct Completion {
    std::string raw_text;
    std::string model_id;
    bool cached = false;
    std::chrono::milliseconds latency{0};
};

inline nlohmann::json canonical_request(const ChatRequest& req) {
    nlohmann::json params = nlohmann::json::object();
    for (const auto& [k, v] : req.decode_params) params[k] = v;
    return {{"system", req.system_message}, {"user", req.user_message}, {"model_id", req.model_id}, {"decode_params", params}};
}

/// SHA-256 over the canonical serialization (object keys sorted).
inline std::string cache_key(const ChatRequest& req) { return text::sha256_hex(canonical_request(req).dump()); }

/// One JSON file per key under <dir>/<first two hex chars>/<key>.json; no eviction.
class ResponseCache {
public:
    explicit ResponseCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

    std::filesystem::path path_for(const std::string& key) const { return dir_ / key.substr(0, 2) / (key + ".json"); }

    std::optional<Completion> get(const std::string& key) const {
        const auto p = path_for(key);
        if (!std::filesystem::exists(p)) return std::nullopt;
        try {
            const auto j = nlohmann::json::parse(text::read_file(p));
            Completion c;
            c.raw_text = j.at("response").at("raw_text").get<std::string>();
            c.model_id = j.at("response").at("model_id").get<std::string>();
            c.cached = true;
            return c;
        } catch (const nlohmann::json::exception& e) {
            throw DataError("corrupt cache entry " + p.string() + ": " + e.what());
        }
    }

    void put(const std::string& key, const ChatRequest& req, const Completion& c) const {
        const auto p = path_for(key);
        std::filesystem::create_directories(p.parent_path());
        const nlohmann::json j{{"key", key},
                               {"request", canonical_request(req)},
                               {"response", {{"raw_text", c.raw_text}, {"model_id", c.model_id}}}};
        std::ostringstream tag;
        tag << std::this_thread::get_id() << '.' << std::random_device{}();
        const auto tmp = p.parent_path() / (key + ".tmp." + tag.str());
        {
            std::ofstream out(tmp, std::ios::binary);
            if (!out) throw Error("cannot write cache file " + tmp.string());
            out << j.dump(2) << '\n';
        }
        std::filesystem::rename(tmp, p);
    }

private:
    std::filesystem::path dir_;
};

/// Text the degrade mock produces for a fixture response.
inline std::string degrade_response(std::string_view fixture) {
    const auto parsed = parse_dict_output(fixture);
    const std::string value = parsed.simple_text ? *parsed.simple_text : std::string(text::trim(fixture));
    return "Here is your simplification: {'simple' = '" + escape_string_literal(value, '\'') + "'}";
}

class LlmClient {
public:
    using Sleeper = std::function<void(std::chrono::milliseconds)>;

    LlmClient(Backend backend, std::optional<std::filesystem::path> cache_dir = std::nullopt,
              std::shared_ptr<Transport> transport = nullptr, Sleeper sleeper = nullptr)
        : backend_(std::move(backend)),
          transport_(std::move(transport)),
          sleeper_(sleeper ? std::move(sleeper) : Sleeper([](auto d) { std::this_thread::sleep_for(d); })),
          slots_(static_cast<std::ptrdiff_t>(std::max<std::size_t>(1, std::min<std::size_t>(backend_.in_flight, 256)))) {
        backend_.validate();
        if (cache_dir) cache_.emplace(*cache_dir);
        if (backend_.kind == BackendKind::http && !transport_)
            transport_ = std::make_shared<HttplibTransport>(backend_.timeout);
    }

    const Backend& backend() const { return backend_; }

    Completion complete(const ChatRequest& req) {
        const std::string key = cache_key(req);
        std::promise<Completion> promise;
        {
            std::unique_lock lock(mutex_);
            if (auto it = inflight_.find(key); it != inflight_.end()) {
                auto fut = it->second;
                lock.unlock();
                Completion c = fut.get();
                c.cached = true;
                return c;
            }
            inflight_.emplace(key, promise.get_future().share());
        }
        try {
            Completion c = lookup_or_fetch(req, key);
            promise.set_value(c);
            release(key);
            return c;
        } catch (...) {
            promise.set_exception(std::current_exception());
            release(key);
            throw;
        }
    }

    /// Fetches that reached the backend (network or mock), excluding cache hits.
    std::size_t backend_calls() const { return backend_calls_.load(); }
    /// HTTP attempts, retries included.
    std::size_t network_attempts() const { return network_attempts_.load(); }

private:
    void release(const std::string& key) {
        std::lock_guard lock(mutex_);
        inflight_.erase(key);
    }

    Completion lookup_or_fetch(const ChatRequest& req, const std::string& key) {
        if (cache_) {
            if (auto hit = cache_->get(key)) return *hit;
        }
        slots_.acquire();
        Completion c;
        try {
            const auto t0 = std::chrono::steady_clock::now();
            ++backend_calls_;
            c = backend_.kind == BackendKind::http ? fetch_http(req) : fetch_mock(req, key);
            c.latency = std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::steady_clock::now() - t0);
        } catch (...) {
            slots_.release();
            throw;
        }
        slots_.release();
        if (cache_) cache_->put(key, req, c);
        return c;
    }

    std::string fixture_for(const ChatRequest& req, const std::string& key) const {
        if (backend_.mock_script) {
            if (auto it = backend_.mock_script->find(key); it != backend_.mock_script->end()) return it->second;
            if (!req.target_id.empty()) {
                for (const auto& k : {"doc:" + req.target_id + "@" + req.variant, "doc:" + req.target_id})
                    if (auto it = backend_.mock_script->find(k); it != backend_.mock_script->end()) return it->second;
            }
        }
        throw BackendError("mock fixture miss for request " + key, 0, 0);
    }

    Completion fetch_mock(const ChatRequest& req, const std::string& key) const {
        Completion c;
        c.model_id = req.model_id.empty() ? backend_.model_id : req.model_id;
        switch (backend_.effective_mock_mode()) {
            case MockMode::fixtures: c.raw_text = fixture_for(req, key); break;
            case MockMode::echo_input: c.raw_text = wrap_dict_literal(req.target_text); break;
            case MockMode::degrade: c.raw_text = degrade_response(fixture_for(req, key)); break;
        }
        return c;
    }

    static bool retryable(int status) { return status == 0 || status == 429 || status >= 500; }

    Completion fetch_http(const ChatRequest& req) {
        const std::string model = req.model_id.empty() ? backend_.model_id : req.model_id;
        nlohmann::json body{{"model", model},
                            {"messages",
                             {{{"role", "system"}, {"content", req.system_message}},
                              {{"role", "user"}, {"content", req.user_message}}}}};
        for (const auto& [k, v] : req.decode_params) body[k] = v;

        HttpHeaders headers;
        if (backend_.auth_token_env) {
            if (const char* tok = std::getenv(backend_.auth_token_env->c_str()); tok && *tok)
                headers.emplace_back("Authorization", std::string("Bearer ") + tok);
        }
        std::string url = *backend_.endpoint_url;
        if (!url.ends_with("/chat/completions")) url = join_url(url, "/v1/chat/completions");

        const std::string payload = body.dump();
        HttpResponse last;
        const int max_attempts = backend_.retries + 1;
        for (int attempt = 1; attempt <= max_attempts; ++attempt) {
            ++network_attempts_;
            last = transport_->post(url, payload, headers);
            if (last.status >= 200 && last.status < 300) return parse_completion(last.body, model);
            if (!retryable(last.status) || attempt == max_attempts) {
                throw BackendError("chat completion failed after " + std::to_string(attempt) + " attempt(s): " +
                                       (last.status ? "HTTP " + std::to_string(last.status) : last.error),
                                   last.status, attempt);
            }
            sleeper_(backend_.backoff_base * (1 << (attempt - 1)));
        }
        throw BackendError("unreachable", last.status, max_attempts);
    }

    static Completion parse_completion(const std::string& body, const std::string& model) {
        try {
            const auto j = nlohmann::json::parse(body);
            Completion c;
            const auto& content = j.at("choices").at(0).at("message").at("content");
            c.raw_text = content.is_null() ? std::string() : content.get<std::string>();
            c.model_id = j.value("model", model);
            return c;
        } catch (const nlohmann::json::exception& e) {
            throw BackendError(std::string("malformed chat completion response: ") + e.what(), 200, 1);
        }
    }

    Backend backend_;
    std::optional<ResponseCache> cache_;
    std::shared_ptr<Transport> transport_;
    Sleeper sleeper_;
    std::counting_semaphore<256> slots_;
    std::mutex mutex_;
    std::map<std::string, std::shared_future<Completion>> inflight_;
    std::atomic<std::size_t> backend_calls_{0};
    std::atomic<std::size_t> network_attempts_{0};
};

}  // namespace clears
