#pragma once

// Embedding client boundary. The builtin stub hashes character n-grams into a
// fixed 256-dim space; HttpEmbedder speaks the POST /embed, GET /healthz wire format.

#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "clears/error.hpp"
#include "clears/http.hpp"
#include "clears/metrics.hpp"
#include "clears/text.hpp"

namespace clears {

struct TokenEmbeddings {
    std::vector<std::string> tokens;
    std::vector<EmbeddingVector> vectors;
};

class Embedder {
public:
    virtual ~Embedder() = default;
    virtual std::string model_id(Granularity g) const = 0;
    virtual std::vector<EmbeddingVector> embed_sentences(const std::vector<std::string>& texts) = 0;
    virtual std::vector<TokenEmbeddings> embed_tokens(const std::vector<std::string>& texts) = 0;
};

inline Granularity parse_granularity(std::string_view s) {
    if (s == "sentence") return Granularity::sentence;
    if (s == "token") return Granularity::token;
    throw Error("unknown granularity '" + std::string(s) + "'");
}

// ---------------------------------------------------------------- stub

class StubEmbedder final : public Embedder {
public:
    static constexpr std::size_t kDim = 256;
    static constexpr const char* kModelId = "stub-char-ngram-256";

    std::string model_id(Granularity) const override { return kModelId; }

    /// Tokens as the stub sees them: lowercased word runs, or the trimmed text
    /// itself when it holds no word characters.
    static std::vector<std::string> tokenize(std::string_view s) {
        if (text::trim(s).empty()) throw Error("cannot embed empty text");
        auto toks = text::normalized_tokens(s);
        if (toks.empty()) toks.push_back(text::to_lower(text::nfc(text::trim(s))));
        return toks;
    }

    EmbeddingVector embed_sentence(std::string_view s) const {
        std::vector<double> v(kDim, 0.0);
        for (const auto& t : tokenize(s)) add_token_features(v, t);
        return EmbeddingVector::normalized(std::move(v), Granularity::sentence);
    }

    TokenEmbeddings embed_token_list(std::string_view s) const {
        TokenEmbeddings out;
        out.tokens = tokenize(s);
        for (const auto& t : out.tokens) {
            std::vector<double> v(kDim, 0.0);
            add_token_features(v, t);
            out.vectors.push_back(EmbeddingVector::normalized(std::move(v), Granularity::token));
        }
        return out;
    }

    std::vector<EmbeddingVector> embed_sentences(const std::vector<std::string>& texts) override {
        std::vector<EmbeddingVector> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(embed_sentence(t));
        return out;
    }

    std::vector<TokenEmbeddings> embed_tokens(const std::vector<std::string>& texts) override {
        std::vector<TokenEmbeddings> out;
        out.reserve(texts.size());
        for (const auto& t : texts) out.push_back(embed_token_list(t));
        return out;
    }

private:
    // Whole-token feature plus character 2..4-grams of "<token>". Counts are
    // non-negative so the sum is never the zero vector.
    static void add_token_features(std::vector<double>& v, const std::string& tok) {
        v[text::fnv1a64("w:" + tok) % kDim] += 1.0;
        auto cps = text::codepoints(tok);
        cps.insert(cps.begin(), U'<');
        cps.push_back(U'>');
        for (std::size_t n = 2; n <= 4; ++n) {
            for (std::size_t i = 0; i + n <= cps.size(); ++i) {
                std::string gram = std::to_string(n) + ":";
                for (std::size_t k = i; k < i + n; ++k) text::append_utf8(gram, cps[k]);
                v[text::fnv1a64(gram) % kDim] += 1.0;
            }
        }
    }
};

// ---------------------------------------------------------------- wire format

/// {"texts": [...], "granularity": "sentence"|"token", "model_hint": "..."?}
inline nlohmann::json make_embed_request(const std::vector<std::string>& texts, Granularity g,
                                         const std::optional<std::string>& model_hint = std::nullopt) {
    if (texts.empty()) throw Error("embed request needs at least one text");
    for (std::size_t i = 0; i < texts.size(); ++i)
        if (texts[i].empty()) throw Error("embed request text " + std::to_string(i) + " is empty");
    nlohmann::json j{{"texts", texts}, {"granularity", to_string(g)}};
    if (model_hint) j["model_hint"] = *model_hint;
    return j;
}

namespace detail {

inline std::vector<double> vector_from_json(const nlohmann::json& j) { return j.get<std::vector<double>>(); }

}  // namespace detail

struct EmbedResponse {
    std::string model_id;
    std::size_t dim = 0;
    std::vector<EmbeddingVector> sentences;  // granularity sentence
    std::vector<TokenEmbeddings> tokens;     // granularity token
};

/// Validates a /embed response body: item count, uniform dim, unit norm (1e-6).
inline EmbedResponse parse_embed_response(const std::string& body, Granularity g, std::size_t expected_count) {
    EmbedResponse r;
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(body);
        r.model_id = j.at("model_id").get<std::string>();
        r.dim = j.at("dim").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed embed response: ") + e.what());
    }
    const auto& results = j.contains("results") ? j["results"] : nlohmann::json();
    if (!results.is_array() || results.size() != expected_count)
        throw DataError("embed response holds " + std::to_string(results.is_array() ? results.size() : 0) +
                        " results for " + std::to_string(expected_count) + " texts");

    auto check_dim = [&](const EmbeddingVector& v, std::size_t i) {
        if (v.dim() != r.dim)
            throw DataError("embed result " + std::to_string(i) + " has dim " + std::to_string(v.dim()) + ", expected " +
                            std::to_string(r.dim));
    };
    for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& item = results[i];
        if (item.contains("error"))
            throw DataError("embed result " + std::to_string(i) + ": " + item["error"].get<std::string>());
        try {
            if (g == Granularity::sentence) {
                auto v = EmbeddingVector::unit(detail::vector_from_json(item.at("vector")), g);
                check_dim(v, i);
                r.sentences.push_back(std::move(v));
            } else {
                TokenEmbeddings te;
                te.tokens = item.at("tokens").get<std::vector<std::string>>();
                const auto& vecs = item.at("vectors");
                if (vecs.size() != te.tokens.size())
                    throw DataError("embed result " + std::to_string(i) + ": token/vector count mismatch");
                for (const auto& vj : vecs) {
                    auto v = EmbeddingVector::unit(detail::vector_from_json(vj), g);
                    check_dim(v, i);
                    te.vectors.push_back(std::move(v));
                }
                r.tokens.push_back(std::move(te));
            }
        } catch (const nlohmann::json::exception& e) {
            throw DataError("embed result " + std::to_string(i) + ": " + e.what());
        }
    }
    return r;
}

struct ServiceReply {
    int status = 200;
    nlohmann::json body;
};

/// The /embed contract served from the stub. Empty texts get per-item error
/// entries; a request that is malformed or has no valid text is rejected with 422.
inline ServiceReply serve_stub_embed(const nlohmann::json& request) {
    const StubEmbedder stub;
    Granularity g;
    std::vector<std::string> texts;
    try {
        texts = request.at("texts").get<std::vector<std::string>>();
        g = parse_granularity(request.at("granularity").get<std::string>());
    } catch (const std::exception& e) {
        return {422, {{"error", std::string("invalid request: ") + e.what()}}};
    }
    if (texts.empty()) return {422, {{"error", "texts must be non-empty"}}};

    nlohmann::json results = nlohmann::json::array();
    std::size_t valid = 0;
    for (const auto& t : texts) {
        if (text::trim(t).empty()) {
            results.push_back({{"error", "empty text"}});
            continue;
        }
        ++valid;
        if (g == Granularity::sentence) {
            results.push_back({{"vector", stub.embed_sentence(t).values()}});
        } else {
            const auto te = stub.embed_token_list(t);
            nlohmann::json vecs = nlohmann::json::array();
            for (const auto& v : te.vectors) vecs.push_back(v.values());
            results.push_back({{"tokens", te.tokens}, {"vectors", vecs}});
        }
    }
    if (valid == 0) return {422, {{"error", "no valid texts"}, {"results", results}}};
    return {200,
            {{"model_id", StubEmbedder::kModelId}, {"dim", StubEmbedder::kDim}, {"granularity", to_string(g)},
             {"results", results}}};
}

struct ModelInfo {
    std::string id;
    std::size_t dim = 0;
};

struct HealthStatus {
    std::string status;  // ok | starting | degraded
    std::map<std::string, ModelInfo> models;
};

/// {"status": ..., "models": {"sentence": {"id", "dim"}, "token": {"id", "dim"}}}
inline nlohmann::json stub_healthz() {
    const nlohmann::json m{{"id", StubEmbedder::kModelId}, {"dim", StubEmbedder::kDim}};
    return {{"status", "ok"}, {"models", {{"sentence", m}, {"token", m}}}};
}

inline HealthStatus parse_healthz(const std::string& body) {
    try {
        const auto j = nlohmann::json::parse(body);
        HealthStatus h;
        h.status = j.at("status").get<std::string>();
        if (h.status != "ok" && h.status != "starting" && h.status != "degraded")
            throw DataError("unknown health status '" + h.status + "'");
        if (j.contains("models"))
            for (const auto& [name, m] : j["models"].items())
                h.models[name] = {m.at("id").get<std::string>(), m.value("dim", std::size_t{0})};
        return h;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(std::string("malformed healthz response: ") + e.what());
    }
}

// ---------------------------------------------------------------- HTTP client

class HttpEmbedder final : public Embedder {
public:
    HttpEmbedder(std::string base_url, std::shared_ptr<Transport> transport = nullptr, std::size_t batch_size = 32,
                 std::optional<std::string> model_hint = std::nullopt)
        : base_url_(std::move(base_url)),
          transport_(transport ? std::move(transport) : std::make_shared<HttplibTransport>()),
          batch_size_(std::max<std::size_t>(1, batch_size)),
          model_hint_(std::move(model_hint)) {}

    HealthStatus healthz() {
        const auto res = transport_->get(join_url(base_url_, "/healthz"), {});
        if (res.status != 200)
            throw BackendError("embedder healthz failed: " + (res.status ? "HTTP " + std::to_string(res.status) : res.error),
                               res.status, 1);
        auto h = parse_healthz(res.body);
        for (const auto& [name, m] : h.models) model_ids_[name] = m.id;
        return h;
    }

    std::string model_id(Granularity g) const override {
        const auto it = model_ids_.find(to_string(g));
        return it == model_ids_.end() ? "http:" + base_url_ : it->second;
    }

    std::vector<EmbeddingVector> embed_sentences(const std::vector<std::string>& texts) override {
        std::vector<EmbeddingVector> out;
        for_batches(texts, Granularity::sentence, [&](EmbedResponse&& r) {
            for (auto& v : r.sentences) out.push_back(std::move(v));
        });
        return out;
    }

    std::vector<TokenEmbeddings> embed_tokens(const std::vector<std::string>& texts) override {
        std::vector<TokenEmbeddings> out;
        for_batches(texts, Granularity::token, [&](EmbedResponse&& r) {
            for (auto& t : r.tokens) out.push_back(std::move(t));
        });
        return out;
    }

private:
    template <typename Sink>
    void for_batches(const std::vector<std::string>& texts, Granularity g, Sink&& sink) {
        for (std::size_t start = 0; start < texts.size(); start += batch_size_) {
            const std::vector<std::string> batch(texts.begin() + static_cast<std::ptrdiff_t>(start),
                                                 texts.begin() + static_cast<std::ptrdiff_t>(std::min(texts.size(), start + batch_size_)));
            const auto res = transport_->post(join_url(base_url_, "/embed"), make_embed_request(batch, g, model_hint_).dump(),
                                              {});
            if (res.status != 200)
                throw BackendError("embed request failed: " + (res.status ? "HTTP " + std::to_string(res.status) : res.error),
                                   res.status, 1);
            auto r = parse_embed_response(res.body, g, batch.size());
            if (dim_ && *dim_ != r.dim) throw DataError("embedder changed dim between batches");
            dim_ = r.dim;
            model_ids_[to_string(g)] = r.model_id;
            sink(std::move(r));
        }
    }

    std::string base_url_;
    std::shared_ptr<Transport> transport_;
    std::size_t batch_size_;
    std::optional<std::string> model_hint_;
    std::map<std::string, std::string> model_ids_;
    std::optional<std::size_t> dim_;
};

}  // namespace clears
