#include "dradapt/reranker.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <thread>
#include <unordered_set>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "dradapt/bm25.hpp"
#include "dradapt/error.hpp"

namespace dradapt::rerank {

double t5_relevance(T5LogitPair logits) {
    if (!std::isfinite(logits.z_true) || !std::isfinite(logits.z_false))
        throw Error("t5_relevance: non-finite logit");
    return 1.0 / (1.0 + std::exp(logits.z_false - logits.z_true));
}

std::string truncate_words(std::string_view text, std::size_t max_words) {
    std::size_t words = 0;
    std::size_t last_end = 0;
    std::size_t i = 0;
    while (i < text.size()) {
        while (i < text.size() && std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        if (i == text.size()) break;
        if (words == max_words) return std::string(text.substr(0, last_end));
        ++words;
        while (i < text.size() && !std::isspace(static_cast<unsigned char>(text[i]))) ++i;
        last_end = i;
    }
    return std::string(text);
}

std::string scoring_text(const corpus::Document& doc) { return truncate_words(doc.full_text()); }

double LexicalOverlapScorer::score(std::string_view query, std::string_view doc) {
    auto q = bm25::distinct_terms(bm25::tokenize(query));
    if (q.empty()) return 0.0;
    auto d = bm25::tokenize(doc);
    std::unordered_set<std::string_view> in_doc(d.begin(), d.end());
    std::size_t hit = 0;
    for (const auto& t : q) hit += in_doc.count(t);
    return static_cast<double>(hit) / static_cast<double>(q.size());
}

std::vector<double> LexicalOverlapScorer::score_pairs(std::span<const TextPair> pairs) const {
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(score(p.query, p.doc));
    return out;
}

std::vector<double> FunctionScorer::score_pairs(std::span<const TextPair> pairs) const {
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) out.push_back(fn_(p));
    return out;
}

RemoteScorer::RemoteScorer(RemoteOptions options) : opts_(std::move(options)) {
    if (opts_.endpoint.empty()) throw ConfigError("remote scorer needs an endpoint");
    if (opts_.batch_size == 0) throw ConfigError("remote scorer batch_size must be >= 1");
    if (opts_.max_retries < 0) throw ConfigError("remote scorer max_retries must be >= 0");
}

std::vector<double> RemoteScorer::score_pairs(std::span<const TextPair> pairs) const {
    std::vector<double> out;
    out.reserve(pairs.size());
    for (std::size_t start = 0; start < pairs.size(); start += opts_.batch_size) {
        auto n = std::min(opts_.batch_size, pairs.size() - start);
        auto part = post_batch(pairs.subspan(start, n));
        out.insert(out.end(), part.begin(), part.end());
    }
    return out;
}

std::vector<double> RemoteScorer::post_batch(std::span<const TextPair> batch) const {
    nlohmann::json body;
    auto& arr = body["pairs"] = nlohmann::json::array();
    for (const auto& p : batch)
        arr.push_back({{"query", p.query}, {"doc", truncate_words(p.doc)}});
    const auto payload = body.dump();

    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(opts_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(opts_.timeout - secs);
    auto backoff = opts_.backoff;
    std::string last_error;
    for (int attempt = 0; attempt <= opts_.max_retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(backoff);
            backoff *= 2;
        }
        httplib::Client client(opts_.endpoint);
        client.set_connection_timeout(secs.count(), usecs.count());
        client.set_read_timeout(secs.count(), usecs.count());
        client.set_write_timeout(secs.count(), usecs.count());
        ++requests_;
        auto res = client.Post("/score", payload, "application/json");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status) + ": " + res->body;
            continue;
        }
        if (res->status != 200)
            throw ProtocolError("scorer replied HTTP " + std::to_string(res->status) + ": " +
                                res->body);
        auto reply = nlohmann::json::parse(res->body, nullptr, false);
        if (reply.is_discarded() || !reply.is_object() || !reply.contains("scores") ||
            !reply["scores"].is_array())
            throw ProtocolError("scorer reply lacks a \"scores\" array");
        const auto& scores = reply["scores"];
        if (scores.size() != batch.size())
            throw ProtocolError("scorer returned " + std::to_string(scores.size()) +
                                " scores for " + std::to_string(batch.size()) + " pairs");
        std::vector<double> out;
        out.reserve(scores.size());
        for (const auto& s : scores) {
            if (!s.is_number()) throw ProtocolError("non-numeric score in reply");
            out.push_back(s.get<double>());
        }
        return out;
    }
    throw Error("scorer at " + opts_.endpoint + " failed after " +
                std::to_string(opts_.max_retries + 1) + " attempts: " + last_error);
}

ScorerPtr lexical_overlap_scorer() { return std::make_shared<LexicalOverlapScorer>(); }

ScorerPtr remote_scorer(RemoteOptions options) {
    return std::make_shared<RemoteScorer>(std::move(options));
}

bool remote_healthy(const std::string& endpoint, std::chrono::milliseconds timeout) {
    httplib::Client client(endpoint);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    auto res = client.Get("/health");
    return res && res->status == 200 && res->body == "ok";
}

corpus::RunList rerank_run(const corpus::RunList& run, const PairScorer& scorer,
                           const corpus::TextLookup& texts, std::size_t depth) {
    if (depth == 0) throw ConfigError("rerank depth must be >= 1");
    const auto n = std::min(depth, run.entries.size());
    const auto& query = texts.query(run.query_id).text;
    std::vector<TextPair> pairs;
    pairs.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        pairs.push_back({query, scoring_text(texts.doc(run.entries[i].doc_id))});
    auto scores = scorer.score_pairs(pairs);
    if (scores.size() != n)
        throw ProtocolError("scorer returned " + std::to_string(scores.size()) + " scores for " +
                            std::to_string(n) + " pairs");
    corpus::RunList out{run.query_id, {}};
    out.entries.reserve(n);
    for (std::size_t i = 0; i < n; ++i) out.entries.push_back({run.entries[i].doc_id, scores[i]});
    corpus::sort_run(out);
    return out;
}

}  // namespace dradapt::rerank
