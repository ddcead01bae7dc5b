#pragma once

#include <atomic>
#include <chrono>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dradapt/corpus.hpp"

namespace dradapt::rerank {

struct TextPair {
    std::string query;
    std::string doc;
};

/// Cross-encoder style scorer over (query, doc) text pairs. Implementations
/// are deterministic, length-preserving and callable from several threads.
class PairScorer {
public:
    virtual ~PairScorer() = default;
    virtual std::vector<double> score_pairs(std::span<const TextPair> pairs) const = 0;
};

using ScorerPtr = std::shared_ptr<const PairScorer>;

struct T5LogitPair {
    double z_true = 0.0;
    double z_false = 0.0;
};

/// Probability of the "true" token, 1 / (1 + e^(z_false - z_true)).
/// Throws Error on non-finite logits.
double t5_relevance(T5LogitPair logits);

inline constexpr std::size_t kMaxDocWords = 350;

/// First `max_words` whitespace-separated words; text with fewer words is
/// returned unchanged.
std::string truncate_words(std::string_view text, std::size_t max_words = kMaxDocWords);

/// The document string handed to any scorer.
std::string scoring_text(const corpus::Document& doc);

/// |distinct(q) ∩ distinct(d)| / |distinct(q)|, 0 for an empty query.
class LexicalOverlapScorer final : public PairScorer {
public:
    static double score(std::string_view query, std::string_view doc);
    std::vector<double> score_pairs(std::span<const TextPair> pairs) const override;
};

class ConstantScorer final : public PairScorer {
public:
    explicit ConstantScorer(double value) : value_(value) {}
    std::vector<double> score_pairs(std::span<const TextPair> pairs) const override {
        return std::vector<double>(pairs.size(), value_);
    }

private:
    double value_;
};

/// Adapts a per-pair callable.
class FunctionScorer final : public PairScorer {
public:
    using Fn = std::function<double(const TextPair&)>;
    explicit FunctionScorer(Fn fn) : fn_(std::move(fn)) {}
    std::vector<double> score_pairs(std::span<const TextPair> pairs) const override;

private:
    Fn fn_;
};

struct RemoteOptions {
    std::string endpoint;  // e.g. "http://127.0.0.1:8080"
    std::size_t batch_size = 32;
    std::chrono::milliseconds timeout{30000};
    int max_retries = 3;
    std::chrono::milliseconds backoff{200};  // doubled after every failed attempt
};

/// HTTP client for the scoring service: POST /score with
/// {"pairs":[{"query":..,"doc":..}]} answered by {"scores":[..]}.
/// Requests carry at most `batch_size` pairs; responses are concatenated in
/// input order. Transport failures and 5xx replies are retried; a reply of
/// the wrong shape or length throws ProtocolError.
class RemoteScorer final : public PairScorer {
public:
    explicit RemoteScorer(RemoteOptions options);
    std::vector<double> score_pairs(std::span<const TextPair> pairs) const override;

    /// Number of POST /score requests issued so far.
    std::size_t requests_sent() const noexcept { return requests_.load(); }

private:
    std::vector<double> post_batch(std::span<const TextPair> batch) const;

    RemoteOptions opts_;
    mutable std::atomic<std::size_t> requests_{0};
};

ScorerPtr lexical_overlap_scorer();
ScorerPtr remote_scorer(RemoteOptions options);

/// GET /health answered with 200 "ok".
bool remote_healthy(const std::string& endpoint, std::chrono::milliseconds timeout = std::chrono::milliseconds{2000});

/// Rescores the top `depth` entries of `run` and re-sorts them (score desc,
/// doc_id asc). Entries below `depth` are dropped.
corpus::RunList rerank_run(const corpus::RunList& run, const PairScorer& scorer,
                           const corpus::TextLookup& texts, std::size_t depth = 100);

}  // namespace dradapt::rerank
