#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dradapt/corpus.hpp"

namespace dradapt::bm25 {

/// Lowercases ASCII and splits on every byte that is not an ASCII letter or
/// digit. Bytes >= 0x80 are kept as word characters so UTF-8 words survive
/// intact. No stemming, no stopwords.
std::vector<std::string> tokenize(std::string_view text);

/// Distinct tokens in order of first appearance.
std::vector<std::string> distinct_terms(std::span<const std::string> tokens);

struct Params {
    double k1 = 0.9;
    double b = 0.4;

    bool operator==(const Params&) const = default;
};

struct Posting {
    std::uint32_t doc;  // ordinal
    std::uint32_t tf;

    bool operator==(const Posting&) const = default;
};

/// Immutable after build; all const members are safe to call concurrently.
class InvertedIndex {
public:
    /// Throws ConfigError on bad params, Error on an empty corpus.
    static InvertedIndex build(std::span<const corpus::Document> docs, Params params = {});

    std::size_t doc_count() const noexcept { return doc_ids_.size(); }
    const Params& params() const noexcept { return params_; }
    double avg_doc_length() const noexcept { return avg_doc_length_; }
    std::uint32_t doc_length(std::size_t ordinal) const { return doc_lengths_.at(ordinal); }
    const std::string& doc_id(std::size_t ordinal) const { return doc_ids_.at(ordinal); }
    std::size_t term_count() const noexcept { return postings_.size(); }

    /// Empty span for unseen terms.
    std::span<const Posting> postings(std::string_view term) const;
    std::size_t doc_frequency(std::string_view term) const { return postings(term).size(); }
    std::uint32_t term_frequency(std::string_view term, std::size_t ordinal) const;

    /// ln(1 + (N - df + 0.5) / (df + 0.5)); df = 0 for unseen terms.
    double idf(std::string_view term) const;

    /// Sum over the distinct query terms present in the document.
    double score(std::span<const std::string> query_tokens, std::size_t ordinal) const;
    double score(const corpus::Query& query, std::size_t ordinal) const;

    /// Top `k` documents with score > 0, (score desc, doc_id asc).
    corpus::RunList retrieve(const corpus::Query& query, std::size_t k) const;

    /// All documents' scores, indexed by ordinal.
    std::vector<double> score_all(std::span<const std::string> query_tokens) const;

    void save(const std::filesystem::path& path) const;
    static InvertedIndex load(const std::filesystem::path& path);

    bool operator==(const InvertedIndex&) const = default;

private:
    double term_weight(double idf, std::uint32_t tf, std::uint32_t doc_len) const;

    Params params_;
    std::vector<std::string> doc_ids_;
    std::vector<std::uint32_t> doc_lengths_;
    double avg_doc_length_ = 0.0;
    std::unordered_map<std::string, std::vector<Posting>> postings_;
};

}  // namespace dradapt::bm25
