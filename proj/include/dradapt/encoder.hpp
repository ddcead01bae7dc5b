#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dradapt/corpus.hpp"

namespace dradapt::encoder {

enum class Similarity : std::uint32_t { dot = 0, cosine = 1 };

std::string_view to_string(Similarity s);
Similarity similarity_from_string(std::string_view s);

inline constexpr std::size_t kMaxTokens = 350;

using Embedding = std::vector<double>;

/// Token multiset of a text as (bucket, count / n) pairs sorted by bucket.
/// The embedding of the text is Σ weight · row[bucket].
struct BucketBag {
    std::vector<std::pair<std::uint32_t, double>> weights;

    bool empty() const noexcept { return weights.empty(); }
};

/// Hashed bag-of-embeddings encoder shared by queries and documents.
///
/// Each token (bm25::tokenize, first 350 kept) maps to a row of a B×D table
/// via FNV-1a-64(token) XOR hash_seed mod B; a text's embedding is the mean of
/// its token rows. Immutable during inference; training needs exclusive access.
class EncoderState {
public:
    EncoderState(std::size_t buckets, std::size_t dim, std::uint64_t hash_seed = 0,
                 Similarity similarity = Similarity::dot);

    std::size_t buckets() const noexcept { return buckets_; }
    std::size_t dim() const noexcept { return dim_; }
    std::uint64_t hash_seed() const noexcept { return hash_seed_; }
    Similarity similarity() const noexcept { return similarity_; }

    std::span<double> row(std::size_t bucket) { return {table_.data() + bucket * dim_, dim_}; }
    std::span<const double> row(std::size_t bucket) const {
        return {table_.data() + bucket * dim_, dim_};
    }
    std::span<double> table() noexcept { return table_; }
    std::span<const double> table() const noexcept { return table_; }

    std::uint32_t bucket_of(std::string_view token) const noexcept;
    BucketBag bag(std::string_view text) const;

    Embedding encode(std::string_view text) const { return encode(bag(text)); }
    Embedding encode(const BucketBag& bag) const;

    /// Dot product or cosine per similarity(); cosine against a zero vector is 0.
    double score(std::span<const double> a, std::span<const double> b) const;

    bool operator==(const EncoderState&) const = default;

private:
    std::size_t buckets_;
    std::size_t dim_;
    std::uint64_t hash_seed_;
    Similarity similarity_;
    std::vector<double> table_;
};

struct InitOptions {
    std::size_t buckets = 32768;
    std::size_t dim = 64;
    std::uint64_t seed = 1;
    double scale = 0.1;
    std::uint64_t hash_seed = 0;
    Similarity similarity = Similarity::dot;
};

/// Entries i.i.d. uniform in [-scale, scale].
EncoderState init_state(const InitOptions& opts);

double dot(std::span<const double> a, std::span<const double> b);

double rsv(const EncoderState& state, std::string_view query, std::string_view doc);

/// Header {magic, version, B, D, hash_seed, similarity}, then the row-major
/// table as little-endian doubles.
void save_state(const EncoderState& state, const std::filesystem::path& path);
EncoderState load_state(const std::filesystem::path& path);

/// Document embeddings for exhaustive ranking.
std::vector<Embedding> encode_corpus(const EncoderState& state,
                                     std::span<const corpus::Document> docs);

/// Top `k` by score, doc_id ascending on ties.
corpus::RunList rank_embeddings(const EncoderState& state, const std::string& query_id,
                                std::span<const double> query_embedding,
                                std::span<const corpus::Document> docs,
                                std::span<const Embedding> doc_embeddings, std::size_t k);

corpus::RunList rank_with_encoder(const EncoderState& state, const corpus::Query& query,
                                  std::span<const corpus::Document> docs, std::size_t k);

}  // namespace dradapt::encoder
