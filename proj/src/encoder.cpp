#include "dradapt/encoder.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>

#include "dradapt/binary_io.hpp"
#include "dradapt/bm25.hpp"
#include "dradapt/error.hpp"
#include "dradapt/hash.hpp"
#include "dradapt/rng.hpp"

namespace dradapt::encoder {
namespace {

constexpr char kMagic[8] = {'D', 'R', 'E', 'N', 'C', 'O', 'D', 'R'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

std::string_view to_string(Similarity s) { return s == Similarity::dot ? "dot" : "cosine"; }

Similarity similarity_from_string(std::string_view s) {
    if (s == "dot") return Similarity::dot;
    if (s == "cosine") return Similarity::cosine;
    throw ConfigError("unknown similarity '" + std::string(s) + "'");
}

EncoderState::EncoderState(std::size_t buckets, std::size_t dim, std::uint64_t hash_seed,
                           Similarity similarity)
    : buckets_(buckets), dim_(dim), hash_seed_(hash_seed), similarity_(similarity) {
    if (buckets == 0 || dim == 0) throw ConfigError("encoder needs buckets >= 1 and dim >= 1");
    table_.assign(buckets * dim, 0.0);
}

std::uint32_t EncoderState::bucket_of(std::string_view token) const noexcept {
    return static_cast<std::uint32_t>((fnv1a64(token) ^ hash_seed_) % buckets_);
}

BucketBag EncoderState::bag(std::string_view text) const {
    auto tokens = bm25::tokenize(text);
    if (tokens.size() > kMaxTokens) tokens.resize(kMaxTokens);
    BucketBag out;
    if (tokens.empty()) return out;
    std::map<std::uint32_t, std::size_t> counts;
    for (const auto& t : tokens) ++counts[bucket_of(t)];
    const double n = static_cast<double>(tokens.size());
    out.weights.reserve(counts.size());
    for (auto [b, c] : counts) out.weights.emplace_back(b, static_cast<double>(c) / n);
    return out;
}

Embedding EncoderState::encode(const BucketBag& bag) const {
    Embedding e(dim_, 0.0);
    for (auto [b, w] : bag.weights) {
        auto r = row(b);
        for (std::size_t j = 0; j < dim_; ++j) e[j] += w * r[j];
    }
    return e;
}

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double EncoderState::score(std::span<const double> a, std::span<const double> b) const {
    const double d = dot(a, b);
    if (similarity_ == Similarity::dot) return d;
    const double na = std::sqrt(dot(a, a));
    const double nb = std::sqrt(dot(b, b));
    if (na == 0.0 || nb == 0.0) return 0.0;
    return d / (na * nb);
}

EncoderState init_state(const InitOptions& opts) {
    if (!(opts.scale >= 0.0) || !std::isfinite(opts.scale))
        throw ConfigError("encoder init scale must be finite and >= 0");
    EncoderState s(opts.buckets, opts.dim, opts.hash_seed, opts.similarity);
    Rng rng(opts.seed);
    for (auto& x : s.table()) x = opts.scale * (2.0 * rng.uniform01() - 1.0);
    return s;
}

double rsv(const EncoderState& state, std::string_view query, std::string_view doc) {
    return state.score(state.encode(query), state.encode(doc));
}

void save_state(const EncoderState& state, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(kMagic, sizeof kMagic);
    binio::put_u32(out, kVersion);
    binio::put_u64(out, state.buckets());
    binio::put_u64(out, state.dim());
    binio::put_u64(out, state.hash_seed());
    binio::put_u32(out, static_cast<std::uint32_t>(state.similarity()));
    for (double x : state.table()) binio::put_f64(out, x);
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

EncoderState load_state(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const auto name = path.string();
    binio::Reader r(in, name);
    char magic[8];
    r.bytes(magic, sizeof magic);
    if (!std::equal(magic, magic + 8, kMagic)) throw Error(name + ": not an encoder state file");
    if (auto v = r.u32(); v != kVersion)
        throw Error(name + ": unsupported encoder state version " + std::to_string(v));
    const auto buckets = r.u64();
    const auto dim = r.u64();
    const auto hash_seed = r.u64();
    const auto sim = r.u32();
    if (sim > 1) throw Error(name + ": unknown similarity code");
    if (buckets == 0 || dim == 0 || buckets > (1ULL << 32) || dim > (1ULL << 20))
        throw Error(name + ": implausible shape");
    EncoderState s(buckets, dim, hash_seed, static_cast<Similarity>(sim));
    for (auto& x : s.table()) {
        x = r.f64();
        if (!std::isfinite(x)) throw Error(name + ": non-finite parameter");
    }
    r.expect_end();
    return s;
}

std::vector<Embedding> encode_corpus(const EncoderState& state,
                                     std::span<const corpus::Document> docs) {
    std::vector<Embedding> out;
    out.reserve(docs.size());
    for (const auto& d : docs) out.push_back(state.encode(d.full_text()));
    return out;
}

corpus::RunList rank_embeddings(const EncoderState& state, const std::string& query_id,
                                std::span<const double> query_embedding,
                                std::span<const corpus::Document> docs,
                                std::span<const Embedding> doc_embeddings, std::size_t k) {
    if (k == 0) throw ConfigError("rank depth must be >= 1");
    std::vector<std::pair<double, std::size_t>> scored;
    scored.reserve(docs.size());
    for (std::size_t i = 0; i < docs.size(); ++i)
        scored.emplace_back(state.score(query_embedding, doc_embeddings[i]), i);
    const auto take = std::min(k, scored.size());
    std::partial_sort(scored.begin(), scored.begin() + static_cast<std::ptrdiff_t>(take),
                      scored.end(), [&](const auto& a, const auto& b) {
                          if (a.first != b.first) return a.first > b.first;
                          return docs[a.second].id < docs[b.second].id;
                      });
    corpus::RunList run{query_id, {}};
    run.entries.reserve(take);
    for (std::size_t i = 0; i < take; ++i)
        run.entries.push_back({docs[scored[i].second].id, scored[i].first});
    return run;
}

corpus::RunList rank_with_encoder(const EncoderState& state, const corpus::Query& query,
                                  std::span<const corpus::Document> docs, std::size_t k) {
    auto embs = encode_corpus(state, docs);
    auto q = state.encode(query.text);
    return rank_embeddings(state, query.id, q, docs, embs, k);
}

}  // namespace dradapt::encoder
