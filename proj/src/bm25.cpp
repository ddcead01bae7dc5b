#include "dradapt/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <unordered_set>

#include "dradapt/binary_io.hpp"
#include "dradapt/error.hpp"

namespace dradapt::bm25 {
namespace {

constexpr char kMagic[8] = {'D', 'R', 'B', 'M', '2', '5', 'I', 'X'};
constexpr std::uint32_t kVersion = 1;

bool is_word_byte(unsigned char c) {
    return (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c >= 0x80;
}

unsigned char ascii_lower(unsigned char c) {
    return (c >= 'A' && c <= 'Z') ? static_cast<unsigned char>(c - 'A' + 'a') : c;
}

}  // namespace

std::vector<std::string> tokenize(std::string_view text) {
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char raw : text) {
        unsigned char c = ascii_lower(raw);
        if (is_word_byte(c)) {
            cur.push_back(static_cast<char>(c));
        } else if (!cur.empty()) {
            out.push_back(std::move(cur));
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(std::move(cur));
    return out;
}

std::vector<std::string> distinct_terms(std::span<const std::string> tokens) {
    std::vector<std::string> out;
    std::unordered_set<std::string_view> seen;
    for (const auto& t : tokens)
        if (seen.insert(t).second) out.push_back(t);
    return out;
}

InvertedIndex InvertedIndex::build(std::span<const corpus::Document> docs, Params params) {
    if (!(params.k1 > 0.0) || !(params.b >= 0.0 && params.b <= 1.0))
        throw ConfigError("bm25 requires k1 > 0 and 0 <= b <= 1");
    if (docs.empty()) throw Error("cannot index an empty corpus");

    InvertedIndex idx;
    idx.params_ = params;
    idx.doc_ids_.reserve(docs.size());
    idx.doc_lengths_.reserve(docs.size());
    std::uint64_t total = 0;
    std::unordered_map<std::string, std::uint32_t> tf;
    for (std::size_t i = 0; i < docs.size(); ++i) {
        auto tokens = tokenize(docs[i].full_text());
        tf.clear();
        for (auto& t : tokens) ++tf[t];
        for (auto& [term, count] : tf)
            idx.postings_[term].push_back(Posting{static_cast<std::uint32_t>(i), count});
        idx.doc_ids_.push_back(docs[i].id);
        idx.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
        total += tokens.size();
    }
    idx.avg_doc_length_ = static_cast<double>(total) / static_cast<double>(docs.size());
    return idx;
}

std::span<const Posting> InvertedIndex::postings(std::string_view term) const {
    auto it = postings_.find(std::string(term));
    if (it == postings_.end()) return {};
    return it->second;
}

std::uint32_t InvertedIndex::term_frequency(std::string_view term, std::size_t ordinal) const {
    auto list = postings(term);
    auto it = std::lower_bound(list.begin(), list.end(), ordinal,
                               [](const Posting& p, std::size_t d) { return p.doc < d; });
    return (it != list.end() && it->doc == ordinal) ? it->tf : 0;
}

double InvertedIndex::idf(std::string_view term) const {
    const double n = static_cast<double>(doc_count());
    const double df = static_cast<double>(doc_frequency(term));
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double InvertedIndex::term_weight(double idf, std::uint32_t tf, std::uint32_t doc_len) const {
    const double f = tf;
    const double norm = 1.0 - params_.b + params_.b * (doc_len / avg_doc_length_);
    return idf * f / (params_.k1 * norm + f);
}

double InvertedIndex::score(std::span<const std::string> query_tokens, std::size_t ordinal) const {
    const auto len = doc_lengths_.at(ordinal);
    double s = 0.0;
    for (const auto& term : distinct_terms(query_tokens)) {
        auto tf = term_frequency(term, ordinal);
        if (tf > 0) s += term_weight(idf(term), tf, len);
    }
    return s;
}

double InvertedIndex::score(const corpus::Query& query, std::size_t ordinal) const {
    return score(tokenize(query.text), ordinal);
}

std::vector<double> InvertedIndex::score_all(std::span<const std::string> query_tokens) const {
    // Term-at-a-time, same term order and arithmetic as score(), so the two
    // agree bit for bit.
    std::vector<double> acc(doc_count(), 0.0);
    for (const auto& term : distinct_terms(query_tokens)) {
        auto list = postings(term);
        if (list.empty()) continue;
        const double w = idf(term);
        for (const auto& p : list) acc[p.doc] += term_weight(w, p.tf, doc_lengths_[p.doc]);
    }
    return acc;
}

corpus::RunList InvertedIndex::retrieve(const corpus::Query& query, std::size_t k) const {
    if (k == 0) throw ConfigError("retrieve depth must be >= 1");
    auto acc = score_all(tokenize(query.text));
    std::vector<std::uint32_t> hits;
    for (std::size_t d = 0; d < acc.size(); ++d)
        if (acc[d] > 0.0) hits.push_back(static_cast<std::uint32_t>(d));
    auto better = [&](std::uint32_t a, std::uint32_t b) {
        if (acc[a] != acc[b]) return acc[a] > acc[b];
        return doc_ids_[a] < doc_ids_[b];
    };
    const auto take = std::min(k, hits.size());
    std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(take), hits.end(),
                      better);
    corpus::RunList run{query.id, {}};
    run.entries.reserve(take);
    for (std::size_t i = 0; i < take; ++i) run.entries.push_back({doc_ids_[hits[i]], acc[hits[i]]});
    return run;
}

void InvertedIndex::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(kMagic, sizeof kMagic);
    binio::put_u32(out, kVersion);
    binio::put_f64(out, params_.k1);
    binio::put_f64(out, params_.b);
    binio::put_u64(out, doc_ids_.size());
    for (std::size_t i = 0; i < doc_ids_.size(); ++i) {
        binio::put_string(out, doc_ids_[i]);
        binio::put_u32(out, doc_lengths_[i]);
    }
    std::vector<const std::string*> terms;
    terms.reserve(postings_.size());
    for (const auto& [term, list] : postings_) terms.push_back(&term);
    std::sort(terms.begin(), terms.end(), [](auto* a, auto* b) { return *a < *b; });
    binio::put_u64(out, terms.size());
    for (const auto* term : terms) {
        const auto& list = postings_.at(*term);
        binio::put_string(out, *term);
        binio::put_u64(out, list.size());
        for (const auto& p : list) {
            binio::put_u32(out, p.doc);
            binio::put_u32(out, p.tf);
        }
    }
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

InvertedIndex InvertedIndex::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    binio::Reader r(in, path.string());
    char magic[8];
    r.bytes(magic, sizeof magic);
    if (!std::equal(magic, magic + 8, kMagic)) throw Error(path.string() + ": not a bm25 index");
    if (auto v = r.u32(); v != kVersion)
        throw Error(path.string() + ": unsupported index version " + std::to_string(v));

    InvertedIndex idx;
    idx.params_.k1 = r.f64();
    idx.params_.b = r.f64();
    const auto n = r.u64();
    std::uint64_t total = 0;
    for (std::uint64_t i = 0; i < n; ++i) {
        idx.doc_ids_.push_back(r.string());
        idx.doc_lengths_.push_back(r.u32());
        total += idx.doc_lengths_.back();
    }
    if (n == 0) throw Error(path.string() + ": empty index");
    idx.avg_doc_length_ = static_cast<double>(total) / static_cast<double>(n);
    const auto nterms = r.u64();
    for (std::uint64_t t = 0; t < nterms; ++t) {
        auto term = r.string();
        auto count = r.u64();
        if (count > n) throw Error(path.string() + ": corrupt posting list");
        std::vector<Posting> list(count);
        for (auto& p : list) {
            p.doc = r.u32();
            p.tf = r.u32();
            if (p.doc >= n) throw Error(path.string() + ": posting out of range");
        }
        idx.postings_.emplace(std::move(term), std::move(list));
    }
    r.expect_end();
    return idx;
}

}  // namespace dradapt::bm25
