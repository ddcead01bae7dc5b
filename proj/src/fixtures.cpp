#include "dradapt/fixtures.hpp"

#include <algorithm>
#include <cmath>

#include "dradapt/error.hpp"
#include "dradapt/rng.hpp"

namespace dradapt::fixtures {
namespace {

// Stream tags for independent generators derived from the collection seed.
constexpr std::uint64_t kVocabStream = 0x9e3779b97f4a7c15ULL;
constexpr std::uint64_t kShiftStream = 0xbf58476d1ce4e5b9ULL;
constexpr std::uint64_t kTargetContent = 0x94d049bb133111ebULL;
constexpr std::uint64_t kSourceContent = 0x2545f4914f6cdd1dULL;

std::string letters(std::size_t j) {
    std::string s;
    do {
        s.push_back(static_cast<char>('a' + j % 26));
        j /= 26;
    } while (j);
    return s;
}

std::string padded(char prefix, std::size_t i, int width) {
    auto num = std::to_string(i);
    if (num.size() < static_cast<std::size_t>(width)) num.insert(0, width - num.size(), '0');
    return prefix + num;
}

int digits(std::size_t n) {
    int d = 1;
    while (n >= 10) {
        n /= 10;
        ++d;
    }
    return d;
}

bool coin(Rng& rng, double p) { return rng.uniform01() < p; }

}  // namespace

void SyntheticSpec::validate() const {
    if (n_docs == 0 || n_queries == 0 || vocab_size == 0 || tokens_per_doc == 0 ||
        signature_size == 0)
        throw ConfigError("synthetic collection counts must be positive");
    if (relevant_per_query < 1) throw ConfigError("relevant_per_query must be >= 1");
    if (!(domain_shift >= 0.0 && domain_shift <= 1.0)) throw ConfigError("domain_shift must be in [0,1]");
    if (!(noise >= 0.0 && noise <= 1.0)) throw ConfigError("noise must be in [0,1]");
    if (n_docs < n_queries * relevant_per_query)
        throw ConfigError("n_docs must be >= n_queries * relevant_per_query");
    if (tokens_per_doc < 2 * signature_size)
        throw ConfigError("tokens_per_doc must be >= 2 * signature_size");
    if (vocab_size < n_queries * signature_size + tokens_per_doc)
        throw ConfigError("vocab_size too small: need at least n_queries * signature_size + "
                          "tokens_per_doc words");
}

SyntheticDomain gen_domain(const SyntheticSpec& spec, Domain domain) {
    spec.validate();
    const auto V = spec.vocab_size;
    const auto sig = spec.signature_size;

    // Word roles are shared by both domains.
    std::vector<std::size_t> roles(V);
    for (std::size_t i = 0; i < V; ++i) roles[i] = i;
    Rng(spec.seed ^ kVocabStream).shuffle(roles);
    const std::size_t n_sig_words = spec.n_queries * sig;
    auto signature_word = [&](std::size_t q, std::size_t s) { return roles[q * sig + s]; };
    const std::size_t n_background = V - n_sig_words;
    auto background_word = [&](Rng& rng) { return roles[n_sig_words + rng.uniform_index(n_background)]; };

    std::vector<char> shifted(V, 0);
    if (domain == Domain::target) {
        std::vector<std::size_t> order(V);
        for (std::size_t i = 0; i < V; ++i) order[i] = i;
        Rng(spec.seed ^ kShiftStream).shuffle(order);
        const auto n_shift = static_cast<std::size_t>(std::llround(spec.domain_shift * static_cast<double>(V)));
        for (std::size_t i = 0; i < n_shift; ++i) shifted[order[i]] = 1;
    }
    auto surface = [&](std::size_t w) { return (shifted[w] ? "v" : "w") + letters(w); };
    auto render = [&](const std::vector<std::size_t>& words) {
        std::string s;
        for (auto w : words) {
            if (!s.empty()) s.push_back(' ');
            s += surface(w);
        }
        return s;
    };

    Rng rng(spec.seed ^ (domain == Domain::target ? kTargetContent : kSourceContent));
    const double keep_sig = 1.0 - 0.5 * spec.noise;

    // Planted documents get random slots so doc ids carry no relevance signal.
    std::vector<std::size_t> slots(spec.n_docs);
    for (std::size_t i = 0; i < spec.n_docs; ++i) slots[i] = i;
    rng.shuffle(slots);

    SyntheticDomain out;
    std::vector<std::vector<std::size_t>> doc_words(spec.n_docs);
    const int dw = digits(spec.n_docs);
    const int qw = digits(spec.n_queries);

    auto fill_background = [&](std::vector<std::size_t>& words) {
        while (words.size() < spec.tokens_per_doc) words.push_back(background_word(rng));
        rng.shuffle(words);
    };

    std::size_t next_slot = 0;
    for (std::size_t q = 0; q < spec.n_queries; ++q) {
        const auto qid = padded('q', q, qw);
        for (std::size_t r = 0; r < spec.relevant_per_query; ++r) {
            const auto slot = slots[next_slot++];
            auto& words = doc_words[slot];
            std::size_t kept = 0;
            for (std::size_t s = 0; s < sig; ++s) {
                const bool keep = coin(rng, keep_sig) || (s + 1 == sig && kept == 0);
                if (!keep) continue;
                ++kept;
                const auto tf = 1 + rng.uniform_index(2);
                for (std::size_t c = 0; c < tf; ++c) words.push_back(signature_word(q, s));
            }
            fill_background(words);
            out.gold_qrels.push_back({qid, padded('d', slot, dw), 1});
        }
    }
    for (; next_slot < spec.n_docs; ++next_slot) {
        auto& words = doc_words[slots[next_slot]];
        if (coin(rng, spec.noise)) {
            const auto q = rng.uniform_index(spec.n_queries);
            const auto count = 1 + rng.uniform_index(sig - 1 ? sig - 1 : 1);
            std::vector<std::size_t> picks(sig);
            for (std::size_t s = 0; s < sig; ++s) picks[s] = s;
            rng.shuffle(picks);
            for (std::size_t c = 0; c < count; ++c) {
                const auto tf = 1 + rng.uniform_index(3);
                for (std::size_t t = 0; t < tf; ++t) words.push_back(signature_word(q, picks[c]));
            }
        }
        fill_background(words);
    }

    out.corpus.reserve(spec.n_docs);
    for (std::size_t d = 0; d < spec.n_docs; ++d)
        out.corpus.push_back({padded('d', d, dw), "", render(doc_words[d])});

    const auto extra = static_cast<std::size_t>(std::llround(spec.noise * static_cast<double>(sig)));
    out.queries.reserve(spec.n_queries);
    for (std::size_t q = 0; q < spec.n_queries; ++q) {
        std::vector<std::size_t> words;
        for (std::size_t s = 0; s < sig; ++s)
            if (coin(rng, keep_sig) || (s + 1 == sig && words.empty()))
                words.push_back(signature_word(q, s));
        for (std::size_t e = 0; e < extra; ++e) words.push_back(background_word(rng));
        rng.shuffle(words);
        out.queries.push_back({padded('q', q, qw), render(words)});
    }
    std::sort(out.gold_qrels.begin(), out.gold_qrels.end(), [](const auto& a, const auto& b) {
        return a.query_id != b.query_id ? a.query_id < b.query_id : a.doc_id < b.doc_id;
    });
    return out;
}

void write_domain(const SyntheticDomain& domain, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    corpus::write_corpus(domain.corpus, dir / "corpus.jsonl");
    corpus::write_queries(domain.queries, dir / "queries.jsonl");
    corpus::write_qrels(domain.gold_qrels, dir / "qrels.tsv");
}

OracleScorer::OracleScorer(std::span<const corpus::QrelEntry> gold_qrels,
                           std::span<const corpus::Query> queries,
                           std::span<const corpus::Document> docs) {
    for (const auto& q : queries) query_ids_[q.text].push_back(q.id);
    for (const auto& d : docs) doc_ids_[rerank::scoring_text(d)].push_back(d.id);
    for (const auto& e : gold_qrels)
        if (e.grade > 0) relevant_.insert(e.query_id + '\t' + e.doc_id);
}

std::vector<double> OracleScorer::score_pairs(std::span<const rerank::TextPair> pairs) const {
    std::vector<double> out;
    out.reserve(pairs.size());
    for (const auto& p : pairs) {
        double s = 0.0;
        auto qi = query_ids_.find(p.query);
        auto di = doc_ids_.find(p.doc);
        if (qi != query_ids_.end() && di != doc_ids_.end()) {
            for (const auto& q : qi->second)
                for (const auto& d : di->second)
                    if (relevant_.count(q + '\t' + d)) s = 1.0;
        }
        out.push_back(s);
    }
    return out;
}

rerank::ScorerPtr oracle_scorer(std::span<const corpus::QrelEntry> gold_qrels,
                                std::span<const corpus::Query> queries,
                                std::span<const corpus::Document> docs) {
    return std::make_shared<OracleScorer>(gold_qrels, queries, docs);
}

}  // namespace dradapt::fixtures
