#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "dradapt/corpus.hpp"
#include "dradapt/reranker.hpp"

namespace dradapt::fixtures {

/// Parameters of a synthetic collection with planted relevance.
///
/// Every query owns a disjoint "signature" of `signature_size` words; its
/// `relevant_per_query` planted documents contain that signature among
/// background filler. `noise` weakens the lexical signal: planted documents
/// and queries lose signature words, queries gain background words, and a
/// `noise` fraction of the remaining documents become topical distractors
/// carrying part of some query's signature. `domain_shift` is the fraction
/// of the vocabulary whose surface forms differ between the source and the
/// target domain.
struct SyntheticSpec {
    std::size_t n_docs = 2000;
    std::size_t n_queries = 220;
    std::size_t vocab_size = 3000;
    std::size_t tokens_per_doc = 30;
    std::size_t relevant_per_query = 3;
    std::size_t signature_size = 4;
    double domain_shift = 0.8;
    double noise = 0.2;
    std::uint64_t seed = 7;

    /// Throws ConfigError for empty counts, out-of-range fractions, or a
    /// vocabulary/corpus too small for the requested signatures.
    void validate() const;
};

enum class Domain { source, target };

struct SyntheticDomain {
    std::vector<corpus::Document> corpus;
    std::vector<corpus::Query> queries;
    std::vector<corpus::QrelEntry> gold_qrels;  // planted pairs, grade 1
};

/// Deterministic in (spec, domain). The source domain draws its own planted
/// structure over the unshifted vocabulary; the target applies the shift.
SyntheticDomain gen_domain(const SyntheticSpec& spec, Domain domain = Domain::target);

/// Writes corpus.jsonl, queries.jsonl and qrels.tsv into `dir`.
void write_domain(const SyntheticDomain& domain, const std::filesystem::path& dir);

/// Scores 1 for gold pairs (grade > 0) and 0 otherwise, recovering ids from
/// the query text and the document's scoring text.
class OracleScorer final : public rerank::PairScorer {
public:
    OracleScorer(std::span<const corpus::QrelEntry> gold_qrels,
                 std::span<const corpus::Query> queries, std::span<const corpus::Document> docs);

    std::vector<double> score_pairs(std::span<const rerank::TextPair> pairs) const override;

private:
    std::unordered_map<std::string, std::vector<std::string>> query_ids_;
    std::unordered_map<std::string, std::vector<std::string>> doc_ids_;
    std::unordered_set<std::string> relevant_;  // "qid\tdocid"
};

rerank::ScorerPtr oracle_scorer(std::span<const corpus::QrelEntry> gold_qrels,
                                std::span<const corpus::Query> queries,
                                std::span<const corpus::Document> docs);

}  // namespace dradapt::fixtures
