#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "dradapt/corpus.hpp"
#include "dradapt/reranker.hpp"

namespace dradapt::label {

struct Triplet {
    std::string query_id;
    std::string pos_doc_id;
    std::string neg_doc_id;
    std::optional<double> teacher_pos;
    std::optional<double> teacher_neg;

    bool has_teacher() const noexcept { return teacher_pos.has_value() && teacher_neg.has_value(); }
    bool operator==(const Triplet&) const = default;
};

/// Which documents a query's negatives may not be drawn from.
enum class Exclusion {
    top_k,       // the query's k pseudo-positives
    candidates,  // the query's whole candidate list
};

struct LabelConfig {
    std::size_t k = 1;                 // top-k positives per query
    std::size_t m = 10;                // negatives per positive
    std::size_t dev_query_count = 0;
    std::size_t dev_pos = 10;          // ranks 1-2 grade 2, 3..dev_pos grade 1
    std::size_t dev_neg = 90;          // grade-0 samples per dev query
    std::uint64_t seed = 42;
    Exclusion exclusion = Exclusion::top_k;

    /// Throws ConfigError when k, m < 1 or dev_pos < 2.
    void validate() const;
};

/// Per-collection defaults for k and m along with the query split sizes.
struct Preset {
    std::string_view name;
    std::size_t total_queries;
    std::size_t train_queries;
    std::size_t k;
    std::size_t m;

    std::size_t dev_queries() const noexcept { return total_queries - train_queries; }
};

std::span<const Preset> presets();
/// Case-insensitive lookup; throws ConfigError for unknown names.
const Preset& preset(std::string_view name);

struct QuerySplit {
    std::vector<corpus::Query> train;
    std::vector<corpus::Query> dev;
};

/// Seeded split; both halves keep the input order.
QuerySplit split_queries(std::span<const corpus::Query> queries, std::size_t dev_query_count,
                         std::uint64_t seed);

/// For each non-empty run: the top min(k, |run|) entries become positives and
/// each positive is paired with m negatives drawn uniformly without
/// replacement from the corpus minus the exclusion zone. Each query uses its
/// own generator seeded from (cfg.seed, query_id).
std::vector<Triplet> gen_triplets(std::span<const corpus::RunList> runs, const LabelConfig& cfg,
                                  std::span<const std::string> corpus_doc_ids);

/// Σ_q min(k, |run_q|) · m
std::size_t expected_triplet_count(std::span<const corpus::RunList> runs, std::size_t k,
                                   std::size_t m);

struct DevSet {
    std::vector<corpus::QrelEntry> qrels;
    std::vector<std::string> skipped;  // queries whose run was shorter than dev_pos
};

/// Graded dev judgments: top 2 grade 2, ranks 3..dev_pos grade 1, dev_neg
/// sampled documents outside the top dev_pos grade 0.
DevSet gen_dev_qrels(std::span<const corpus::RunList> runs, const LabelConfig& cfg,
                     std::span<const std::string> corpus_doc_ids);

/// Fills teacher_pos / teacher_neg from `scorer`. Each distinct (query, doc)
/// pair is scored once.
std::vector<Triplet> attach_teacher(std::span<const Triplet> triplets,
                                    const rerank::PairScorer& scorer,
                                    const corpus::TextLookup& texts);

/// JSONL {"qid","pos","neg"} plus "t_pos","t_neg" when teacher scores exist.
void write_triplets(std::span<const Triplet> triplets, const std::filesystem::path& path);
std::vector<Triplet> read_triplets(const std::filesystem::path& path);

}  // namespace dradapt::label
