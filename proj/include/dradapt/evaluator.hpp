#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <ostream>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "dradapt/corpus.hpp"

namespace dradapt::eval {

/// DCG@k / IDCG@k with gain 2^g - 1 and discount log2(i + 1). Unjudged
/// documents have grade 0; the ideal ordering uses every judged grade.
/// Returns 0 when IDCG is 0.
double ndcg_at_k(std::span<const std::string> ranking,
                 const std::unordered_map<std::string, int>& grades, std::size_t k);

/// Fraction of documents with grade > 0 found in the first k.
double recall_at_k(std::span<const std::string> ranking,
                   const std::unordered_map<std::string, int>& grades, std::size_t k);

struct MetricReport {
    std::string metric_name = "ndcg";
    std::size_t cutoff = 10;
    std::map<std::string, double> per_query;
    double mean = 0.0;
};

/// Scores every query present in the qrels; a query missing from the run
/// scores 0. Run queries without judgments are ignored.
MetricReport evaluate_run(std::span<const corpus::RunList> runs,
                          std::span<const corpus::QrelEntry> qrels, std::size_t k = 10);

struct Comparison {
    struct Row {
        std::string query_id;
        double a = 0.0;
        double b = 0.0;
        double delta = 0.0;  // b - a
    };
    std::string metric_name;
    std::size_t cutoff = 0;
    std::vector<Row> rows;
    double mean_a = 0.0;
    double mean_b = 0.0;
    double mean_delta = 0.0;
};

/// Aligns on the shared queries. Throws Error when metric or cutoff differ or
/// no query is shared.
Comparison compare_runs(const MetricReport& a, const MetricReport& b);

/// CSV `query_id,<metric>@k` with a trailing `all` row.
void write_report_csv(const MetricReport& report, std::ostream& out);
void write_report_csv(const MetricReport& report, const std::filesystem::path& path);
void print_report(const MetricReport& report, std::ostream& out);

void write_comparison_csv(const Comparison& cmp, std::ostream& out);
void print_comparison(const Comparison& cmp, std::ostream& out);

}  // namespace dradapt::eval
