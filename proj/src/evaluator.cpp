#include "dradapt/evaluator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>

#include "dradapt/error.hpp"

namespace dradapt::eval {
namespace {

double gain(int grade) { return std::exp2(static_cast<double>(grade)) - 1.0; }

std::string fmt6(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return buf;
}

}  // namespace

double ndcg_at_k(std::span<const std::string> ranking,
                 const std::unordered_map<std::string, int>& grades, std::size_t k) {
    std::vector<int> ideal;
    ideal.reserve(grades.size());
    for (const auto& [id, g] : grades) ideal.push_back(g);
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i)
        idcg += gain(ideal[i]) / std::log2(static_cast<double>(i) + 2.0);
    if (idcg == 0.0) return 0.0;
    double dcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
        auto it = grades.find(ranking[i]);
        if (it != grades.end()) dcg += gain(it->second) / std::log2(static_cast<double>(i) + 2.0);
    }
    return dcg / idcg;
}

double recall_at_k(std::span<const std::string> ranking,
                   const std::unordered_map<std::string, int>& grades, std::size_t k) {
    std::size_t relevant = 0;
    for (const auto& [id, g] : grades) relevant += g > 0;
    if (relevant == 0) return 0.0;
    std::size_t found = 0;
    for (std::size_t i = 0; i < std::min(k, ranking.size()); ++i) {
        auto it = grades.find(ranking[i]);
        found += it != grades.end() && it->second > 0;
    }
    return static_cast<double>(found) / static_cast<double>(relevant);
}

MetricReport evaluate_run(std::span<const corpus::RunList> runs,
                          std::span<const corpus::QrelEntry> qrels, std::size_t k) {
    if (k == 0) throw ConfigError("cutoff must be >= 1");
    auto judged = corpus::qrels_by_query(qrels);
    std::unordered_map<std::string, const corpus::RunList*> by_query;
    for (const auto& r : runs) by_query.emplace(r.query_id, &r);
    MetricReport report;
    report.cutoff = k;
    std::vector<std::string> ranking;
    for (const auto& [qid, grades] : judged) {
        double v = 0.0;
        if (auto it = by_query.find(qid); it != by_query.end()) {
            ranking.clear();
            for (const auto& e : it->second->entries) ranking.push_back(e.doc_id);
            v = ndcg_at_k(ranking, grades, k);
        }
        report.per_query[qid] = v;
    }
    double sum = 0.0;
    for (const auto& [qid, v] : report.per_query) sum += v;
    report.mean = report.per_query.empty() ? 0.0 : sum / static_cast<double>(report.per_query.size());
    return report;
}

Comparison compare_runs(const MetricReport& a, const MetricReport& b) {
    if (a.metric_name != b.metric_name || a.cutoff != b.cutoff)
        throw Error("cannot compare " + a.metric_name + "@" + std::to_string(a.cutoff) + " with " +
                    b.metric_name + "@" + std::to_string(b.cutoff));
    Comparison cmp;
    cmp.metric_name = a.metric_name;
    cmp.cutoff = a.cutoff;
    double sa = 0.0, sb = 0.0, sd = 0.0;
    for (const auto& [qid, va] : a.per_query) {
        auto it = b.per_query.find(qid);
        if (it == b.per_query.end()) continue;
        cmp.rows.push_back({qid, va, it->second, it->second - va});
        sa += va;
        sb += it->second;
        sd += cmp.rows.back().delta;
    }
    if (cmp.rows.empty()) throw Error("reports share no query");
    const double n = static_cast<double>(cmp.rows.size());
    cmp.mean_a = sa / n;
    cmp.mean_b = sb / n;
    cmp.mean_delta = sd / n;
    return cmp;
}

void write_report_csv(const MetricReport& report, std::ostream& out) {
    out << "query_id," << report.metric_name << '@' << report.cutoff << '\n';
    for (const auto& [qid, v] : report.per_query) out << qid << ',' << fmt6(v) << '\n';
    out << "all," << fmt6(report.mean) << '\n';
}

void write_report_csv(const MetricReport& report, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    write_report_csv(report, out);
}

void print_report(const MetricReport& report, std::ostream& out) {
    std::size_t w = 8;
    for (const auto& [qid, v] : report.per_query) w = std::max(w, qid.size());
    char buf[256];
    for (const auto& [qid, v] : report.per_query) {
        std::snprintf(buf, sizeof buf, "%-*s  %.4f\n", static_cast<int>(w), qid.c_str(), v);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "%-*s  %.4f  (%s@%zu, %zu queries)\n", static_cast<int>(w), "all",
                  report.mean, report.metric_name.c_str(), report.cutoff, report.per_query.size());
    out << buf;
}

void write_comparison_csv(const Comparison& cmp, std::ostream& out) {
    out << "query_id,a,b,delta\n";
    for (const auto& r : cmp.rows)
        out << r.query_id << ',' << fmt6(r.a) << ',' << fmt6(r.b) << ',' << fmt6(r.delta) << '\n';
    out << "all," << fmt6(cmp.mean_a) << ',' << fmt6(cmp.mean_b) << ',' << fmt6(cmp.mean_delta)
        << '\n';
}

void print_comparison(const Comparison& cmp, std::ostream& out) {
    std::size_t w = 8;
    for (const auto& r : cmp.rows) w = std::max(w, r.query_id.size());
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-*s  %8s  %8s  %8s\n", static_cast<int>(w), "query", "a", "b",
                  "delta");
    out << buf;
    for (const auto& r : cmp.rows) {
        std::snprintf(buf, sizeof buf, "%-*s  %8.4f  %8.4f  %+8.4f\n", static_cast<int>(w),
                      r.query_id.c_str(), r.a, r.b, r.delta);
        out << buf;
    }
    std::snprintf(buf, sizeof buf, "%-*s  %8.4f  %8.4f  %+8.4f\n", static_cast<int>(w), "mean",
                  cmp.mean_a, cmp.mean_b, cmp.mean_delta);
    out << buf;
}

}  // namespace dradapt::eval
