#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace dradapt::corpus {

struct Document {
    std::string id;
    std::string title;
    std::string text;

    /// Text used everywhere a single document string is needed: title first.
    std::string full_text() const { return title.empty() ? text : title + " " + text; }

    bool operator==(const Document&) const = default;
};

struct Query {
    std::string id;
    std::string text;

    bool operator==(const Query&) const = default;
};

struct QrelEntry {
    std::string query_id;
    std::string doc_id;
    int grade = 0;

    bool operator==(const QrelEntry&) const = default;
};

struct RunEntry {
    std::string doc_id;
    double score = 0.0;

    bool operator==(const RunEntry&) const = default;
};

/// Ranked list for one query: score descending, doc_id ascending on ties.
struct RunList {
    std::string query_id;
    std::vector<RunEntry> entries;

    bool operator==(const RunList&) const = default;
};

/// Sorts entries by (score desc, doc_id asc).
void sort_run(RunList& run);

/// Throws Error when entries are out of order or a doc_id repeats. With
/// `tie_rule` false only non-increasing scores are required (rounded scores
/// read back from a run file may tie in any doc_id order).
void check_run(const RunList& run, bool tie_rule = true);

std::vector<Document> load_corpus(const std::filesystem::path& path);
std::vector<Query> load_queries(const std::filesystem::path& path);
std::vector<QrelEntry> load_qrels(const std::filesystem::path& path);

void write_corpus(const std::vector<Document>& docs, const std::filesystem::path& path);
void write_queries(const std::vector<Query>& queries, const std::filesystem::path& path);
/// Writes with the `query-id\tcorpus-id\tscore` header line.
void write_qrels(const std::vector<QrelEntry>& qrels, const std::filesystem::path& path);

/// TREC format: `qid Q0 docid rank score tag`, score with 6 decimals.
void write_run(const std::vector<RunList>& runs, const std::string& tag,
               const std::filesystem::path& path);
/// Queries come back in first-appearance order, entries in rank order.
std::vector<RunList> read_run(const std::filesystem::path& path);

/// Round half away from zero to 6 decimals, i.e. what a run file stores.
double round_score(double score);

template <typename T>
std::unordered_map<std::string, const T*> index_by_id(const std::vector<T>& items) {
    std::unordered_map<std::string, const T*> out;
    out.reserve(items.size());
    for (const auto& item : items) out.emplace(item.id, &item);
    return out;
}

/// Id -> record lookup over caller-owned collections.
class TextLookup {
public:
    TextLookup(std::span<const Query> queries, std::span<const Document> docs);

    /// Throw Error naming the unknown id.
    const Query& query(const std::string& id) const;
    const Document& doc(const std::string& id) const;

    bool has_query(const std::string& id) const { return queries_.count(id) != 0; }
    bool has_doc(const std::string& id) const { return docs_.count(id) != 0; }

private:
    std::unordered_map<std::string, const Query*> queries_;
    std::unordered_map<std::string, const Document*> docs_;
};

/// query_id -> (doc_id -> grade)
using QrelMap = std::unordered_map<std::string, std::unordered_map<std::string, int>>;
QrelMap qrels_by_query(std::span<const QrelEntry> qrels);

}  // namespace dradapt::corpus
