#include "dradapt/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "dradapt/error.hpp"

namespace dradapt::corpus {
namespace {

using nlohmann::json;

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

bool is_blank(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isspace(c); });
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
}

std::string string_field(const json& obj, const char* key, const std::string& path,
                         std::size_t lineno, bool required) {
    auto it = obj.find(key);
    if (it == obj.end()) {
        if (required) throw ParseError(path, lineno, std::string("missing key '") + key + "'");
        return {};
    }
    if (!it->is_string()) throw ParseError(path, lineno, std::string("'") + key + "' is not a string");
    return it->get<std::string>();
}

/// Calls fn(object, lineno) for each non-blank JSONL line.
template <typename Fn>
void for_each_json_line(const std::filesystem::path& path, Fn&& fn) {
    auto in = open_in(path);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (is_blank(line)) continue;
        json obj = json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object())
            throw ParseError(path.string(), lineno, "not a JSON object");
        fn(obj, lineno);
    }
}

bool parse_int(std::string_view s, int& out) {
    if (s.empty()) return false;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), out);
    return ec == std::errc{} && ptr == s.data() + s.size();
}

std::vector<std::string_view> split(std::string_view s, char sep) {
    std::vector<std::string_view> out;
    std::size_t start = 0;
    for (;;) {
        auto pos = s.find(sep, start);
        out.push_back(s.substr(start, pos - start));
        if (pos == std::string_view::npos) break;
        start = pos + 1;
    }
    return out;
}

std::vector<std::string_view> split_ws(std::string_view s) {
    std::vector<std::string_view> out;
    std::size_t i = 0;
    while (i < s.size()) {
        while (i < s.size() && std::isspace(static_cast<unsigned char>(s[i]))) ++i;
        std::size_t j = i;
        while (j < s.size() && !std::isspace(static_cast<unsigned char>(s[j]))) ++j;
        if (j > i) out.push_back(s.substr(i, j - i));
        i = j;
    }
    return out;
}

}  // namespace

void sort_run(RunList& run) {
    std::sort(run.entries.begin(), run.entries.end(), [](const RunEntry& a, const RunEntry& b) {
        if (a.score != b.score) return a.score > b.score;
        return a.doc_id < b.doc_id;
    });
}

void check_run(const RunList& run, bool tie_rule) {
    std::unordered_set<std::string_view> seen;
    for (std::size_t i = 0; i < run.entries.size(); ++i) {
        const auto& e = run.entries[i];
        if (!seen.insert(e.doc_id).second)
            throw Error("run for query " + run.query_id + " repeats doc " + e.doc_id);
        if (i == 0) continue;
        const auto& prev = run.entries[i - 1];
        if (prev.score < e.score || (tie_rule && prev.score == e.score && prev.doc_id > e.doc_id))
            throw Error("run for query " + run.query_id + " is not sorted at rank " +
                        std::to_string(i + 1));
    }
}

std::vector<Document> load_corpus(const std::filesystem::path& path) {
    std::vector<Document> docs;
    std::unordered_set<std::string> ids;
    const auto p = path.string();
    for_each_json_line(path, [&](const json& obj, std::size_t lineno) {
        Document d;
        d.id = string_field(obj, "_id", p, lineno, true);
        d.title = string_field(obj, "title", p, lineno, false);
        d.text = string_field(obj, "text", p, lineno, true);
        if (d.id.empty()) throw ParseError(p, lineno, "empty _id");
        if (!ids.insert(d.id).second) throw ParseError(p, lineno, "duplicate _id '" + d.id + "'");
        docs.push_back(std::move(d));
    });
    return docs;
}

std::vector<Query> load_queries(const std::filesystem::path& path) {
    std::vector<Query> queries;
    std::unordered_set<std::string> ids;
    const auto p = path.string();
    for_each_json_line(path, [&](const json& obj, std::size_t lineno) {
        Query q;
        q.id = string_field(obj, "_id", p, lineno, true);
        q.text = string_field(obj, "text", p, lineno, true);
        if (q.id.empty()) throw ParseError(p, lineno, "empty _id");
        if (q.text.empty()) throw ParseError(p, lineno, "empty text for query '" + q.id + "'");
        if (!ids.insert(q.id).second) throw ParseError(p, lineno, "duplicate _id '" + q.id + "'");
        queries.push_back(std::move(q));
    });
    return queries;
}

std::vector<QrelEntry> load_qrels(const std::filesystem::path& path) {
    auto in = open_in(path);
    const auto p = path.string();
    std::vector<QrelEntry> out;
    std::unordered_set<std::string> pairs;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (is_blank(line)) continue;
        auto fields = split(line, '\t');
        if (fields.size() != 3)
            throw ParseError(p, lineno, "expected 3 tab-separated columns, got " +
                                            std::to_string(fields.size()));
        int grade = 0;
        if (!parse_int(fields[2], grade)) {
            if (lineno == 1) continue;  // header
            throw ParseError(p, lineno, "grade '" + std::string(fields[2]) + "' is not an integer");
        }
        if (grade < 0) throw ParseError(p, lineno, "negative grade");
        QrelEntry e{std::string(fields[0]), std::string(fields[1]), grade};
        if (!pairs.insert(e.query_id + '\t' + e.doc_id).second)
            throw ParseError(p, lineno, "duplicate judgment " + e.query_id + "/" + e.doc_id);
        out.push_back(std::move(e));
    }
    return out;
}

void write_corpus(const std::vector<Document>& docs, const std::filesystem::path& path) {
    auto out = open_out(path);
    for (const auto& d : docs) {
        nlohmann::ordered_json obj{{"_id", d.id}, {"title", d.title}, {"text", d.text}};
        out << obj.dump() << '\n';
    }
    finish(out, path);
}

void write_queries(const std::vector<Query>& queries, const std::filesystem::path& path) {
    auto out = open_out(path);
    for (const auto& q : queries) {
        nlohmann::ordered_json obj{{"_id", q.id}, {"text", q.text}};
        out << obj.dump() << '\n';
    }
    finish(out, path);
}

void write_qrels(const std::vector<QrelEntry>& qrels, const std::filesystem::path& path) {
    auto out = open_out(path);
    out << "query-id\tcorpus-id\tscore\n";
    for (const auto& q : qrels) out << q.query_id << '\t' << q.doc_id << '\t' << q.grade << '\n';
    finish(out, path);
}

void write_run(const std::vector<RunList>& runs, const std::string& tag,
               const std::filesystem::path& path) {
    auto out = open_out(path);
    char buf[64];
    for (const auto& run : runs) {
        check_run(run, false);
        for (std::size_t i = 0; i < run.entries.size(); ++i) {
            const auto& e = run.entries[i];
            std::snprintf(buf, sizeof buf, "%.6f", e.score);
            out << run.query_id << " Q0 " << e.doc_id << ' ' << (i + 1) << ' ' << buf << ' ' << tag
                << '\n';
        }
    }
    finish(out, path);
}

std::vector<RunList> read_run(const std::filesystem::path& path) {
    auto in = open_in(path);
    const auto p = path.string();
    std::vector<RunList> runs;
    std::unordered_map<std::string, std::size_t> slot;
    std::vector<std::vector<std::pair<long, RunEntry>>> ranked;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        strip_cr(line);
        if (is_blank(line)) continue;
        auto f = split_ws(line);
        if (f.size() != 6)
            throw ParseError(p, lineno, "expected 6 fields, got " + std::to_string(f.size()));
        long rank = 0;
        auto [rp, rec] = std::from_chars(f[3].data(), f[3].data() + f[3].size(), rank);
        if (rec != std::errc{} || rp != f[3].data() + f[3].size() || rank < 1)
            throw ParseError(p, lineno, "bad rank '" + std::string(f[3]) + "'");
        double score = 0.0;
        try {
            std::size_t used = 0;
            score = std::stod(std::string(f[4]), &used);
            if (used != f[4].size()) throw std::invalid_argument("trailing");
        } catch (const std::exception&) {
            throw ParseError(p, lineno, "bad score '" + std::string(f[4]) + "'");
        }
        std::string qid(f[0]);
        auto [it, fresh] = slot.try_emplace(qid, runs.size());
        if (fresh) {
            runs.push_back(RunList{qid, {}});
            ranked.emplace_back();
        }
        ranked[it->second].emplace_back(rank, RunEntry{std::string(f[2]), score});
    }
    for (std::size_t i = 0; i < runs.size(); ++i) {
        auto& r = ranked[i];
        std::stable_sort(r.begin(), r.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        runs[i].entries.reserve(r.size());
        for (auto& [rank, e] : r) runs[i].entries.push_back(std::move(e));
        try {
            check_run(runs[i], false);
        } catch (const Error& e) {
            throw ParseError(p, 0, e.what());
        }
    }
    return runs;
}

double round_score(double score) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.6f", score);
    return std::strtod(buf, nullptr);
}

TextLookup::TextLookup(std::span<const Query> queries, std::span<const Document> docs) {
    queries_.reserve(queries.size());
    for (const auto& q : queries) queries_.emplace(q.id, &q);
    docs_.reserve(docs.size());
    for (const auto& d : docs) docs_.emplace(d.id, &d);
}

const Query& TextLookup::query(const std::string& id) const {
    auto it = queries_.find(id);
    if (it == queries_.end()) throw Error("unknown query id '" + id + "'");
    return *it->second;
}

const Document& TextLookup::doc(const std::string& id) const {
    auto it = docs_.find(id);
    if (it == docs_.end()) throw Error("unknown doc id '" + id + "'");
    return *it->second;
}

QrelMap qrels_by_query(std::span<const QrelEntry> qrels) {
    QrelMap out;
    for (const auto& q : qrels) out[q.query_id][q.doc_id] = q.grade;
    return out;
}

}  // namespace dradapt::corpus
