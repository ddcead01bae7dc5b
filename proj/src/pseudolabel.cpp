#include "dradapt/pseudolabel.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <cmath>
#include <fstream>
#include <unordered_map>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include "dradapt/error.hpp"
#include "dradapt/rng.hpp"

namespace dradapt::label {
namespace {

constexpr std::array<Preset, 6> kPresets{{
    {"fiqa", 6648, 6598, 1, 10},
    {"scifact", 1109, 1059, 5, 10},
    {"bioasq", 500, 450, 2, 100},
    {"trec-covid", 50, 40, 10, 150},
    {"touche-2020", 49, 39, 10, 150},
    {"robust04", 250, 200, 10, 50},
}};

bool iequals(std::string_view a, std::string_view b) {
    return a.size() == b.size() && std::equal(a.begin(), a.end(), b.begin(), [](char x, char y) {
               return std::tolower(static_cast<unsigned char>(x)) ==
                      std::tolower(static_cast<unsigned char>(y));
           });
}

/// Draws `count` distinct indices of `ids` whose id is not in `excluded`.
std::vector<std::size_t> sample_excluding(std::span<const std::string> ids,
                                          const std::unordered_set<std::string_view>& excluded,
                                          std::size_t count, Rng& rng) {
    std::size_t excluded_present = 0;
    for (const auto& id : ids) excluded_present += excluded.count(id);
    const std::size_t pool = ids.size() - excluded_present;
    if (pool < count)
        throw Error("cannot sample " + std::to_string(count) + " negatives from a pool of " +
                    std::to_string(pool) + " documents");
    std::vector<std::size_t> out;
    out.reserve(count);
    if (count * 2 <= pool) {
        std::unordered_set<std::size_t> taken;
        while (out.size() < count) {
            auto i = rng.uniform_index(ids.size());
            if (excluded.count(ids[i]) || !taken.insert(i).second) continue;
            out.push_back(i);
        }
        return out;
    }
    std::vector<std::size_t> candidates;
    candidates.reserve(pool);
    for (std::size_t i = 0; i < ids.size(); ++i)
        if (!excluded.count(ids[i])) candidates.push_back(i);
    for (std::size_t i = 0; i < count; ++i) {
        auto j = i + rng.uniform_index(candidates.size() - i);
        std::swap(candidates[i], candidates[j]);
        out.push_back(candidates[i]);
    }
    return out;
}

}  // namespace

void LabelConfig::validate() const {
    if (k < 1) throw ConfigError("label.k must be >= 1");
    if (m < 1) throw ConfigError("label.m must be >= 1");
    if (dev_pos < 2) throw ConfigError("label.dev_pos must be >= 2");
}

std::span<const Preset> presets() { return kPresets; }

const Preset& preset(std::string_view name) {
    for (const auto& p : kPresets)
        if (iequals(p.name, name)) return p;
    throw ConfigError("unknown preset '" + std::string(name) + "'");
}

QuerySplit split_queries(std::span<const corpus::Query> queries, std::size_t dev_query_count,
                         std::uint64_t seed) {
    if (dev_query_count > 0 && dev_query_count >= queries.size())
        throw ConfigError("dev_query_count (" + std::to_string(dev_query_count) +
                          ") must be smaller than the number of queries (" +
                          std::to_string(queries.size()) + ")");
    std::vector<std::size_t> order(queries.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(seed);
    rng.shuffle(order);
    std::vector<char> is_dev(queries.size(), 0);
    for (std::size_t i = 0; i < dev_query_count; ++i) is_dev[order[i]] = 1;
    QuerySplit split;
    split.train.reserve(queries.size() - dev_query_count);
    split.dev.reserve(dev_query_count);
    for (std::size_t i = 0; i < queries.size(); ++i)
        (is_dev[i] ? split.dev : split.train).push_back(queries[i]);
    return split;
}

std::size_t expected_triplet_count(std::span<const corpus::RunList> runs, std::size_t k,
                                   std::size_t m) {
    std::size_t n = 0;
    for (const auto& r : runs) n += std::min(k, r.entries.size()) * m;
    return n;
}

std::vector<Triplet> gen_triplets(std::span<const corpus::RunList> runs, const LabelConfig& cfg,
                                  std::span<const std::string> corpus_doc_ids) {
    cfg.validate();
    if (corpus_doc_ids.size() < cfg.k + cfg.m)
        throw Error("corpus has " + std::to_string(corpus_doc_ids.size()) +
                    " documents, fewer than k + m = " + std::to_string(cfg.k + cfg.m));
    std::vector<Triplet> out;
    out.reserve(expected_triplet_count(runs, cfg.k, cfg.m));
    for (const auto& run : runs) {
        if (run.entries.empty()) continue;
        const auto npos = std::min(cfg.k, run.entries.size());
        const auto zone = cfg.exclusion == Exclusion::top_k ? npos : run.entries.size();
        std::unordered_set<std::string_view> excluded;
        for (std::size_t i = 0; i < zone; ++i) excluded.insert(run.entries[i].doc_id);
        Rng rng(derive_seed(cfg.seed, run.query_id));
        for (std::size_t p = 0; p < npos; ++p) {
            for (auto idx : sample_excluding(corpus_doc_ids, excluded, cfg.m, rng))
                out.push_back(Triplet{run.query_id, run.entries[p].doc_id, corpus_doc_ids[idx],
                                      std::nullopt, std::nullopt});
        }
    }
    return out;
}

DevSet gen_dev_qrels(std::span<const corpus::RunList> runs, const LabelConfig& cfg,
                     std::span<const std::string> corpus_doc_ids) {
    cfg.validate();
    DevSet dev;
    for (const auto& run : runs) {
        if (run.entries.size() < cfg.dev_pos) {
            dev.skipped.push_back(run.query_id);
            continue;
        }
        std::unordered_set<std::string_view> top;
        for (std::size_t i = 0; i < cfg.dev_pos; ++i) {
            const auto& id = run.entries[i].doc_id;
            top.insert(id);
            dev.qrels.push_back({run.query_id, id, i < 2 ? 2 : 1});
        }
        Rng rng(derive_seed(cfg.seed, "dev:" + run.query_id));
        for (auto idx : sample_excluding(corpus_doc_ids, top, cfg.dev_neg, rng))
            dev.qrels.push_back({run.query_id, corpus_doc_ids[idx], 0});
    }
    return dev;
}

std::vector<Triplet> attach_teacher(std::span<const Triplet> triplets,
                                    const rerank::PairScorer& scorer,
                                    const corpus::TextLookup& texts) {
    std::unordered_map<std::string, std::size_t> slot;
    std::vector<rerank::TextPair> pairs;
    std::vector<std::array<std::size_t, 2>> refs;
    refs.reserve(triplets.size());
    auto intern = [&](const std::string& qid, const std::string& did) {
        auto [it, fresh] = slot.try_emplace(qid + '\t' + did, pairs.size());
        if (fresh) pairs.push_back({texts.query(qid).text, rerank::scoring_text(texts.doc(did))});
        return it->second;
    };
    for (const auto& t : triplets)
        refs.push_back({intern(t.query_id, t.pos_doc_id), intern(t.query_id, t.neg_doc_id)});
    auto scores = scorer.score_pairs(pairs);
    if (scores.size() != pairs.size())
        throw ProtocolError("teacher returned " + std::to_string(scores.size()) + " scores for " +
                            std::to_string(pairs.size()) + " pairs");
    std::vector<Triplet> out(triplets.begin(), triplets.end());
    for (std::size_t i = 0; i < out.size(); ++i) {
        out[i].teacher_pos = scores[refs[i][0]];
        out[i].teacher_neg = scores[refs[i][1]];
    }
    return out;
}

void write_triplets(std::span<const Triplet> triplets, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    for (const auto& t : triplets) {
        nlohmann::ordered_json obj{{"qid", t.query_id}, {"pos", t.pos_doc_id}, {"neg", t.neg_doc_id}};
        if (t.has_teacher()) {
            obj["t_pos"] = *t.teacher_pos;
            obj["t_neg"] = *t.teacher_neg;
        }
        out << obj.dump() << '\n';
    }
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

std::vector<Triplet> read_triplets(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    const auto p = path.string();
    std::vector<Triplet> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.find_first_not_of(" \t") == std::string::npos) continue;
        auto obj = nlohmann::json::parse(line, nullptr, false);
        if (obj.is_discarded() || !obj.is_object()) throw ParseError(p, lineno, "not a JSON object");
        Triplet t;
        for (auto [key, field] : {std::pair{"qid", &t.query_id}, std::pair{"pos", &t.pos_doc_id},
                                  std::pair{"neg", &t.neg_doc_id}}) {
            auto it = obj.find(key);
            if (it == obj.end() || !it->is_string())
                throw ParseError(p, lineno, std::string("missing string '") + key + "'");
            *field = it->get<std::string>();
        }
        const bool has_pos = obj.contains("t_pos"), has_neg = obj.contains("t_neg");
        if (has_pos != has_neg) throw ParseError(p, lineno, "t_pos and t_neg must come together");
        if (has_pos) {
            if (!obj["t_pos"].is_number() || !obj["t_neg"].is_number())
                throw ParseError(p, lineno, "teacher scores must be numbers");
            t.teacher_pos = obj["t_pos"].get<double>();
            t.teacher_neg = obj["t_neg"].get<double>();
        }
        if (t.pos_doc_id == t.neg_doc_id) throw ParseError(p, lineno, "pos == neg");
        out.push_back(std::move(t));
    }
    return out;
}

}  // namespace dradapt::label
