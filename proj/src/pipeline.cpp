#include "dradapt/pipeline.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <ostream>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "dradapt/fixtures.hpp"
#include "dradapt/hash.hpp"

namespace dradapt::pipeline {
namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr const char* kManifestName = "manifest.jsonl";

// ---------------------------------------------------------------------------
// config parsing helpers

void reject_unknown(const json& obj, std::initializer_list<std::string_view> allowed,
                    const std::string& section) {
    if (!obj.is_object()) throw ConfigError("config section '" + section + "' must be an object");
    for (const auto& [key, value] : obj.items()) {
        if (std::find(allowed.begin(), allowed.end(), key) == allowed.end())
            throw ConfigError("unknown config key '" + section + "." + key + "'");
    }
}

template <typename T>
void read(const json& obj, const char* key, T& dst, const std::string& section) {
    auto it = obj.find(key);
    if (it == obj.end() || it->is_null()) return;
    try {
        if constexpr (std::is_same_v<T, std::size_t> || std::is_same_v<T, std::uint64_t>) {
            if (!it->is_number_integer() || (!it->is_number_unsigned() && it->get<std::int64_t>() < 0))
                throw ConfigError("'" + section + "." + key + "' must be a non-negative integer");
        }
        dst = it->get<T>();
    } catch (const json::exception&) {
        throw ConfigError("'" + section + "." + key + "' has the wrong type");
    }
}

void read_path(const json& obj, const char* key, fs::path& dst, const std::string& section) {
    std::string s;
    read(obj, key, s, section);
    if (!s.empty()) dst = s;
}

ScorerConfig parse_scorer(const json& j, ScorerConfig sc, const std::string& section) {
    reject_unknown(j, {"mode", "endpoint", "batch_size", "timeout_ms", "constant", "depth"}, section);
    std::string mode(to_string(sc.mode));
    read(j, "mode", mode, section);
    sc.mode = scorer_mode_from_string(mode);
    read(j, "endpoint", sc.endpoint, section);
    read(j, "batch_size", sc.batch_size, section);
    read(j, "timeout_ms", sc.timeout_ms, section);
    read(j, "constant", sc.constant, section);
    return sc;
}

ordered_json scorer_to_json(const ScorerConfig& sc) {
    return {{"mode", to_string(sc.mode)},
            {"endpoint", sc.endpoint},
            {"batch_size", sc.batch_size},
            {"timeout_ms", sc.timeout_ms},
            {"constant", sc.constant}};
}

std::string_view exclusion_name(label::Exclusion e) {
    return e == label::Exclusion::top_k ? "top_k" : "candidates";
}

// ---------------------------------------------------------------------------

ordered_json report_json(const eval::MetricReport& r) {
    ordered_json per_query = ordered_json::object();
    for (const auto& [qid, v] : r.per_query) per_query[qid] = v;
    return {{"metric", r.metric_name}, {"cutoff", r.cutoff}, {"mean", r.mean}, {"per_query", per_query}};
}

eval::MetricReport report_from_json(const json& j) {
    eval::MetricReport r;
    r.metric_name = j.at("metric").get<std::string>();
    r.cutoff = j.at("cutoff").get<std::size_t>();
    r.mean = j.at("mean").get<double>();
    for (const auto& [qid, v] : j.at("per_query").items()) r.per_query[qid] = v.get<double>();
    return r;
}

std::vector<corpus::RunList> select_runs(const std::vector<corpus::RunList>& runs,
                                         const std::vector<corpus::Query>& queries) {
    std::unordered_map<std::string, const corpus::RunList*> by_id;
    for (const auto& r : runs) by_id.emplace(r.query_id, &r);
    std::vector<corpus::RunList> out;
    for (const auto& q : queries)
        if (auto it = by_id.find(q.id); it != by_id.end()) out.push_back(*it->second);
    return out;
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << text;
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

json read_json_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    auto j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ParseError(path.string(), 0, "invalid JSON");
    return j;
}

}  // namespace

// ---------------------------------------------------------------------------
// enums

std::string_view to_string(ScorerMode mode) {
    switch (mode) {
        case ScorerMode::none: return "none";
        case ScorerMode::lexical: return "lexical";
        case ScorerMode::remote: return "remote";
        case ScorerMode::oracle: return "oracle";
        case ScorerMode::constant: return "constant";
        case ScorerMode::same: return "same";
    }
    return "none";
}

ScorerMode scorer_mode_from_string(std::string_view s) {
    for (auto m : {ScorerMode::none, ScorerMode::lexical, ScorerMode::remote, ScorerMode::oracle,
                   ScorerMode::constant, ScorerMode::same})
        if (to_string(m) == s) return m;
    throw ConfigError("unknown scorer mode '" + std::string(s) + "'");
}

std::string_view to_string(Variant v) {
    switch (v) {
        case Variant::a_bm25: return "a_bm25";
        case Variant::b_bm25_t5: return "b_bm25_t5";
        case Variant::c_distill: return "c_distill";
    }
    return "a_bm25";
}

Variant variant_from_string(std::string_view s) {
    if (s == "a" || s == "a_bm25") return Variant::a_bm25;
    if (s == "b" || s == "b_bm25_t5") return Variant::b_bm25_t5;
    if (s == "c" || s == "c_distill") return Variant::c_distill;
    throw ConfigError("unknown variant '" + std::string(s) + "' (expected a, b or c)");
}

// ---------------------------------------------------------------------------
// PipelineConfig

PipelineConfig PipelineConfig::from_json(const json& j) {
    PipelineConfig c;
    reject_unknown(j, {"paths", "bm25", "label", "rerank", "teacher", "encoder", "train", "eval"}, "");
    if (auto it = j.find("paths"); it != j.end()) {
        reject_unknown(*it, {"corpus", "queries", "qrels", "workdir"}, "paths");
        read_path(*it, "corpus", c.paths.corpus, "paths");
        read_path(*it, "queries", c.paths.queries, "paths");
        read_path(*it, "qrels", c.paths.qrels, "paths");
        read_path(*it, "workdir", c.paths.workdir, "paths");
    }
    if (auto it = j.find("bm25"); it != j.end()) {
        reject_unknown(*it, {"k1", "b", "depth"}, "bm25");
        read(*it, "k1", c.bm25.params.k1, "bm25");
        read(*it, "b", c.bm25.params.b, "bm25");
        read(*it, "depth", c.bm25.depth, "bm25");
    }
    if (auto it = j.find("label"); it != j.end()) {
        reject_unknown(*it, {"preset", "k", "m", "dev_query_count", "dev_pos", "dev_neg", "seed", "exclusion"},
                       "label");
        if (auto p = it->find("preset"); p != it->end() && p->is_string()) {
            const auto& preset = label::preset(p->get<std::string>());
            c.label.k = preset.k;
            c.label.m = preset.m;
        }
        read(*it, "k", c.label.k, "label");
        read(*it, "m", c.label.m, "label");
        read(*it, "dev_query_count", c.label.dev_query_count, "label");
        read(*it, "dev_pos", c.label.dev_pos, "label");
        read(*it, "dev_neg", c.label.dev_neg, "label");
        read(*it, "seed", c.label.seed, "label");
        std::string excl(exclusion_name(c.label.exclusion));
        read(*it, "exclusion", excl, "label");
        if (excl == "top_k") c.label.exclusion = label::Exclusion::top_k;
        else if (excl == "candidates") c.label.exclusion = label::Exclusion::candidates;
        else throw ConfigError("label.exclusion must be top_k or candidates");
    }
    if (auto it = j.find("rerank"); it != j.end()) {
        c.rerank.scorer = parse_scorer(*it, c.rerank.scorer, "rerank");
        read(*it, "depth", c.rerank.depth, "rerank");
        if (c.rerank.scorer.mode == ScorerMode::same)
            throw ConfigError("rerank.mode cannot be 'same'");
    }
    if (auto it = j.find("teacher"); it != j.end()) c.teacher = parse_scorer(*it, c.teacher, "teacher");
    if (auto it = j.find("encoder"); it != j.end()) {
        reject_unknown(*it, {"buckets", "dim", "seed", "scale", "hash_seed", "similarity"}, "encoder");
        read(*it, "buckets", c.encoder.buckets, "encoder");
        read(*it, "dim", c.encoder.dim, "encoder");
        read(*it, "seed", c.encoder.seed, "encoder");
        read(*it, "scale", c.encoder.scale, "encoder");
        read(*it, "hash_seed", c.encoder.hash_seed, "encoder");
        std::string sim(encoder::to_string(c.encoder.similarity));
        read(*it, "similarity", sim, "encoder");
        c.encoder.similarity = encoder::similarity_from_string(sim);
    }
    if (auto it = j.find("train"); it != j.end()) {
        reject_unknown(*it, {"loss", "batch_size", "steps", "lr_max", "lr_min", "adam_beta1", "adam_beta2",
                             "adam_eps", "eval_every", "seed", "init_from", "dev_full_corpus"},
                       "train");
        std::string loss(train::to_string(c.train.loss));
        read(*it, "loss", loss, "train");
        c.train.loss = train::loss_from_string(loss);
        read(*it, "batch_size", c.train.batch_size, "train");
        read(*it, "steps", c.train.steps, "train");
        read(*it, "lr_max", c.train.lr_max, "train");
        read(*it, "lr_min", c.train.lr_min, "train");
        read(*it, "adam_beta1", c.train.adam.beta1, "train");
        read(*it, "adam_beta2", c.train.adam.beta2, "train");
        read(*it, "adam_eps", c.train.adam.eps, "train");
        read(*it, "eval_every", c.train.eval_every, "train");
        read(*it, "seed", c.train.seed, "train");
        read(*it, "dev_full_corpus", c.train.dev_full_corpus, "train");
        fs::path init;
        read_path(*it, "init_from", init, "train");
        if (!init.empty()) c.train.init_from = init;
    }
    if (auto it = j.find("eval"); it != j.end()) {
        reject_unknown(*it, {"cutoff", "depth"}, "eval");
        read(*it, "cutoff", c.eval.cutoff, "eval");
        read(*it, "depth", c.eval.depth, "eval");
    }
    c.train.eval_cutoff = c.eval.cutoff;
    c.label.validate();
    c.train.validate();
    if (c.eval.depth < c.eval.cutoff) throw ConfigError("eval.depth must be >= eval.cutoff");
    return c;
}

PipelineConfig PipelineConfig::load(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open config " + path.string());
    auto j = json::parse(in, nullptr, false);
    if (j.is_discarded()) throw ConfigError(path.string() + ": invalid JSON");
    return from_json(j);
}

json PipelineConfig::to_json() const {
    ordered_json j;
    j["paths"] = {{"corpus", paths.corpus.string()},
                  {"queries", paths.queries.string()},
                  {"qrels", paths.qrels.string()},
                  {"workdir", paths.workdir.string()}};
    j["bm25"] = {{"k1", bm25.params.k1}, {"b", bm25.params.b}, {"depth", bm25.depth}};
    j["label"] = {{"k", label.k},
                  {"m", label.m},
                  {"dev_query_count", label.dev_query_count},
                  {"dev_pos", label.dev_pos},
                  {"dev_neg", label.dev_neg},
                  {"seed", label.seed},
                  {"exclusion", exclusion_name(label.exclusion)}};
    j["rerank"] = scorer_to_json(rerank.scorer);
    j["rerank"]["depth"] = rerank.depth;
    j["teacher"] = scorer_to_json(teacher);
    j["encoder"] = {{"buckets", encoder.buckets},
                    {"dim", encoder.dim},
                    {"seed", encoder.seed},
                    {"scale", encoder.scale},
                    {"hash_seed", encoder.hash_seed},
                    {"similarity", encoder::to_string(encoder.similarity)}};
    j["train"] = {{"loss", train::to_string(train.loss)},
                  {"batch_size", train.batch_size},
                  {"steps", train.steps},
                  {"lr_max", train.lr_max},
                  {"lr_min", train.lr_min},
                  {"adam_beta1", train.adam.beta1},
                  {"adam_beta2", train.adam.beta2},
                  {"adam_eps", train.adam.eps},
                  {"eval_every", train.eval_every},
                  {"seed", train.seed},
                  {"init_from", train.init_from ? json(train.init_from->string()) : json(nullptr)},
                  {"dev_full_corpus", train.dev_full_corpus}};
    j["eval"] = {{"cutoff", eval.cutoff}, {"depth", eval.depth}};
    return j;
}

// ---------------------------------------------------------------------------
// Manifest

ordered_json ManifestEntry::to_json() const {
    ordered_json in = ordered_json::array(), out = ordered_json::array();
    for (const auto& [p, h] : inputs) in.push_back({p, h});
    for (const auto& [p, h] : outputs) out.push_back({p, h});
    ordered_json j{{"stage", stage}, {"config_hash", config_hash}, {"inputs", in}, {"outputs", out}};
    if (records) j["records"] = *records;
    return j;
}

ManifestEntry ManifestEntry::from_json(const json& j) {
    ManifestEntry e;
    e.stage = j.at("stage").get<std::string>();
    e.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& p : j.at("inputs")) e.inputs.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
    for (const auto& p : j.at("outputs")) e.outputs.emplace_back(p.at(0).get<std::string>(), p.at(1).get<std::string>());
    if (j.contains("records")) e.records = j.at("records").get<std::size_t>();
    return e;
}

Manifest::Manifest(fs::path dir) : dir_(std::move(dir)) {
    const auto path = dir_ / kManifestName;
    std::ifstream in(path, std::ios::binary);
    if (!in) return;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        auto j = json::parse(line, nullptr, false);
        try {
            if (j.is_discarded()) throw std::runtime_error("invalid JSON");
            entries_.push_back(ManifestEntry::from_json(j));
        } catch (const std::exception& e) {
            throw ParseError(path.string(), lineno, std::string("bad manifest line: ") + e.what());
        }
    }
}

const ManifestEntry* Manifest::find(std::string_view stage) const {
    for (const auto& e : entries_)
        if (e.stage == stage) return &e;
    return nullptr;
}

void Manifest::record(ManifestEntry entry) {
    for (auto& e : entries_) {
        if (e.stage == entry.stage) {
            e = std::move(entry);
            save();
            return;
        }
    }
    entries_.push_back(std::move(entry));
    save();
}

std::string Manifest::label(const fs::path& p) const {
    auto rel = p.lexically_relative(dir_);
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
    return p.generic_string();
}

void Manifest::save() const {
    fs::create_directories(dir_);
    std::string text;
    for (const auto& e : entries_) text += e.to_json().dump() + '\n';
    write_text(dir_ / kManifestName, text);
}

std::string hash_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::uint64_t h = kFnvOffset;
    char buf[1 << 16];
    while (in) {
        in.read(buf, sizeof buf);
        h = fnv1a64(std::string_view(buf, static_cast<std::size_t>(in.gcount())), h);
    }
    return hex64(h);
}

std::string hash_json(const json& j) { return hex64(fnv1a64(j.dump())); }

ordered_json PipelineReport::to_json() const {
    return {{"variant", pipeline::to_string(variant)},
            {"triplets", triplets},
            {"best_step", best_step},
            {"best_dev_ndcg", best_dev_ndcg},
            {"bm25", report_json(bm25)},
            {"zero_shot", report_json(zero_shot)},
            {"adapted", report_json(adapted)}};
}

// ---------------------------------------------------------------------------
// Pipeline

Pipeline::Pipeline(PipelineConfig cfg, Options opts)
    : cfg_(std::move(cfg)), opts_(std::move(opts)), run_manifest_(cfg_.paths.workdir) {
    if (opts_.shared_dir && fs::weakly_canonical(*opts_.shared_dir) !=
                                fs::weakly_canonical(cfg_.paths.workdir))
        shared_manifest_.emplace(*opts_.shared_dir);
}

fs::path Pipeline::shared_dir() const {
    return shared_manifest_ ? shared_manifest_->dir() : cfg_.paths.workdir;
}

Manifest& Pipeline::shared_manifest() { return shared_manifest_ ? *shared_manifest_ : run_manifest_; }

void Pipeline::note(const std::string& msg) const {
    if (opts_.log) *opts_.log << msg << '\n';
}

const std::vector<corpus::Document>& Pipeline::docs() {
    if (!docs_) {
        if (cfg_.paths.corpus.empty()) throw ConfigError("paths.corpus is not set");
        docs_ = corpus::load_corpus(cfg_.paths.corpus);
    }
    return *docs_;
}

const std::vector<corpus::Query>& Pipeline::queries() {
    if (!queries_) {
        if (cfg_.paths.queries.empty()) throw ConfigError("paths.queries is not set");
        queries_ = corpus::load_queries(cfg_.paths.queries);
    }
    return *queries_;
}

std::vector<std::string> Pipeline::doc_ids() {
    std::vector<std::string> ids;
    ids.reserve(docs().size());
    for (const auto& d : docs()) ids.push_back(d.id);
    return ids;
}

json Pipeline::scorer_json(const ScorerConfig& sc) const {
    json j{{"mode", to_string(sc.mode)}};
    if (sc.mode == ScorerMode::remote) {
        const char* env = std::getenv(kEndpointEnv);
        j["endpoint"] = env && *env ? std::string(env) : sc.endpoint;
    }
    if (sc.mode == ScorerMode::constant) j["constant"] = sc.constant;
    return j;
}

rerank::ScorerPtr Pipeline::make_scorer(const ScorerConfig& sc) {
    switch (sc.mode) {
        case ScorerMode::lexical:
            return rerank::lexical_overlap_scorer();
        case ScorerMode::remote: {
            rerank::RemoteOptions ro;
            const char* env = std::getenv(kEndpointEnv);
            ro.endpoint = env && *env ? std::string(env) : sc.endpoint;
            ro.batch_size = sc.batch_size;
            ro.timeout = std::chrono::milliseconds(sc.timeout_ms);
            return rerank::remote_scorer(std::move(ro));
        }
        case ScorerMode::oracle: {
            if (cfg_.paths.qrels.empty()) throw ConfigError("oracle scoring needs paths.qrels");
            auto gold = corpus::load_qrels(cfg_.paths.qrels);
            return fixtures::oracle_scorer(gold, queries(), docs());
        }
        case ScorerMode::constant:
            return std::make_shared<rerank::ConstantScorer>(sc.constant);
        case ScorerMode::none:
        case ScorerMode::same:
            break;
    }
    throw ConfigError("scorer mode '" + std::string(to_string(sc.mode)) + "' cannot score pairs");
}

template <typename Fn>
StageResult Pipeline::run_stage(Manifest& manifest, const std::string& stage, const json& config,
                                std::vector<fs::path> inputs, std::vector<fs::path> outputs,
                                Fn&& body) {
    StageResult result{stage, false, outputs, std::nullopt};
    try {
        ManifestEntry entry;
        entry.stage = stage;
        entry.config_hash = hash_json(json{{"stage", stage}, {"config", config}});
        for (const auto& in : inputs) {
            if (!fs::exists(in)) throw IoError("missing input " + in.string());
            entry.inputs.emplace_back(manifest.label(in), hash_file(in));
        }
        if (!opts_.force) {
            if (const auto* prev = manifest.find(stage);
                prev && prev->config_hash == entry.config_hash && prev->inputs == entry.inputs &&
                prev->outputs.size() == outputs.size()) {
                bool intact = true;
                for (std::size_t i = 0; i < outputs.size() && intact; ++i)
                    intact = fs::exists(outputs[i]) && hash_file(outputs[i]) == prev->outputs[i].second;
                if (intact) {
                    result.records = prev->records;
                    note("[" + stage + "] up to date");
                    return result;
                }
            }
        }
        for (const auto& out : outputs) fs::create_directories(out.parent_path());
        entry.records = body();
        for (const auto& out : outputs) entry.outputs.emplace_back(manifest.label(out), hash_file(out));
        result.records = entry.records;
        result.executed = true;
        manifest.record(std::move(entry));
        note("[" + stage + "] done" + (result.records ? " (" + std::to_string(*result.records) + " records)" : ""));
        return result;
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

StageResult Pipeline::index() {
    json conf{{"k1", cfg_.bm25.params.k1}, {"b", cfg_.bm25.params.b}};
    return run_stage(shared_manifest(), "index", conf, {cfg_.paths.corpus}, {index_path()},
                     [&]() -> std::optional<std::size_t> {
                         auto idx = bm25::InvertedIndex::build(docs(), cfg_.bm25.params);
                         idx.save(index_path());
                         return idx.doc_count();
                     });
}

StageResult Pipeline::retrieve() {
    json conf{{"depth", cfg_.bm25.depth}};
    return run_stage(shared_manifest(), "retrieve", conf, {index_path(), cfg_.paths.queries},
                     {bm25_run_path()}, [&]() -> std::optional<std::size_t> {
                         auto idx = bm25::InvertedIndex::load(index_path());
                         std::vector<corpus::RunList> runs;
                         runs.reserve(queries().size());
                         for (const auto& q : queries()) runs.push_back(idx.retrieve(q, cfg_.bm25.depth));
                         corpus::write_run(runs, "bm25", bm25_run_path());
                         return runs.size();
                     });
}

StageResult Pipeline::rerank() {
    const auto& sc = cfg_.rerank.scorer;
    json conf{{"scorer", scorer_json(sc)}, {"depth", cfg_.rerank.depth}};
    std::vector<fs::path> inputs{bm25_run_path(), cfg_.paths.corpus, cfg_.paths.queries};
    if (sc.mode == ScorerMode::oracle) inputs.push_back(cfg_.paths.qrels);
    return run_stage(shared_manifest(), "rerank", conf, inputs, {rerank_run_path()},
                     [&]() -> std::optional<std::size_t> {
                         auto runs = corpus::read_run(bm25_run_path());
                         if (sc.mode == ScorerMode::none) {
                             for (auto& r : runs)
                                 if (r.entries.size() > cfg_.rerank.depth) r.entries.resize(cfg_.rerank.depth);
                             corpus::write_run(runs, "bm25", rerank_run_path());
                             return runs.size();
                         }
                         auto scorer = make_scorer(sc);
                         corpus::TextLookup texts(queries(), docs());
                         std::vector<corpus::RunList> out;
                         out.reserve(runs.size());
                         for (const auto& r : runs)
                             out.push_back(rerank::rerank_run(r, *scorer, texts, cfg_.rerank.depth));
                         corpus::write_run(out, std::string(to_string(sc.mode)), rerank_run_path());
                         return out.size();
                     });
}

StageResult Pipeline::split() {
    json conf{{"dev_query_count", cfg_.label.dev_query_count}, {"seed", cfg_.label.seed}};
    return run_stage(shared_manifest(), "split", conf, {cfg_.paths.queries},
                     {train_queries_path(), dev_queries_path()}, [&]() -> std::optional<std::size_t> {
                         auto s = label::split_queries(queries(), cfg_.label.dev_query_count, cfg_.label.seed);
                         corpus::write_queries(s.train, train_queries_path());
                         corpus::write_queries(s.dev, dev_queries_path());
                         return s.dev.size();
                     });
}

StageResult Pipeline::triplets() {
    json conf{{"k", cfg_.label.k},
              {"m", cfg_.label.m},
              {"seed", cfg_.label.seed},
              {"exclusion", exclusion_name(cfg_.label.exclusion)}};
    return run_stage(run_manifest_, "triplets", conf,
                     {rerank_run_path(), train_queries_path(), cfg_.paths.corpus}, {triplets_path()},
                     [&]() -> std::optional<std::size_t> {
                         auto runs = select_runs(corpus::read_run(rerank_run_path()),
                                                 corpus::load_queries(train_queries_path()));
                         auto ts = label::gen_triplets(runs, cfg_.label, doc_ids());
                         label::write_triplets(ts, triplets_path());
                         return ts.size();
                     });
}

StageResult Pipeline::attach_teacher() {
    ScorerConfig sc = cfg_.teacher.mode == ScorerMode::same ? cfg_.rerank.scorer : cfg_.teacher;
    if (sc.mode == ScorerMode::none)
        throw StageError("attach_teacher", "distillation needs a teacher scorer (rerank or teacher mode)");
    json conf{{"scorer", scorer_json(sc)}};
    std::vector<fs::path> inputs{triplets_path(), cfg_.paths.corpus, cfg_.paths.queries};
    if (sc.mode == ScorerMode::oracle) inputs.push_back(cfg_.paths.qrels);
    return run_stage(run_manifest_, "attach_teacher", conf, inputs, {teacher_triplets_path()},
                     [&]() -> std::optional<std::size_t> {
                         auto scorer = make_scorer(sc);
                         corpus::TextLookup texts(queries(), docs());
                         auto ts = label::attach_teacher(label::read_triplets(triplets_path()), *scorer, texts);
                         label::write_triplets(ts, teacher_triplets_path());
                         return ts.size();
                     });
}

StageResult Pipeline::devset() {
    json conf{{"dev_pos", cfg_.label.dev_pos}, {"dev_neg", cfg_.label.dev_neg}, {"seed", cfg_.label.seed}};
    return run_stage(run_manifest_, "devset", conf,
                     {rerank_run_path(), dev_queries_path(), cfg_.paths.corpus}, {dev_qrels_path()},
                     [&]() -> std::optional<std::size_t> {
                         auto runs = select_runs(corpus::read_run(rerank_run_path()),
                                                 corpus::load_queries(dev_queries_path()));
                         auto dev = label::gen_dev_qrels(runs, cfg_.label, doc_ids());
                         for (const auto& q : dev.skipped)
                             note("[devset] warning: query " + q + " has fewer than " +
                                  std::to_string(cfg_.label.dev_pos) + " candidates, skipped");
                         corpus::write_qrels(dev.qrels, dev_qrels_path());
                         return dev.qrels.size();
                     });
}

StageResult Pipeline::init_state() {
    const auto& e = cfg_.encoder;
    if (cfg_.train.init_from) {
        const auto src = *cfg_.train.init_from;
        return run_stage(run_manifest_, "init", json{{"init_from", true}}, {src}, {initial_state_path()},
                         [&]() -> std::optional<std::size_t> {
                             encoder::save_state(encoder::load_state(src), initial_state_path());
                             return std::nullopt;
                         });
    }
    json conf{{"buckets", e.buckets}, {"dim", e.dim},           {"seed", e.seed},
              {"scale", e.scale},     {"hash_seed", e.hash_seed}, {"similarity", encoder::to_string(e.similarity)}};
    return run_stage(run_manifest_, "init", conf, {}, {initial_state_path()},
                     [&]() -> std::optional<std::size_t> {
                         encoder::save_state(encoder::init_state(e), initial_state_path());
                         return std::nullopt;
                     });
}

StageResult Pipeline::train(train::Loss loss, const fs::path& triplets_file) {
    auto tc = cfg_.train;
    tc.loss = loss;
    json conf{{"loss", train::to_string(loss)}, {"batch_size", tc.batch_size},
              {"steps", tc.steps},              {"lr_max", tc.lr_max},
              {"lr_min", tc.lr_min},            {"adam", {tc.adam.beta1, tc.adam.beta2, tc.adam.eps}},
              {"eval_every", tc.eval_every},    {"cutoff", tc.eval_cutoff},
              {"seed", tc.seed},                {"dev_full_corpus", tc.dev_full_corpus}};
    return run_stage(run_manifest_, "train", conf,
                     {triplets_file, dev_qrels_path(), train_queries_path(), dev_queries_path(),
                      cfg_.paths.corpus, initial_state_path()},
                     {state_path(), history_path(), train_summary_path()},
                     [&]() -> std::optional<std::size_t> {
                         auto ts = label::read_triplets(triplets_file);
                         auto dev_q = corpus::load_queries(dev_queries_path());
                         auto train_q = corpus::load_queries(train_queries_path());
                         auto dev_qrels = corpus::load_qrels(dev_qrels_path());
                         auto result = train::train(encoder::load_state(initial_state_path()), ts, dev_qrels,
                                                    dev_q, train_q, docs(), tc);
                         encoder::save_state(result.best_state, state_path());
                         train::write_history_csv(result.history, history_path());
                         ordered_json summary{{"loss", train::to_string(loss)},
                                              {"triplets", ts.size()},
                                              {"best_step", result.best_step},
                                              {"best_dev_ndcg", result.best_dev_ndcg}};
                         write_text(train_summary_path(), summary.dump(2) + '\n');
                         return ts.size();
                     });
}

StageResult Pipeline::evaluate(Variant variant) {
    if (cfg_.paths.qrels.empty()) throw StageError("eval", "paths.qrels is not set");
    json conf{{"cutoff", cfg_.eval.cutoff}, {"depth", cfg_.eval.depth}, {"variant", to_string(variant)}};
    const auto zs_run = run_dir() / "run.zeroshot.trec";
    const auto ad_run = run_dir() / "run.adapted.trec";
    const auto csv = run_dir() / "report.csv";
    const auto cmp_csv = run_dir() / "compare.csv";
    return run_stage(
        run_manifest_, "eval", conf,
        {initial_state_path(), state_path(), train_summary_path(), bm25_run_path(), cfg_.paths.queries,
         cfg_.paths.qrels, cfg_.paths.corpus},
        {zs_run, ad_run, report_path(), csv, cmp_csv}, [&]() -> std::optional<std::size_t> {
            auto gold = corpus::load_qrels(cfg_.paths.qrels);
            auto judged = corpus::qrels_by_query(gold);
            std::vector<corpus::Query> eval_queries;
            for (const auto& q : queries())
                if (judged.count(q.id)) eval_queries.push_back(q);

            auto dense_runs = [&](const fs::path& state_file, const fs::path& out) {
                auto state = encoder::load_state(state_file);
                auto embs = encoder::encode_corpus(state, docs());
                std::vector<corpus::RunList> runs;
                runs.reserve(eval_queries.size());
                for (const auto& q : eval_queries)
                    runs.push_back(encoder::rank_embeddings(state, q.id, state.encode(q.text), docs(), embs,
                                                            cfg_.eval.depth));
                corpus::write_run(runs, "dense", out);
                return runs;
            };
            PipelineReport report;
            report.variant = variant;
            report.zero_shot = eval::evaluate_run(dense_runs(initial_state_path(), zs_run), gold, cfg_.eval.cutoff);
            report.adapted = eval::evaluate_run(dense_runs(state_path(), ad_run), gold, cfg_.eval.cutoff);
            report.bm25 = eval::evaluate_run(corpus::read_run(bm25_run_path()), gold, cfg_.eval.cutoff);
            auto summary = read_json_file(train_summary_path());
            report.triplets = summary.at("triplets").get<std::size_t>();
            report.best_step = summary.at("best_step").get<std::size_t>();
            report.best_dev_ndcg = summary.at("best_dev_ndcg").get<double>();
            write_text(report_path(), report.to_json().dump(2) + '\n');

            std::ostringstream table;
            table << "system,ndcg@" << cfg_.eval.cutoff << '\n';
            char buf[64];
            for (auto [name, r] : {std::pair{"bm25", &report.bm25}, std::pair{"zero_shot", &report.zero_shot},
                                   std::pair{"adapted", &report.adapted}}) {
                std::snprintf(buf, sizeof buf, "%.6f", r->mean);
                table << name << ',' << buf << '\n';
            }
            write_text(csv, table.str());
            std::ostringstream cmp;
            eval::write_comparison_csv(eval::compare_runs(report.zero_shot, report.adapted), cmp);
            write_text(cmp_csv, cmp.str());
            return eval_queries.size();
        });
}

PipelineReport Pipeline::read_report() const {
    auto j = read_json_file(report_path());
    PipelineReport r;
    r.variant = variant_from_string(j.at("variant").get<std::string>());
    r.triplets = j.at("triplets").get<std::size_t>();
    r.best_step = j.at("best_step").get<std::size_t>();
    r.best_dev_ndcg = j.at("best_dev_ndcg").get<double>();
    r.bm25 = report_from_json(j.at("bm25"));
    r.zero_shot = report_from_json(j.at("zero_shot"));
    r.adapted = report_from_json(j.at("adapted"));
    return r;
}

PipelineReport Pipeline::run(Variant variant) {
    if (variant == Variant::a_bm25) {
        cfg_.rerank.scorer.mode = ScorerMode::none;
    } else if (cfg_.rerank.scorer.mode == ScorerMode::none) {
        throw ConfigError("variant " + std::string(to_string(variant)) + " needs rerank.mode != none");
    }
    index();
    retrieve();
    rerank();
    split();
    triplets();
    fs::path train_input = triplets_path();
    if (variant == Variant::c_distill) {
        attach_teacher();
        train_input = teacher_triplets_path();
    }
    devset();
    init_state();
    train(variant == Variant::c_distill ? train::Loss::marginmse : train::Loss::ranknet, train_input);
    evaluate(variant);
    return read_report();
}

std::vector<label::Triplet> supervised_triplets(std::span<const corpus::QrelEntry> gold,
                                                std::size_t m, std::uint64_t seed,
                                                std::span<const std::string> corpus_doc_ids) {
    std::vector<corpus::RunList> runs;
    std::unordered_map<std::string, std::size_t> slot;
    for (const auto& q : gold) {
        if (q.grade <= 0) continue;
        auto [it, fresh] = slot.emplace(q.query_id, runs.size());
        if (fresh) runs.push_back({q.query_id, {}});
        runs[it->second].entries.push_back({q.doc_id, static_cast<double>(q.grade)});
    }
    std::size_t k = 0;
    for (auto& r : runs) {
        corpus::sort_run(r);
        k = std::max(k, r.entries.size());
    }
    if (runs.empty()) throw ConfigError("no relevant judgments to train on");
    label::LabelConfig lc;
    lc.k = k;
    lc.m = m;
    lc.seed = seed;
    lc.exclusion = label::Exclusion::candidates;
    lc.validate();
    return label::gen_triplets(runs, lc, corpus_doc_ids);
}

encoder::EncoderState pretrain(std::span<const corpus::Document> docs,
                               std::span<const corpus::Query> queries,
                               std::span<const corpus::QrelEntry> gold,
                               const encoder::InitOptions& init, const train::TrainConfig& cfg,
                               std::size_t m, std::uint64_t seed) {
    std::vector<std::string> ids;
    ids.reserve(docs.size());
    for (const auto& d : docs) ids.push_back(d.id);
    auto ts = supervised_triplets(gold, m, seed, ids);
    auto tc = cfg;
    tc.loss = train::Loss::ranknet;
    tc.eval_every = tc.steps + 1;
    auto result = train::train(encoder::init_state(init), ts, {}, {}, queries, docs, tc);
    return std::move(result.best_state);
}

std::vector<SweepRow> sweep_k(const PipelineConfig& cfg, Variant variant, std::span<const std::size_t> ks,
                              std::span<const std::size_t> ms, Options opts) {
    if (ks.size() != ms.size() || ks.empty())
        throw ConfigError("k and m lists must be non-empty and of equal length");
    const auto root = cfg.paths.workdir;
    std::vector<SweepRow> rows;
    for (std::size_t i = 0; i < ks.size(); ++i) {
        auto c = cfg;
        c.label.k = ks[i];
        c.label.m = ms[i];
        c.label.validate();
        c.paths.workdir = root / ("k" + std::to_string(ks[i]) + "_m" + std::to_string(ms[i]));
        auto o = opts;
        o.shared_dir = root;
        auto report = Pipeline(c, o).run(variant);
        rows.push_back({ks[i], ms[i], report.zero_shot.mean, report.adapted.mean});
    }
    std::ostringstream csv, dat;
    csv << "k,m,zero_shot_ndcg" << cfg.eval.cutoff << ",ndcg" << cfg.eval.cutoff << '\n';
    dat << "# k m zero_shot adapted\n";
    char buf[128];
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof buf, "%zu,%zu,%.6f,%.6f\n", r.k, r.m, r.zero_shot, r.adapted);
        csv << buf;
        std::snprintf(buf, sizeof buf, "%zu %zu %.6f %.6f\n", r.k, r.m, r.zero_shot, r.adapted);
        dat << buf;
    }
    fs::create_directories(root);
    write_text(root / "sweep.csv", csv.str());
    write_text(root / "sweep.dat", dat.str());
    return rows;
}

}  // namespace dradapt::pipeline
