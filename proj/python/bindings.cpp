#include <chrono>
#include <string>
#include <utility>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "dradapt/bm25.hpp"
#include "dradapt/corpus.hpp"
#include "dradapt/encoder.hpp"
#include "dradapt/error.hpp"
#include "dradapt/evaluator.hpp"
#include "dradapt/fixtures.hpp"
#include "dradapt/pipeline.hpp"
#include "dradapt/pseudolabel.hpp"
#include "dradapt/reranker.hpp"
#include "dradapt/trainer.hpp"

namespace py = pybind11;
using namespace dradapt;

namespace {

using Hit = std::pair<std::string, double>;

std::vector<Hit> hits(const corpus::RunList& run) {
    std::vector<Hit> out;
    out.reserve(run.entries.size());
    for (const auto& e : run.entries) out.emplace_back(e.doc_id, e.score);
    return out;
}

std::vector<rerank::TextPair> text_pairs(const std::vector<std::pair<std::string, std::string>>& pairs) {
    std::vector<rerank::TextPair> out;
    out.reserve(pairs.size());
    for (const auto& [q, d] : pairs) out.push_back({q, d});
    return out;
}

std::string run_pipeline(const std::string& config_json, const std::string& variant, bool force) {
    auto cfg = pipeline::PipelineConfig::from_json(nlohmann::json::parse(config_json));
    pipeline::Options opts;
    opts.force = force;
    py::gil_scoped_release release;
    return pipeline::Pipeline(cfg, opts).run(pipeline::variant_from_string(variant)).to_json().dump();
}

std::string resolve_config(const std::string& config_json) {
    return pipeline::PipelineConfig::from_json(nlohmann::json::parse(config_json)).to_json().dump();
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Native core of dradapt";

    auto base = py::register_exception<Error>(m, "Error", PyExc_RuntimeError);
    py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
    py::register_exception<ParseError>(m, "ParseError", base.ptr());
    py::register_exception<IoError>(m, "IoError", base.ptr());
    py::register_exception<ProtocolError>(m, "ProtocolError", base.ptr());
    py::register_exception<TrainingError>(m, "TrainingError", base.ptr());

    m.def("tokenize", &bm25::tokenize, py::arg("text"));

    py::class_<bm25::InvertedIndex>(m, "Bm25Index")
        .def(py::init([](const std::vector<std::tuple<std::string, std::string, std::string>>& docs, double k1,
                         double b) {
                 std::vector<corpus::Document> d;
                 d.reserve(docs.size());
                 for (const auto& [id, title, text] : docs) d.push_back({id, title, text});
                 return bm25::InvertedIndex::build(d, {k1, b});
             }),
             py::arg("docs"), py::arg("k1") = 0.9, py::arg("b") = 0.4)
        .def_static("load", &bm25::InvertedIndex::load, py::arg("path"))
        .def("save", &bm25::InvertedIndex::save, py::arg("path"))
        .def("__len__", &bm25::InvertedIndex::doc_count)
        .def("idf", [](const bm25::InvertedIndex& idx, const std::string& t) { return idx.idf(t); })
        .def("score", [](const bm25::InvertedIndex& idx, const std::string& q,
                         std::size_t doc) { return idx.score(corpus::Query{"q", q}, doc); },
             py::arg("query"), py::arg("doc_index"))
        .def("retrieve", [](const bm25::InvertedIndex& idx, const std::string& q,
                            std::size_t k) { return hits(idx.retrieve(corpus::Query{"q", q}, k)); },
             py::arg("query"), py::arg("k") = 100);

    m.def("ndcg_at_k",
          [](const std::vector<std::string>& ranking, const std::unordered_map<std::string, int>& grades,
             std::size_t k) { return eval::ndcg_at_k(ranking, grades, k); },
          py::arg("ranking"), py::arg("grades"), py::arg("k") = 10);

    m.def("ranknet_loss", [](double sp, double sn) { return train::ranknet_loss(sp, sn).loss; });
    m.def("marginmse_loss",
          [](double sp, double sn, double tp, double tn) { return train::marginmse_loss(sp, sn, tp, tn).loss; });
    m.def("cosine_lr", &train::cosine_lr, py::arg("t"), py::arg("total"), py::arg("lr_max"),
          py::arg("lr_min") = 0.0);

    m.def("preset", [](const std::string& name) {
        const auto& p = label::preset(name);
        py::dict d;
        d["name"] = std::string(p.name);
        d["total_queries"] = p.total_queries;
        d["train_queries"] = p.train_queries;
        d["k"] = p.k;
        d["m"] = p.m;
        d["triplets"] = p.train_queries * p.k * p.m;
        return d;
    });

    m.def("lexical_overlap", &rerank::LexicalOverlapScorer::score, py::arg("query"), py::arg("doc"));
    m.def("t5_relevance",
          [](double z_true, double z_false) { return rerank::t5_relevance({z_true, z_false}); });
    m.def("truncate_words", &rerank::truncate_words, py::arg("text"), py::arg("max_words") = rerank::kMaxDocWords);

    py::class_<rerank::RemoteScorer, std::shared_ptr<rerank::RemoteScorer>>(m, "RemoteScorer")
        .def(py::init([](const std::string& endpoint, std::size_t batch_size, long timeout_ms, int max_retries,
                         long backoff_ms) {
                 rerank::RemoteOptions o;
                 o.endpoint = endpoint;
                 o.batch_size = batch_size;
                 o.timeout = std::chrono::milliseconds(timeout_ms);
                 o.max_retries = max_retries;
                 o.backoff = std::chrono::milliseconds(backoff_ms);
                 return std::make_shared<rerank::RemoteScorer>(o);
             }),
             py::arg("endpoint"), py::arg("batch_size") = 32, py::arg("timeout_ms") = 30000,
             py::arg("max_retries") = 3, py::arg("backoff_ms") = 200)
        .def("score", [](const rerank::RemoteScorer& s, const std::vector<std::pair<std::string, std::string>>& pairs) {
                 auto tp = text_pairs(pairs);
                 py::gil_scoped_release release;
                 return s.score_pairs(tp);
             },
             py::arg("pairs"))
        .def_property_readonly("requests_sent", &rerank::RemoteScorer::requests_sent);
    m.def("remote_healthy", [](const std::string& endpoint, long timeout_ms) {
        py::gil_scoped_release release;
        return rerank::remote_healthy(endpoint, std::chrono::milliseconds(timeout_ms));
    }, py::arg("endpoint"), py::arg("timeout_ms") = 2000);

    py::class_<encoder::EncoderState>(m, "Encoder")
        .def_static("load", &encoder::load_state, py::arg("path"))
        .def_static("init",
                    [](std::size_t buckets, std::size_t dim, std::uint64_t seed, double scale,
                       const std::string& similarity) {
                        encoder::InitOptions o;
                        o.buckets = buckets;
                        o.dim = dim;
                        o.seed = seed;
                        o.scale = scale;
                        o.similarity = encoder::similarity_from_string(similarity);
                        return encoder::init_state(o);
                    },
                    py::arg("buckets") = 32768, py::arg("dim") = 64, py::arg("seed") = 1, py::arg("scale") = 0.1,
                    py::arg("similarity") = "dot")
        .def("save", [](const encoder::EncoderState& s, const std::filesystem::path& p) { encoder::save_state(s, p); })
        .def_property_readonly("buckets", &encoder::EncoderState::buckets)
        .def_property_readonly("dim", &encoder::EncoderState::dim)
        .def_property_readonly("similarity",
                               [](const encoder::EncoderState& s) { return std::string(to_string(s.similarity())); })
        .def("encode", [](const encoder::EncoderState& s, const std::string& text) { return s.encode(text); })
        .def("rsv", [](const encoder::EncoderState& s, const std::string& q, const std::string& d) {
            return encoder::rsv(s, q, d);
        })
        .def("__eq__", [](const encoder::EncoderState& a, const encoder::EncoderState& b) { return a == b; });

    m.def("write_fixture",
          [](const std::filesystem::path& out, std::size_t docs, std::size_t queries, std::size_t vocab,
             std::size_t tokens, double shift, double noise, std::uint64_t seed) {
              fixtures::SyntheticSpec s;
              s.n_docs = docs;
              s.n_queries = queries;
              s.vocab_size = vocab;
              s.tokens_per_doc = tokens;
              s.domain_shift = shift;
              s.noise = noise;
              s.seed = seed;
              s.validate();
              fixtures::write_domain(fixtures::gen_domain(s, fixtures::Domain::source), out / "source");
              fixtures::write_domain(fixtures::gen_domain(s, fixtures::Domain::target), out / "target");
          },
          py::arg("out"), py::arg("docs") = 2000, py::arg("queries") = 220, py::arg("vocab") = 3000,
          py::arg("tokens_per_doc") = 30, py::arg("shift") = 0.8, py::arg("noise") = 0.2, py::arg("seed") = 7);

    m.def("_resolve_config", &resolve_config);
    m.def("_run_pipeline", &run_pipeline, py::arg("config_json"), py::arg("variant"), py::arg("force") = false);
}
