// dradapt command-line driver.
//
// Exit codes: 0 ok, 1 usage or configuration error, 2 stage failure.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "dradapt/corpus.hpp"
#include "dradapt/encoder.hpp"
#include "dradapt/evaluator.hpp"
#include "dradapt/fixtures.hpp"
#include "dradapt/pipeline.hpp"

namespace fs = std::filesystem;
using namespace dradapt;
using pipeline::PipelineConfig;

namespace {

constexpr int kUsage = 1;
constexpr int kStageFailure = 2;

// Flag overrides applied on top of the JSON config.
struct Overrides {
    std::string config;
    std::string workdir, corpus, queries, qrels;
    std::optional<double> k1, b;
    std::optional<std::size_t> bm25_depth;
    std::string preset;
    std::optional<std::size_t> k, m, dev_queries, dev_pos, dev_neg;
    std::optional<std::uint64_t> label_seed;
    std::string rerank_mode, endpoint, teacher_mode;
    std::optional<double> constant;
    std::optional<std::size_t> rerank_depth;
    std::optional<std::size_t> buckets, dim;
    std::optional<std::uint64_t> init_seed;
    std::string similarity;
    std::optional<std::size_t> steps, batch_size, eval_every;
    std::optional<double> lr;
    std::optional<std::uint64_t> train_seed;
    std::string init_from;
    std::optional<std::size_t> cutoff;
    bool force = false;
    bool quiet = false;
};

void add_common(CLI::App* cmd, Overrides& o) {
    cmd->add_option("-c,--config", o.config, "JSON config file")->check(CLI::ExistingFile);
    cmd->add_option("-w,--workdir", o.workdir, "Working directory");
    cmd->add_option("--corpus", o.corpus, "corpus.jsonl");
    cmd->add_option("--queries", o.queries, "queries.jsonl");
    cmd->add_option("--qrels", o.qrels, "Gold qrels TSV");
    cmd->add_option("--k1", o.k1);
    cmd->add_option("--b", o.b);
    cmd->add_option("--bm25-depth", o.bm25_depth);
    cmd->add_option("--preset", o.preset, "Label preset (fiqa, scifact, bioasq, ...)");
    cmd->add_option("-k", o.k, "Pseudo-positives per query");
    cmd->add_option("-m", o.m, "Negatives per positive");
    cmd->add_option("--dev-queries", o.dev_queries, "Queries held out for the dev set");
    cmd->add_option("--dev-pos", o.dev_pos);
    cmd->add_option("--dev-neg", o.dev_neg);
    cmd->add_option("--label-seed", o.label_seed);
    cmd->add_option("--rerank-mode", o.rerank_mode, "none|lexical|remote|oracle|constant");
    cmd->add_option("--endpoint", o.endpoint, "Scoring service URL");
    cmd->add_option("--teacher-mode", o.teacher_mode, "same|lexical|remote|oracle|constant");
    cmd->add_option("--constant", o.constant, "Score used by constant mode");
    cmd->add_option("--rerank-depth", o.rerank_depth);
    cmd->add_option("--buckets", o.buckets);
    cmd->add_option("--dim", o.dim);
    cmd->add_option("--init-seed", o.init_seed);
    cmd->add_option("--similarity", o.similarity, "dot|cosine");
    cmd->add_option("--steps", o.steps);
    cmd->add_option("--batch-size", o.batch_size);
    cmd->add_option("--eval-every", o.eval_every);
    cmd->add_option("--lr", o.lr, "Peak learning rate");
    cmd->add_option("--train-seed", o.train_seed);
    cmd->add_option("--init-from", o.init_from, "Starting encoder state");
    cmd->add_option("--cutoff", o.cutoff, "NDCG cutoff");
    cmd->add_flag("-f,--force", o.force, "Rerun stages even when cached");
    cmd->add_flag("-q,--quiet", o.quiet);
}

PipelineConfig resolve(const Overrides& o) {
    nlohmann::json j = nlohmann::json::object();
    if (!o.config.empty()) {
        auto file = PipelineConfig::load(o.config);  // validates
        j = file.to_json();
    }
    auto set = [&](const char* section, const char* key, auto value) { j[section][key] = value; };
    if (!o.workdir.empty()) set("paths", "workdir", o.workdir);
    if (!o.corpus.empty()) set("paths", "corpus", o.corpus);
    if (!o.queries.empty()) set("paths", "queries", o.queries);
    if (!o.qrels.empty()) set("paths", "qrels", o.qrels);
    if (o.k1) set("bm25", "k1", *o.k1);
    if (o.b) set("bm25", "b", *o.b);
    if (o.bm25_depth) set("bm25", "depth", *o.bm25_depth);
    if (!o.preset.empty()) {
        const auto& p = label::preset(o.preset);
        set("label", "k", p.k);
        set("label", "m", p.m);
    }
    if (o.k) set("label", "k", *o.k);
    if (o.m) set("label", "m", *o.m);
    if (o.dev_queries) set("label", "dev_query_count", *o.dev_queries);
    if (o.dev_pos) set("label", "dev_pos", *o.dev_pos);
    if (o.dev_neg) set("label", "dev_neg", *o.dev_neg);
    if (o.label_seed) set("label", "seed", *o.label_seed);
    if (!o.rerank_mode.empty()) set("rerank", "mode", o.rerank_mode);
    if (!o.endpoint.empty()) {
        set("rerank", "endpoint", o.endpoint);
        set("teacher", "endpoint", o.endpoint);
    }
    if (o.constant) {
        set("rerank", "constant", *o.constant);
        set("teacher", "constant", *o.constant);
    }
    if (!o.teacher_mode.empty()) set("teacher", "mode", o.teacher_mode);
    if (o.rerank_depth) set("rerank", "depth", *o.rerank_depth);
    if (o.buckets) set("encoder", "buckets", *o.buckets);
    if (o.dim) set("encoder", "dim", *o.dim);
    if (o.init_seed) set("encoder", "seed", *o.init_seed);
    if (!o.similarity.empty()) set("encoder", "similarity", o.similarity);
    if (o.steps) set("train", "steps", *o.steps);
    if (o.batch_size) set("train", "batch_size", *o.batch_size);
    if (o.eval_every) set("train", "eval_every", *o.eval_every);
    if (o.lr) set("train", "lr_max", *o.lr);
    if (o.train_seed) set("train", "seed", *o.train_seed);
    if (!o.init_from.empty()) set("train", "init_from", o.init_from);
    if (o.cutoff) set("eval", "cutoff", *o.cutoff);
    return PipelineConfig::from_json(j);
}

pipeline::Options options(const Overrides& o) {
    pipeline::Options opts;
    opts.force = o.force;
    opts.log = o.quiet ? nullptr : &std::cerr;
    return opts;
}

void print_result(const pipeline::StageResult& r) {
    std::cout << r.stage << (r.executed ? " done" : " cached");
    if (r.records) std::cout << " records=" << *r.records;
    std::cout << '\n';
    for (const auto& p : r.outputs) std::cout << "  " << p.string() << '\n';
}

void print_summary(const pipeline::PipelineReport& r) {
    std::cout << "variant        " << pipeline::to_string(r.variant) << '\n'
              << "triplets       " << r.triplets << '\n'
              << "best_step      " << r.best_step << '\n'
              << "best_dev_ndcg  " << r.best_dev_ndcg << '\n'
              << "bm25           " << r.bm25.mean << '\n'
              << "zero_shot      " << r.zero_shot.mean << '\n'
              << "adapted        " << r.adapted.mean << '\n';
}

std::vector<std::size_t> parse_list(const std::string& s) {
    std::vector<std::size_t> out;
    std::size_t pos = 0;
    while (pos <= s.size()) {
        auto comma = s.find(',', pos);
        auto item = s.substr(pos, comma == std::string::npos ? std::string::npos : comma - pos);
        std::size_t used = 0;
        unsigned long long v = 0;
        try {
            v = std::stoull(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (item.empty() || used != item.size()) throw ConfigError("bad integer list '" + s + "'");
        out.push_back(static_cast<std::size_t>(v));
        if (comma == std::string::npos) break;
        pos = comma + 1;
    }
    return out;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Dense retriever domain adaptation with pseudo-relevance labels"};
    app.require_subcommand(1);
    app.set_version_flag("--version", "dradapt 0.1.0");

    Overrides o;
    std::function<int()> action;

    auto stage_cmd = [&](const char* name, const char* help, auto fn) {
        auto* cmd = app.add_subcommand(name, help);
        add_common(cmd, o);
        cmd->callback([&, fn] {
            action = [&, fn] {
                pipeline::Pipeline p(resolve(o), options(o));
                print_result(fn(p));
                return 0;
            };
        });
        return cmd;
    };

    stage_cmd("index", "Build the BM25 index", [](pipeline::Pipeline& p) { return p.index(); });
    stage_cmd("retrieve", "BM25 top-depth retrieval for every query",
              [](pipeline::Pipeline& p) { return p.retrieve(); });
    stage_cmd("rerank", "Rescore the BM25 candidates", [](pipeline::Pipeline& p) { return p.rerank(); });
    stage_cmd("split", "Split queries into train and dev", [](pipeline::Pipeline& p) { return p.split(); });
    stage_cmd("triplets", "Generate pseudo-labeled triplets", [](pipeline::Pipeline& p) { return p.triplets(); });
    stage_cmd("attach-teacher", "Score triplets with the teacher",
              [](pipeline::Pipeline& p) { return p.attach_teacher(); });
    stage_cmd("devset", "Build pseudo dev judgments", [](pipeline::Pipeline& p) { return p.devset(); });
    stage_cmd("init", "Write the starting encoder state", [](pipeline::Pipeline& p) { return p.init_state(); });

    std::string loss_name;
    auto* train_cmd = stage_cmd("train", "Train the encoder on triplets", [&](pipeline::Pipeline& p) {
        auto loss = loss_name.empty() ? p.config().train.loss : train::loss_from_string(loss_name);
        return p.train(loss, loss == train::Loss::marginmse ? p.teacher_triplets_path() : p.triplets_path());
    });
    train_cmd->add_option("--loss", loss_name, "ranknet|marginmse");

    std::string variant_name = "a";
    auto* eval_cmd = stage_cmd("eval", "Evaluate zero-shot and adapted encoders", [&](pipeline::Pipeline& p) {
        return p.evaluate(pipeline::variant_from_string(variant_name));
    });
    eval_cmd->add_option("--variant", variant_name, "Label recorded in the report");

    auto* run_cmd = app.add_subcommand("pipeline", "Run every stage for one variant");
    add_common(run_cmd, o);
    run_cmd->add_option("--variant", variant_name, "a (bm25), b (bm25 + rerank), c (distillation)");
    run_cmd->callback([&] {
        action = [&] {
            pipeline::Pipeline p(resolve(o), options(o));
            print_summary(p.run(pipeline::variant_from_string(variant_name)));
            return 0;
        };
    });

    std::string ks, ms;
    auto* sweep_cmd = app.add_subcommand("sweep-k", "Run the pipeline for paired k and m values");
    add_common(sweep_cmd, o);
    sweep_cmd->add_option("--variant", variant_name);
    sweep_cmd->add_option("--ks", ks, "Comma-separated k values")->required();
    sweep_cmd->add_option("--ms", ms, "Comma-separated m values")->required();
    sweep_cmd->callback([&] {
        action = [&] {
            auto cfg = resolve(o);
            auto kv = parse_list(ks), mv = parse_list(ms);
            auto rows = pipeline::sweep_k(cfg, pipeline::variant_from_string(variant_name), kv, mv, options(o));
            std::cout << "k,m,zero_shot,adapted\n";
            for (const auto& r : rows)
                std::cout << r.k << ',' << r.m << ',' << r.zero_shot << ',' << r.adapted << '\n';
            return 0;
        };
    });

    std::string state_file, run_out;
    auto* dense_cmd = app.add_subcommand("dense-retrieve", "Rank the corpus with an encoder state");
    add_common(dense_cmd, o);
    dense_cmd->add_option("--state", state_file)->required()->check(CLI::ExistingFile);
    dense_cmd->add_option("--out", run_out)->required();
    std::size_t dense_depth = 100;
    dense_cmd->add_option("--depth", dense_depth);
    dense_cmd->callback([&] {
        action = [&] {
            auto cfg = resolve(o);
            auto docs = corpus::load_corpus(cfg.paths.corpus);
            auto queries = corpus::load_queries(cfg.paths.queries);
            auto state = encoder::load_state(state_file);
            auto embs = encoder::encode_corpus(state, docs);
            std::vector<corpus::RunList> runs;
            for (const auto& q : queries)
                runs.push_back(encoder::rank_embeddings(state, q.id, state.encode(q.text), docs, embs, dense_depth));
            corpus::write_run(runs, "dense", run_out);
            return 0;
        };
    });

    std::string run_a, run_b, qrels_file;
    std::size_t cmp_cutoff = 10;
    auto* cmp_cmd = app.add_subcommand("compare", "Per-query NDCG comparison of two run files");
    cmp_cmd->add_option("run_a", run_a)->required()->check(CLI::ExistingFile);
    cmp_cmd->add_option("run_b", run_b)->required()->check(CLI::ExistingFile);
    cmp_cmd->add_option("--qrels", qrels_file)->required()->check(CLI::ExistingFile);
    cmp_cmd->add_option("--cutoff", cmp_cutoff);
    cmp_cmd->callback([&] {
        action = [&] {
            auto qrels = corpus::load_qrels(qrels_file);
            auto a = eval::evaluate_run(corpus::read_run(run_a), qrels, cmp_cutoff);
            auto b = eval::evaluate_run(corpus::read_run(run_b), qrels, cmp_cutoff);
            eval::print_comparison(eval::compare_runs(a, b), std::cout);
            return 0;
        };
    });

    fixtures::SyntheticSpec spec;
    std::string fixture_out;
    auto* fix_cmd = app.add_subcommand("fixture", "Write synthetic source/ and target/ collections");
    fix_cmd->add_option("--out", fixture_out)->required();
    fix_cmd->add_option("--docs", spec.n_docs);
    fix_cmd->add_option("--num-queries", spec.n_queries);
    fix_cmd->add_option("--vocab", spec.vocab_size);
    fix_cmd->add_option("--tokens-per-doc", spec.tokens_per_doc);
    fix_cmd->add_option("--relevant", spec.relevant_per_query);
    fix_cmd->add_option("--signature", spec.signature_size);
    fix_cmd->add_option("--shift", spec.domain_shift);
    fix_cmd->add_option("--noise", spec.noise);
    fix_cmd->add_option("--seed", spec.seed);
    fix_cmd->callback([&] {
        action = [&] {
            spec.validate();
            fixtures::write_domain(fixtures::gen_domain(spec, fixtures::Domain::source), fs::path(fixture_out) / "source");
            fixtures::write_domain(fixtures::gen_domain(spec, fixtures::Domain::target), fs::path(fixture_out) / "target");
            std::cout << "wrote " << fixture_out << "/{source,target}\n";
            return 0;
        };
    });

    std::string pre_out;
    std::size_t pre_m = 10;
    auto* pre_cmd = app.add_subcommand("pretrain", "Supervised training on a labeled source collection");
    add_common(pre_cmd, o);
    pre_cmd->add_option("--out", pre_out, "Output state file")->required();
    pre_cmd->add_option("--negatives", pre_m, "Negatives per relevant document");
    pre_cmd->callback([&] {
        action = [&] {
            auto cfg = resolve(o);
            if (cfg.paths.qrels.empty()) throw ConfigError("pretrain needs --qrels");
            auto docs = corpus::load_corpus(cfg.paths.corpus);
            auto queries = corpus::load_queries(cfg.paths.queries);
            auto gold = corpus::load_qrels(cfg.paths.qrels);
            auto state = pipeline::pretrain(docs, queries, gold, cfg.encoder, cfg.train, pre_m, cfg.label.seed);
            if (auto parent = fs::path(pre_out).parent_path(); !parent.empty()) fs::create_directories(parent);
            encoder::save_state(state, pre_out);
            std::cout << "wrote " << pre_out << '\n';
            return 0;
        };
    });

    auto* cfg_cmd = app.add_subcommand("config", "Print the resolved configuration");
    add_common(cfg_cmd, o);
    cfg_cmd->callback([&] {
        action = [&] {
            std::cout << resolve(o).to_json().dump(2) << '\n';
            return 0;
        };
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int code = app.exit(e);
        return code == 0 ? 0 : kUsage;
    }

    try {
        return action ? action() : 0;
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return kUsage;
    } catch (const pipeline::StageError& e) {
        std::cerr << "stage failed: " << e.what() << '\n';
        return kStageFailure;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return kStageFailure;
    }
}
