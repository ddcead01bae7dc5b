#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "dradapt/fixtures.hpp"
#include "dradapt/pipeline.hpp"
#include "test_util.hpp"

using namespace dradapt;
using namespace dradapt::pipeline;
using nlohmann::json;

namespace {

class PipelineTest : public ::testing::Test {
protected:
    void SetUp() override {
        fixtures::SyntheticSpec spec;
        spec.n_docs = 200;
        spec.n_queries = 30;
        spec.vocab_size = 500;
        spec.tokens_per_doc = 15;
        spec.seed = 5;
        fixtures::write_domain(fixtures::gen_domain(spec), tmp_ / "data");
    }

    PipelineConfig config(const std::string& workdir) const {
        PipelineConfig c;
        c.paths.corpus = tmp_ / "data/corpus.jsonl";
        c.paths.queries = tmp_ / "data/queries.jsonl";
        c.paths.qrels = tmp_ / "data/qrels.tsv";
        c.paths.workdir = tmp_ / workdir;
        c.bm25.depth = 30;
        c.rerank.depth = 30;
        c.label.dev_query_count = 5;
        c.label.dev_neg = 10;
        c.encoder.buckets = 512;
        c.encoder.dim = 8;
        c.train.steps = 60;
        c.train.eval_every = 20;
        return c;
    }

    testutil::TempDir tmp_;
    std::ostringstream log_;
};

std::vector<std::string> stages_in(const std::filesystem::path& manifest) {
    std::vector<std::string> out;
    std::ifstream in(manifest);
    for (std::string line; std::getline(in, line);)
        if (!line.empty()) out.push_back(json::parse(line).at("stage").get<std::string>());
    return out;
}

}  // namespace

TEST(Config, RejectsUnknownKeys) {
    EXPECT_THROW(PipelineConfig::from_json(json{{"bogus", 1}}), ConfigError);
    EXPECT_THROW(PipelineConfig::from_json(json{{"train", {{"stepz", 3}}}}), ConfigError);
    EXPECT_THROW(PipelineConfig::from_json(json{{"train", {{"steps", -3}}}}), ConfigError);
    EXPECT_THROW(PipelineConfig::from_json(json{{"rerank", {{"mode", "same"}}}}), ConfigError);
    EXPECT_THROW(PipelineConfig::from_json(json{{"label", {{"preset", "nope"}}}}), ConfigError);
}

TEST(Config, DefaultsAndPreset) {
    auto d = PipelineConfig::from_json(json::object());
    EXPECT_EQ(d.label.k, 1u);
    EXPECT_EQ(d.label.m, 10u);
    EXPECT_DOUBLE_EQ(d.bm25.params.k1, 0.9);
    EXPECT_DOUBLE_EQ(d.bm25.params.b, 0.4);
    EXPECT_EQ(d.train.steps, 10000u);
    EXPECT_EQ(d.teacher.mode, ScorerMode::same);
    auto p = PipelineConfig::from_json(json{{"label", {{"preset", "TREC-COVID"}}}});
    EXPECT_EQ(p.label.k, 10u);
    EXPECT_EQ(p.label.m, 150u);
}

TEST(Config, ToJsonRoundTrips) {
    json j{{"paths", {{"corpus", "c.jsonl"}, {"workdir", "w"}}},
           {"label", {{"k", 3}, {"m", 7}, {"exclusion", "candidates"}}},
           {"rerank", {{"mode", "remote"}, {"endpoint", "http://localhost:9"}}},
           {"train", {{"loss", "marginmse"}, {"lr_max", 0.5}, {"seed", 9}}},
           {"encoder", {{"similarity", "cosine"}}}};
    auto c = PipelineConfig::from_json(j);
    auto again = PipelineConfig::from_json(c.to_json());
    EXPECT_EQ(again.to_json(), c.to_json());
    EXPECT_EQ(again.label.k, 3u);
    EXPECT_EQ(again.rerank.scorer.mode, ScorerMode::remote);
    EXPECT_EQ(again.train.loss, train::Loss::marginmse);
    EXPECT_EQ(again.encoder.similarity, encoder::Similarity::cosine);
}

TEST(Config, LoadReportsBadJson) {
    testutil::TempDir tmp;
    testutil::write_file(tmp / "c.json", "{ not json");
    EXPECT_THROW(PipelineConfig::load(tmp / "c.json"), Error);
    EXPECT_THROW(PipelineConfig::load(tmp / "missing.json"), Error);
}

TEST(Hashing, FileAndJson) {
    testutil::TempDir tmp;
    testutil::write_file(tmp / "a", "hello");
    EXPECT_EQ(hash_file(tmp / "a"), "a430d84680aabd0b");
    EXPECT_EQ(hash_json(json{{"a", 1}}), hash_json(json{{"a", 1}}));
    EXPECT_NE(hash_json(json{{"a", 1}}), hash_json(json{{"a", 2}}));
}

TEST_F(PipelineTest, RunWritesReportAndManifest) {
    Options opts;
    opts.log = &log_;
    Pipeline p(config("run"), opts);
    auto rep = p.run(Variant::a_bm25);
    EXPECT_GT(rep.triplets, 0u);
    EXPECT_EQ(rep.adapted.per_query.size(), 30u);
    EXPECT_GE(rep.best_dev_ndcg, 0.0);
    for (const auto& f : {p.report_path(), p.state_path(), p.history_path(), p.triplets_path(), p.index_path()})
        EXPECT_TRUE(std::filesystem::exists(f)) << f;
    EXPECT_EQ(stages_in(tmp_ / "run/manifest.jsonl"),
              (std::vector<std::string>{"index", "retrieve", "rerank", "split", "triplets", "devset", "init",
                                        "train", "eval"}));
    auto back = p.read_report();
    EXPECT_EQ(back.adapted.mean, rep.adapted.mean);
    EXPECT_EQ(back.zero_shot.per_query, rep.zero_shot.per_query);
}

TEST_F(PipelineTest, CachedStagesAreSkippedUnlessForced) {
    Options opts;
    opts.log = &log_;
    Pipeline(config("cache"), opts).run(Variant::a_bm25);
    Pipeline p(config("cache"), opts);
    EXPECT_FALSE(p.index().executed);
    EXPECT_FALSE(p.retrieve().executed);
    EXPECT_FALSE(p.triplets().executed);

    // a changed label config reruns triplets but not retrieval
    auto c = config("cache");
    c.label.m = 3;
    Pipeline q(c, opts);
    EXPECT_FALSE(q.retrieve().executed);
    EXPECT_TRUE(q.triplets().executed);

    // a damaged output is rebuilt
    testutil::write_file(tmp_ / "cache/run.bm25.trec", "junk\n");
    EXPECT_TRUE(Pipeline(config("cache"), opts).retrieve().executed);

    opts.force = true;
    EXPECT_TRUE(Pipeline(config("cache"), opts).index().executed);
}

TEST_F(PipelineTest, RerankNoneCopiesBm25Run) {
    Options opts;
    opts.log = &log_;
    Pipeline p(config("none"), opts);
    p.index();
    p.retrieve();
    p.rerank();
    auto bm25 = corpus::read_run(p.bm25_run_path());
    auto rr = corpus::read_run(p.rerank_run_path());
    ASSERT_EQ(bm25.size(), rr.size());
    for (std::size_t i = 0; i < bm25.size(); ++i) EXPECT_EQ(bm25[i].entries, rr[i].entries);
}

TEST_F(PipelineTest, StageErrorNamesTheStage) {
    auto c = config("err");
    c.paths.corpus = tmp_ / "missing.jsonl";
    Options opts;
    opts.log = &log_;
    try {
        Pipeline(c, opts).run(Variant::a_bm25);
        FAIL() << "expected StageError";
    } catch (const StageError& e) {
        EXPECT_EQ(e.stage(), "index");
        EXPECT_EQ(std::string(e.what()).rfind("index: ", 0), 0u);
    }
    // variant b without a scorer
    try {
        Pipeline(config("err_b"), opts).run(Variant::b_bm25_t5);
        FAIL() << "expected an error";
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("rerank"), std::string::npos) << e.what();
    }
}

TEST_F(PipelineTest, OracleRerankDistillRuns) {
    auto c = config("distill");
    c.rerank.scorer.mode = ScorerMode::oracle;
    Options opts;
    opts.log = &log_;
    Pipeline p(c, opts);
    auto rep = p.run(Variant::c_distill);
    EXPECT_TRUE(std::filesystem::exists(p.teacher_triplets_path()));
    EXPECT_EQ(rep.variant, Variant::c_distill);
    std::ifstream in(p.teacher_triplets_path());
    std::string line;
    ASSERT_TRUE(std::getline(in, line));
    auto j = json::parse(line);
    EXPECT_TRUE(j.contains("t_pos"));
    EXPECT_TRUE(j.contains("t_neg"));
}

TEST_F(PipelineTest, SinglePairSweepMatchesPipeline) {
    auto c = config("sweep");
    Options opts;
    opts.log = &log_;
    const std::size_t ks[] = {1}, ms[] = {10};
    auto rows = sweep_k(c, Variant::a_bm25, ks, ms, opts);
    ASSERT_EQ(rows.size(), 1u);

    auto direct = config("direct");
    auto rep = Pipeline(direct, opts).run(Variant::a_bm25);
    EXPECT_EQ(rows[0].adapted, rep.adapted.mean);
    EXPECT_EQ(rows[0].zero_shot, rep.zero_shot.mean);

    const auto csv = testutil::read_file(tmp_ / "sweep/sweep.csv");
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "k,m,zero_shot_ndcg10,ndcg10");
    EXPECT_TRUE(std::filesystem::exists(tmp_ / "sweep/sweep.dat"));
    EXPECT_TRUE(std::filesystem::exists(tmp_ / "sweep/k1_m10/report.json"));

    const std::size_t bad[] = {1, 2};
    EXPECT_THROW(sweep_k(c, Variant::a_bm25, bad, ms, opts), ConfigError);
}

TEST_F(PipelineTest, SupervisedTripletsAvoidRelevantDocs) {
    auto gold = corpus::load_qrels(tmp_ / "data/qrels.tsv");
    auto docs = corpus::load_corpus(tmp_ / "data/corpus.jsonl");
    std::vector<std::string> ids;
    for (const auto& d : docs) ids.push_back(d.id);
    auto trips = supervised_triplets(gold, 4, 1, ids);
    EXPECT_EQ(trips.size(), gold.size() * 4);
    auto by_q = corpus::qrels_by_query(gold);
    for (const auto& t : trips) {
        EXPECT_GT(by_q[t.query_id][t.pos_doc_id], 0);
        EXPECT_EQ(by_q[t.query_id].count(t.neg_doc_id), 0u);
    }
    EXPECT_EQ(trips, supervised_triplets(gold, 4, 1, ids));
}
