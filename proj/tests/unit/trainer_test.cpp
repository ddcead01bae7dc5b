#include <cmath>
#include <numbers>
#include <random>

#include <gtest/gtest.h>

#include "dradapt/error.hpp"
#include "dradapt/trainer.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dradapt;
using namespace dradapt::train;
using encoder::BucketBag;
using encoder::EncoderState;
using encoder::Similarity;

namespace {

struct Batch {
    std::vector<oracle::Case> cases;
    std::vector<BucketBag> bags;
    std::vector<Example> examples;
};

Batch random_batch(std::mt19937_64& rng, std::size_t buckets, std::size_t n) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Batch b;
    b.cases.resize(n);
    b.bags.reserve(3 * n);
    for (auto& c : b.cases) {
        c.q = oracle::random_bag(rng, buckets);
        c.pos = oracle::random_bag(rng, buckets);
        c.neg = oracle::random_bag(rng, buckets);
        c.t_pos = u(rng);
        c.t_neg = u(rng);
        for (const auto* bag : {&c.q, &c.pos, &c.neg}) b.bags.push_back({bag->w});
    }
    for (std::size_t i = 0; i < n; ++i) {
        Example ex;
        ex.query = &b.bags[3 * i];
        ex.pos = &b.bags[3 * i + 1];
        ex.neg = &b.bags[3 * i + 2];
        ex.teacher_pos = b.cases[i].t_pos;
        ex.teacher_neg = b.cases[i].t_neg;
        b.examples.push_back(ex);
    }
    return b;
}

std::vector<double> dense(const SparseGrad& g, std::size_t buckets, std::size_t dim) {
    std::vector<double> out(buckets * dim, 0.0);
    for (const auto& [row, v] : g)
        for (std::size_t j = 0; j < dim; ++j) out[row * dim + j] = v[j];
    return out;
}

// Topic t owns words w{t}_0..w{t}_5; query t is "w{t}_0 w{t}_1".
struct Toy {
    std::vector<corpus::Document> docs;
    std::vector<corpus::Query> queries;
    std::vector<corpus::QrelEntry> qrels;
    std::vector<label::Triplet> triplets;
};

Toy separable(std::size_t topics) {
    Toy t;
    auto word = [](std::size_t topic, std::size_t i) { return "w" + std::to_string(topic) + "_" + std::to_string(i); };
    for (std::size_t k = 0; k < topics; ++k) {
        for (std::size_t d = 0; d < 3; ++d) {
            std::string text;
            for (std::size_t i = 0; i < 6; ++i) text += word(k, (i + d) % 6) + " ";
            t.docs.push_back({"d" + std::to_string(k) + "_" + std::to_string(d), "", text});
        }
        const std::string qid = "q" + std::to_string(k);
        t.queries.push_back({qid, word(k, 0) + " " + word(k, 1)});
        t.qrels.push_back({qid, "d" + std::to_string(k) + "_0", 1});
        t.qrels.push_back({qid, "d" + std::to_string((k + 1) % topics) + "_0", 0});
        t.qrels.push_back({qid, "d" + std::to_string((k + 2) % topics) + "_0", 0});
        for (std::size_t d = 0; d < 3; ++d)
            t.triplets.push_back({qid, "d" + std::to_string(k) + "_" + std::to_string(d),
                                  "d" + std::to_string((k + 1 + d) % topics) + "_" + std::to_string(d), 1.0, 0.0});
    }
    return t;
}

EncoderState small_state(std::size_t buckets, std::size_t dim, std::uint64_t seed, Similarity sim = Similarity::dot) {
    encoder::InitOptions o;
    o.buckets = buckets;
    o.dim = dim;
    o.seed = seed;
    o.scale = 0.1;
    o.similarity = sim;
    return encoder::init_state(o);
}

}  // namespace

TEST(Losses, Examples) {
    EXPECT_NEAR(ranknet_loss(0, 0).loss, std::log(2.0), 1e-15);
    EXPECT_NEAR(ranknet_loss(1, 0).loss, 0.313261687518223, 1e-12);
    EXPECT_NEAR(ranknet_loss(0, 0).d_pos, -0.5, 1e-15);
    EXPECT_NEAR(ranknet_loss(0, 0).d_neg, 0.5, 1e-15);
    EXPECT_EQ(marginmse_loss(0.75, 0.25, 1.5, 1.0).loss, 0.0);
    auto m = marginmse_loss(1.0, 0.0, 0.0, 0.0);
    EXPECT_EQ(m.loss, 1.0);
    EXPECT_EQ(m.d_pos, 2.0);
    EXPECT_EQ(m.d_neg, -2.0);
}

TEST(Losses, RanknetStableAtExtremes) {
    auto big = ranknet_loss(-800, 800);
    EXPECT_NEAR(big.loss, 1600.0, 1e-9);
    EXPECT_NEAR(big.d_pos, -1.0, 1e-12);
    auto tiny = ranknet_loss(800, -800);
    EXPECT_GE(tiny.loss, 0.0);
    EXPECT_LT(tiny.loss, 1e-300);
}

TEST(Losses, Names) {
    EXPECT_EQ(loss_from_string("ranknet"), Loss::ranknet);
    EXPECT_EQ(to_string(Loss::marginmse), "marginmse");
    EXPECT_THROW(loss_from_string("hinge"), ConfigError);
}

TEST(CosineLr, Endpoints) {
    EXPECT_DOUBLE_EQ(cosine_lr(0, 100, 1e-2, 1e-4), 1e-2);
    EXPECT_NEAR(cosine_lr(100, 100, 1e-2, 1e-4), 1e-4, 1e-18);
    EXPECT_NEAR(cosine_lr(50, 100, 1e-2, 0.0), 5e-3, 1e-15);
    EXPECT_NEAR(cosine_lr(25, 100, 1.0, 0.0), 0.5 * (1 + std::cos(std::numbers::pi / 4)), 1e-15);
    for (std::size_t t = 1; t <= 100; ++t) EXPECT_LE(cosine_lr(t, 100, 1.0, 0.0), cosine_lr(t - 1, 100, 1.0, 0.0));
}

class GradientCheck : public ::testing::TestWithParam<std::tuple<bool, bool>> {};

TEST_P(GradientCheck, MatchesFiniteDifferences) {
    const auto [cosine, margin] = GetParam();
    std::mt19937_64 rng(cosine * 2 + margin + 10);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const std::size_t B = 6, D = 3;
    for (int c = 0; c < 10; ++c) {
        EncoderState state(B, D, 0, cosine ? Similarity::cosine : Similarity::dot);
        for (auto& x : state.table()) x = u(rng);
        auto batch = random_batch(rng, B, 1 + c % 4);
        auto g = batch_gradient(state, batch.examples, margin ? Loss::marginmse : Loss::ranknet);
        std::vector<double> table(state.table().begin(), state.table().end());
        EXPECT_NEAR(g.mean_loss, oracle::batch_loss(table, D, batch.cases, cosine, margin), 1e-12);
        auto fd = oracle::fd_gradient(table, D, batch.cases, cosine, margin);
        auto an = dense(g.rows, B, D);
        for (std::size_t i = 0; i < fd.size(); ++i) EXPECT_NEAR(an[i], fd[i], 1e-6) << "entry " << i;
    }
}

INSTANTIATE_TEST_SUITE_P(AllCombinations, GradientCheck,
                         ::testing::Combine(::testing::Bool(), ::testing::Bool()));

TEST(BatchGradient, OnlyTouchedRows) {
    EncoderState state = small_state(50, 4, 1);
    BucketBag q{{{1, 1.0}}}, p{{{2, 0.5}, {3, 0.5}}}, n{{{4, 1.0}}};
    Example ex{&q, &p, &n, std::nullopt, std::nullopt, nullptr};
    auto g = batch_gradient(state, std::span<const Example>(&ex, 1), Loss::ranknet);
    std::vector<std::uint32_t> rows;
    for (const auto& [r, v] : g.rows) rows.push_back(r);
    EXPECT_EQ(rows, (std::vector<std::uint32_t>{1, 2, 3, 4}));
}

TEST(BatchGradient, MissingTeacherIsAnError) {
    EncoderState state = small_state(10, 2, 1);
    BucketBag q{{{1, 1.0}}}, p{{{2, 1.0}}}, n{{{3, 1.0}}};
    Example ex{&q, &p, &n, 1.0, std::nullopt, nullptr};
    EXPECT_THROW(batch_gradient(state, std::span<const Example>(&ex, 1), Loss::marginmse), TrainingError);
    EXPECT_NO_THROW(batch_gradient(state, std::span<const Example>(&ex, 1), Loss::ranknet));
}

TEST(BatchGradient, NonFiniteIsAnError) {
    EncoderState state = small_state(10, 2, 1);
    state.table()[2] = std::numeric_limits<double>::infinity();
    BucketBag q{{{1, 1.0}}}, p{{{2, 1.0}}}, n{{{3, 1.0}}};
    Example ex{&q, &p, &n, std::nullopt, std::nullopt, nullptr};
    EXPECT_THROW(batch_gradient(state, std::span<const Example>(&ex, 1), Loss::ranknet), TrainingError);
}

TEST(Adam, FirstStepIsLrTimesSign) {
    EncoderState state = small_state(4, 2, 3);
    const std::vector<double> before(state.table().begin(), state.table().end());
    AdamState adam(state);
    SparseGrad g{{1, {0.3, -2.0}}, {3, {-1e-3, 0.0}}};
    adam_update(state, adam, g, 0.01, AdamParams{});
    EXPECT_EQ(adam.t, 1u);
    EXPECT_NEAR(state.table()[2] - before[2], -0.01, 1e-9);
    EXPECT_NEAR(state.table()[3] - before[3], 0.01, 1e-9);
    EXPECT_NEAR(state.table()[6] - before[6], 0.01, 1e-7);
    EXPECT_EQ(state.table()[7], before[7]);
    for (std::size_t i : {0, 1, 4, 5}) EXPECT_EQ(state.table()[i], before[i]);
}

TEST(Adam, ZeroGradientLeavesStateUnchanged) {
    EncoderState state = small_state(20, 3, 4);
    const auto before = state;
    AdamState adam(state);
    // marginmse with the student already matching the teacher margin
    BucketBag q{{{1, 1.0}}}, p{{{2, 1.0}}}, n{{{3, 1.0}}};
    const auto qe = state.encode(q);
    const double sp = state.score(qe, state.encode(p)), sn = state.score(qe, state.encode(n));
    Example ex{&q, &p, &n, sp, sn, nullptr};
    const double loss = backprop_step(state, adam, std::span<const Example>(&ex, 1), Loss::marginmse, 0.1, AdamParams{});
    EXPECT_NEAR(loss, 0.0, 1e-20);
    for (std::size_t i = 0; i < state.table().size(); ++i) EXPECT_NEAR(state.table()[i], before.table()[i], 1e-12);
}

TEST(Adam, SmallStepsDescend) {
    std::mt19937_64 rng(8);
    for (bool margin : {false, true}) {
        for (int c = 0; c < 10; ++c) {
            EncoderState state = small_state(12, 4, 100 + c);
            auto batch = random_batch(rng, 12, 4);
            const Loss loss = margin ? Loss::marginmse : Loss::ranknet;
            const double before = batch_gradient(state, batch.examples, loss).mean_loss;
            AdamState adam(state);
            backprop_step(state, adam, batch.examples, loss, 1e-3, AdamParams{});
            EXPECT_LT(batch_gradient(state, batch.examples, loss).mean_loss, before);
        }
    }
}

TEST(TrainConfig, Validate) {
    TrainConfig ok;
    EXPECT_NO_THROW(ok.validate());
    for (auto mutate : std::vector<std::function<void(TrainConfig&)>>{
             [](TrainConfig& c) { c.batch_size = 0; }, [](TrainConfig& c) { c.steps = 0; },
             [](TrainConfig& c) { c.lr_max = -1; }, [](TrainConfig& c) { c.lr_min = 1; },
             [](TrainConfig& c) { c.eval_every = 0; }}) {
        TrainConfig c;
        mutate(c);
        EXPECT_THROW(c.validate(), ConfigError);
    }
}

TEST(Train, LearnsSeparableData) {
    auto toy = separable(8);
    TrainConfig cfg;
    cfg.steps = 2000;
    cfg.eval_every = 250;
    cfg.batch_size = 4;
    auto res = train::train(small_state(256, 8, 1), toy.triplets, toy.qrels, toy.queries, toy.queries, toy.docs, cfg);
    EXPECT_GE(res.best_dev_ndcg, 0.9);
    ASSERT_GE(res.history.size(), 2u);
    EXPECT_EQ(res.history.front().step, 0u);
    EXPECT_FALSE(res.history.front().loss.has_value());
    EXPECT_EQ(res.history.back().step, 2000u);
    for (std::size_t i = 1; i < res.history.size(); ++i) {
        EXPECT_EQ(res.history[i].step, std::min<std::size_t>(250 * i, 2000));
        EXPECT_TRUE(res.history[i].loss.has_value());
        EXPECT_DOUBLE_EQ(res.history[i].lr, cosine_lr(res.history[i].step - 1, 2000, cfg.lr_max, cfg.lr_min));
    }
}

TEST(Train, CheckpointRuleIsEarliestBest) {
    auto toy = separable(6);
    TrainConfig cfg;
    cfg.steps = 600;
    cfg.eval_every = 100;
    auto res = train::train(small_state(128, 6, 2), toy.triplets, toy.qrels, toy.queries, toy.queries, toy.docs, cfg);
    double best = -1;
    std::size_t step = 0;
    for (const auto& h : res.history)
        if (h.dev_ndcg > best) {
            best = h.dev_ndcg;
            step = h.step;
        }
    EXPECT_EQ(res.best_step, step);
    EXPECT_EQ(res.best_dev_ndcg, best);
    EXPECT_DOUBLE_EQ(dev_ndcg(res.best_state, toy.queries, toy.qrels, toy.docs, 10, false), best);
}

TEST(Train, Deterministic) {
    auto toy = separable(5);
    TrainConfig cfg;
    cfg.steps = 300;
    cfg.eval_every = 100;
    cfg.seed = 42;
    auto a = train::train(small_state(64, 4, 3), toy.triplets, toy.qrels, toy.queries, toy.queries, toy.docs, cfg);
    auto b = train::train(small_state(64, 4, 3), toy.triplets, toy.qrels, toy.queries, toy.queries, toy.docs, cfg);
    EXPECT_TRUE(a.best_state == b.best_state);
    EXPECT_EQ(a.history, b.history);
    cfg.seed = 43;
    auto c = train::train(small_state(64, 4, 3), toy.triplets, toy.qrels, toy.queries, toy.queries, toy.docs, cfg);
    EXPECT_NE(a.history, c.history);
}

TEST(Train, Errors) {
    auto toy = separable(3);
    TrainConfig cfg;
    cfg.steps = 10;
    EXPECT_THROW(train::train(small_state(32, 2, 1), {}, toy.qrels, toy.queries, toy.queries, toy.docs, cfg), Error);
    cfg.loss = Loss::marginmse;
    auto no_teacher = toy.triplets;
    no_teacher[1].teacher_neg.reset();
    EXPECT_THROW(train::train(small_state(32, 2, 1), no_teacher, toy.qrels, toy.queries, toy.queries, toy.docs, cfg),
                 Error);
}

TEST(DevNdcg, JudgedVersusFullCorpus) {
    auto toy = separable(4);
    EncoderState zero(16, 2);
    // all scores tie: judged docs sort by id, the relevant d{k}_0 ranks by its id among them
    const double judged = dev_ndcg(zero, toy.queries, toy.qrels, toy.docs, 10, false);
    const double full = dev_ndcg(zero, toy.queries, toy.qrels, toy.docs, 10, true);
    EXPECT_GT(judged, 0.0);
    EXPECT_LE(full, judged);
}

TEST(HistoryCsv, Format) {
    testutil::TempDir tmp;
    std::vector<HistoryEntry> h{{0, 0.01, std::nullopt, 0.25}, {10, 0.005, 0.5, 0.75}};
    write_history_csv(h, tmp / "h.csv");
    const auto text = testutil::read_file(tmp / "h.csv");
    EXPECT_EQ(text.substr(0, text.find('\n')), "step,lr,loss,dev_ndcg10");
    EXPECT_NE(text.find("\n0,"), std::string::npos);
    EXPECT_NE(text.find("\n10,"), std::string::npos);
}
