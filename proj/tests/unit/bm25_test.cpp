#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "dradapt/bm25.hpp"
#include "dradapt/error.hpp"
#include "oracles.hpp"
#include "test_util.hpp"

using namespace dradapt;
using dradapt::bm25::InvertedIndex;
using dradapt::corpus::Document;
using dradapt::corpus::Query;

namespace {

std::vector<Document> make_docs(const std::vector<std::string>& texts) {
    std::vector<Document> docs;
    for (std::size_t i = 0; i < texts.size(); ++i) docs.push_back({"d" + std::to_string(i + 1), "", texts[i]});
    return docs;
}

}  // namespace

TEST(Tokenize, Examples) {
    using V = std::vector<std::string>;
    EXPECT_EQ(bm25::tokenize("Hello, World!"), (V{"hello", "world"}));
    EXPECT_EQ(bm25::tokenize(""), V{});
    EXPECT_EQ(bm25::tokenize("T5-3B model"), (V{"t5", "3b", "model"}));
    EXPECT_EQ(bm25::tokenize("  --a__b  "), (V{"a", "b"}));
}

TEST(Tokenize, KeepsNonAsciiBytesInsideWords) {
    EXPECT_EQ(bm25::tokenize("café au lait"), (std::vector<std::string>{"café", "au", "lait"}));
}

TEST(BuildIndex, HandCount) {
    auto idx = InvertedIndex::build(make_docs({"a b", "b b"}));
    EXPECT_EQ(idx.doc_count(), 2u);
    EXPECT_EQ(idx.doc_frequency("b"), 2u);
    EXPECT_EQ(idx.term_frequency("b", 1), 2u);
    EXPECT_EQ(idx.term_frequency("a", 1), 0u);
    EXPECT_DOUBLE_EQ(idx.avg_doc_length(), 2.0);
}

TEST(BuildIndex, SingleEmptyDoc) {
    auto idx = InvertedIndex::build(make_docs({""}));
    EXPECT_EQ(idx.doc_length(0), 0u);
    EXPECT_EQ(idx.term_count(), 0u);
}

TEST(BuildIndex, Errors) {
    EXPECT_THROW(InvertedIndex::build({}), Error);
    auto docs = make_docs({"a"});
    EXPECT_THROW(InvertedIndex::build(docs, {0.0, 0.4}), ConfigError);
    EXPECT_THROW(InvertedIndex::build(docs, {0.9, 1.5}), ConfigError);
}

TEST(BuildIndex, Invariants) {
    std::mt19937_64 rng(3);
    auto docs = make_docs(oracle::random_texts(rng, 40, 15, 12));
    auto idx = InvertedIndex::build(docs);
    double total = 0;
    for (std::size_t d = 0; d < idx.doc_count(); ++d) total += idx.doc_length(d);
    EXPECT_DOUBLE_EQ(idx.avg_doc_length(), total / static_cast<double>(idx.doc_count()));
    std::vector<std::uint64_t> tf_sum(idx.doc_count(), 0);
    for (int w = 0; w < 15; ++w) {
        auto list = idx.postings("t" + std::to_string(w));
        for (std::size_t i = 0; i < list.size(); ++i) {
            if (i) EXPECT_LT(list[i - 1].doc, list[i].doc);
            EXPECT_GE(list[i].tf, 1u);
            tf_sum[list[i].doc] += list[i].tf;
        }
    }
    for (std::size_t d = 0; d < idx.doc_count(); ++d) EXPECT_EQ(tf_sum[d], idx.doc_length(d));
}

TEST(BuildIndex, Deterministic) {
    auto docs = make_docs({"x y z", "y y", "z"});
    EXPECT_TRUE(InvertedIndex::build(docs) == InvertedIndex::build(docs));
}

TEST(Idf, ClosedForms) {
    auto two = InvertedIndex::build(make_docs({"a b", "b c"}));
    EXPECT_NEAR(two.idf("a"), std::log(2.0), 1e-12);
    EXPECT_NEAR(two.idf("zzz"), std::log(6.0), 1e-12);
    auto one = InvertedIndex::build(make_docs({"a"}));
    EXPECT_NEAR(one.idf("a"), std::log(4.0 / 3.0), 1e-12);
}

TEST(Score, ZeroCases) {
    auto idx = InvertedIndex::build(make_docs({"a b", "c d"}));
    EXPECT_EQ(idx.score(Query{"q", "a"}, 1), 0.0);
    EXPECT_EQ(idx.score(Query{"q", ""}, 0), 0.0);
}

TEST(Score, DuplicateQueryTermsCountOnce) {
    auto idx = InvertedIndex::build(make_docs({"a b", "c d"}));
    EXPECT_EQ(idx.score(Query{"q", "a a a"}, 0), idx.score(Query{"q", "a"}, 0));
}

TEST(Score, ToyCorpusMatchesOracle) {
    std::vector<std::string> texts{"the cat sat", "the dog sat on the mat", "cats and dogs", "a mat", "the the the"};
    auto idx = InvertedIndex::build(make_docs(texts));
    for (const char* q : {"the cat", "mat sat", "dogs the", "zebra", "the"})
        for (std::size_t d = 0; d < texts.size(); ++d)
            EXPECT_NEAR(idx.score(Query{"q", q}, d), oracle::bm25(q, texts, d), 1e-9);
}

TEST(Score, RandomCorporaMatchOracle) {
    std::mt19937_64 rng(11);
    for (int c = 0; c < 20; ++c) {
        auto texts = oracle::random_texts(rng, 1 + rng() % 50, 10 + c, 12);
        auto idx = InvertedIndex::build(make_docs(texts), {1.2, 0.75});
        for (const auto& q : oracle::random_texts(rng, 5, 12 + c, 4)) {
            auto all = idx.score_all(bm25::tokenize(q));
            for (std::size_t d = 0; d < texts.size(); ++d) {
                EXPECT_NEAR(idx.score(Query{"q", q}, d), oracle::bm25(q, texts, d, 1.2, 0.75), 1e-9);
                EXPECT_EQ(all[d], idx.score(Query{"q", q}, d));  // same arithmetic
            }
        }
    }
}

TEST(Score, MoreOccurrencesNeverHurt) {
    std::mt19937_64 rng(5);
    for (int c = 0; c < 50; ++c) {
        auto texts = oracle::random_texts(rng, 10, 8, 8);
        const std::string q = "t" + std::to_string(rng() % 8);
        const std::size_t d = rng() % texts.size();
        auto before = oracle::bm25(q, texts, d);
        auto idx_before = InvertedIndex::build(make_docs(texts));
        texts[d] += " " + q;
        auto idx_after = InvertedIndex::build(make_docs(texts));
        EXPECT_GE(idx_after.score(Query{"q", q}, d), idx_before.score(Query{"q", q}, d) - 1e-12);
        EXPECT_GE(oracle::bm25(q, texts, d), before - 1e-12);
    }
}

TEST(Retrieve, TieRuleAndZeroScores) {
    auto docs = make_docs({"x", "a b", "a b", "a"});
    auto idx = InvertedIndex::build(docs);
    auto run = idx.retrieve(Query{"q", "a b"}, 10);
    ASSERT_EQ(run.entries.size(), 3u);  // d1 has no overlap
    EXPECT_EQ(run.entries[0].doc_id, "d2");
    EXPECT_EQ(run.entries[1].doc_id, "d3");
    EXPECT_EQ(run.entries[0].score, run.entries[1].score);
    EXPECT_EQ(run.entries[2].doc_id, "d4");
    EXPECT_THROW(idx.retrieve(Query{"q", "a"}, 0), ConfigError);
}

TEST(Retrieve, PrefixOfSortAllOracle) {
    std::mt19937_64 rng(17);
    for (int c = 0; c < 20; ++c) {
        auto texts = oracle::random_texts(rng, 5 + rng() % 45, 6 + c % 5, 6);
        auto docs = make_docs(texts);
        std::vector<std::string> ids;
        for (auto& d : docs) ids.push_back(d.id);
        auto idx = InvertedIndex::build(docs);
        for (const auto& q : oracle::random_texts(rng, 5, 8, 3)) {
            std::vector<double> ref;
            for (std::size_t d = 0; d < texts.size(); ++d) ref.push_back(idx.score(Query{"q", q}, d));
            const std::size_t k = 1 + rng() % 12;
            auto want = oracle::sort_all(ref, ids, k);
            auto got = idx.retrieve(Query{"q", q}, k);
            ASSERT_EQ(got.entries.size(), want.size());
            for (std::size_t i = 0; i < want.size(); ++i) EXPECT_EQ(got.entries[i].doc_id, ids[want[i]]);
        }
    }
}

TEST(IndexFile, RoundTripAndCorruption) {
    testutil::TempDir tmp;
    auto idx = InvertedIndex::build(make_docs({"a b c", "b c d", "d e"}), {1.1, 0.3});
    idx.save(tmp / "index.bin");
    auto back = InvertedIndex::load(tmp / "index.bin");
    EXPECT_TRUE(back == idx);
    EXPECT_EQ(back.retrieve(Query{"q", "b d"}, 5), idx.retrieve(Query{"q", "b d"}, 5));

    auto bytes = testutil::read_file(tmp / "index.bin");
    testutil::write_file(tmp / "short.bin", bytes.substr(0, bytes.size() - 3));
    EXPECT_THROW(InvertedIndex::load(tmp / "short.bin"), Error);
    testutil::write_file(tmp / "magic.bin", "XXXXXXXX" + bytes.substr(8));
    EXPECT_THROW(InvertedIndex::load(tmp / "magic.bin"), Error);
}
