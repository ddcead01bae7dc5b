#include "dradapt/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "dradapt/error.hpp"
#include "dradapt/evaluator.hpp"
#include "dradapt/rng.hpp"

namespace dradapt::train {
namespace {

using encoder::BucketBag;
using encoder::Embedding;
using encoder::EncoderState;

double softplus(double x) { return std::max(x, 0.0) + std::log1p(std::exp(-std::abs(x))); }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

struct SimGrad {
    double score = 0.0;
    Embedding d_a;  // ds/da
    Embedding d_b;  // ds/db
};

SimGrad similarity_grad(const EncoderState& state, const Embedding& a, const Embedding& b) {
    SimGrad g;
    const double d = encoder::dot(a, b);
    if (state.similarity() == encoder::Similarity::dot) {
        g.score = d;
        g.d_a = b;
        g.d_b = a;
        return g;
    }
    const double na = std::sqrt(encoder::dot(a, a));
    const double nb = std::sqrt(encoder::dot(b, b));
    g.d_a.assign(a.size(), 0.0);
    g.d_b.assign(b.size(), 0.0);
    if (na == 0.0 || nb == 0.0) return g;  // score pinned to 0
    g.score = d / (na * nb);
    for (std::size_t j = 0; j < a.size(); ++j) {
        g.d_a[j] = b[j] / (na * nb) - g.score * a[j] / (na * na);
        g.d_b[j] = a[j] / (na * nb) - g.score * b[j] / (nb * nb);
    }
    return g;
}

void scatter(SparseGrad& rows, const BucketBag& bag, const Embedding& g, std::size_t dim) {
    for (auto [bucket, w] : bag.weights) {
        auto& r = rows[bucket];
        if (r.empty()) r.assign(dim, 0.0);
        for (std::size_t j = 0; j < dim; ++j) r[j] += w * g[j];
    }
}

std::string describe(const Example& ex, std::size_t index) {
    if (!ex.source) return "example " + std::to_string(index);
    return "triplet (" + ex.source->query_id + ", " + ex.source->pos_doc_id + ", " +
           ex.source->neg_doc_id + ")";
}

bool all_finite(const Embedding& v) {
    return std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); });
}

}  // namespace

std::string_view to_string(Loss loss) { return loss == Loss::ranknet ? "ranknet" : "marginmse"; }

Loss loss_from_string(std::string_view s) {
    if (s == "ranknet") return Loss::ranknet;
    if (s == "marginmse") return Loss::marginmse;
    throw ConfigError("unknown loss '" + std::string(s) + "'");
}

LossValue ranknet_loss(double s_pos, double s_neg) {
    const double delta = s_pos - s_neg;
    const double wrong = sigmoid(-delta);  // 1 - σ(Δ)
    return {softplus(-delta), -wrong, wrong};
}

LossValue marginmse_loss(double s_pos, double s_neg, double t_pos, double t_neg) {
    const double r = (s_pos - s_neg) - (t_pos - t_neg);
    return {r * r, 2.0 * r, -2.0 * r};
}

double cosine_lr(std::size_t t, std::size_t total, double lr_max, double lr_min) {
    if (total == 0 || t > total) throw ConfigError("cosine_lr requires 0 <= t <= T, T >= 1");
    const double frac = static_cast<double>(t) / static_cast<double>(total);
    return lr_min + 0.5 * (lr_max - lr_min) * (1.0 + std::cos(std::numbers::pi * frac));
}

void TrainConfig::validate() const {
    if (batch_size < 1) throw ConfigError("train.batch_size must be >= 1");
    if (steps < 1) throw ConfigError("train.steps must be >= 1");
    if (eval_every < 1) throw ConfigError("train.eval_every must be >= 1");
    if (eval_cutoff < 1) throw ConfigError("eval cutoff must be >= 1");
    if (!(lr_min >= 0.0) || !(lr_max >= lr_min))
        throw ConfigError("train requires lr_max >= lr_min >= 0");
}

BatchGrad batch_gradient(const EncoderState& state, std::span<const Example> batch, Loss loss) {
    if (batch.empty()) throw Error("empty batch");
    BatchGrad out;
    const auto dim = state.dim();
    double loss_sum = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const auto& ex = batch[i];
        const auto eq = state.encode(*ex.query);
        const auto ep = state.encode(*ex.pos);
        const auto en = state.encode(*ex.neg);
        const auto gp = similarity_grad(state, eq, ep);
        const auto gn = similarity_grad(state, eq, en);
        LossValue lv;
        if (loss == Loss::ranknet) {
            lv = ranknet_loss(gp.score, gn.score);
        } else {
            if (!ex.teacher_pos || !ex.teacher_neg)
                throw TrainingError("marginmse needs teacher scores; missing on " + describe(ex, i));
            lv = marginmse_loss(gp.score, gn.score, *ex.teacher_pos, *ex.teacher_neg);
        }
        if (!std::isfinite(lv.loss) || !std::isfinite(lv.d_pos) || !std::isfinite(lv.d_neg))
            throw TrainingError("non-finite loss on " + describe(ex, i) + " (s_pos=" +
                                std::to_string(gp.score) + ", s_neg=" + std::to_string(gn.score) +
                                ")");
        loss_sum += lv.loss;

        Embedding d_query(dim), d_pos(dim), d_neg(dim);
        for (std::size_t j = 0; j < dim; ++j) {
            d_query[j] = lv.d_pos * gp.d_a[j] + lv.d_neg * gn.d_a[j];
            d_pos[j] = lv.d_pos * gp.d_b[j];
            d_neg[j] = lv.d_neg * gn.d_b[j];
        }
        scatter(out.rows, *ex.query, d_query, dim);
        scatter(out.rows, *ex.pos, d_pos, dim);
        scatter(out.rows, *ex.neg, d_neg, dim);
    }
    const double n = static_cast<double>(batch.size());
    for (auto& [bucket, g] : out.rows) {
        for (auto& x : g) x /= n;
        if (!all_finite(g))
            throw TrainingError("non-finite gradient on embedding row " + std::to_string(bucket));
    }
    out.mean_loss = loss_sum / n;
    return out;
}

void adam_update(EncoderState& state, AdamState& adam, const SparseGrad& grad, double lr,
                 const AdamParams& p) {
    ++adam.t;
    const double t = static_cast<double>(adam.t);
    const double bc1 = 1.0 - std::pow(p.beta1, t);
    const double bc2 = 1.0 - std::pow(p.beta2, t);
    const auto dim = state.dim();
    auto table = state.table();
    for (const auto& [bucket, g] : grad) {
        const std::size_t off = static_cast<std::size_t>(bucket) * dim;
        for (std::size_t j = 0; j < dim; ++j) {
            auto& m = adam.m[off + j];
            auto& v = adam.v[off + j];
            m = p.beta1 * m + (1.0 - p.beta1) * g[j];
            v = p.beta2 * v + (1.0 - p.beta2) * g[j] * g[j];
            const double m_hat = m / bc1;
            const double v_hat = v / bc2;
            table[off + j] -= lr * m_hat / (std::sqrt(v_hat) + p.eps);
        }
    }
}

double backprop_step(EncoderState& state, AdamState& adam, std::span<const Example> batch,
                     Loss loss, double lr, const AdamParams& params) {
    auto g = batch_gradient(state, batch, loss);
    adam_update(state, adam, g.rows, lr, params);
    return g.mean_loss;
}

const BucketBag& BagCache::query(const std::string& id) {
    auto it = queries_.find(id);
    if (it == queries_.end()) it = queries_.emplace(id, state_.bag(texts_.query(id).text)).first;
    return it->second;
}

const BucketBag& BagCache::doc(const std::string& id) {
    auto it = docs_.find(id);
    if (it == docs_.end()) it = docs_.emplace(id, state_.bag(texts_.doc(id).full_text())).first;
    return it->second;
}

double dev_ndcg(const EncoderState& state, std::span<const corpus::Query> dev_queries,
                std::span<const corpus::QrelEntry> dev_qrels,
                std::span<const corpus::Document> corpus, std::size_t cutoff, bool full_corpus) {
    auto judged = corpus::qrels_by_query(dev_qrels);
    std::unordered_map<std::string, const corpus::Query*> known;
    for (const auto& q : dev_queries) known.emplace(q.id, &q);
    for (const auto& [qid, grades] : judged)
        if (!known.count(qid)) throw Error("dev qrels mention unknown query '" + qid + "'");

    std::vector<encoder::Embedding> corpus_embs;
    if (full_corpus) corpus_embs = encoder::encode_corpus(state, corpus);
    corpus::TextLookup texts({}, corpus);

    double sum = 0.0;
    std::size_t n = 0;
    std::vector<std::string> ranking;
    std::vector<corpus::Document> judged_docs;
    std::vector<encoder::Embedding> judged_embs;
    for (const auto& q : dev_queries) {
        auto it = judged.find(q.id);
        if (it == judged.end()) continue;
        const auto qe = state.encode(q.text);
        corpus::RunList run;
        if (full_corpus) {
            run = encoder::rank_embeddings(state, q.id, qe, corpus, corpus_embs, cutoff);
        } else {
            judged_docs.clear();
            judged_embs.clear();
            for (const auto& [did, g] : it->second) judged_docs.push_back(texts.doc(did));
            std::sort(judged_docs.begin(), judged_docs.end(),
                      [](const auto& a, const auto& b) { return a.id < b.id; });
            for (const auto& d : judged_docs) judged_embs.push_back(state.encode(d.full_text()));
            run = encoder::rank_embeddings(state, q.id, qe, judged_docs, judged_embs, cutoff);
        }
        ranking.clear();
        for (const auto& e : run.entries) ranking.push_back(e.doc_id);
        sum += eval::ndcg_at_k(ranking, it->second, cutoff);
        ++n;
    }
    return n ? sum / static_cast<double>(n) : 0.0;
}

TrainResult train(EncoderState initial, std::span<const label::Triplet> triplets,
                  std::span<const corpus::QrelEntry> dev_qrels,
                  std::span<const corpus::Query> dev_queries,
                  std::span<const corpus::Query> train_queries,
                  std::span<const corpus::Document> corpus, const TrainConfig& cfg) {
    cfg.validate();
    if (triplets.empty()) throw Error("no training triplets");
    if (cfg.loss == Loss::marginmse) {
        for (const auto& t : triplets)
            if (!t.has_teacher())
                throw Error("marginmse needs teacher scores; missing on triplet (" + t.query_id +
                            ", " + t.pos_doc_id + ", " + t.neg_doc_id + ")");
    }
    const bool has_dev = !dev_qrels.empty();
    if (!has_dev && cfg.eval_every <= cfg.steps) throw Error("empty dev set");

    std::vector<corpus::Query> all_queries(train_queries.begin(), train_queries.end());
    all_queries.insert(all_queries.end(), dev_queries.begin(), dev_queries.end());
    corpus::TextLookup texts(all_queries, corpus);

    TrainResult result{initial, 0, 0.0, {}};
    EncoderState state = std::move(initial);
    AdamState adam(state);
    BagCache bags(state, texts);
    std::vector<Example> examples;
    examples.reserve(triplets.size());
    for (const auto& t : triplets) {
        examples.push_back(Example{&bags.query(t.query_id), &bags.doc(t.pos_doc_id),
                                   &bags.doc(t.neg_doc_id), t.teacher_pos, t.teacher_neg, &t});
    }

    auto evaluate = [&](const EncoderState& s) {
        return has_dev ? dev_ndcg(s, dev_queries, dev_qrels, corpus, cfg.eval_cutoff,
                                  cfg.dev_full_corpus)
                       : 0.0;
    };

    result.best_dev_ndcg = evaluate(state);
    result.history.push_back({0, cosine_lr(0, cfg.steps, cfg.lr_max, cfg.lr_min), std::nullopt,
                              result.best_dev_ndcg});

    std::vector<std::size_t> order(examples.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    Rng rng(cfg.seed);
    rng.shuffle(order);
    std::size_t cursor = 0;
    std::vector<Example> batch;
    batch.reserve(cfg.batch_size);
    double loss_sum = 0.0;
    std::size_t loss_n = 0;

    for (std::size_t step = 1; step <= cfg.steps; ++step) {
        const double lr = cosine_lr(step - 1, cfg.steps, cfg.lr_max, cfg.lr_min);
        batch.clear();
        while (batch.size() < cfg.batch_size) {
            if (cursor == order.size()) {
                rng.shuffle(order);
                cursor = 0;
            }
            batch.push_back(examples[order[cursor++]]);
        }
        loss_sum += backprop_step(state, adam, batch, cfg.loss, lr, cfg.adam);
        ++loss_n;

        if (step % cfg.eval_every == 0 || step == cfg.steps) {
            const double ndcg = evaluate(state);
            result.history.push_back({step, lr, loss_sum / static_cast<double>(loss_n), ndcg});
            loss_sum = 0.0;
            loss_n = 0;
            if (ndcg > result.best_dev_ndcg) {
                result.best_dev_ndcg = ndcg;
                result.best_step = step;
                result.best_state = state;
            }
        }
    }
    if (!has_dev) {
        result.best_state = std::move(state);
        result.best_step = cfg.steps;
    }
    return result;
}

void write_history_csv(std::span<const HistoryEntry> history, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + path.string());
    out << "step,lr,loss,dev_ndcg10\n";
    char buf[160];
    for (const auto& h : history) {
        if (h.loss)
            std::snprintf(buf, sizeof buf, "%zu,%.10g,%.10g,%.6f\n", h.step, h.lr, *h.loss,
                          h.dev_ndcg);
        else
            std::snprintf(buf, sizeof buf, "%zu,%.10g,,%.6f\n", h.step, h.lr, h.dev_ndcg);
        out << buf;
    }
    out.flush();
    if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace dradapt::train
