#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "dradapt/corpus.hpp"
#include "dradapt/encoder.hpp"
#include "dradapt/pseudolabel.hpp"

namespace dradapt::train {

enum class Loss { ranknet, marginmse };

std::string_view to_string(Loss loss);
Loss loss_from_string(std::string_view s);

struct LossValue {
    double loss = 0.0;
    double d_pos = 0.0;  // dL/ds_pos
    double d_neg = 0.0;  // dL/ds_neg
};

/// -ln σ(s_pos - s_neg), evaluated as softplus(s_neg - s_pos).
LossValue ranknet_loss(double s_pos, double s_neg);

/// ((s_pos - s_neg) - (t_pos - t_neg))²
LossValue marginmse_loss(double s_pos, double s_neg, double t_pos, double t_neg);

/// lr_min + ½(lr_max - lr_min)(1 + cos(π t / T))
double cosine_lr(std::size_t t, std::size_t total, double lr_max, double lr_min);

struct AdamParams {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

struct TrainConfig {
    Loss loss = Loss::ranknet;
    std::size_t batch_size = 8;
    std::size_t steps = 10000;
    double lr_max = 1e-2;
    double lr_min = 0.0;
    AdamParams adam;
    std::size_t eval_every = 1000;
    std::size_t eval_cutoff = 10;
    std::uint64_t seed = 0;
    std::optional<std::filesystem::path> init_from;
    bool dev_full_corpus = false;  // rank the whole corpus instead of the judged docs

    /// Learning rate used for transformer fine-tuning; too small for the
    /// bag-of-embeddings encoder, kept for reference runs.
    static constexpr double kTransformerLr = 2e-6;

    void validate() const;
};

/// Adam moments, same shape as the embedding table.
struct AdamState {
    explicit AdamState(const encoder::EncoderState& state)
        : m(state.table().size(), 0.0), v(state.table().size(), 0.0) {}

    std::vector<double> m;
    std::vector<double> v;
    std::uint64_t t = 0;
};

/// One training triplet resolved to bucket bags.
struct Example {
    const encoder::BucketBag* query = nullptr;
    const encoder::BucketBag* pos = nullptr;
    const encoder::BucketBag* neg = nullptr;
    std::optional<double> teacher_pos;
    std::optional<double> teacher_neg;
    const label::Triplet* source = nullptr;  // diagnostics only
};

/// bucket -> dL/d(row), averaged over the batch.
using SparseGrad = std::map<std::uint32_t, std::vector<double>>;

struct BatchGrad {
    double mean_loss = 0.0;
    SparseGrad rows;
};

/// Loss and embedding-row gradients of a batch. Throws TrainingError on a
/// non-finite value or a marginmse example without teacher scores.
BatchGrad batch_gradient(const encoder::EncoderState& state, std::span<const Example> batch,
                         Loss loss);

/// Sparse Adam with bias correction: only rows present in `grad` have their
/// parameters and moments updated. Increments adam.t.
void adam_update(encoder::EncoderState& state, AdamState& adam, const SparseGrad& grad,
                 double lr, const AdamParams& params);

/// batch_gradient followed by adam_update; returns the batch mean loss.
double backprop_step(encoder::EncoderState& state, AdamState& adam, std::span<const Example> batch,
                     Loss loss, double lr, const AdamParams& params);

/// Bucket bags for query and document ids, computed once per training run.
class BagCache {
public:
    BagCache(const encoder::EncoderState& state, const corpus::TextLookup& texts)
        : state_(state), texts_(texts) {}

    const encoder::BucketBag& query(const std::string& id);
    const encoder::BucketBag& doc(const std::string& id);

private:
    const encoder::EncoderState& state_;
    const corpus::TextLookup& texts_;
    std::unordered_map<std::string, encoder::BucketBag> queries_;
    std::unordered_map<std::string, encoder::BucketBag> docs_;
};

/// Mean NDCG over dev queries with judgments. Each query ranks its judged
/// documents, or the whole corpus when `full_corpus` is set.
double dev_ndcg(const encoder::EncoderState& state, std::span<const corpus::Query> dev_queries,
                std::span<const corpus::QrelEntry> dev_qrels,
                std::span<const corpus::Document> corpus, std::size_t cutoff, bool full_corpus);

struct HistoryEntry {
    std::size_t step = 0;
    double lr = 0.0;
    std::optional<double> loss;  // mean train loss since the previous evaluation
    double dev_ndcg = 0.0;

    bool operator==(const HistoryEntry&) const = default;
};

struct TrainResult {
    encoder::EncoderState best_state;
    std::size_t best_step = 0;
    double best_dev_ndcg = 0.0;
    std::vector<HistoryEntry> history;
};

/// Runs cfg.steps Adam steps over shuffled, cycled batches with a cosine
/// learning-rate decay. Dev NDCG is measured at step 0, every eval_every
/// steps and at the final step; the best-scoring state (earliest on ties)
/// is returned.
TrainResult train(encoder::EncoderState initial, std::span<const label::Triplet> triplets,
                  std::span<const corpus::QrelEntry> dev_qrels,
                  std::span<const corpus::Query> dev_queries,
                  std::span<const corpus::Query> train_queries,
                  std::span<const corpus::Document> corpus, const TrainConfig& cfg);

/// CSV `step,lr,loss,dev_ndcg10`; the loss cell is empty at step 0.
void write_history_csv(std::span<const HistoryEntry> history, const std::filesystem::path& path);

}  // namespace dradapt::train
