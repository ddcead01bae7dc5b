#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "dradapt/bm25.hpp"
#include "dradapt/corpus.hpp"
#include "dradapt/encoder.hpp"
#include "dradapt/error.hpp"
#include "dradapt/evaluator.hpp"
#include "dradapt/pseudolabel.hpp"
#include "dradapt/reranker.hpp"
#include "dradapt/trainer.hpp"

namespace dradapt::pipeline {

/// Overrides every remote scorer endpoint when set.
inline constexpr const char* kEndpointEnv = "DRADAPT_SCORER_ENDPOINT";

enum class ScorerMode { none, lexical, remote, oracle, constant, same };

std::string_view to_string(ScorerMode mode);
ScorerMode scorer_mode_from_string(std::string_view s);

struct ScorerConfig {
    ScorerMode mode = ScorerMode::none;
    std::string endpoint;
    std::size_t batch_size = 32;
    long timeout_ms = 30000;
    double constant = 0.0;  // score returned in `constant` mode
};

enum class Variant { a_bm25, b_bm25_t5, c_distill };

std::string_view to_string(Variant v);
Variant variant_from_string(std::string_view s);

struct PipelineConfig {
    struct Paths {
        std::filesystem::path corpus;
        std::filesystem::path queries;
        std::filesystem::path qrels;  // gold judgments, used by eval and oracle scoring
        std::filesystem::path workdir = "work";
    } paths;
    struct Bm25 {
        bm25::Params params;
        std::size_t depth = 100;
    } bm25;
    label::LabelConfig label;
    struct Rerank {
        ScorerConfig scorer;
        std::size_t depth = 100;
    } rerank;
    ScorerConfig teacher{ScorerMode::same, {}, 32, 30000, 0.0};
    encoder::InitOptions encoder;
    train::TrainConfig train;
    struct Eval {
        std::size_t cutoff = 10;
        std::size_t depth = 100;
    } eval;

    /// Missing keys keep their defaults; unknown keys are rejected. A
    /// `label.preset` name sets label.k and label.m.
    static PipelineConfig from_json(const nlohmann::json& j);
    static PipelineConfig load(const std::filesystem::path& path);
    nlohmann::json to_json() const;
};

/// One line of `manifest.jsonl`: the stage, a hash of the configuration it
/// depends on, and FNV-1a-64 hashes of every input and output file.
struct ManifestEntry {
    std::string stage;
    std::string config_hash;
    std::vector<std::pair<std::string, std::string>> inputs;
    std::vector<std::pair<std::string, std::string>> outputs;
    std::optional<std::size_t> records;

    nlohmann::ordered_json to_json() const;
    static ManifestEntry from_json(const nlohmann::json& j);
};

/// Per-directory manifest, one entry per stage, rewritten in stage order.
class Manifest {
public:
    explicit Manifest(std::filesystem::path dir);

    const std::filesystem::path& dir() const noexcept { return dir_; }
    const ManifestEntry* find(std::string_view stage) const;
    void record(ManifestEntry entry);

    /// Path as stored in the manifest: relative when under dir().
    std::string label(const std::filesystem::path& p) const;

private:
    void save() const;

    std::filesystem::path dir_;
    std::vector<ManifestEntry> entries_;
};

std::string hash_file(const std::filesystem::path& path);
std::string hash_json(const nlohmann::json& j);

struct StageResult {
    std::string stage;
    bool executed = false;
    std::vector<std::filesystem::path> outputs;
    std::optional<std::size_t> records;
};

struct PipelineReport {
    Variant variant = Variant::a_bm25;
    eval::MetricReport bm25;
    eval::MetricReport zero_shot;
    eval::MetricReport adapted;
    std::size_t triplets = 0;
    std::size_t best_step = 0;
    double best_dev_ndcg = 0.0;

    nlohmann::ordered_json to_json() const;
};

struct Options {
    bool force = false;
    std::ostream* log = nullptr;
    /// Holds index, retrieval, rerank and query-split artifacts; defaults to
    /// the workdir. Set by the k-sweep so every (k, m) run shares them.
    std::optional<std::filesystem::path> shared_dir;
};

/// Stages of the adaptation pipeline over one workdir. Every stage reads its
/// inputs from files, writes its outputs under the workdir, and is skipped
/// when the manifest already holds an entry with the same configuration
/// and input hashes whose outputs are intact (unless Options::force).
class Pipeline {
public:
    Pipeline(PipelineConfig cfg, Options opts = {});

    const PipelineConfig& config() const noexcept { return cfg_; }
    std::filesystem::path run_dir() const { return cfg_.paths.workdir; }
    std::filesystem::path shared_dir() const;

    // Artifact locations.
    std::filesystem::path index_path() const { return shared_dir() / "index.bin"; }
    std::filesystem::path bm25_run_path() const { return shared_dir() / "run.bm25.trec"; }
    std::filesystem::path rerank_run_path() const { return shared_dir() / "run.rerank.trec"; }
    std::filesystem::path train_queries_path() const { return shared_dir() / "queries.train.jsonl"; }
    std::filesystem::path dev_queries_path() const { return shared_dir() / "queries.dev.jsonl"; }
    std::filesystem::path triplets_path() const { return run_dir() / "triplets.jsonl"; }
    std::filesystem::path teacher_triplets_path() const { return run_dir() / "triplets.teacher.jsonl"; }
    std::filesystem::path dev_qrels_path() const { return run_dir() / "dev.qrels.tsv"; }
    std::filesystem::path initial_state_path() const { return run_dir() / "state0.bin"; }
    std::filesystem::path state_path() const { return run_dir() / "state.bin"; }
    std::filesystem::path history_path() const { return run_dir() / "history.csv"; }
    std::filesystem::path train_summary_path() const { return run_dir() / "train.json"; }
    std::filesystem::path report_path() const { return run_dir() / "report.json"; }

    StageResult index();
    StageResult retrieve();
    /// Mode `none` copies the BM25 run (cut at the rerank depth).
    StageResult rerank();
    StageResult split();
    StageResult triplets();
    StageResult attach_teacher();
    StageResult devset();
    StageResult init_state();
    StageResult train(train::Loss loss, const std::filesystem::path& triplets);
    /// Zero-shot and adapted encoders ranked over the full corpus for every
    /// judged query, plus the BM25 run, scored against paths.qrels.
    StageResult evaluate(Variant variant = Variant::a_bm25);

    /// index → retrieve → rerank (b, c) → split → triplets → teacher (c) →
    /// devset → init → train → evaluate. Failures are rethrown as StageError.
    PipelineReport run(Variant variant);

    PipelineReport read_report() const;

private:
    template <typename Fn>
    StageResult run_stage(Manifest& manifest, const std::string& stage,
                          const nlohmann::json& config, std::vector<std::filesystem::path> inputs,
                          std::vector<std::filesystem::path> outputs, Fn&& body);

    const std::vector<corpus::Document>& docs();
    const std::vector<corpus::Query>& queries();
    std::vector<std::string> doc_ids();
    rerank::ScorerPtr make_scorer(const ScorerConfig& sc);
    nlohmann::json scorer_json(const ScorerConfig& sc) const;
    void note(const std::string& msg) const;

    PipelineConfig cfg_;
    Options opts_;
    Manifest& shared_manifest();

    Manifest run_manifest_;
    std::optional<Manifest> shared_manifest_;  // empty when it is the run directory
    std::optional<std::vector<corpus::Document>> docs_;
    std::optional<std::vector<corpus::Query>> queries_;
};

/// A stage failed; what() starts with the stage name.
class StageError : public Error {
public:
    StageError(std::string stage, const std::string& what)
        : Error(stage + ": " + what), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

/// Supervised triplets from gold judgments: each judged-relevant document
/// (grade > 0, graded order) is a positive with `m` negatives drawn outside
/// the query's relevant set.
std::vector<label::Triplet> supervised_triplets(std::span<const corpus::QrelEntry> gold,
                                                std::size_t m, std::uint64_t seed,
                                                std::span<const std::string> corpus_doc_ids);

/// Trains an encoder on a labeled source collection; its output is the
/// zero-shot starting point for adaptation on the target.
encoder::EncoderState pretrain(std::span<const corpus::Document> docs,
                               std::span<const corpus::Query> queries,
                               std::span<const corpus::QrelEntry> gold,
                               const encoder::InitOptions& init, const train::TrainConfig& cfg,
                               std::size_t m, std::uint64_t seed);

struct SweepRow {
    std::size_t k = 0;
    std::size_t m = 0;
    double zero_shot = 0.0;
    double adapted = 0.0;
};

/// Runs the pipeline for each paired (k, m) under workdir/k<K>_m<M>, sharing
/// index, retrieval, rerank and split artifacts. Writes sweep.csv and the
/// whitespace-separated sweep.dat into the workdir.
std::vector<SweepRow> sweep_k(const PipelineConfig& cfg, Variant variant,
                              std::span<const std::size_t> ks, std::span<const std::size_t> ms,
                              Options opts = {});

}  // namespace dradapt::pipeline
