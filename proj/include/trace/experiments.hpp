#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "trace/probe.hpp"
#include "trace/synth.hpp"
#include "trace/training.hpp"
#include "trace/tsne.hpp"

namespace trace {

// Loaded dataset directory: corpus splits plus the generator artifacts
// every experiment shares.
struct RunContext {
    std::string data_dir;
    GeneratorConfig gen_cfg;
    CorpusManifest manifest;
    PageCatalog catalog;
    LabelConfig label_cfg;
    std::vector<Journey> train, val, test;

    static RunContext load(const std::string& data_dir);
};

// Derived deterministic artifacts shared by every model variant on the
// same dataset.
struct DataBundle {
    VocabMaps vocabs;
    FeatureScaler scaler;

    static DataBundle build(const RunContext& ctx, int max_events);
};

struct VariantSpec {
    std::string name;   // artifact directory name, e.g. "trace", "st_pw2", "trace_h2"
    std::string kind;   // checkpoint model-kind tag
    int task = -1;      // label column for single-task variants
    TraceConfig model;  // resolved for transformer/LSTM variants
    MiniGptConfig gpt;  // resolved for the mini-GPT variant
};

// Known variant names: trace, st_<task>, mt_lstm, mini_gpt, trace_trig,
// trace_h2..trace_h4, trace_no_session, trace_no_time.
VariantSpec make_variant(const std::string& name);

struct TrainedVariant {
    VariantSpec spec;
    std::string run_dir;
    TrainReport report;
};

// Trains one variant and writes checkpoint.bin, vocab.json, scaler.json
// and train_report.json into <out_root>/<variant name>/.
TrainedVariant train_variant(const RunContext& ctx, const DataBundle& bundle, const VariantSpec& spec,
                             const TrainConfig& tcfg, const std::string& out_root);

// Test-side split examples (deterministic, shared by all evaluations).
std::vector<SplitExample> test_splits(const RunContext& ctx);

MetricsReport probe_myopic(const RunContext& ctx, const DataBundle& bundle, const ProbeOptions& opts);
MetricsReport probe_run_dir(const RunContext& ctx, const std::string& run_dir, const ProbeOptions& opts);
// mean of the given runs' embeddings per test journey (ST aggregated)
MetricsReport probe_aggregated(const RunContext& ctx, const std::vector<std::string>& run_dirs,
                               const ProbeOptions& opts);

// ------------------------------------------------------------ experiments --

struct ExperimentConfig {
    std::string data_dir = "data";
    std::string out_dir = "runs";
    std::vector<std::string> variants = {"trace", "st_cohort", "st_aggregated", "mt_lstm", "mini_gpt"};
    TrainConfig train;
    int probe_threads = 2;
    std::uint64_t probe_seed = 17;
    int k_folds = 5;
    int parallel_trainings = 1;
    int tsne_sample = 700;

    std::string to_json() const;
    static ExperimentConfig from_json(const std::string& text);
    static ExperimentConfig load(const std::string& path);
};

struct CompareResult {
    std::vector<std::pair<std::string, UpliftReport>> uplifts;  // model name -> uplift
    MetricsReport baseline;
    std::string table_mean_uplift;
    std::string table_auroc_by_task;
};

// Trains the configured variant matrix on shared splits, probes everything
// against the myopic baseline and renders the comparison tables.
CompareResult compare_models(const RunContext& ctx, const ExperimentConfig& cfg);

struct AblationResult {
    std::string dataset_hash;
    std::vector<std::pair<std::string, UpliftReport>> uplifts;
    std::string table;
};

// Table-3 variants: base, +trig encodings, h in {2,3,4}, no-session,
// no-time, all on identical data and seeds.
AblationResult ablation_suite(const RunContext& ctx, const ExperimentConfig& cfg);

// --------------------------------------------------------------- latency --

struct BenchReport {
    struct Row {
        int h = 0;
        double mean_ms = 0.0;
        double std_ms = 0.0;
    };
    std::vector<Row> rows;
    double budget_ms = 100.0;
    bool budget_breached = false;
    int n_calls = 0;
    int warmup = 0;
    int journey_events = 0;

    std::string to_json() const;
    static BenchReport from_json(const std::string& text);
    void save(const std::string& path) const;
    std::string render() const;
};

// Single-journey forward-pass latency (encoding excluded) over repeated
// calls, per encoder count. Parameters are rebuilt per h with the
// checkpoint's dimensions; timing does not depend on weight values.
BenchReport latency_bench(const std::string& checkpoint_path, const VocabMaps& vocabs,
                          const FeatureScaler& scaler, const Journey& sample,
                          const std::vector<int>& h_values, int n_calls = 10000, int warmup = 100);

// ------------------------------------------------------------------ t-SNE --

struct TsneExport {
    std::vector<int> sample_rows;      // indices into the test splits
    std::vector<std::string> labels;   // next visited page per sampled row
    TsneResult result;
};

// Stratified sample over the catalog's designated common pages by the
// next-visited-page label, projected to 2-d.
TsneExport tsne_export(const RunContext& ctx, const std::string& run_dir, int n_sample,
                       const TsneConfig& tcfg, const std::string& csv_path,
                       const std::string& svg_path = std::string());

// ---------------------------------------------------------------- manifest --

struct RunManifest {
    std::string config_hash;
    std::uint64_t seed = 0;
    std::map<std::string, std::string> inputs;     // file -> content hash
    std::map<std::string, std::string> artifacts;  // file -> content hash
    double wall_seconds = 0.0;

    void add_input(const std::string& path);
    void add_artifact(const std::string& path);
    std::string to_json() const;
    static RunManifest from_json(const std::string& text);
    void save(const std::string& path) const;
    static RunManifest load(const std::string& path);
};

}  // namespace trace
