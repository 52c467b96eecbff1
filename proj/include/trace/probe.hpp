#pragma once

#include <array>
#include <string>
#include <vector>

#include "trace/gbdt.hpp"
#include "trace/metrics.hpp"
#include "trace/models.hpp"
#include "trace/training.hpp"

namespace trace {

inline constexpr std::array<const char*, 4> kMetricNames = {"AUROC", "AUPRC", "F1", "Acc"};

// Per-task AUROC / AUPRC / F1 / Accuracy of probe models.
struct MetricsReport {
    std::vector<std::string> tasks;
    std::vector<std::array<double, 4>> values;  // aligned with `tasks`

    double value(const std::string& task, int metric) const;

    std::string to_json() const;
    static MetricsReport from_json(const std::string& text);
    void save(const std::string& path) const;
    static MetricsReport load(const std::string& path);
};

// Percentage uplift per task and metric against a baseline report, plus
// the per-metric mean over tasks.
struct UpliftReport {
    std::vector<std::string> tasks;
    std::vector<std::array<double, 4>> uplift_pct;
    std::array<double, 4> mean_uplift_pct{};

    std::string to_json() const;
    static UpliftReport from_json(const std::string& text);
    void save(const std::string& path) const;
    static UpliftReport load(const std::string& path);
};

// Aligned probe rows: one feature vector and one 8-column label set per
// held-out test journey.
struct ProbeDataset {
    std::vector<std::vector<double>> features;
    std::vector<TaskLabelSet> labels;
    std::vector<std::string> user_ids;
};

// Labels from the split futures; features from the frozen embedder applied
// to the split inputs.
ProbeDataset build_probe_dataset(const std::vector<SplitExample>& splits, const Embedder& embedder,
                                 const PageCatalog& catalog, const LabelConfig& label_cfg);

// Same rows over an externally built feature matrix (myopic baseline,
// aggregated embeddings).
ProbeDataset build_probe_dataset_from_features(const std::vector<SplitExample>& splits,
                                               std::vector<std::vector<double>> features,
                                               const PageCatalog& catalog, const LabelConfig& label_cfg);

// One-hot page/device/platform/locale of the most recent input event plus
// its three scaled numeric features; deliberately blind to history.
std::vector<std::vector<double>> myopic_features(const std::vector<SplitExample>& splits,
                                                 const VocabMaps& vocabs, const FeatureScaler& scaler);

struct ProbeOptions {
    std::vector<GbdtConfig> grid = default_probe_grid();
    int k_folds = 5;
    std::uint64_t seed = 17;
    std::vector<int> tasks = {0, 1, 2, 3, 4, 5, 6, 7};
    int threads = 1;  // per-task probes are independent
};

// One CV-tuned gradient-boosted probe per task; metrics are computed on
// the out-of-fold predictions of the selected configuration.
MetricsReport evaluate_embeddings(const ProbeDataset& data, const ProbeOptions& opts);

UpliftReport compute_uplift(const MetricsReport& model, const MetricsReport& baseline);

// Aligned plain-text tables.
std::string render_metrics_table(const MetricsReport& report, const std::string& title);
// Table-1 layout: mean uplift per metric, one row per model.
std::string render_mean_uplift_table(const std::vector<std::pair<std::string, UpliftReport>>& rows);
// Table-2 layout: AUROC uplift per task, one row per model.
std::string render_auroc_uplift_by_task(const std::vector<std::pair<std::string, UpliftReport>>& rows);

}  // namespace trace
