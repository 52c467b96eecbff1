#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "trace/clickstream.hpp"
#include "trace/models.hpp"
#include "trace/synth.hpp"

namespace trace {

// Reciprocal-positive-proportion class weights for a chosen task subset.
struct ClassWeights {
    std::vector<int> tasks;   // label-column indices
    std::vector<double> w;    // aligned with `tasks`
};

ClassWeights compute_class_weights(const std::vector<TaskLabelSet>& labels,
                                   const std::vector<int>& tasks);

// Sum over tasks of class-weighted BCE on logits (the positive term of
// task k carries weight w_k; tasks are equally weighted).
Tensor multitask_loss(const std::vector<Tensor>& logits, const TaskLabelSet& labels,
                      const ClassWeights& weights, Tape* tape);

struct TrainConfig {
    int epochs = 30;
    int batch_size = 64;
    double lr = 1e-3;
    std::uint64_t seed = 1;
    int patience = 3;       // early stop on validation loss
    double clip_norm = 5.0;

    void validate() const;
};

struct TrainReport {
    std::vector<double> train_total;                 // per epoch
    std::vector<double> val_total;
    std::vector<std::vector<double>> train_per_task;  // [epoch][task]
    std::vector<std::vector<double>> val_per_task;
    int best_epoch = -1;  // 0-based
    double best_val = 0.0;
    int epochs_run = 0;
    double wall_seconds = 0.0;
    std::uint64_t seed = 0;
    std::string config_hash;

    std::string to_json() const;
    static TrainReport from_json(const std::string& text);
    void save(const std::string& path) const;
};

// One encoded, labeled split example.
struct LabeledExample {
    EncodedJourney enc;
    TaskLabelSet labels;
    std::string user_id;
};

// Split + label + encode a corpus deterministically: each journey's split
// point depends only on (split_seed, user_id). Journeys too short to split
// are dropped.
std::vector<LabeledExample> make_examples(const std::vector<Journey>& journeys,
                                          const PageCatalog& catalog, const LabelConfig& label_cfg,
                                          std::uint64_t split_seed, const VocabMaps& vocabs,
                                          const FeatureScaler& scaler, int max_events,
                                          const FeatureConfig& features);

// Input journeys of the deterministic splits (for vocab/scaler fitting and
// probe-side feature building).
std::vector<SplitExample> make_splits(const std::vector<Journey>& journeys, std::uint64_t split_seed);

// Per-example loss terms: one scalar tensor per task head.
using ExampleLossFn = std::function<std::vector<Tensor>(int index, bool training, Rng& rng, Tape* tape)>;

// Mini-batch descent with shuffling, gradient clipping, adaptive-moment
// updates and best-epoch restoration. Deterministic given cfg.seed.
TrainReport train_loop(ParamStore& store, int n_train, int n_val, const ExampleLossFn& loss_fn,
                       const TrainConfig& cfg, int n_tasks);

TrainReport train_trace_model(TraceModel& model, const std::vector<LabeledExample>& train,
                              const std::vector<LabeledExample>& val, const ClassWeights& weights,
                              const TrainConfig& cfg);

TrainReport train_lstm_model(LstmModel& model, const std::vector<LabeledExample>& train,
                             const std::vector<LabeledExample>& val, const ClassWeights& weights,
                             const TrainConfig& cfg);

// Next-token objective over page-name sequences.
TrainReport train_minigpt_model(MiniGptModel& model, const std::vector<LabeledExample>& train,
                                const std::vector<LabeledExample>& val, const TrainConfig& cfg);

// Mean validation loss of a trained transformer (bitwise reproducible).
double evaluate_trace_loss(const TraceModel& model, const std::vector<LabeledExample>& examples,
                           const ClassWeights& weights);

}  // namespace trace
