#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "trace/encoding.hpp"
#include "trace/optim.hpp"
#include "trace/tensor.hpp"

namespace trace {

// Shared configuration for the transformer variants and the comparable
// LSTM (which reuses the same input stage and shared-FFN head structure;
// encoder-specific fields are simply unused there).
struct TraceConfig {
    int embed_dim = 32;  // per categorical attribute
    int n_cat = 4;
    FeatureConfig features;
    int max_events = 100;   // crop window L
    int max_sessions = 50;  // session-position table covers ranks 1..max_sessions
    int d_model = 128;
    int n_heads = 8;
    int ffn_dim = 128;
    int n_encoders = 1;  // h
    double dropout_rate = 0.1;
    int shared_hidden = 64;
    int out_dim = 32;  // embedding dimension d
    int n_tasks = 5;
    bool use_trig_pe = false;  // add static sinusoidal encodings (ablation)
    int lstm_hidden = 128;
    double ln_eps = 1e-5;

    int vocab_page = 0, vocab_device = 0, vocab_platform = 0, vocab_locale = 0;

    int feature_dim() const { return embed_dim * n_cat + features.numeric_width(); }  // D
    void set_vocab_sizes(const VocabMaps& v);
    void validate() const;

    std::string to_json() const;
    static TraceConfig from_json(const std::string& text);
};

// Transformer encoder over encoded journeys with a shared sigmoid-bounded
// 32-d bottleneck and per-task affine heads. n_tasks == 1 gives the
// dedicated single-task variant.
class TraceModel {
public:
    TraceModel(TraceConfig cfg, std::uint64_t init_seed);
    TraceModel(TraceConfig cfg, ParamStore&& loaded);

    struct Output {
        Tensor embedding;            // [1 × out_dim], components in (0,1)
        std::vector<Tensor> logits;  // n_tasks × [1 × 1]
    };

    Output forward(const EncodedJourney& enc, bool training, Rng& rng, Tape* tape) const;
    // forward in inference mode with heads skipped
    std::vector<double> embed(const EncodedJourney& enc) const;

    const TraceConfig& config() const { return cfg_; }
    ParamStore& params() { return *store_; }
    const ParamStore& params() const { return *store_; }

    void save(const std::string& path, const std::string& kind, std::uint64_t seed) const;

private:
    Tensor assemble_input(const EncodedJourney& enc, Tape* tape) const;
    Tensor backbone(const EncodedJourney& enc, bool training, Rng& rng, Tape* tape) const;

    TraceConfig cfg_;
    std::shared_ptr<ParamStore> store_;
};

// Comparable LSTM: identical input stage, one recurrent layer consuming
// real positions oldest to newest, final hidden state into the same
// shared-FFN head structure.
class LstmModel {
public:
    LstmModel(TraceConfig cfg, std::uint64_t init_seed);
    LstmModel(TraceConfig cfg, ParamStore&& loaded);

    TraceModel::Output forward(const EncodedJourney& enc, bool training, Rng& rng, Tape* tape) const;
    std::vector<double> embed(const EncodedJourney& enc) const;

    const TraceConfig& config() const { return cfg_; }
    ParamStore& params() { return *store_; }
    const ParamStore& params() const { return *store_; }

    void save(const std::string& path, std::uint64_t seed) const;

private:
    Tensor assemble_input(const EncodedJourney& enc, Tape* tape) const;

    TraceConfig cfg_;
    std::shared_ptr<ParamStore> store_;
};

struct MiniGptConfig {
    int vocab = 0;  // page-name vocabulary incl. pad/unknown
    int d_model = 64;
    int n_heads = 4;
    int ffn_dim = 128;
    int max_events = 100;
    double dropout_rate = 0.1;
    double ln_eps = 1e-5;

    void validate() const;
    std::string to_json() const;
    static MiniGptConfig from_json(const std::string& text);
};

// GPT-style next-token model over page-name sequences: one causal
// transformer block, embeddings taken as the mean of block outputs over
// real positions.
class MiniGptModel {
public:
    MiniGptModel(MiniGptConfig cfg, std::uint64_t init_seed);
    MiniGptModel(MiniGptConfig cfg, ParamStore&& loaded);

    // next-token logits, one row per input row
    Tensor forward(const std::vector<int>& tokens, const std::vector<std::uint8_t>& mask,
                   bool training, Rng& rng, Tape* tape) const;
    std::vector<double> embed(const std::vector<int>& tokens, const std::vector<std::uint8_t>& mask) const;

    const MiniGptConfig& config() const { return cfg_; }
    ParamStore& params() { return *store_; }
    const ParamStore& params() const { return *store_; }

    void save(const std::string& path, std::uint64_t seed) const;

private:
    Tensor block(const std::vector<int>& tokens, const std::vector<std::uint8_t>& mask, bool training,
                 Rng& rng, Tape* tape) const;

    MiniGptConfig cfg_;
    std::shared_ptr<ParamStore> store_;
};

// Componentwise mean of task-specific embeddings (the ST-aggregated
// comparison model).
std::vector<double> st_aggregate(const std::vector<std::vector<double>>& embeddings);

inline constexpr const char* kKindTrace = "trace";
inline constexpr const char* kKindSingleTaskPrefix = "single_task:";
inline constexpr const char* kKindLstm = "mt_lstm";
inline constexpr const char* kKindMiniGpt = "mini_gpt";

// Model-agnostic embed() over a checkpoint: all four families expose the
// same journey -> R^d contract, so downstream evaluation never branches.
class Embedder {
public:
    static Embedder load(const std::string& checkpoint_path, const VocabMaps& vocabs,
                         const FeatureScaler& scaler);

    std::vector<double> embed(const Journey& journey) const { return fn_(journey); }
    int dim() const { return dim_; }
    const std::string& kind() const { return kind_; }

private:
    std::function<std::vector<double>(const Journey&)> fn_;
    int dim_ = 0;
    std::string kind_;
};

}  // namespace trace
