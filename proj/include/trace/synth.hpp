#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trace/clickstream.hpp"
#include "trace/rng.hpp"

namespace trace {

// Latent-intent journey generator. Each journey follows a hidden Markov
// chain over intent states; the state fixes the page-transition behavior
// of a whole session and evolves between sessions. Page transitions are
// category-level (pages inside a category are drawn uniformly), which
// keeps closed-form purchase-rate computation exact.
struct StateProfile {
    std::string name;
    // [n_categories × n_categories], rows sum to 1
    std::vector<std::vector<double>> category_transitions;
    std::vector<double> session_start;        // category of a session's first page
    std::vector<double> session_length_pmf;   // P(length == index+1)
};

struct GeneratorConfig {
    PageCatalog catalog;
    std::vector<StateProfile> states;
    std::vector<double> initial_state;
    std::vector<std::vector<double>> state_transitions;  // across sessions
    std::vector<double> session_count_pmf;               // P(#sessions == index+1)

    double session_timeout = 2.0 * 3600.0;
    double intra_gap_log_mean = 0.0, intra_gap_log_sigma = 1.0;  // lognormal seconds
    double inter_gap_log_mean = 0.0, inter_gap_log_sigma = 1.0;  // lognormal seconds past T

    std::vector<std::string> device_types;
    std::vector<double> device_prior;
    std::vector<std::string> platforms;
    std::vector<double> platform_prior;
    std::vector<std::string> locales;
    std::vector<double> locale_prior;

    double start_time = 0.0;
    double start_time_spread = 0.0;
    std::uint64_t seed = 0;

    void validate() const;  // stochastic rows sum to 1 +- 1e-9 etc.
    std::string to_json() const;
    static GeneratorConfig from_json(const std::string& text);
    void save(const std::string& path) const;
    static GeneratorConfig load(const std::string& path);
};

// Category index space used by the chain (PageCategory minus `other`).
inline constexpr int kChainCategories = 9;
int chain_category_index(PageCategory c);

GeneratorConfig default_generator_config();

// One journey; `state_trace` (optional) receives the latent state of each
// session, for diagnostics and learnability checks.
Journey generate_journey(const GeneratorConfig& cfg, Rng& rng, std::string user_id,
                         std::vector<int>* state_trace = nullptr);

// n journeys with per-user derived seeds: user k's stream depends only on
// (cfg.seed, first_index + k), so any parallel schedule produces identical
// corpora.
std::vector<Journey> generate_journeys(const GeneratorConfig& cfg, int n, int first_index,
                                       std::vector<std::vector<int>>* traces = nullptr);

// Exact P(journey contains a purchase) under the configured chain.
double expected_purchase_rate(const GeneratorConfig& cfg);

struct CorpusManifest {
    int schema_version = kDatasetSchemaVersion;
    std::uint64_t seed = 0;
    std::uint64_t split_seed = 0;
    std::string config_hash;
    struct FileInfo {
        std::string name;
        int n_journeys = 0;
        std::string content_hash;
    };
    std::vector<FileInfo> files;
    std::map<std::string, double> label_prevalence;  // on the train file

    std::string to_json() const;
    static CorpusManifest from_json(const std::string& text);
    void save(const std::string& path) const;
    static CorpusManifest load(const std::string& path);
};

// Writes train/val/test JSONL files plus catalog.json, generator config
// snapshot and manifest into `out_dir`. Label prevalence is measured on
// the train split with the default label windows.
CorpusManifest generate_corpus(const GeneratorConfig& cfg, int n_train, int n_val, int n_test,
                               const std::string& out_dir);

}  // namespace trace
