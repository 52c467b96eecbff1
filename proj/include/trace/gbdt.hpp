#pragma once

#include <cstdint>
#include <vector>

#include "trace/common.hpp"

namespace trace {

struct GbdtConfig {
    int n_trees = 100;
    int max_depth = 3;
    double learning_rate = 0.1;
    int min_leaf = 1;
};

// Gradient-boosted regression trees on logistic loss: prior log-odds
// initialization, exact greedy variance-reduction splits on the residuals
// y - p, Newton leaf values sum(r)/sum(p(1-p)).
struct GbdtModel {
    struct Node {
        int feature = -1;   // -1 marks a leaf
        double threshold = 0.0;
        int left = -1;
        int right = -1;
        double value = 0.0;  // leaf Newton step (unscaled)
    };
    struct Tree {
        std::vector<Node> nodes;
        double predict(const std::vector<double>& row) const;
    };

    std::vector<Tree> trees;
    double init_logodds = 0.0;
    double learning_rate = 0.1;
    int n_features = 0;

    double predict_logodds(const std::vector<double>& row) const;
    double predict_proba(const std::vector<double>& row) const;
    std::vector<double> predict_proba(const std::vector<std::vector<double>>& rows) const;
};

// `round_losses`, when given, receives mean training logistic loss after
// every boosting round (round 0 = prior only).
GbdtModel fit_gbdt(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
                   const GbdtConfig& cfg, std::vector<double>* round_losses = nullptr);

// Stratified K folds: per-class shuffle then round-robin deal. Returns the
// fold id of every row.
std::vector<int> stratified_folds(const std::vector<int>& labels, int k, std::uint64_t seed);

struct CvSelection {
    GbdtConfig best;
    GbdtModel model;                 // refit on all rows with the best config
    double best_mean_auroc = 0.0;
    std::vector<double> oof_scores;  // out-of-fold predictions at the best config
};

// Selects the grid entry maximizing mean validation AUROC over stratified
// K-fold CV (ties keep the earlier entry), then refits on all rows.
CvSelection kfold_cv_select(const std::vector<std::vector<double>>& features,
                            const std::vector<int>& labels, const std::vector<GbdtConfig>& grid,
                            int k, std::uint64_t seed);

std::vector<GbdtConfig> default_probe_grid();

}  // namespace trace
