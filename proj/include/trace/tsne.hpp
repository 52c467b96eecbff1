#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "trace/common.hpp"

namespace trace {

struct TsneConfig {
    double perplexity = 30.0;
    int iters = 1000;
    int exaggeration_iters = 250;
    double exaggeration = 12.0;
    double eta = 200.0;
    double momentum_initial = 0.5;
    double momentum_final = 0.8;
    int momentum_switch_iter = 250;
    int kl_check_every = 50;
    std::uint64_t seed = 42;
};

struct TsneResult {
    std::vector<std::array<double, 2>> points;
    // KL divergence sampled every kl_check_every iterations once the
    // exaggeration phase has ended; non-increasing by construction (the
    // step size backs off and the layout reverts when a check regresses).
    std::vector<double> kl_trace;
};

// Exact O(n^2) t-SNE: per-point bandwidths found by binary search to match
// the perplexity, symmetrized affinities, Student-t low-dimensional kernel,
// gradient descent with momentum and adaptive gains. Deterministic given
// the seed. n is capped at 5000 and perplexity must be < n/3.
TsneResult tsne_project(const std::vector<std::vector<double>>& rows, const TsneConfig& cfg);

// Index sample with per-class quotas as equal as possible (sizes differ by
// at most 1). Throws naming the class when one lacks candidates.
std::vector<int> stratified_sample_by_class(const std::vector<std::string>& labels,
                                            const std::vector<std::string>& classes, int total,
                                            std::uint64_t seed);

void write_tsne_csv(const std::string& path, const std::vector<std::array<double, 2>>& points,
                    const std::vector<std::string>& labels);
void write_tsne_svg(const std::string& path, const std::vector<std::array<double, 2>>& points,
                    const std::vector<std::string>& labels);

}  // namespace trace
