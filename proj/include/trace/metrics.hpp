#pragma once

#include <vector>

#include "trace/common.hpp"

namespace trace {

// Probability that a random positive outranks a random negative, with 0.5
// credit for ties (rank-sum form). Throws unless both classes are present.
double metric_auroc(const std::vector<double>& scores, const std::vector<int>& labels);

// Area under precision-recall by step interpolation over score-sorted
// prefixes, tie groups collapsed.
double metric_auprc(const std::vector<double>& scores, const std::vector<int>& labels);

struct F1Acc {
    double f1 = 0.0;
    double acc = 0.0;
};

// Confusion-count F1 and accuracy at a fixed threshold (prediction is
// positive when score >= threshold). F1 with no predicted or no true
// positives is 0.
F1Acc metric_f1_acc(const std::vector<double>& scores, const std::vector<int>& labels,
                    double threshold = 0.5);

}  // namespace trace
