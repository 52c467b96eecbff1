#include "trace/metrics.hpp"

#include <algorithm>
#include <numeric>

namespace trace {

namespace {

void check_inputs(const std::vector<double>& scores, const std::vector<int>& labels,
                  const char* what) {
    if (scores.size() != labels.size() || scores.empty())
        throw DataError(std::string(what) + ": scores and labels must align and be non-empty");
    bool has_pos = false, has_neg = false;
    for (int y : labels) (y ? has_pos : has_neg) = true;
    if (!has_pos || !has_neg)
        throw DataError(std::string(what) + ": undefined with a single class present");
}

}  // namespace

double metric_auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_inputs(scores, labels, "auroc");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // average ranks over tie groups; ranks are 1-based
    std::vector<double> rank(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
        for (std::size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }

    double n_pos = 0, n_neg = 0, rank_sum = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        if (labels[k]) {
            n_pos += 1;
            rank_sum += rank[k];
        } else {
            n_neg += 1;
        }
    }
    const double u = rank_sum - n_pos * (n_pos + 1.0) / 2.0;
    return u / (n_pos * n_neg);
}

double metric_auprc(const std::vector<double>& scores, const std::vector<int>& labels) {
    check_inputs(scores, labels, "auprc");
    const std::size_t n = scores.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    double n_pos = 0;
    for (int y : labels) n_pos += y;

    double ap = 0.0;
    double tp = 0, fp = 0;
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        double tp_add = labels[order[i]] ? 1 : 0, fp_add = labels[order[i]] ? 0 : 1;
        while (j + 1 < n && scores[order[j + 1]] == scores[order[i]]) {
            ++j;
            (labels[order[j]] ? tp_add : fp_add) += 1;
        }
        const double tp_prev = tp;
        tp += tp_add;
        fp += fp_add;
        ap += ((tp - tp_prev) / n_pos) * (tp / (tp + fp));
        i = j + 1;
    }
    return ap;
}

F1Acc metric_f1_acc(const std::vector<double>& scores, const std::vector<int>& labels,
                    double threshold) {
    if (scores.size() != labels.size() || scores.empty())
        throw DataError("f1_acc: scores and labels must align and be non-empty");
    double tp = 0, fp = 0, tn = 0, fn = 0;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        const bool pred = scores[i] >= threshold;
        if (pred && labels[i]) ++tp;
        else if (pred && !labels[i]) ++fp;
        else if (!pred && labels[i]) ++fn;
        else ++tn;
    }
    F1Acc out;
    out.acc = (tp + tn) / static_cast<double>(scores.size());
    out.f1 = tp == 0 ? 0.0 : 2.0 * tp / (2.0 * tp + fp + fn);
    return out;
}

}  // namespace trace
