#include "trace/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "trace/metrics.hpp"
#include "trace/rng.hpp"

namespace trace {

namespace {

constexpr double kMaxLeafStep = 4.0;
constexpr double kHessFloor = 1e-12;
constexpr double kMinGain = 1e-12;

double sigmoid(double z) {
    if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
    const double e = std::exp(z);
    return e / (1.0 + e);
}

double softplus(double t) {
    return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

struct BuildContext {
    const std::vector<std::vector<double>>& x;
    const std::vector<double>& residual;
    const std::vector<double>& hessian;
    int min_leaf;
    int max_depth;
    std::vector<GbdtModel::Node>* nodes;
    std::vector<std::uint8_t> side;  // scratch, sized n_total
};

int make_leaf(BuildContext& ctx, const std::vector<int>& rows) {
    double sum_r = 0.0, sum_h = 0.0;
    for (int i : rows) {
        sum_r += ctx.residual[static_cast<std::size_t>(i)];
        sum_h += ctx.hessian[static_cast<std::size_t>(i)];
    }
    GbdtModel::Node leaf;
    leaf.value = std::clamp(sum_r / std::max(sum_h, kHessFloor), -kMaxLeafStep, kMaxLeafStep);
    ctx.nodes->push_back(leaf);
    return static_cast<int>(ctx.nodes->size()) - 1;
}

// `sorted[f]` holds this node's rows ordered by feature f ascending;
// children inherit the order via stable partition.
int build_node(BuildContext& ctx, std::vector<std::vector<int>>& sorted, int depth) {
    const auto& rows = sorted.front();
    const int n = static_cast<int>(rows.size());
    if (depth >= ctx.max_depth || n < 2 * ctx.min_leaf) return make_leaf(ctx, rows);

    double total_sum = 0.0;
    for (int i : rows) total_sum += ctx.residual[static_cast<std::size_t>(i)];

    // exact greedy: best (feature, midpoint) by variance reduction
    int best_feature = -1;
    double best_threshold = 0.0, best_gain = kMinGain;
    const int nf = static_cast<int>(sorted.size());
    for (int f = 0; f < nf; ++f) {
        const auto& ord = sorted[static_cast<std::size_t>(f)];
        double left_sum = 0.0;
        for (int pos = 0; pos + 1 < n; ++pos) {
            const int row = ord[static_cast<std::size_t>(pos)];
            left_sum += ctx.residual[static_cast<std::size_t>(row)];
            const double cur = ctx.x[static_cast<std::size_t>(row)][static_cast<std::size_t>(f)];
            const double nxt =
                ctx.x[static_cast<std::size_t>(ord[static_cast<std::size_t>(pos + 1)])][static_cast<std::size_t>(f)];
            if (nxt == cur) continue;
            const int nl = pos + 1, nr = n - nl;
            if (nl < ctx.min_leaf || nr < ctx.min_leaf) continue;
            const double right_sum = total_sum - left_sum;
            const double gain =
                left_sum * left_sum / nl + right_sum * right_sum / nr - total_sum * total_sum / n;
            if (gain > best_gain) {
                best_gain = gain;
                best_feature = f;
                best_threshold = (cur + nxt) / 2.0;
            }
        }
    }
    if (best_feature < 0) return make_leaf(ctx, rows);

    for (int i : rows)
        ctx.side[static_cast<std::size_t>(i)] =
            ctx.x[static_cast<std::size_t>(i)][static_cast<std::size_t>(best_feature)] <= best_threshold ? 1 : 0;

    std::vector<std::vector<int>> left(static_cast<std::size_t>(nf)), right(static_cast<std::size_t>(nf));
    for (int f = 0; f < nf; ++f) {
        left[static_cast<std::size_t>(f)].reserve(static_cast<std::size_t>(n));
        right[static_cast<std::size_t>(f)].reserve(static_cast<std::size_t>(n));
        for (int i : sorted[static_cast<std::size_t>(f)])
            (ctx.side[static_cast<std::size_t>(i)] ? left : right)[static_cast<std::size_t>(f)].push_back(i);
    }
    sorted.clear();

    const int self = static_cast<int>(ctx.nodes->size());
    ctx.nodes->emplace_back();
    const int l = build_node(ctx, left, depth + 1);
    const int r = build_node(ctx, right, depth + 1);
    auto& node = (*ctx.nodes)[static_cast<std::size_t>(self)];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = l;
    node.right = r;
    return self;
}

}  // namespace

double GbdtModel::Tree::predict(const std::vector<double>& row) const {
    int i = 0;
    while (nodes[static_cast<std::size_t>(i)].feature >= 0) {
        const auto& n = nodes[static_cast<std::size_t>(i)];
        i = row[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right;
    }
    return nodes[static_cast<std::size_t>(i)].value;
}

double GbdtModel::predict_logodds(const std::vector<double>& row) const {
    if (static_cast<int>(row.size()) != n_features)
        throw DataError("gbdt: row width does not match the trained feature count");
    double f = init_logodds;
    for (const auto& t : trees) f += learning_rate * t.predict(row);
    return f;
}

double GbdtModel::predict_proba(const std::vector<double>& row) const {
    return sigmoid(predict_logodds(row));
}

std::vector<double> GbdtModel::predict_proba(const std::vector<std::vector<double>>& rows) const {
    std::vector<double> out;
    out.reserve(rows.size());
    for (const auto& r : rows) out.push_back(predict_proba(r));
    return out;
}

GbdtModel fit_gbdt(const std::vector<std::vector<double>>& features, const std::vector<int>& labels,
                   const GbdtConfig& cfg, std::vector<double>* round_losses) {
    const int n = static_cast<int>(features.size());
    if (n == 0 || labels.size() != features.size())
        throw DataError("gbdt: features and labels must align and be non-empty");
    const int nf = static_cast<int>(features.front().size());
    for (const auto& row : features)
        if (static_cast<int>(row.size()) != nf) throw DataError("gbdt: ragged feature matrix");
    if (cfg.n_trees < 0 || cfg.max_depth < 1 || cfg.min_leaf < 1 || cfg.learning_rate <= 0.0)
        throw ConfigError("gbdt: bad hyperparameters");

    std::int64_t pos = 0;
    for (int y : labels) pos += y;
    if (pos == 0 || pos == n) throw DataError("gbdt: labels contain a single class");

    GbdtModel model;
    model.learning_rate = cfg.learning_rate;
    model.n_features = nf;
    const double p0 = static_cast<double>(pos) / n;
    model.init_logodds = std::log(p0 / (1.0 - p0));

    std::vector<double> f_val(static_cast<std::size_t>(n), model.init_logodds);
    std::vector<double> p(static_cast<std::size_t>(n), p0);
    std::vector<double> residual(static_cast<std::size_t>(n)), hessian(static_cast<std::size_t>(n));

    auto mean_loss = [&]() {
        double s = 0.0;
        for (int i = 0; i < n; ++i)
            s += labels[static_cast<std::size_t>(i)] ? softplus(-f_val[static_cast<std::size_t>(i)])
                                                     : softplus(f_val[static_cast<std::size_t>(i)]);
        return s / n;
    };
    if (round_losses) {
        round_losses->clear();
        round_losses->push_back(mean_loss());
    }

    // presorted row order per feature, reused as the root of every tree
    std::vector<std::vector<int>> base_sorted(static_cast<std::size_t>(nf));
    for (int f = 0; f < nf; ++f) {
        auto& ord = base_sorted[static_cast<std::size_t>(f)];
        ord.resize(static_cast<std::size_t>(n));
        std::iota(ord.begin(), ord.end(), 0);
        std::stable_sort(ord.begin(), ord.end(), [&](int a, int b) {
            return features[static_cast<std::size_t>(a)][static_cast<std::size_t>(f)] <
                   features[static_cast<std::size_t>(b)][static_cast<std::size_t>(f)];
        });
    }

    for (int m = 0; m < cfg.n_trees; ++m) {
        for (int i = 0; i < n; ++i) {
            residual[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(i)] - p[static_cast<std::size_t>(i)];
            hessian[static_cast<std::size_t>(i)] =
                p[static_cast<std::size_t>(i)] * (1.0 - p[static_cast<std::size_t>(i)]);
        }
        GbdtModel::Tree tree;
        BuildContext ctx{features, residual, hessian, cfg.min_leaf, cfg.max_depth, &tree.nodes,
                         std::vector<std::uint8_t>(static_cast<std::size_t>(n), 0)};
        auto sorted = base_sorted;
        build_node(ctx, sorted, 0);
        for (int i = 0; i < n; ++i) {
            f_val[static_cast<std::size_t>(i)] += cfg.learning_rate * tree.predict(features[static_cast<std::size_t>(i)]);
            p[static_cast<std::size_t>(i)] = sigmoid(f_val[static_cast<std::size_t>(i)]);
        }
        model.trees.push_back(std::move(tree));
        if (round_losses) round_losses->push_back(mean_loss());
    }
    return model;
}

std::vector<int> stratified_folds(const std::vector<int>& labels, int k, std::uint64_t seed) {
    if (k < 2) throw ConfigError("folds: k must be >= 2");
    if (static_cast<int>(labels.size()) < k) throw ConfigError("folds: fewer rows than folds");
    std::vector<int> pos_rows, neg_rows;
    for (std::size_t i = 0; i < labels.size(); ++i)
        (labels[i] ? pos_rows : neg_rows).push_back(static_cast<int>(i));
    Rng rng(seed);
    rng.shuffle(pos_rows);
    rng.shuffle(neg_rows);
    std::vector<int> fold(labels.size(), 0);
    int next = 0;
    for (int i : pos_rows) fold[static_cast<std::size_t>(i)] = next++ % k;
    for (int i : neg_rows) fold[static_cast<std::size_t>(i)] = next++ % k;
    return fold;
}

CvSelection kfold_cv_select(const std::vector<std::vector<double>>& features,
                            const std::vector<int>& labels, const std::vector<GbdtConfig>& grid,
                            int k, std::uint64_t seed) {
    if (grid.empty()) throw ConfigError("cv: empty hyperparameter grid");
    const auto fold = stratified_folds(labels, k, seed);

    CvSelection sel;
    double best_score = -1.0;
    for (const auto& cfg : grid) {
        std::vector<double> oof(labels.size(), 0.0);
        double auroc_sum = 0.0;
        for (int f = 0; f < k; ++f) {
            std::vector<std::vector<double>> xtr;
            std::vector<int> ytr, val_rows;
            for (std::size_t i = 0; i < labels.size(); ++i) {
                if (fold[i] == f) {
                    val_rows.push_back(static_cast<int>(i));
                } else {
                    xtr.push_back(features[i]);
                    ytr.push_back(labels[i]);
                }
            }
            const GbdtModel model = fit_gbdt(xtr, ytr, cfg);
            std::vector<double> scores;
            std::vector<int> truth;
            for (int i : val_rows) {
                const double s = model.predict_proba(features[static_cast<std::size_t>(i)]);
                oof[static_cast<std::size_t>(i)] = s;
                scores.push_back(s);
                truth.push_back(labels[static_cast<std::size_t>(i)]);
            }
            auroc_sum += metric_auroc(scores, truth);
        }
        const double mean_auroc = auroc_sum / k;
        if (mean_auroc > best_score) {
            best_score = mean_auroc;
            sel.best = cfg;
            sel.best_mean_auroc = mean_auroc;
            sel.oof_scores = std::move(oof);
        }
    }
    sel.model = fit_gbdt(features, labels, sel.best);
    return sel;
}

std::vector<GbdtConfig> default_probe_grid() {
    std::vector<GbdtConfig> grid;
    for (int depth : {2, 3, 4})
        for (double lr : {0.1, 0.3})
            for (int trees : {50, 100}) grid.push_back({trees, depth, lr, 1});
    return grid;
}

}  // namespace trace
