#include "trace/tsne.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "trace/rng.hpp"

namespace trace {

namespace {

constexpr double kProbFloor = 1e-12;

std::vector<double> squared_distances(const std::vector<std::vector<double>>& rows) {
    const std::size_t n = rows.size();
    const std::size_t d = rows.front().size();
    std::vector<double> dist(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = rows[i][k] - rows[j][k];
                s += diff * diff;
            }
            dist[i * n + j] = s;
            dist[j * n + i] = s;
        }
    }
    return dist;
}

// Conditional affinities: binary-search each point's bandwidth until the
// row entropy matches log(perplexity).
std::vector<double> conditional_affinities(const std::vector<double>& dist, std::size_t n,
                                           double perplexity) {
    std::vector<double> p(n * n, 0.0);
    const double target_entropy = std::log(perplexity);
    for (std::size_t i = 0; i < n; ++i) {
        double beta = 1.0, beta_min = -std::numeric_limits<double>::infinity(),
               beta_max = std::numeric_limits<double>::infinity();
        double* row = p.data() + i * n;
        for (int iter = 0; iter < 200; ++iter) {
            double sum = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                row[j] = j == i ? 0.0 : std::exp(-beta * dist[i * n + j]);
                sum += row[j];
            }
            if (sum <= 0.0) sum = std::numeric_limits<double>::min();
            double entropy = 0.0;
            for (std::size_t j = 0; j < n; ++j) {
                if (j == i || row[j] <= 0.0) continue;
                const double pj = row[j] / sum;
                entropy -= pj * std::log(pj);
            }
            const double diff = entropy - target_entropy;
            if (std::abs(diff) < 1e-7) break;
            if (diff > 0) {
                beta_min = beta;
                beta = std::isinf(beta_max) ? beta * 2.0 : (beta + beta_max) / 2.0;
            } else {
                beta_max = beta;
                beta = std::isinf(beta_min) ? beta / 2.0 : (beta + beta_min) / 2.0;
            }
        }
        double sum = 0.0;
        for (std::size_t j = 0; j < n; ++j) sum += row[j];
        if (sum <= 0.0) sum = std::numeric_limits<double>::min();
        for (std::size_t j = 0; j < n; ++j) row[j] /= sum;
    }
    return p;
}

double kl_divergence(const std::vector<double>& p, const std::vector<std::array<double, 2>>& y,
                     std::size_t n) {
    // Q from the Student-t kernel
    double sum_q = 0.0;
    std::vector<double> qnum(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = i + 1; j < n; ++j) {
            const double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
            const double q = 1.0 / (1.0 + dx * dx + dy * dy);
            qnum[i * n + j] = q;
            qnum[j * n + i] = q;
            sum_q += 2.0 * q;
        }
    }
    double kl = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            if (i == j) continue;
            const double pij = p[i * n + j];
            if (pij <= 0.0) continue;
            const double qij = std::max(qnum[i * n + j] / sum_q, kProbFloor);
            kl += pij * std::log(pij / qij);
        }
    }
    return kl;
}

}  // namespace

TsneResult tsne_project(const std::vector<std::vector<double>>& rows, const TsneConfig& cfg) {
    const std::size_t n = rows.size();
    if (n < 4) throw ConfigError("tsne: need at least 4 points");
    if (n > 5000) throw ConfigError("tsne: exact implementation capped at 5000 points");
    if (cfg.perplexity < 2.0 || cfg.perplexity >= static_cast<double>(n) / 3.0)
        throw ConfigError("tsne: perplexity must be in [2, n/3)");
    for (const auto& r : rows)
        if (r.size() != rows.front().size()) throw DataError("tsne: ragged input matrix");

    const auto dist = squared_distances(rows);
    auto pc = conditional_affinities(dist, n, cfg.perplexity);

    // symmetrize: p_ij = (p_j|i + p_i|j) / 2n, floored
    std::vector<double> p(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
            if (i != j)
                p[i * n + j] = std::max((pc[i * n + j] + pc[j * n + i]) / (2.0 * static_cast<double>(n)),
                                        kProbFloor);

    Rng rng(cfg.seed);
    std::vector<std::array<double, 2>> y(n), vel(n, {0.0, 0.0}), grad(n);
    std::vector<std::array<double, 2>> gains(n, {1.0, 1.0});
    for (auto& pt : y) pt = {rng.normal(0.0, 1e-4), rng.normal(0.0, 1e-4)};

    TsneResult result;
    double eta = cfg.eta;
    double last_kl = std::numeric_limits<double>::infinity();
    auto y_snapshot = y;
    auto vel_snapshot = vel;

    std::vector<double> qnum(n * n, 0.0);
    for (int iter = 0; iter < cfg.iters; ++iter) {
        const bool exaggerated = iter < cfg.exaggeration_iters;
        const double p_scale = exaggerated ? cfg.exaggeration : 1.0;
        const double momentum = iter < cfg.momentum_switch_iter ? cfg.momentum_initial : cfg.momentum_final;

        // Student-t numerators and normalizer
        double sum_q = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = i + 1; j < n; ++j) {
                const double dx = y[i][0] - y[j][0], dy = y[i][1] - y[j][1];
                const double q = 1.0 / (1.0 + dx * dx + dy * dy);
                qnum[i * n + j] = q;
                qnum[j * n + i] = q;
                sum_q += 2.0 * q;
            }
        }

        for (std::size_t i = 0; i < n; ++i) {
            grad[i] = {0.0, 0.0};
            for (std::size_t j = 0; j < n; ++j) {
                if (i == j) continue;
                const double q = qnum[i * n + j];
                const double mult = (p_scale * p[i * n + j] - q / sum_q) * q;
                grad[i][0] += 4.0 * mult * (y[i][0] - y[j][0]);
                grad[i][1] += 4.0 * mult * (y[i][1] - y[j][1]);
            }
        }

        double mean_x = 0.0, mean_y = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            for (int d = 0; d < 2; ++d) {
                auto& g = gains[i][static_cast<std::size_t>(d)];
                const bool same_sign =
                    (grad[i][static_cast<std::size_t>(d)] > 0.0) == (vel[i][static_cast<std::size_t>(d)] > 0.0);
                g = same_sign ? std::max(g * 0.8, 0.01) : g + 0.2;
                vel[i][static_cast<std::size_t>(d)] =
                    momentum * vel[i][static_cast<std::size_t>(d)] - eta * g * grad[i][static_cast<std::size_t>(d)];
                y[i][static_cast<std::size_t>(d)] += vel[i][static_cast<std::size_t>(d)];
            }
            mean_x += y[i][0];
            mean_y += y[i][1];
        }
        mean_x /= static_cast<double>(n);
        mean_y /= static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) {
            y[i][0] -= mean_x;
            y[i][1] -= mean_y;
        }

        // KL watchdog after the exaggeration phase: revert and shrink the
        // step if a checkpoint regressed.
        if (!exaggerated && (iter + 1) % cfg.kl_check_every == 0) {
            const double kl = kl_divergence(p, y, n);
            if (kl > last_kl) {
                y = y_snapshot;
                vel = vel_snapshot;
                eta *= 0.5;
                result.kl_trace.push_back(last_kl);
            } else {
                y_snapshot = y;
                vel_snapshot = vel;
                last_kl = kl;
                result.kl_trace.push_back(kl);
            }
        }
    }

    result.points = std::move(y);
    return result;
}

std::vector<int> stratified_sample_by_class(const std::vector<std::string>& labels,
                                            const std::vector<std::string>& classes, int total,
                                            std::uint64_t seed) {
    if (classes.empty() || total < static_cast<int>(classes.size()))
        throw ConfigError("sample: need at least one row per class");
    std::map<std::string, std::vector<int>> by_class;
    for (std::size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(static_cast<int>(i));

    const int base = total / static_cast<int>(classes.size());
    int remainder = total % static_cast<int>(classes.size());

    Rng rng(seed);
    std::vector<int> out;
    for (const auto& cls : classes) {
        const int want = base + (remainder > 0 ? 1 : 0);
        if (remainder > 0) --remainder;
        auto it = by_class.find(cls);
        if (it == by_class.end() || static_cast<int>(it->second.size()) < want)
            throw ConfigError("sample: class '" + cls + "' has fewer than " + std::to_string(want) +
                              " candidates");
        auto rows = it->second;
        rng.shuffle(rows);
        out.insert(out.end(), rows.begin(), rows.begin() + want);
    }
    return out;
}

void write_tsne_csv(const std::string& path, const std::vector<std::array<double, 2>>& points,
                    const std::vector<std::string>& labels) {
    if (points.size() != labels.size()) throw DataError("tsne csv: points and labels must align");
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("tsne csv: cannot write '" + path + "'");
    out << "x,y,label\n";
    out.precision(17);
    for (std::size_t i = 0; i < points.size(); ++i)
        out << points[i][0] << "," << points[i][1] << "," << labels[i] << "\n";
}

void write_tsne_svg(const std::string& path, const std::vector<std::array<double, 2>>& points,
                    const std::vector<std::string>& labels) {
    if (points.size() != labels.size()) throw DataError("tsne svg: points and labels must align");
    static const char* palette[] = {"#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f",
                                    "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac"};
    std::map<std::string, int> color_of;
    for (const auto& l : labels)
        if (!color_of.count(l)) color_of[l] = static_cast<int>(color_of.size()) % 10;

    double min_x = 0, max_x = 0, min_y = 0, max_y = 0;
    for (const auto& p : points) {
        min_x = std::min(min_x, p[0]);
        max_x = std::max(max_x, p[0]);
        min_y = std::min(min_y, p[1]);
        max_y = std::max(max_y, p[1]);
    }
    const double span_x = std::max(max_x - min_x, 1e-9), span_y = std::max(max_y - min_y, 1e-9);
    const int w = 800, h = 800, margin = 40;

    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("tsne svg: cannot write '" + path + "'");
    out << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << w << "\" height=\"" << h << "\">\n";
    out << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (std::size_t i = 0; i < points.size(); ++i) {
        const double px = margin + (points[i][0] - min_x) / span_x * (w - 2 * margin);
        const double py = margin + (points[i][1] - min_y) / span_y * (h - 2 * margin);
        out << "<circle cx=\"" << px << "\" cy=\"" << py << "\" r=\"3\" fill=\""
            << palette[color_of[labels[i]]] << "\" fill-opacity=\"0.7\"/>\n";
    }
    int ly = margin;
    for (const auto& [label, color] : color_of) {
        out << "<circle cx=\"" << w - 150 << "\" cy=\"" << ly << "\" r=\"4\" fill=\"" << palette[color]
            << "\"/>\n";
        out << "<text x=\"" << w - 140 << "\" y=\"" << ly + 4 << "\" font-size=\"12\">" << label
            << "</text>\n";
        ly += 18;
    }
    out << "</svg>\n";
}

}  // namespace trace
