#include "trace/probe.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace trace {

double MetricsReport::value(const std::string& task, int metric) const {
    for (std::size_t i = 0; i < tasks.size(); ++i)
        if (tasks[i] == task) return values[i][static_cast<std::size_t>(metric)];
    throw ConfigError("metrics: unknown task '" + task + "'");
}

std::string MetricsReport::to_json() const {
    nlohmann::json j;
    j["tasks"] = tasks;
    j["metrics"] = kMetricNames;
    j["values"] = values;
    return j.dump(2);
}

MetricsReport MetricsReport::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    MetricsReport r;
    r.tasks = j.at("tasks").get<std::vector<std::string>>();
    r.values = j.at("values").get<std::vector<std::array<double, 4>>>();
    return r;
}

void MetricsReport::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("metrics: cannot write '" + path + "'");
    out << to_json() << "\n";
}

MetricsReport MetricsReport::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("metrics: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

std::string UpliftReport::to_json() const {
    nlohmann::json j;
    j["tasks"] = tasks;
    j["metrics"] = kMetricNames;
    j["uplift_pct"] = uplift_pct;
    j["mean_uplift_pct"] = mean_uplift_pct;
    return j.dump(2);
}

UpliftReport UpliftReport::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    UpliftReport r;
    r.tasks = j.at("tasks").get<std::vector<std::string>>();
    r.uplift_pct = j.at("uplift_pct").get<std::vector<std::array<double, 4>>>();
    r.mean_uplift_pct = j.at("mean_uplift_pct").get<std::array<double, 4>>();
    return r;
}

void UpliftReport::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("uplift: cannot write '" + path + "'");
    out << to_json() << "\n";
}

UpliftReport UpliftReport::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("uplift: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

ProbeDataset build_probe_dataset(const std::vector<SplitExample>& splits, const Embedder& embedder,
                                 const PageCatalog& catalog, const LabelConfig& label_cfg) {
    ProbeDataset ds;
    ds.features.reserve(splits.size());
    ds.labels.reserve(splits.size());
    for (const auto& ex : splits) {
        ds.features.push_back(embedder.embed(ex.input));
        ds.labels.push_back(compute_labels(ex, catalog, label_cfg));
        ds.user_ids.push_back(ex.input.user_id);
    }
    return ds;
}

ProbeDataset build_probe_dataset_from_features(const std::vector<SplitExample>& splits,
                                               std::vector<std::vector<double>> features,
                                               const PageCatalog& catalog, const LabelConfig& label_cfg) {
    if (features.size() != splits.size())
        throw DataError("probe: feature rows do not match split examples");
    ProbeDataset ds;
    ds.features = std::move(features);
    ds.labels.reserve(splits.size());
    for (const auto& ex : splits) {
        ds.labels.push_back(compute_labels(ex, catalog, label_cfg));
        ds.user_ids.push_back(ex.input.user_id);
    }
    return ds;
}

std::vector<std::vector<double>> myopic_features(const std::vector<SplitExample>& splits,
                                                 const VocabMaps& vocabs, const FeatureScaler& scaler) {
    const int w_page = VocabMaps::size(vocabs.page_name);
    const int w_device = VocabMaps::size(vocabs.device_type);
    const int w_platform = VocabMaps::size(vocabs.platform);
    const int w_locale = VocabMaps::size(vocabs.locale);
    const int width = w_page + w_device + w_platform + w_locale + 3;

    std::vector<std::vector<double>> rows;
    rows.reserve(splits.size());
    for (const auto& ex : splits) {
        const auto events = ex.input.flatten();
        if (events.empty()) throw DataError("myopic: empty input journey");
        const auto& last = events.back();

        std::vector<double> row(static_cast<std::size_t>(width), 0.0);
        int off = 0;
        row[static_cast<std::size_t>(off + VocabMaps::lookup(vocabs.page_name, last.page_name))] = 1.0;
        off += w_page;
        row[static_cast<std::size_t>(off + VocabMaps::lookup(vocabs.device_type, last.device_type))] = 1.0;
        off += w_device;
        row[static_cast<std::size_t>(off + VocabMaps::lookup(vocabs.platform, last.platform))] = 1.0;
        off += w_platform;
        row[static_cast<std::size_t>(off + VocabMaps::lookup(vocabs.locale, last.locale))] = 1.0;
        off += w_locale;

        const double gap = events.size() > 1 ? last.timestamp - events[events.size() - 2].timestamp : 0.0;
        row[static_cast<std::size_t>(off + 0)] = scaler.transform(0, gap);
        row[static_cast<std::size_t>(off + 1)] = scaler.transform(1, 0.0);  // elapsed of the final event
        row[static_cast<std::size_t>(off + 2)] = scaler.transform(2, 1.0);  // most recent session
        rows.push_back(std::move(row));
    }
    return rows;
}

MetricsReport evaluate_embeddings(const ProbeDataset& data, const ProbeOptions& opts) {
    if (data.features.size() != data.labels.size() || data.features.empty())
        throw DataError("probe: features and labels must align and be non-empty");
    if (opts.tasks.empty()) throw ConfigError("probe: no tasks selected");

    MetricsReport report;
    report.tasks.resize(opts.tasks.size());
    report.values.resize(opts.tasks.size());

    auto run_task = [&](std::size_t ti) {
        const int k = opts.tasks[ti];
        std::vector<int> y;
        y.reserve(data.labels.size());
        for (const auto& l : data.labels) y.push_back(l.y[static_cast<std::size_t>(k)]);

        const auto sel = kfold_cv_select(data.features, y, opts.grid, opts.k_folds,
                                         derive_seed(opts.seed, static_cast<std::uint64_t>(k)));
        const auto& scores = sel.oof_scores;
        const auto f1acc = metric_f1_acc(scores, y);
        report.tasks[ti] = kTaskNames[static_cast<std::size_t>(k)];
        report.values[ti] = {metric_auroc(scores, y), metric_auprc(scores, y), f1acc.f1, f1acc.acc};
    };

    const int threads = std::max(1, opts.threads);
    if (threads == 1) {
        for (std::size_t ti = 0; ti < opts.tasks.size(); ++ti) run_task(ti);
    } else {
        std::vector<std::thread> pool;
        std::exception_ptr err;
        std::mutex err_mutex;
        for (int t = 0; t < threads; ++t) {
            pool.emplace_back([&, t]() {
                for (std::size_t ti = static_cast<std::size_t>(t); ti < opts.tasks.size();
                     ti += static_cast<std::size_t>(threads)) {
                    try {
                        run_task(ti);
                    } catch (...) {
                        std::lock_guard<std::mutex> lock(err_mutex);
                        if (!err) err = std::current_exception();
                    }
                }
            });
        }
        for (auto& th : pool) th.join();
        if (err) std::rethrow_exception(err);
    }
    return report;
}

UpliftReport compute_uplift(const MetricsReport& model, const MetricsReport& baseline) {
    if (model.tasks != baseline.tasks)
        throw ConfigError("uplift: model and baseline reports cover different tasks");
    UpliftReport up;
    up.tasks = model.tasks;
    up.uplift_pct.resize(model.tasks.size());
    for (std::size_t i = 0; i < model.tasks.size(); ++i) {
        for (int m = 0; m < 4; ++m) {
            const double base = baseline.values[i][static_cast<std::size_t>(m)];
            const double val = model.values[i][static_cast<std::size_t>(m)];
            if (base == 0.0)
                throw DataError("uplift: baseline metric " + std::string(kMetricNames[static_cast<std::size_t>(m)]) +
                                " is zero for task " + model.tasks[i]);
            up.uplift_pct[i][static_cast<std::size_t>(m)] = 100.0 * (val - base) / base;
            up.mean_uplift_pct[static_cast<std::size_t>(m)] += up.uplift_pct[i][static_cast<std::size_t>(m)];
        }
    }
    for (int m = 0; m < 4; ++m)
        up.mean_uplift_pct[static_cast<std::size_t>(m)] /= static_cast<double>(model.tasks.size());
    return up;
}

// -------------------------------------------------------------- rendering --

namespace {

std::string fixed(double v, int prec = 4) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(prec) << v;
    return os.str();
}

std::string signed_fixed(double v, int prec = 2) {
    std::ostringstream os;
    os << std::showpos << std::fixed << std::setprecision(prec) << v;
    return os.str();
}

}  // namespace

std::string render_metrics_table(const MetricsReport& report, const std::string& title) {
    std::ostringstream os;
    os << title << "\n";
    os << std::left << std::setw(8) << "Task";
    for (const char* m : kMetricNames) os << std::right << std::setw(10) << m;
    os << "\n";
    for (std::size_t i = 0; i < report.tasks.size(); ++i) {
        os << std::left << std::setw(8) << report.tasks[i];
        for (int m = 0; m < 4; ++m)
            os << std::right << std::setw(10) << fixed(report.values[i][static_cast<std::size_t>(m)]);
        os << "\n";
    }
    return os.str();
}

std::string render_mean_uplift_table(const std::vector<std::pair<std::string, UpliftReport>>& rows) {
    std::ostringstream os;
    os << "Mean % uplift vs myopic baseline across evaluation tasks\n";
    os << std::left << std::setw(16) << "Model";
    for (const char* m : kMetricNames) os << std::right << std::setw(10) << m;
    os << "\n";
    for (const auto& [name, up] : rows) {
        os << std::left << std::setw(16) << name;
        for (int m = 0; m < 4; ++m)
            os << std::right << std::setw(10) << signed_fixed(up.mean_uplift_pct[static_cast<std::size_t>(m)]);
        os << "\n";
    }
    return os.str();
}

std::string render_auroc_uplift_by_task(const std::vector<std::pair<std::string, UpliftReport>>& rows) {
    std::ostringstream os;
    os << "% uplift in AUROC vs myopic baseline, per evaluation task\n";
    os << std::left << std::setw(16) << "Model";
    if (!rows.empty())
        for (const auto& t : rows.front().second.tasks) os << std::right << std::setw(8) << t;
    os << "\n";
    for (const auto& [name, up] : rows) {
        os << std::left << std::setw(16) << name;
        for (std::size_t i = 0; i < up.tasks.size(); ++i)
            os << std::right << std::setw(8) << signed_fixed(up.uplift_pct[i][0]);
        os << "\n";
    }
    return os.str();
}

}  // namespace trace
