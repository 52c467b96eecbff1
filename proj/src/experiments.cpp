#include "trace/experiments.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <sstream>
#include <thread>

#include <json.hpp>

namespace trace {

namespace fs = std::filesystem;

RunContext RunContext::load(const std::string& data_dir) {
    RunContext ctx;
    ctx.data_dir = data_dir;
    const fs::path dir(data_dir);
    if (!fs::exists(dir / "manifest.json"))
        throw IoError("data: no manifest at '" + (dir / "manifest.json").string() +
                      "'; run `trace generate` first");
    ctx.manifest = CorpusManifest::load((dir / "manifest.json").string());
    ctx.gen_cfg = GeneratorConfig::load((dir / "generator_config.json").string());
    ctx.catalog = PageCatalog::load((dir / "catalog.json").string());
    ctx.label_cfg.session_timeout = ctx.gen_cfg.session_timeout;
    ctx.train = read_journeys_jsonl((dir / "train.jsonl").string(), ctx.gen_cfg.session_timeout);
    if (fs::exists(dir / "val.jsonl"))
        ctx.val = read_journeys_jsonl((dir / "val.jsonl").string(), ctx.gen_cfg.session_timeout);
    if (fs::exists(dir / "test.jsonl"))
        ctx.test = read_journeys_jsonl((dir / "test.jsonl").string(), ctx.gen_cfg.session_timeout);
    return ctx;
}

DataBundle DataBundle::build(const RunContext& ctx, int max_events) {
    const auto splits = make_splits(ctx.train, ctx.manifest.split_seed);
    std::vector<Journey> inputs;
    inputs.reserve(splits.size());
    for (const auto& s : splits) inputs.push_back(s.input);
    DataBundle b;
    b.vocabs = build_vocabs(inputs);
    b.scaler = fit_scaler(inputs, max_events);
    return b;
}

VariantSpec make_variant(const std::string& name) {
    VariantSpec spec;
    spec.name = name;
    spec.model = TraceConfig{};
    spec.gpt = MiniGptConfig{};

    if (name == "trace") {
        spec.kind = kKindTrace;
    } else if (name.rfind("st_", 0) == 0) {
        const std::string task = name.substr(3);
        const auto it = std::find_if(kTaskNames.begin(), kTaskNames.end(),
                                     [&](const char* t) { return task == t; });
        if (it == kTaskNames.end()) throw ConfigError("variant: unknown task in '" + name + "'");
        spec.task = static_cast<int>(it - kTaskNames.begin());
        spec.kind = std::string(kKindSingleTaskPrefix) + task;
        spec.model.n_tasks = 1;
    } else if (name == "mt_lstm") {
        spec.kind = kKindLstm;
    } else if (name == "mini_gpt") {
        spec.kind = kKindMiniGpt;
    } else if (name == "trace_trig") {
        spec.kind = kKindTrace;
        spec.model.use_trig_pe = true;
    } else if (name == "trace_h2" || name == "trace_h3" || name == "trace_h4") {
        spec.kind = kKindTrace;
        spec.model.n_encoders = name.back() - '0';
    } else if (name == "trace_no_session") {
        spec.kind = kKindTrace;
        spec.model.features.include_session = false;
    } else if (name == "trace_no_time") {
        spec.kind = kKindTrace;
        spec.model.features.include_session = false;
        spec.model.features.include_time = false;
    } else {
        throw ConfigError("variant: unknown variant '" + name + "'");
    }
    return spec;
}

TrainedVariant train_variant(const RunContext& ctx, const DataBundle& bundle, const VariantSpec& spec,
                             const TrainConfig& tcfg, const std::string& out_root) {
    const fs::path run_dir = fs::path(out_root) / spec.name;
    std::error_code ec;
    fs::create_directories(run_dir, ec);

    const std::uint64_t init_seed = derive_seed(tcfg.seed, fnv1a64(spec.name));
    TrainedVariant tv;
    tv.spec = spec;
    tv.run_dir = run_dir.string();

    if (spec.kind == kKindMiniGpt) {
        MiniGptConfig cfg = spec.gpt;
        cfg.vocab = VocabMaps::size(bundle.vocabs.page_name);
        FeatureConfig plain;  // tokens only; numeric features unused
        const auto train_ex = make_examples(ctx.train, ctx.catalog, ctx.label_cfg,
                                            ctx.manifest.split_seed, bundle.vocabs, bundle.scaler,
                                            cfg.max_events, plain);
        const auto val_ex = make_examples(ctx.val, ctx.catalog, ctx.label_cfg, ctx.manifest.split_seed,
                                          bundle.vocabs, bundle.scaler, cfg.max_events, plain);
        MiniGptModel model(cfg, init_seed);
        tv.report = train_minigpt_model(model, train_ex, val_ex, tcfg);
        model.save((run_dir / "checkpoint.bin").string(), tcfg.seed);
    } else {
        TraceConfig cfg = spec.model;
        cfg.set_vocab_sizes(bundle.vocabs);
        const auto train_ex =
            make_examples(ctx.train, ctx.catalog, ctx.label_cfg, ctx.manifest.split_seed, bundle.vocabs,
                          bundle.scaler, cfg.max_events, cfg.features);
        const auto val_ex = make_examples(ctx.val, ctx.catalog, ctx.label_cfg, ctx.manifest.split_seed,
                                          bundle.vocabs, bundle.scaler, cfg.max_events, cfg.features);

        std::vector<TaskLabelSet> train_labels;
        train_labels.reserve(train_ex.size());
        for (const auto& e : train_ex) train_labels.push_back(e.labels);

        std::vector<int> tasks;
        if (spec.task >= 0)
            tasks = {spec.task};
        else
            for (int k = 0; k < kNumTrainTasks; ++k) tasks.push_back(k);
        const auto weights = compute_class_weights(train_labels, tasks);

        if (spec.kind == kKindLstm) {
            LstmModel model(cfg, init_seed);
            tv.report = train_lstm_model(model, train_ex, val_ex, weights, tcfg);
            model.save((run_dir / "checkpoint.bin").string(), tcfg.seed);
        } else {
            TraceModel model(cfg, init_seed);
            tv.report = train_trace_model(model, train_ex, val_ex, weights, tcfg);
            model.save((run_dir / "checkpoint.bin").string(), spec.kind, tcfg.seed);
        }
    }

    bundle.vocabs.save((run_dir / "vocab.json").string());
    bundle.scaler.save((run_dir / "scaler.json").string());
    tv.report.config_hash = ctx.manifest.config_hash;
    tv.report.save((run_dir / "train_report.json").string());
    return tv;
}

std::vector<SplitExample> test_splits(const RunContext& ctx) {
    if (ctx.test.empty()) throw DataError("probe: dataset has no test split");
    return make_splits(ctx.test, ctx.manifest.split_seed);
}

MetricsReport probe_myopic(const RunContext& ctx, const DataBundle& bundle, const ProbeOptions& opts) {
    const auto splits = test_splits(ctx);
    auto features = myopic_features(splits, bundle.vocabs, bundle.scaler);
    const auto ds = build_probe_dataset_from_features(splits, std::move(features), ctx.catalog,
                                                      ctx.label_cfg);
    return evaluate_embeddings(ds, opts);
}

namespace {

Embedder load_run_embedder(const std::string& run_dir) {
    const fs::path dir(run_dir);
    if (!fs::exists(dir / "checkpoint.bin"))
        throw IoError("probe: no checkpoint at '" + (dir / "checkpoint.bin").string() +
                      "'; run `trace train` first");
    const auto vocabs = VocabMaps::load((dir / "vocab.json").string());
    const auto scaler = FeatureScaler::load((dir / "scaler.json").string());
    return Embedder::load((dir / "checkpoint.bin").string(), vocabs, scaler);
}

}  // namespace

MetricsReport probe_run_dir(const RunContext& ctx, const std::string& run_dir, const ProbeOptions& opts) {
    const auto embedder = load_run_embedder(run_dir);
    const auto splits = test_splits(ctx);
    const auto ds = build_probe_dataset(splits, embedder, ctx.catalog, ctx.label_cfg);
    return evaluate_embeddings(ds, opts);
}

MetricsReport probe_aggregated(const RunContext& ctx, const std::vector<std::string>& run_dirs,
                               const ProbeOptions& opts) {
    if (run_dirs.empty()) throw ConfigError("probe: no run directories to aggregate");
    const auto splits = test_splits(ctx);
    std::vector<std::vector<std::vector<double>>> all;  // [model][row][dim]
    for (const auto& dir : run_dirs) {
        const auto embedder = load_run_embedder(dir);
        std::vector<std::vector<double>> rows;
        rows.reserve(splits.size());
        for (const auto& s : splits) rows.push_back(embedder.embed(s.input));
        all.push_back(std::move(rows));
    }
    std::vector<std::vector<double>> features(splits.size());
    for (std::size_t r = 0; r < splits.size(); ++r) {
        std::vector<std::vector<double>> per_model;
        per_model.reserve(all.size());
        for (const auto& rows : all) per_model.push_back(rows[r]);
        features[r] = st_aggregate(per_model);
    }
    const auto ds =
        build_probe_dataset_from_features(splits, std::move(features), ctx.catalog, ctx.label_cfg);
    return evaluate_embeddings(ds, opts);
}

// ------------------------------------------------------- experiment config --

std::string ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["data_dir"] = data_dir;
    j["out_dir"] = out_dir;
    j["variants"] = variants;
    j["epochs"] = train.epochs;
    j["batch_size"] = train.batch_size;
    j["lr"] = train.lr;
    j["seed"] = train.seed;
    j["patience"] = train.patience;
    j["clip_norm"] = train.clip_norm;
    j["probe_threads"] = probe_threads;
    j["probe_seed"] = probe_seed;
    j["k_folds"] = k_folds;
    j["parallel_trainings"] = parallel_trainings;
    j["tsne_sample"] = tsne_sample;
    return j.dump(2);
}

ExperimentConfig ExperimentConfig::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    ExperimentConfig c;
    c.data_dir = j.value("data_dir", c.data_dir);
    c.out_dir = j.value("out_dir", c.out_dir);
    if (j.contains("variants")) c.variants = j.at("variants").get<std::vector<std::string>>();
    c.train.epochs = j.value("epochs", c.train.epochs);
    c.train.batch_size = j.value("batch_size", c.train.batch_size);
    c.train.lr = j.value("lr", c.train.lr);
    c.train.seed = j.value("seed", c.train.seed);
    c.train.patience = j.value("patience", c.train.patience);
    c.train.clip_norm = j.value("clip_norm", c.train.clip_norm);
    c.probe_threads = j.value("probe_threads", c.probe_threads);
    c.probe_seed = j.value("probe_seed", c.probe_seed);
    c.k_folds = j.value("k_folds", c.k_folds);
    c.parallel_trainings = j.value("parallel_trainings", c.parallel_trainings);
    c.tsne_sample = j.value("tsne_sample", c.tsne_sample);
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("config: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

namespace {

// Trains variants in waves of `parallel` threads; each model owns its
// store and rng so any schedule gives identical results.
std::vector<TrainedVariant> train_all(const RunContext& ctx, const DataBundle& bundle,
                                      const std::vector<VariantSpec>& specs, const TrainConfig& tcfg,
                                      const std::string& out_root, int parallel) {
    std::vector<TrainedVariant> out(specs.size());
    const int waves = std::max(1, parallel);
    std::exception_ptr err;
    std::mutex err_mutex;
    for (std::size_t start = 0; start < specs.size(); start += static_cast<std::size_t>(waves)) {
        std::vector<std::thread> pool;
        for (std::size_t i = start; i < std::min(specs.size(), start + static_cast<std::size_t>(waves)); ++i) {
            pool.emplace_back([&, i]() {
                try {
                    out[i] = train_variant(ctx, bundle, specs[i], tcfg, out_root);
                } catch (...) {
                    std::lock_guard<std::mutex> lock(err_mutex);
                    if (!err) err = std::current_exception();
                }
            });
        }
        for (auto& t : pool) t.join();
        if (err) std::rethrow_exception(err);
    }
    return out;
}

ProbeOptions probe_options(const ExperimentConfig& cfg) {
    ProbeOptions opts;
    opts.k_folds = cfg.k_folds;
    opts.seed = cfg.probe_seed;
    opts.threads = cfg.probe_threads;
    return opts;
}

}  // namespace

CompareResult compare_models(const RunContext& ctx, const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    DataBundle bundle = DataBundle::build(ctx, TraceConfig{}.max_events);
    const auto opts = probe_options(cfg);

    // expand the variant matrix; exactly one primary reference model
    std::vector<std::string> names;
    bool want_aggregated = false;
    for (const auto& v : cfg.variants) {
        if (v == "st_cohort") {
            for (const char* t : kTaskNames) names.push_back(std::string("st_") + t);
        } else if (v == "st_aggregated") {
            want_aggregated = true;
        } else {
            names.push_back(v);
        }
    }
    if (std::count(names.begin(), names.end(), "trace") != 1)
        throw ConfigError("compare: exactly one primary 'trace' variant is required");

    std::vector<VariantSpec> specs;
    specs.reserve(names.size());
    for (const auto& n : names) specs.push_back(make_variant(n));
    const auto trained = train_all(ctx, bundle, specs, cfg.train, cfg.out_dir, cfg.parallel_trainings);

    RunManifest manifest;
    manifest.seed = cfg.train.seed;
    manifest.config_hash = hex64(fnv1a64(cfg.to_json()));
    for (const auto& f : ctx.manifest.files)
        manifest.inputs[f.name] = f.content_hash;

    CompareResult result;
    result.baseline = probe_myopic(ctx, bundle, opts);
    std::error_code ec;
    fs::create_directories(cfg.out_dir, ec);
    result.baseline.save((fs::path(cfg.out_dir) / "baseline_metrics.json").string());

    std::vector<std::string> st_dirs;
    std::map<std::string, UpliftReport> st_uplifts;
    for (const auto& tv : trained) {
        const auto metrics = probe_run_dir(ctx, tv.run_dir, opts);
        metrics.save((fs::path(tv.run_dir) / "probe_metrics.json").string());
        const auto uplift = compute_uplift(metrics, result.baseline);
        uplift.save((fs::path(tv.run_dir) / "uplift.json").string());
        if (tv.spec.name.rfind("st_", 0) == 0) {
            st_dirs.push_back(tv.run_dir);
            st_uplifts[tv.spec.name] = uplift;
        }
        result.uplifts.emplace_back(tv.spec.name, uplift);
        manifest.add_artifact((fs::path(tv.run_dir) / "checkpoint.bin").string());
        manifest.add_artifact((fs::path(tv.run_dir) / "probe_metrics.json").string());
    }

    if (want_aggregated) {
        if (st_dirs.empty()) throw ConfigError("compare: st_aggregated requires the st_cohort variant");
        const auto metrics = probe_aggregated(ctx, st_dirs, opts);
        metrics.save((fs::path(cfg.out_dir) / "st_aggregated_metrics.json").string());
        const auto uplift = compute_uplift(metrics, result.baseline);
        uplift.save((fs::path(cfg.out_dir) / "st_aggregated_uplift.json").string());
        result.uplifts.emplace_back("st_aggregated", uplift);
    }

    // Table-1 layout ordering: trace, cohort summary entries, then others
    std::vector<std::pair<std::string, UpliftReport>> table_rows;
    for (const auto& [name, up] : result.uplifts) table_rows.emplace_back(name, up);
    result.table_mean_uplift = render_mean_uplift_table(table_rows);

    // Table-2 layout: TRACE vs the dedicated ST model per task (the ST row
    // reports each dedicated model's uplift on its own task)
    std::vector<std::pair<std::string, UpliftReport>> auroc_rows;
    for (const auto& [name, up] : result.uplifts)
        if (name == "trace") auroc_rows.emplace_back(name, up);
    if (!st_uplifts.empty() && !auroc_rows.empty()) {
        UpliftReport diag;
        diag.tasks.assign(kTaskNames.begin(), kTaskNames.end());
        diag.uplift_pct.resize(kNumTasks);
        for (int k = 0; k < kNumTasks; ++k) {
            const std::string name = std::string("st_") + kTaskNames[static_cast<std::size_t>(k)];
            auto it = st_uplifts.find(name);
            if (it == st_uplifts.end()) continue;
            diag.uplift_pct[static_cast<std::size_t>(k)] = it->second.uplift_pct[static_cast<std::size_t>(k)];
            for (int m = 0; m < 4; ++m)
                diag.mean_uplift_pct[static_cast<std::size_t>(m)] +=
                    it->second.uplift_pct[static_cast<std::size_t>(k)][static_cast<std::size_t>(m)] / kNumTasks;
        }
        auroc_rows.emplace_back("st_dedicated", diag);
    }
    result.table_auroc_by_task = render_auroc_uplift_by_task(auroc_rows);

    std::ofstream tables((fs::path(cfg.out_dir) / "comparison.txt").string(), std::ios::trunc);
    tables << result.table_mean_uplift << "\n" << result.table_auroc_by_task;
    tables.close();

    manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest.add_artifact((fs::path(cfg.out_dir) / "comparison.txt").string());
    manifest.save((fs::path(cfg.out_dir) / "run_manifest.json").string());
    return result;
}

AblationResult ablation_suite(const RunContext& ctx, const ExperimentConfig& cfg) {
    const auto t0 = std::chrono::steady_clock::now();
    DataBundle bundle = DataBundle::build(ctx, TraceConfig{}.max_events);
    const auto opts = probe_options(cfg);

    const std::vector<std::string> names = {"trace",    "trace_trig",       "trace_h2",
                                            "trace_h3", "trace_h4",         "trace_no_session",
                                            "trace_no_time"};
    std::vector<VariantSpec> specs;
    for (const auto& n : names) specs.push_back(make_variant(n));
    const auto trained = train_all(ctx, bundle, specs, cfg.train, cfg.out_dir, cfg.parallel_trainings);

    AblationResult result;
    for (const auto& f : ctx.manifest.files)
        if (f.name == "train.jsonl") result.dataset_hash = f.content_hash;

    const auto baseline = probe_myopic(ctx, bundle, opts);
    RunManifest manifest;
    manifest.seed = cfg.train.seed;
    manifest.config_hash = hex64(fnv1a64(cfg.to_json()));
    for (const auto& f : ctx.manifest.files) manifest.inputs[f.name] = f.content_hash;

    for (const auto& tv : trained) {
        const auto metrics = probe_run_dir(ctx, tv.run_dir, opts);
        metrics.save((fs::path(tv.run_dir) / "probe_metrics.json").string());
        const auto uplift = compute_uplift(metrics, baseline);
        uplift.save((fs::path(tv.run_dir) / "uplift.json").string());

        nlohmann::json vr;
        vr["variant"] = tv.spec.name;
        vr["dataset_hash"] = result.dataset_hash;
        vr["uplift"] = nlohmann::json::parse(uplift.to_json());
        std::ofstream out((fs::path(tv.run_dir) / "ablation_report.json").string(), std::ios::trunc);
        out << vr.dump(2) << "\n";

        result.uplifts.emplace_back(tv.spec.name, uplift);
        manifest.add_artifact((fs::path(tv.run_dir) / "ablation_report.json").string());
    }

    result.table = render_mean_uplift_table(result.uplifts);
    std::ofstream tables((fs::path(cfg.out_dir) / "ablation.txt").string(), std::ios::trunc);
    tables << result.table;
    tables.close();

    nlohmann::json summary;
    summary["dataset_hash"] = result.dataset_hash;
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& [name, up] : result.uplifts)
        rows.push_back({{"variant", name}, {"mean_uplift_pct", up.mean_uplift_pct}});
    summary["rows"] = std::move(rows);
    std::ofstream sfile((fs::path(cfg.out_dir) / "ablation_summary.json").string(), std::ios::trunc);
    sfile << summary.dump(2) << "\n";
    sfile.close();

    manifest.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    manifest.add_artifact((fs::path(cfg.out_dir) / "ablation_summary.json").string());
    manifest.save((fs::path(cfg.out_dir) / "run_manifest.json").string());
    return result;
}

// ----------------------------------------------------------------- bench --

std::string BenchReport::to_json() const {
    nlohmann::json j;
    nlohmann::json rows_j = nlohmann::json::array();
    for (const auto& r : rows)
        rows_j.push_back({{"h", r.h}, {"mean_ms", r.mean_ms}, {"std_ms", r.std_ms}});
    j["rows"] = std::move(rows_j);
    j["budget_ms"] = budget_ms;
    j["budget_breached"] = budget_breached;
    j["n_calls"] = n_calls;
    j["warmup"] = warmup;
    j["journey_events"] = journey_events;
    return j.dump(2);
}

BenchReport BenchReport::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    BenchReport r;
    for (const auto& row : j.at("rows"))
        r.rows.push_back({row.at("h").get<int>(), row.at("mean_ms").get<double>(),
                          row.at("std_ms").get<double>()});
    r.budget_ms = j.at("budget_ms").get<double>();
    r.budget_breached = j.at("budget_breached").get<bool>();
    r.n_calls = j.at("n_calls").get<int>();
    r.warmup = j.at("warmup").get<int>();
    r.journey_events = j.at("journey_events").get<int>();
    return r;
}

void BenchReport::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("bench: cannot write '" + path + "'");
    out << to_json() << "\n";
}

std::string BenchReport::render() const {
    std::ostringstream os;
    os << "Single-journey forward latency over " << n_calls << " calls (" << warmup
       << " warmup excluded), " << journey_events << "-event journey\n";
    for (const auto& r : rows) {
        os.setf(std::ios::fixed);
        os.precision(3);
        os << "  h = " << r.h << " encoders: " << r.mean_ms << " ms +- " << r.std_ms << " ms";
        if (r.mean_ms >= budget_ms) os << "  [over " << budget_ms << " ms budget]";
        os << "\n";
    }
    return os.str();
}

BenchReport latency_bench(const std::string& checkpoint_path, const VocabMaps& vocabs,
                          const FeatureScaler& scaler, const Journey& sample,
                          const std::vector<int>& h_values, int n_calls, int warmup) {
    if (n_calls < 1 || warmup < 0) throw ConfigError("bench: bad call counts");
    auto lc = load_checkpoint(checkpoint_path);
    const bool is_trace =
        lc.model_kind == kKindTrace || lc.model_kind.rfind(kKindSingleTaskPrefix, 0) == 0;
    if (!is_trace) throw ConfigError("bench: latency sweep expects a transformer checkpoint");
    TraceConfig base = TraceConfig::from_json(lc.config_json);

    const auto enc = encode_journey(sample, vocabs, scaler, base.max_events, base.features);

    BenchReport report;
    report.n_calls = n_calls;
    report.warmup = warmup;
    report.journey_events = enc.true_length;

    for (int h : h_values) {
        TraceConfig cfg = base;
        cfg.n_encoders = h;
        // weights are rebuilt per h; the trained checkpoint only covers its
        // own depth and timing is value-independent
        TraceModel model(cfg, derive_seed(0xbe9c4ULL, static_cast<std::uint64_t>(h)));

        std::vector<double> samples;
        samples.reserve(static_cast<std::size_t>(n_calls));
        double checksum = 0.0;
        for (int i = 0; i < warmup + n_calls; ++i) {
            const auto t0 = std::chrono::steady_clock::now();
            const auto e = model.embed(enc);
            const auto t1 = std::chrono::steady_clock::now();
            checksum += e[0];
            if (i >= warmup)
                samples.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
        }
        (void)checksum;
        double mean = 0.0;
        for (double s : samples) mean += s;
        mean /= static_cast<double>(samples.size());
        double var = 0.0;
        for (double s : samples) var += (s - mean) * (s - mean);
        var /= static_cast<double>(samples.size());
        report.rows.push_back({h, mean, std::sqrt(var)});
        if (mean >= report.budget_ms) report.budget_breached = true;
    }
    return report;
}

// ----------------------------------------------------------------- t-SNE --

TsneExport tsne_export(const RunContext& ctx, const std::string& run_dir, int n_sample,
                       const TsneConfig& tcfg, const std::string& csv_path,
                       const std::string& svg_path) {
    const auto embedder = load_run_embedder(run_dir);
    const auto splits = test_splits(ctx);

    std::vector<std::string> next_page(splits.size());
    for (std::size_t i = 0; i < splits.size(); ++i) {
        if (splits[i].future.empty()) throw DataError("tsne: split without a next event");
        next_page[i] = splits[i].future.front().page_name;
    }
    const auto common = ctx.catalog.common_pages();
    if (static_cast<int>(common.size()) < 7)
        throw ConfigError("tsne: catalog designates fewer than 7 common pages");
    const std::vector<std::string> classes(common.begin(), common.begin() + 7);

    TsneExport ex;
    ex.sample_rows = stratified_sample_by_class(next_page, classes, n_sample, tcfg.seed);

    std::vector<std::vector<double>> features;
    features.reserve(ex.sample_rows.size());
    for (int row : ex.sample_rows) {
        features.push_back(embedder.embed(splits[static_cast<std::size_t>(row)].input));
        ex.labels.push_back(next_page[static_cast<std::size_t>(row)]);
    }
    ex.result = tsne_project(features, tcfg);

    if (!csv_path.empty()) write_tsne_csv(csv_path, ex.result.points, ex.labels);
    if (!svg_path.empty()) write_tsne_svg(svg_path, ex.result.points, ex.labels);
    return ex;
}

// --------------------------------------------------------------- manifest --

void RunManifest::add_input(const std::string& path) { inputs[path] = file_content_hash(path); }
void RunManifest::add_artifact(const std::string& path) { artifacts[path] = file_content_hash(path); }

std::string RunManifest::to_json() const {
    nlohmann::json j;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["inputs"] = inputs;
    j["artifacts"] = artifacts;
    j["wall_seconds"] = wall_seconds;
    return j.dump(2);
}

RunManifest RunManifest::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    RunManifest m;
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.inputs = j.at("inputs").get<std::map<std::string, std::string>>();
    m.artifacts = j.at("artifacts").get<std::map<std::string, std::string>>();
    m.wall_seconds = j.at("wall_seconds").get<double>();
    return m;
}

void RunManifest::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("manifest: cannot write '" + path + "'");
    out << to_json() << "\n";
}

RunManifest RunManifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("manifest: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

}  // namespace trace
