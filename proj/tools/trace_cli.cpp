// Command-line front end: dataset generation, model training, embedding
// export, probe evaluation, model comparison, ablations, latency
// measurement and t-SNE projection.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "trace/experiments.hpp"

namespace fs = std::filesystem;
using namespace trace;

namespace {

int cmd_generate(const std::string& out_dir, std::uint64_t seed, int n_train, int n_val, int n_test,
                 const std::string& config_path) {
    GeneratorConfig cfg =
        config_path.empty() ? default_generator_config() : GeneratorConfig::load(config_path);
    cfg.seed = seed;
    const auto manifest = generate_corpus(cfg, n_train, n_val, n_test, out_dir);
    std::cout << "wrote " << out_dir << " (config hash " << manifest.config_hash << ")\n";
    std::cout << "train label prevalence:\n";
    for (const auto& [task, p] : manifest.label_prevalence)
        std::cout << "  " << task << ": " << p << "\n";
    return 0;
}

int cmd_train(const std::string& data_dir, const std::string& out_root, const std::string& variant,
              const TrainConfig& tcfg) {
    const auto ctx = RunContext::load(data_dir);
    const auto bundle = DataBundle::build(ctx, TraceConfig{}.max_events);
    const auto spec = make_variant(variant);
    const auto tv = train_variant(ctx, bundle, spec, tcfg, out_root);
    std::cout << "trained " << variant << " -> " << tv.run_dir << "\n";
    std::cout << "  best val loss " << tv.report.best_val << " at epoch " << tv.report.best_epoch + 1
              << " of " << tv.report.epochs_run << "\n";
    return 0;
}

int cmd_embed(const std::string& data_dir, const std::string& run_dir, const std::string& out_csv,
              const std::string& split) {
    const auto ctx = RunContext::load(data_dir);
    const fs::path dir(run_dir);
    if (!fs::exists(dir / "checkpoint.bin"))
        throw IoError("embed: no checkpoint at '" + (dir / "checkpoint.bin").string() +
                      "'; run `trace train` first");
    const auto vocabs = VocabMaps::load((dir / "vocab.json").string());
    const auto scaler = FeatureScaler::load((dir / "scaler.json").string());
    const auto embedder = Embedder::load((dir / "checkpoint.bin").string(), vocabs, scaler);

    const std::vector<Journey>* journeys = nullptr;
    if (split == "train") journeys = &ctx.train;
    else if (split == "val") journeys = &ctx.val;
    else if (split == "test") journeys = &ctx.test;
    else throw ConfigError("embed: unknown split '" + split + "'");

    const auto splits = make_splits(*journeys, ctx.manifest.split_seed);
    std::ofstream out(out_csv, std::ios::trunc);
    if (!out) throw IoError("embed: cannot write '" + out_csv + "'");
    out << "user_id";
    for (int d = 0; d < embedder.dim(); ++d) out << ",e" << d;
    out << "\n";
    out.precision(17);
    for (const auto& s : splits) {
        const auto e = embedder.embed(s.input);
        out << s.input.user_id;
        for (double v : e) out << "," << v;
        out << "\n";
    }
    std::cout << "wrote " << splits.size() << " embeddings (dim " << embedder.dim() << ") to "
              << out_csv << "\n";
    return 0;
}

int cmd_probe(const std::string& data_dir, const std::string& run_dir, int threads,
              std::uint64_t seed, int folds) {
    const auto ctx = RunContext::load(data_dir);
    const auto bundle = DataBundle::build(ctx, TraceConfig{}.max_events);
    ProbeOptions opts;
    opts.threads = threads;
    opts.seed = seed;
    opts.k_folds = folds;

    const auto metrics = probe_run_dir(ctx, run_dir, opts);
    const auto baseline = probe_myopic(ctx, bundle, opts);
    const auto uplift = compute_uplift(metrics, baseline);

    metrics.save((fs::path(run_dir) / "probe_metrics.json").string());
    baseline.save((fs::path(run_dir) / "baseline_metrics.json").string());
    uplift.save((fs::path(run_dir) / "uplift.json").string());

    std::cout << render_metrics_table(metrics, "Probe metrics (out-of-fold)") << "\n";
    std::cout << render_metrics_table(baseline, "Myopic baseline") << "\n";
    std::cout << render_mean_uplift_table({{fs::path(run_dir).filename().string(), uplift}});
    return 0;
}

int cmd_compare(const ExperimentConfig& cfg) {
    const auto ctx = RunContext::load(cfg.data_dir);
    const auto result = compare_models(ctx, cfg);
    std::cout << result.table_mean_uplift << "\n" << result.table_auroc_by_task;
    return 0;
}

int cmd_ablate(const ExperimentConfig& cfg) {
    const auto ctx = RunContext::load(cfg.data_dir);
    const auto result = ablation_suite(ctx, cfg);
    std::cout << result.table;
    return 0;
}

int cmd_bench(const std::string& data_dir, const std::string& run_dir, int n_calls, int warmup,
              const std::vector<int>& h_values, const std::string& out_json) {
    const auto ctx = RunContext::load(data_dir);
    const fs::path dir(run_dir);
    if (!fs::exists(dir / "checkpoint.bin"))
        throw IoError("bench: no checkpoint at '" + (dir / "checkpoint.bin").string() +
                      "'; run `trace train` first");
    const auto vocabs = VocabMaps::load((dir / "vocab.json").string());
    const auto scaler = FeatureScaler::load((dir / "scaler.json").string());
    if (ctx.test.empty()) throw DataError("bench: dataset has no test journeys");
    const auto report = latency_bench((dir / "checkpoint.bin").string(), vocabs, scaler, ctx.test.front(),
                                      h_values, n_calls, warmup);
    if (!out_json.empty()) report.save(out_json);
    std::cout << report.render();
    return 0;
}

int cmd_tsne(const std::string& data_dir, const std::string& run_dir, int n_sample,
             const TsneConfig& tcfg, const std::string& out_csv, const std::string& out_svg) {
    const auto ctx = RunContext::load(data_dir);
    const auto ex = tsne_export(ctx, run_dir, n_sample, tcfg, out_csv, out_svg);
    std::cout << "projected " << ex.result.points.size() << " embeddings -> " << out_csv << "\n";
    if (!ex.result.kl_trace.empty())
        std::cout << "final KL " << ex.result.kl_trace.back() << " (checked "
                  << ex.result.kl_trace.size() << " times)\n";
    return 0;
}

int cmd_report(const std::string& out_dir) {
    // render stored uplift reports in the canonical row order
    std::vector<std::string> order = {"trace"};
    for (const char* t : kTaskNames) order.push_back(std::string("st_") + t);
    for (const char* extra : {"st_aggregated", "mt_lstm", "mini_gpt", "trace_trig", "trace_h2",
                              "trace_h3", "trace_h4", "trace_no_session", "trace_no_time"})
        order.push_back(extra);

    std::vector<std::pair<std::string, UpliftReport>> rows;
    for (const auto& name : order) {
        const fs::path p = name == "st_aggregated" ? fs::path(out_dir) / "st_aggregated_uplift.json"
                                                   : fs::path(out_dir) / name / "uplift.json";
        if (fs::exists(p)) rows.emplace_back(name, UpliftReport::load(p.string()));
    }
    if (rows.empty())
        throw IoError("report: no uplift reports under '" + out_dir +
                      "'; run `trace probe`, `trace compare` or `trace ablate` first");
    std::cout << render_mean_uplift_table(rows);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"TRACE: multi-session clickstream journey embeddings"};
    app.require_subcommand(1);

    std::string data_dir = "data", out_dir = "runs", run_dir, variant = "trace";
    std::string config_path, out_csv, out_svg, out_json, split = "test";
    std::uint64_t seed = 20240914;
    int n_train = 20000, n_val = 5000, n_test = 5000;
    TrainConfig tcfg;
    ExperimentConfig ecfg;
    TsneConfig tsne_cfg;
    int threads = 2, folds = 5, n_calls = 10000, warmup = 100, n_sample = 700;
    std::vector<int> h_values = {1, 2, 3, 4};

    auto* gen = app.add_subcommand("generate", "generate a synthetic journey corpus");
    gen->add_option("--out", out_dir, "output directory")->capture_default_str();
    gen->add_option("--seed", seed, "master seed")->capture_default_str();
    gen->add_option("--train", n_train, "training journeys")->capture_default_str();
    gen->add_option("--val", n_val, "validation journeys")->capture_default_str();
    gen->add_option("--test", n_test, "test journeys")->capture_default_str();
    gen->add_option("--config", config_path, "generator config JSON (default: built-in)");

    auto* train = app.add_subcommand("train", "train one model variant");
    train->add_option("--data", data_dir, "dataset directory")->capture_default_str();
    train->add_option("--out", out_dir, "output root (run dir = out/<variant>)")->capture_default_str();
    train->add_option("--variant", variant,
                      "trace | st_<task> | mt_lstm | mini_gpt | trace_trig | trace_h2..4 | "
                      "trace_no_session | trace_no_time")
        ->capture_default_str();
    train->add_option("--epochs", tcfg.epochs)->capture_default_str();
    train->add_option("--batch", tcfg.batch_size)->capture_default_str();
    train->add_option("--lr", tcfg.lr)->capture_default_str();
    train->add_option("--seed", tcfg.seed)->capture_default_str();
    train->add_option("--patience", tcfg.patience)->capture_default_str();
    train->add_option("--clip", tcfg.clip_norm)->capture_default_str();

    auto* embed = app.add_subcommand("embed", "export journey embeddings as CSV");
    embed->add_option("--data", data_dir)->capture_default_str();
    embed->add_option("--run", run_dir, "trained run directory")->required();
    embed->add_option("--out", out_csv, "output CSV path")->required();
    embed->add_option("--split", split, "train | val | test")->capture_default_str();

    auto* probe = app.add_subcommand("probe", "probe embeddings with CV-tuned boosted trees");
    probe->add_option("--data", data_dir)->capture_default_str();
    probe->add_option("--run", run_dir, "trained run directory")->required();
    probe->add_option("--threads", threads)->capture_default_str();
    probe->add_option("--seed", seed)->capture_default_str();
    probe->add_option("--folds", folds)->capture_default_str();

    auto* compare = app.add_subcommand("compare", "train and probe the full model comparison");
    compare->add_option("--config", config_path, "experiment config JSON");
    compare->add_option("--data", ecfg.data_dir)->capture_default_str();
    compare->add_option("--out", ecfg.out_dir)->capture_default_str();
    compare->add_option("--epochs", ecfg.train.epochs)->capture_default_str();
    compare->add_option("--seed", ecfg.train.seed)->capture_default_str();
    compare->add_option("--parallel", ecfg.parallel_trainings)->capture_default_str();

    auto* ablate = app.add_subcommand("ablate", "train and probe the ablation variants");
    ablate->add_option("--config", config_path, "experiment config JSON");
    ablate->add_option("--data", ecfg.data_dir)->capture_default_str();
    ablate->add_option("--out", ecfg.out_dir)->capture_default_str();
    ablate->add_option("--epochs", ecfg.train.epochs)->capture_default_str();
    ablate->add_option("--seed", ecfg.train.seed)->capture_default_str();
    ablate->add_option("--parallel", ecfg.parallel_trainings)->capture_default_str();

    auto* bench = app.add_subcommand("bench", "single-journey forward-pass latency sweep");
    bench->add_option("--data", data_dir)->capture_default_str();
    bench->add_option("--run", run_dir, "trained run directory")->required();
    bench->add_option("--n", n_calls, "timed calls per h")->capture_default_str();
    bench->add_option("--warmup", warmup)->capture_default_str();
    bench->add_option("--encoders", h_values, "encoder counts to sweep")->capture_default_str();
    bench->add_option("--out", out_json, "write report JSON here");

    auto* tsne = app.add_subcommand("tsne", "2-d projection of test embeddings");
    tsne->add_option("--data", data_dir)->capture_default_str();
    tsne->add_option("--run", run_dir, "trained run directory")->required();
    tsne->add_option("--n", n_sample, "stratified sample size")->capture_default_str();
    tsne->add_option("--perplexity", tsne_cfg.perplexity)->capture_default_str();
    tsne->add_option("--iters", tsne_cfg.iters)->capture_default_str();
    tsne->add_option("--seed", tsne_cfg.seed)->capture_default_str();
    tsne->add_option("--out", out_csv, "output CSV path")->required();
    tsne->add_option("--svg", out_svg, "optional SVG scatter path");

    auto* report = app.add_subcommand("report", "render stored uplift reports");
    report->add_option("--dir", out_dir, "experiment output directory")->capture_default_str();

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_generate(out_dir, seed, n_train, n_val, n_test, config_path);
        if (train->parsed()) return cmd_train(data_dir, out_dir, variant, tcfg);
        if (embed->parsed()) return cmd_embed(data_dir, run_dir, out_csv, split);
        if (probe->parsed()) return cmd_probe(data_dir, run_dir, threads, seed, folds);
        if (compare->parsed()) {
            ExperimentConfig cfg = config_path.empty() ? ecfg : ExperimentConfig::load(config_path);
            return cmd_compare(cfg);
        }
        if (ablate->parsed()) {
            ExperimentConfig cfg = config_path.empty() ? ecfg : ExperimentConfig::load(config_path);
            return cmd_ablate(cfg);
        }
        if (bench->parsed()) return cmd_bench(data_dir, run_dir, n_calls, warmup, h_values, out_json);
        if (tsne->parsed()) return cmd_tsne(data_dir, run_dir, n_sample, tsne_cfg, out_csv, out_svg);
        if (report->parsed()) return cmd_report(out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
