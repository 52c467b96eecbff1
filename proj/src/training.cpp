#include "trace/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

#include <json.hpp>

namespace trace {

ClassWeights compute_class_weights(const std::vector<TaskLabelSet>& labels,
                                   const std::vector<int>& tasks) {
    if (labels.empty()) throw DataError("class_weights: no labeled examples");
    ClassWeights cw;
    cw.tasks = tasks;
    for (int k : tasks) {
        std::int64_t pos = 0;
        for (const auto& l : labels) pos += l.y[static_cast<std::size_t>(k)];
        const auto n = static_cast<std::int64_t>(labels.size());
        if (pos == 0)
            throw ConfigError(std::string("class_weights: task '") + kTaskNames[static_cast<std::size_t>(k)] +
                              "' has no positive examples");
        if (pos == n)
            throw ConfigError(std::string("class_weights: task '") + kTaskNames[static_cast<std::size_t>(k)] +
                              "' has no negative examples");
        cw.w.push_back(static_cast<double>(n) / static_cast<double>(pos));  // 1 / p_k
    }
    return cw;
}

Tensor multitask_loss(const std::vector<Tensor>& logits, const TaskLabelSet& labels,
                      const ClassWeights& weights, Tape* tape) {
    if (logits.size() != weights.tasks.size())
        throw ConfigError("multitask_loss: logit count does not match task count");
    std::vector<Tensor> terms;
    terms.reserve(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
        const int k = weights.tasks[i];
        terms.push_back(bce_with_logits(logits[i], static_cast<double>(labels.y[static_cast<std::size_t>(k)]),
                                        weights.w[i], tape));
    }
    return add_scalars(terms, tape);
}

void TrainConfig::validate() const {
    if (epochs < 1 || batch_size < 1 || patience < 1) throw ConfigError("train: epochs/batch/patience must be positive");
    if (lr <= 0.0 || clip_norm <= 0.0) throw ConfigError("train: lr and clip_norm must be positive");
}

std::string TrainReport::to_json() const {
    nlohmann::json j;
    j["train_total"] = train_total;
    j["val_total"] = val_total;
    j["train_per_task"] = train_per_task;
    j["val_per_task"] = val_per_task;
    j["best_epoch"] = best_epoch;
    j["best_val"] = best_val;
    j["epochs_run"] = epochs_run;
    j["wall_seconds"] = wall_seconds;
    j["seed"] = seed;
    j["config_hash"] = config_hash;
    return j.dump(2);
}

TrainReport TrainReport::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    TrainReport r;
    r.train_total = j.at("train_total").get<std::vector<double>>();
    r.val_total = j.at("val_total").get<std::vector<double>>();
    r.train_per_task = j.at("train_per_task").get<std::vector<std::vector<double>>>();
    r.val_per_task = j.at("val_per_task").get<std::vector<std::vector<double>>>();
    r.best_epoch = j.at("best_epoch").get<int>();
    r.best_val = j.at("best_val").get<double>();
    r.epochs_run = j.at("epochs_run").get<int>();
    r.wall_seconds = j.at("wall_seconds").get<double>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config_hash = j.at("config_hash").get<std::string>();
    return r;
}

void TrainReport::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("report: cannot write '" + path + "'");
    out << to_json() << "\n";
}

std::vector<SplitExample> make_splits(const std::vector<Journey>& journeys, std::uint64_t split_seed) {
    std::vector<SplitExample> out;
    out.reserve(journeys.size());
    for (const auto& j : journeys) {
        Rng rng(derive_seed(split_seed, fnv1a64(j.user_id)));
        auto ex = split_journey(j, rng);
        if (ex) out.push_back(std::move(*ex));
    }
    return out;
}

std::vector<LabeledExample> make_examples(const std::vector<Journey>& journeys,
                                          const PageCatalog& catalog, const LabelConfig& label_cfg,
                                          std::uint64_t split_seed, const VocabMaps& vocabs,
                                          const FeatureScaler& scaler, int max_events,
                                          const FeatureConfig& features) {
    std::vector<LabeledExample> out;
    out.reserve(journeys.size());
    for (const auto& j : journeys) {
        Rng rng(derive_seed(split_seed, fnv1a64(j.user_id)));
        auto ex = split_journey(j, rng);
        if (!ex) continue;
        LabeledExample le;
        le.labels = compute_labels(*ex, catalog, label_cfg);
        le.enc = encode_journey(ex->input, vocabs, scaler, max_events, features);
        le.user_id = j.user_id;
        out.push_back(std::move(le));
    }
    return out;
}

TrainReport train_loop(ParamStore& store, int n_train, int n_val, const ExampleLossFn& loss_fn,
                       const TrainConfig& cfg, int n_tasks) {
    cfg.validate();
    if (n_train < 1) throw DataError("train: empty training set");

    const auto t0 = std::chrono::steady_clock::now();
    AdamConfig adam{cfg.lr, 0.9, 0.999, 1e-8};
    TrainReport report;
    report.seed = cfg.seed;
    report.best_val = std::numeric_limits<double>::infinity();

    std::vector<int> order(static_cast<std::size_t>(n_train));
    std::iota(order.begin(), order.end(), 0);

    auto best_params = store.snapshot_values();
    int bad_epochs = 0;

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(epoch) + 1));
        rng.shuffle(order);

        double train_sum = 0.0;
        std::vector<double> task_sum(static_cast<std::size_t>(n_tasks), 0.0);
        int seen = 0;

        for (int start = 0; start < n_train; start += cfg.batch_size) {
            const int bs = std::min(cfg.batch_size, n_train - start);
            Tape tape;
            std::vector<Tensor> example_losses;
            example_losses.reserve(static_cast<std::size_t>(bs));
            for (int b = 0; b < bs; ++b) {
                auto terms = loss_fn(order[static_cast<std::size_t>(start + b)], true, rng, &tape);
                for (std::size_t t = 0; t < terms.size(); ++t)
                    task_sum[t] += terms[t].item();
                example_losses.push_back(add_scalars(terms, &tape));
            }
            Tensor batch_loss = scale(add_scalars(example_losses, &tape), 1.0 / bs, &tape);
            const double lv = batch_loss.item();
            if (!std::isfinite(lv))
                throw TrainError("train: non-finite loss at epoch " + std::to_string(epoch + 1) +
                                 ", batch starting at example " + std::to_string(start));
            train_sum += lv * bs;
            seen += bs;

            store.zero_grad();
            tape.backward(batch_loss);
            store.clip_grad_norm(cfg.clip_norm);
            adam_step(store, adam);
        }

        report.train_total.push_back(train_sum / seen);
        for (double& s : task_sum) s /= seen;
        report.train_per_task.push_back(task_sum);

        // validation pass, inference mode
        double val_sum = 0.0;
        std::vector<double> val_task(static_cast<std::size_t>(n_tasks), 0.0);
        Rng vrng(0);
        for (int i = 0; i < n_val; ++i) {
            auto terms = loss_fn(n_train + i, false, vrng, nullptr);
            double total = 0.0;
            for (std::size_t t = 0; t < terms.size(); ++t) {
                val_task[t] += terms[t].item();
                total += terms[t].item();
            }
            val_sum += total;
        }
        const double val_mean = n_val > 0 ? val_sum / n_val : report.train_total.back();
        report.val_total.push_back(val_mean);
        for (double& s : val_task) s /= std::max(1, n_val);
        report.val_per_task.push_back(val_task);
        report.epochs_run = epoch + 1;

        if (val_mean < report.best_val) {
            report.best_val = val_mean;
            report.best_epoch = epoch;
            best_params = store.snapshot_values();
            bad_epochs = 0;
        } else {
            ++bad_epochs;
            if (bad_epochs >= cfg.patience) break;
        }
    }

    store.restore_values(best_params);
    report.wall_seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return report;
}

namespace {

// train and val examples exposed as one index space: [0, n_train) then
// [n_train, n_train + n_val)
template <class Model>
ExampleLossFn make_supervised_loss(const Model& model, const std::vector<LabeledExample>& train,
                                   const std::vector<LabeledExample>& val, const ClassWeights& weights) {
    return [&model, &train, &val, weights](int index, bool training, Rng& rng, Tape* tape) {
        const LabeledExample& ex = index < static_cast<int>(train.size())
                                       ? train[static_cast<std::size_t>(index)]
                                       : val[static_cast<std::size_t>(index - static_cast<int>(train.size()))];
        auto out = model.forward(ex.enc, training, rng, tape);
        std::vector<Tensor> terms;
        terms.reserve(out.logits.size());
        for (std::size_t i = 0; i < out.logits.size(); ++i) {
            const int k = weights.tasks[i];
            terms.push_back(bce_with_logits(out.logits[i],
                                            static_cast<double>(ex.labels.y[static_cast<std::size_t>(k)]),
                                            weights.w[i], tape));
        }
        return terms;
    };
}

}  // namespace

TrainReport train_trace_model(TraceModel& model, const std::vector<LabeledExample>& train,
                              const std::vector<LabeledExample>& val, const ClassWeights& weights,
                              const TrainConfig& cfg) {
    if (static_cast<int>(weights.tasks.size()) != model.config().n_tasks)
        throw ConfigError("train: class-weight task count does not match model heads");
    auto loss = make_supervised_loss(model, train, val, weights);
    return train_loop(model.params(), static_cast<int>(train.size()), static_cast<int>(val.size()),
                      loss, cfg, model.config().n_tasks);
}

TrainReport train_lstm_model(LstmModel& model, const std::vector<LabeledExample>& train,
                             const std::vector<LabeledExample>& val, const ClassWeights& weights,
                             const TrainConfig& cfg) {
    if (static_cast<int>(weights.tasks.size()) != model.config().n_tasks)
        throw ConfigError("train: class-weight task count does not match model heads");
    auto loss = make_supervised_loss(model, train, val, weights);
    return train_loop(model.params(), static_cast<int>(train.size()), static_cast<int>(val.size()),
                      loss, cfg, model.config().n_tasks);
}

TrainReport train_minigpt_model(MiniGptModel& model, const std::vector<LabeledExample>& train,
                                const std::vector<LabeledExample>& val, const TrainConfig& cfg) {
    auto loss = [&model, &train, &val](int index, bool training, Rng& rng, Tape* tape) {
        const LabeledExample& ex = index < static_cast<int>(train.size())
                                       ? train[static_cast<std::size_t>(index)]
                                       : val[static_cast<std::size_t>(index - static_cast<int>(train.size()))];
        const int L = ex.enc.length;
        std::vector<int> tokens(static_cast<std::size_t>(L));
        for (int r = 0; r < L; ++r) tokens[static_cast<std::size_t>(r)] = ex.enc.cat_at(r, 0);
        Tensor logits = model.forward(tokens, ex.enc.mask, training, rng, tape);
        // predict the next real token at every position that has one
        std::vector<int> targets(static_cast<std::size_t>(L), 0);
        std::vector<std::uint8_t> valid(static_cast<std::size_t>(L), 0);
        for (int r = 0; r + 1 < ex.enc.true_length; ++r) {
            targets[static_cast<std::size_t>(r)] = tokens[static_cast<std::size_t>(r + 1)];
            valid[static_cast<std::size_t>(r)] = 1;
        }
        if (ex.enc.true_length < 2) {
            // single-event journey: nothing to predict, contribute zero
            return std::vector<Tensor>{Tensor::scalar(0.0, tape != nullptr)};
        }
        return std::vector<Tensor>{cross_entropy_rows(logits, targets, valid, tape)};
    };
    return train_loop(model.params(), static_cast<int>(train.size()), static_cast<int>(val.size()),
                      loss, cfg, 1);
}

double evaluate_trace_loss(const TraceModel& model, const std::vector<LabeledExample>& examples,
                           const ClassWeights& weights) {
    Rng rng(0);
    double sum = 0.0;
    for (const auto& ex : examples) {
        auto out = model.forward(ex.enc, false, rng, nullptr);
        Tensor loss = multitask_loss(out.logits, ex.labels, weights, nullptr);
        sum += loss.item();
    }
    return examples.empty() ? 0.0 : sum / static_cast<double>(examples.size());
}

}  // namespace trace
