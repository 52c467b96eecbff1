#include "trace/models.hpp"

#include <algorithm>
#include <cmath>

#include <json.hpp>

namespace trace {

namespace {

Tensor xavier(int in, int out, Rng& rng) {
    Tensor t({in, out}, true);
    const double lim = std::sqrt(6.0 / (in + out));
    for (std::int64_t i = 0; i < t.size(); ++i) t.data()[i] = (rng.uniform() * 2.0 - 1.0) * lim;
    return t;
}

Tensor gaussian(std::vector<int> shape, double stddev, Rng& rng) {
    Tensor t(std::move(shape), true);
    for (std::int64_t i = 0; i < t.size(); ++i) t.data()[i] = rng.normal(0.0, stddev);
    return t;
}

// Creates parameters on init (rng set) or binds and shape-checks loaded
// ones (rng null).
struct Binder {
    ParamStore& store;
    Rng* rng;

    Tensor bind(const std::string& name, Tensor fresh) {
        if (rng) return store.add(name, std::move(fresh));
        Tensor& t = store.get(name);
        if (t.shape() != fresh.shape())
            throw ConfigError("model: checkpoint shape mismatch for '" + name + "'");
        return t;
    }

    Tensor matrix(const std::string& name, int in, int out) {
        return bind(name, rng ? xavier(in, out, *rng) : Tensor({in, out}, true));
    }

    Tensor matrix_gaussian(const std::string& name, int in, int out, double stddev) {
        return bind(name, rng ? gaussian({in, out}, stddev, *rng) : Tensor({in, out}, true));
    }

    // embedding table with the padding row (index 0) zeroed
    Tensor table(const std::string& name, int rows, int cols, double stddev) {
        Tensor t({rows, cols}, true);
        if (rng) {
            t = gaussian({rows, cols}, stddev, *rng);
            for (int j = 0; j < cols; ++j) t.at(0, j) = 0.0;
        }
        return bind(name, std::move(t));
    }

    Tensor zeros(const std::string& name, int n) { return bind(name, Tensor({n}, true)); }

    Tensor ones(const std::string& name, int n) {
        Tensor t({n}, true);
        if (rng)
            for (int i = 0; i < n; ++i) t.data()[i] = 1.0;
        return bind(name, std::move(t));
    }
};

void bind_encoder_block(Binder& b, const std::string& prefix, int d_model, int ffn_dim,
                        AttentionParams& attn, Tensor& ln1_g, Tensor& ln1_b, Tensor& w1, Tensor& b1,
                        Tensor& w2, Tensor& b2, Tensor& ln2_g, Tensor& ln2_b, double init_std = 0.0) {
    auto mat = [&](const std::string& n, int in, int out) {
        return init_std > 0.0 ? b.matrix_gaussian(prefix + n, in, out, init_std)
                              : b.matrix(prefix + n, in, out);
    };
    attn.wq = mat(".attn.wq", d_model, d_model);
    attn.wk = mat(".attn.wk", d_model, d_model);
    attn.wv = mat(".attn.wv", d_model, d_model);
    attn.wo = mat(".attn.wo", d_model, d_model);
    attn.bq = b.zeros(prefix + ".attn.bq", d_model);
    attn.bk = b.zeros(prefix + ".attn.bk", d_model);
    attn.bv = b.zeros(prefix + ".attn.bv", d_model);
    attn.bo = b.zeros(prefix + ".attn.bo", d_model);
    ln1_g = b.ones(prefix + ".ln1.g", d_model);
    ln1_b = b.zeros(prefix + ".ln1.b", d_model);
    w1 = mat(".ffn.w1", d_model, ffn_dim);
    b1 = b.zeros(prefix + ".ffn.b1", ffn_dim);
    w2 = mat(".ffn.w2", ffn_dim, d_model);
    b2 = b.zeros(prefix + ".ffn.b2", d_model);
    ln2_g = b.ones(prefix + ".ln2.g", d_model);
    ln2_b = b.zeros(prefix + ".ln2.b", d_model);
}

// One post-norm encoder block: residual + dropout around both sublayers.
Tensor encoder_block(const Tensor& x_in, int n_heads, const AttentionParams& attn, const Tensor& ln1_g,
                     const Tensor& ln1_b, const Tensor& w1, const Tensor& b1, const Tensor& w2,
                     const Tensor& b2, const Tensor& ln2_g, const Tensor& ln2_b, double eps,
                     const std::vector<std::uint8_t>& mask, bool causal, double rate, bool training,
                     Rng& rng, Tape* tape) {
    Tensor a = multi_head_self_attention(x_in, n_heads, attn, mask, causal, tape);
    a = dropout(a, rate, training, rng, tape);
    Tensor x = layer_norm(add(x_in, a, tape), ln1_g, ln1_b, eps, tape);
    Tensor h = relu(add_bias(matmul(x, w1, tape), b1, tape), tape);
    h = add_bias(matmul(h, w2, tape), b2, tape);
    h = dropout(h, rate, training, rng, tape);
    return layer_norm(add(x, h, tape), ln2_g, ln2_b, eps, tape);
}

}  // namespace

// ------------------------------------------------------------ TraceConfig --

void TraceConfig::set_vocab_sizes(const VocabMaps& v) {
    vocab_page = VocabMaps::size(v.page_name);
    vocab_device = VocabMaps::size(v.device_type);
    vocab_platform = VocabMaps::size(v.platform);
    vocab_locale = VocabMaps::size(v.locale);
}

void TraceConfig::validate() const {
    if (d_model % n_heads != 0)
        throw ConfigError("model: d_model " + std::to_string(d_model) + " not divisible by n_heads " +
                          std::to_string(n_heads));
    if (embed_dim < 1 || d_model < 1 || ffn_dim < 1 || n_encoders < 1 || shared_hidden < 1 ||
        out_dim < 1 || n_tasks < 1 || max_events < 1 || max_sessions < 1 || lstm_hidden < 1)
        throw ConfigError("model: all dimensions must be positive");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("model: dropout must be in [0,1)");
    if (vocab_page < 3 || vocab_device < 3 || vocab_platform < 3 || vocab_locale < 3)
        throw ConfigError("model: vocabulary sizes not set");
    if (n_cat != 4) throw ConfigError("model: expected 4 categorical attributes");
}

std::string TraceConfig::to_json() const {
    nlohmann::json j;
    j["embed_dim"] = embed_dim;
    j["n_cat"] = n_cat;
    j["include_time"] = features.include_time;
    j["include_session"] = features.include_session;
    j["max_events"] = max_events;
    j["max_sessions"] = max_sessions;
    j["d_model"] = d_model;
    j["n_heads"] = n_heads;
    j["ffn_dim"] = ffn_dim;
    j["n_encoders"] = n_encoders;
    j["dropout_rate"] = dropout_rate;
    j["shared_hidden"] = shared_hidden;
    j["out_dim"] = out_dim;
    j["n_tasks"] = n_tasks;
    j["use_trig_pe"] = use_trig_pe;
    j["lstm_hidden"] = lstm_hidden;
    j["ln_eps"] = ln_eps;
    j["vocab_page"] = vocab_page;
    j["vocab_device"] = vocab_device;
    j["vocab_platform"] = vocab_platform;
    j["vocab_locale"] = vocab_locale;
    return j.dump();
}

TraceConfig TraceConfig::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    TraceConfig c;
    c.embed_dim = j.at("embed_dim").get<int>();
    c.n_cat = j.at("n_cat").get<int>();
    c.features.include_time = j.at("include_time").get<bool>();
    c.features.include_session = j.at("include_session").get<bool>();
    c.max_events = j.at("max_events").get<int>();
    c.max_sessions = j.at("max_sessions").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.ffn_dim = j.at("ffn_dim").get<int>();
    c.n_encoders = j.at("n_encoders").get<int>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.shared_hidden = j.at("shared_hidden").get<int>();
    c.out_dim = j.at("out_dim").get<int>();
    c.n_tasks = j.at("n_tasks").get<int>();
    c.use_trig_pe = j.at("use_trig_pe").get<bool>();
    c.lstm_hidden = j.at("lstm_hidden").get<int>();
    c.ln_eps = j.at("ln_eps").get<double>();
    c.vocab_page = j.at("vocab_page").get<int>();
    c.vocab_device = j.at("vocab_device").get<int>();
    c.vocab_platform = j.at("vocab_platform").get<int>();
    c.vocab_locale = j.at("vocab_locale").get<int>();
    return c;
}

// ------------------------------------------------------------- TraceModel --

namespace {

void build_trace_params(Binder& b, const TraceConfig& cfg) {
    const int D = cfg.feature_dim();
    b.table("embed.page", cfg.vocab_page, cfg.embed_dim, 0.1);
    b.table("embed.device", cfg.vocab_device, cfg.embed_dim, 0.1);
    b.table("embed.platform", cfg.vocab_platform, cfg.embed_dim, 0.1);
    b.table("embed.locale", cfg.vocab_locale, cfg.embed_dim, 0.1);
    b.table("pos.event", cfg.max_events + 1, D, 0.1);
    if (cfg.features.include_session) b.table("pos.session", cfg.max_sessions + 1, D, 0.1);
    b.matrix("proj.w", D, cfg.d_model);
    b.zeros("proj.b", cfg.d_model);
}

void build_shared_head(Binder& b, int in_dim, const TraceConfig& cfg) {
    b.matrix("shared.w1", in_dim, cfg.shared_hidden);
    b.zeros("shared.b1", cfg.shared_hidden);
    b.matrix("shared.w2", cfg.shared_hidden, cfg.out_dim);
    b.zeros("shared.b2", cfg.out_dim);
    for (int k = 0; k < cfg.n_tasks; ++k) {
        b.matrix("head" + std::to_string(k) + ".w", cfg.out_dim, 1);
        b.zeros("head" + std::to_string(k) + ".b", 1);
    }
}

// common input checks for encoded journeys
void check_encoding(const EncodedJourney& enc, const TraceConfig& cfg) {
    if (enc.n_cat != cfg.n_cat) throw ConfigError("model: encoded attribute count mismatch");
    if (enc.num_width != cfg.features.numeric_width())
        throw ConfigError("model: encoded numeric width " + std::to_string(enc.num_width) +
                          " does not match config " + std::to_string(cfg.features.numeric_width()));
    if (enc.true_length > cfg.max_events)
        throw ConfigError("model: encoded journey longer than the crop window");
    if (enc.true_length < 1) throw DataError("model: encoded journey has no real events");
}

Tensor trig_encoding(const EncodedJourney& enc, int dim) {
    Tensor pe({enc.length, dim}, false);
    for (int r = 0; r < enc.length; ++r) {
        if (!enc.mask[static_cast<std::size_t>(r)]) continue;
        const double m = static_cast<double>(enc.event_pos[static_cast<std::size_t>(r)]);
        for (int i = 0; i < dim; i += 2) {
            const double freq = std::pow(10000.0, -static_cast<double>(i) / dim);
            pe.at(r, i) = std::sin(m * freq);
            if (i + 1 < dim) pe.at(r, i + 1) = std::cos(m * freq);
        }
    }
    return pe;
}

}  // namespace

TraceModel::TraceModel(TraceConfig cfg, std::uint64_t init_seed)
    : cfg_(std::move(cfg)), store_(std::make_shared<ParamStore>()) {
    cfg_.validate();
    Rng rng(init_seed);
    Binder b{*store_, &rng};
    build_trace_params(b, cfg_);
    for (int e = 0; e < cfg_.n_encoders; ++e) {
        AttentionParams attn;
        Tensor t1, t2, t3, t4, t5, t6, t7, t8;
        bind_encoder_block(b, "enc" + std::to_string(e), cfg_.d_model, cfg_.ffn_dim, attn, t1, t2, t3,
                           t4, t5, t6, t7, t8);
    }
    build_shared_head(b, cfg_.d_model, cfg_);
}

TraceModel::TraceModel(TraceConfig cfg, ParamStore&& loaded)
    : cfg_(std::move(cfg)), store_(std::make_shared<ParamStore>(std::move(loaded))) {
    cfg_.validate();
    Binder b{*store_, nullptr};
    build_trace_params(b, cfg_);
    for (int e = 0; e < cfg_.n_encoders; ++e) {
        AttentionParams attn;
        Tensor t1, t2, t3, t4, t5, t6, t7, t8;
        bind_encoder_block(b, "enc" + std::to_string(e), cfg_.d_model, cfg_.ffn_dim, attn, t1, t2, t3,
                           t4, t5, t6, t7, t8);
    }
    build_shared_head(b, cfg_.d_model, cfg_);
}

Tensor TraceModel::assemble_input(const EncodedJourney& enc, Tape* tape) const {
    check_encoding(enc, cfg_);
    const int L = enc.length;
    const int D = cfg_.feature_dim();

    std::vector<Tensor> parts;
    std::vector<int> idx(static_cast<std::size_t>(L));
    const char* tables[4] = {"embed.page", "embed.device", "embed.platform", "embed.locale"};
    for (int a = 0; a < 4; ++a) {
        for (int r = 0; r < L; ++r) idx[static_cast<std::size_t>(r)] = enc.cat_at(r, a);
        parts.push_back(gather_rows(store_->get(tables[a]), idx, tape));
    }
    if (enc.num_width > 0)
        parts.push_back(Tensor::from({L, enc.num_width}, enc.num));
    Tensor f = concat_cols(parts, tape);

    for (int r = 0; r < L; ++r) idx[static_cast<std::size_t>(r)] = enc.event_pos[static_cast<std::size_t>(r)];
    f = add(f, gather_rows(store_->get("pos.event"), idx, tape), tape);
    if (cfg_.features.include_session) {
        for (int r = 0; r < L; ++r)
            idx[static_cast<std::size_t>(r)] = std::min(enc.session_pos[static_cast<std::size_t>(r)], cfg_.max_sessions);
        f = add(f, gather_rows(store_->get("pos.session"), idx, tape), tape);
    }
    if (cfg_.use_trig_pe) f = add(f, trig_encoding(enc, D), tape);

    return add_bias(matmul(f, store_->get("proj.w"), tape), store_->get("proj.b"), tape);
}

Tensor TraceModel::backbone(const EncodedJourney& enc, bool training, Rng& rng, Tape* tape) const {
    Tensor x = assemble_input(enc, tape);
    for (int e = 0; e < cfg_.n_encoders; ++e) {
        const std::string p = "enc" + std::to_string(e);
        AttentionParams attn{store_->get(p + ".attn.wq"), store_->get(p + ".attn.wk"),
                             store_->get(p + ".attn.wv"), store_->get(p + ".attn.wo"),
                             store_->get(p + ".attn.bq"), store_->get(p + ".attn.bk"),
                             store_->get(p + ".attn.bv"), store_->get(p + ".attn.bo")};
        x = encoder_block(x, cfg_.n_heads, attn, store_->get(p + ".ln1.g"), store_->get(p + ".ln1.b"),
                          store_->get(p + ".ffn.w1"), store_->get(p + ".ffn.b1"),
                          store_->get(p + ".ffn.w2"), store_->get(p + ".ffn.b2"),
                          store_->get(p + ".ln2.g"), store_->get(p + ".ln2.b"), cfg_.ln_eps, enc.mask,
                          false, cfg_.dropout_rate, training, rng, tape);
    }
    Tensor pooled = masked_max_pool(x, enc.mask, tape);
    Tensor h = relu(add_bias(matmul(pooled, store_->get("shared.w1"), tape), store_->get("shared.b1"), tape), tape);
    return sigmoid(add_bias(matmul(h, store_->get("shared.w2"), tape), store_->get("shared.b2"), tape), tape);
}

TraceModel::Output TraceModel::forward(const EncodedJourney& enc, bool training, Rng& rng,
                                       Tape* tape) const {
    Output out;
    out.embedding = backbone(enc, training, rng, tape);
    out.logits.reserve(static_cast<std::size_t>(cfg_.n_tasks));
    for (int k = 0; k < cfg_.n_tasks; ++k) {
        const std::string p = "head" + std::to_string(k);
        out.logits.push_back(
            add_bias(matmul(out.embedding, store_->get(p + ".w"), tape), store_->get(p + ".b"), tape));
    }
    return out;
}

std::vector<double> TraceModel::embed(const EncodedJourney& enc) const {
    Rng rng(0);
    Tensor e = backbone(enc, false, rng, nullptr);
    return {e.data(), e.data() + e.size()};
}

void TraceModel::save(const std::string& path, const std::string& kind, std::uint64_t seed) const {
    save_checkpoint(path, *store_, kind, cfg_.to_json(), seed);
}

// -------------------------------------------------------------- LstmModel --

namespace {

void build_lstm_params(Binder& b, const TraceConfig& cfg) {
    build_trace_params(b, cfg);
    const int H = cfg.lstm_hidden;
    b.matrix("lstm.wx", cfg.d_model, 4 * H);
    b.matrix("lstm.wh", H, 4 * H);
    Tensor bias({4 * H}, true);
    if (b.rng) {
        // forget-gate bias starts at 1
        for (int i = H; i < 2 * H; ++i) bias.data()[i] = 1.0;
    }
    b.bind("lstm.b", std::move(bias));
}

}  // namespace

LstmModel::LstmModel(TraceConfig cfg, std::uint64_t init_seed)
    : cfg_(std::move(cfg)), store_(std::make_shared<ParamStore>()) {
    cfg_.validate();
    Rng rng(init_seed);
    Binder b{*store_, &rng};
    build_lstm_params(b, cfg_);
    build_shared_head(b, cfg_.lstm_hidden, cfg_);
}

LstmModel::LstmModel(TraceConfig cfg, ParamStore&& loaded)
    : cfg_(std::move(cfg)), store_(std::make_shared<ParamStore>(std::move(loaded))) {
    cfg_.validate();
    Binder b{*store_, nullptr};
    build_lstm_params(b, cfg_);
    build_shared_head(b, cfg_.lstm_hidden, cfg_);
}

Tensor LstmModel::assemble_input(const EncodedJourney& enc, Tape* tape) const {
    check_encoding(enc, cfg_);
    const int L = enc.length;
    std::vector<Tensor> parts;
    std::vector<int> idx(static_cast<std::size_t>(L));
    const char* tables[4] = {"embed.page", "embed.device", "embed.platform", "embed.locale"};
    for (int a = 0; a < 4; ++a) {
        for (int r = 0; r < L; ++r) idx[static_cast<std::size_t>(r)] = enc.cat_at(r, a);
        parts.push_back(gather_rows(store_->get(tables[a]), idx, tape));
    }
    if (enc.num_width > 0) parts.push_back(Tensor::from({L, enc.num_width}, enc.num));
    Tensor f = concat_cols(parts, tape);
    for (int r = 0; r < L; ++r) idx[static_cast<std::size_t>(r)] = enc.event_pos[static_cast<std::size_t>(r)];
    f = add(f, gather_rows(store_->get("pos.event"), idx, tape), tape);
    if (cfg_.features.include_session) {
        for (int r = 0; r < L; ++r)
            idx[static_cast<std::size_t>(r)] = std::min(enc.session_pos[static_cast<std::size_t>(r)], cfg_.max_sessions);
        f = add(f, gather_rows(store_->get("pos.session"), idx, tape), tape);
    }
    return add_bias(matmul(f, store_->get("proj.w"), tape), store_->get("proj.b"), tape);
}

TraceModel::Output LstmModel::forward(const EncodedJourney& enc, bool training, Rng& rng,
                                      Tape* tape) const {
    (void)training;
    (void)rng;
    Tensor x = assemble_input(enc, tape);
    const int H = cfg_.lstm_hidden;
    const Tensor& wx = store_->get("lstm.wx");
    const Tensor& wh = store_->get("lstm.wh");
    const Tensor& b = store_->get("lstm.b");

    Tensor h({1, H}, false);
    Tensor c({1, H}, false);
    for (int t = 0; t < enc.length; ++t) {
        if (!enc.mask[static_cast<std::size_t>(t)]) continue;
        Tensor xt = slice_rows(x, t, 1, tape);
        Tensor gates = add(add_bias(matmul(xt, wx, tape), b, tape), matmul(h, wh, tape), tape);
        Tensor ig = sigmoid(slice_cols(gates, 0, H, tape), tape);
        Tensor fg = sigmoid(slice_cols(gates, H, H, tape), tape);
        Tensor gg = tanh(slice_cols(gates, 2 * H, H, tape), tape);
        Tensor og = sigmoid(slice_cols(gates, 3 * H, H, tape), tape);
        c = add(mul(fg, c, tape), mul(ig, gg, tape), tape);
        h = mul(og, tanh(c, tape), tape);
    }

    TraceModel::Output out;
    Tensor hh = relu(add_bias(matmul(h, store_->get("shared.w1"), tape), store_->get("shared.b1"), tape), tape);
    out.embedding =
        sigmoid(add_bias(matmul(hh, store_->get("shared.w2"), tape), store_->get("shared.b2"), tape), tape);
    out.logits.reserve(static_cast<std::size_t>(cfg_.n_tasks));
    for (int k = 0; k < cfg_.n_tasks; ++k) {
        const std::string p = "head" + std::to_string(k);
        out.logits.push_back(
            add_bias(matmul(out.embedding, store_->get(p + ".w"), tape), store_->get(p + ".b"), tape));
    }
    return out;
}

std::vector<double> LstmModel::embed(const EncodedJourney& enc) const {
    Rng rng(0);
    Tensor e = forward(enc, false, rng, nullptr).embedding;
    return {e.data(), e.data() + e.size()};
}

void LstmModel::save(const std::string& path, std::uint64_t seed) const {
    save_checkpoint(path, *store_, kKindLstm, cfg_.to_json(), seed);
}

// ------------------------------------------------------------ MiniGptModel --

void MiniGptConfig::validate() const {
    if (vocab < 3) throw ConfigError("minigpt: vocabulary size not set");
    if (d_model % n_heads != 0) throw ConfigError("minigpt: d_model not divisible by n_heads");
    if (dropout_rate < 0.0 || dropout_rate >= 1.0) throw ConfigError("minigpt: dropout must be in [0,1)");
    if (max_events < 1 || ffn_dim < 1) throw ConfigError("minigpt: dimensions must be positive");
}

std::string MiniGptConfig::to_json() const {
    nlohmann::json j;
    j["vocab"] = vocab;
    j["d_model"] = d_model;
    j["n_heads"] = n_heads;
    j["ffn_dim"] = ffn_dim;
    j["max_events"] = max_events;
    j["dropout_rate"] = dropout_rate;
    j["ln_eps"] = ln_eps;
    return j.dump();
}

MiniGptConfig MiniGptConfig::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    MiniGptConfig c;
    c.vocab = j.at("vocab").get<int>();
    c.d_model = j.at("d_model").get<int>();
    c.n_heads = j.at("n_heads").get<int>();
    c.ffn_dim = j.at("ffn_dim").get<int>();
    c.max_events = j.at("max_events").get<int>();
    c.dropout_rate = j.at("dropout_rate").get<double>();
    c.ln_eps = j.at("ln_eps").get<double>();
    return c;
}

namespace {

constexpr double kGptInitStd = 0.02;

void build_gpt_params(Binder& b, const MiniGptConfig& cfg) {
    b.table("tok", cfg.vocab, cfg.d_model, kGptInitStd);
    b.table("pos", cfg.max_events, cfg.d_model, kGptInitStd);
    AttentionParams attn;
    Tensor t1, t2, t3, t4, t5, t6, t7, t8;
    bind_encoder_block(b, "enc0", cfg.d_model, cfg.ffn_dim, attn, t1, t2, t3, t4, t5, t6, t7, t8,
                       kGptInitStd);
    b.matrix_gaussian("lm.w", cfg.d_model, cfg.vocab, kGptInitStd);
    b.zeros("lm.b", cfg.vocab);
}

}  // namespace

MiniGptModel::MiniGptModel(MiniGptConfig cfg, std::uint64_t init_seed)
    : cfg_(cfg), store_(std::make_shared<ParamStore>()) {
    cfg_.validate();
    Rng rng(init_seed);
    Binder b{*store_, &rng};
    build_gpt_params(b, cfg_);
}

MiniGptModel::MiniGptModel(MiniGptConfig cfg, ParamStore&& loaded)
    : cfg_(cfg), store_(std::make_shared<ParamStore>(std::move(loaded))) {
    cfg_.validate();
    Binder b{*store_, nullptr};
    build_gpt_params(b, cfg_);
}

Tensor MiniGptModel::block(const std::vector<int>& tokens, const std::vector<std::uint8_t>& mask,
                           bool training, Rng& rng, Tape* tape) const {
    const int L = static_cast<int>(tokens.size());
    if (static_cast<int>(mask.size()) != L) throw ConfigError("minigpt: mask length mismatch");
    if (L > cfg_.max_events) throw ConfigError("minigpt: sequence longer than position table");
    for (int t : tokens)
        if (t < 0 || t >= cfg_.vocab)
            throw DataError("minigpt: token " + std::to_string(t) + " outside vocabulary");

    std::vector<int> positions(static_cast<std::size_t>(L));
    for (int i = 0; i < L; ++i) positions[static_cast<std::size_t>(i)] = i;
    Tensor x = add(gather_rows(store_->get("tok"), tokens, tape),
                   gather_rows(store_->get("pos"), positions, tape), tape);

    AttentionParams attn{store_->get("enc0.attn.wq"), store_->get("enc0.attn.wk"),
                         store_->get("enc0.attn.wv"), store_->get("enc0.attn.wo"),
                         store_->get("enc0.attn.bq"), store_->get("enc0.attn.bk"),
                         store_->get("enc0.attn.bv"), store_->get("enc0.attn.bo")};
    return encoder_block(x, cfg_.n_heads, attn, store_->get("enc0.ln1.g"), store_->get("enc0.ln1.b"),
                         store_->get("enc0.ffn.w1"), store_->get("enc0.ffn.b1"),
                         store_->get("enc0.ffn.w2"), store_->get("enc0.ffn.b2"),
                         store_->get("enc0.ln2.g"), store_->get("enc0.ln2.b"), cfg_.ln_eps, mask, true,
                         cfg_.dropout_rate, training, rng, tape);
}

Tensor MiniGptModel::forward(const std::vector<int>& tokens, const std::vector<std::uint8_t>& mask,
                             bool training, Rng& rng, Tape* tape) const {
    Tensor x = block(tokens, mask, training, rng, tape);
    return add_bias(matmul(x, store_->get("lm.w"), tape), store_->get("lm.b"), tape);
}

std::vector<double> MiniGptModel::embed(const std::vector<int>& tokens,
                                        const std::vector<std::uint8_t>& mask) const {
    Rng rng(0);
    Tensor x = block(tokens, mask, false, rng, nullptr);
    Tensor e = masked_mean_pool(x, mask, nullptr);
    return {e.data(), e.data() + e.size()};
}

void MiniGptModel::save(const std::string& path, std::uint64_t seed) const {
    save_checkpoint(path, *store_, kKindMiniGpt, cfg_.to_json(), seed);
}

// ------------------------------------------------------------ aggregation --

std::vector<double> st_aggregate(const std::vector<std::vector<double>>& embeddings) {
    if (embeddings.empty()) throw ConfigError("st_aggregate: empty embedding list");
    const std::size_t d = embeddings.front().size();
    std::vector<double> mean(d, 0.0);
    for (const auto& e : embeddings) {
        if (e.size() != d) throw ConfigError("st_aggregate: embedding dimensions differ");
        for (std::size_t i = 0; i < d; ++i) mean[i] += e[i];
    }
    for (double& v : mean) v /= static_cast<double>(embeddings.size());
    return mean;
}

// ---------------------------------------------------------------- Embedder --

Embedder Embedder::load(const std::string& checkpoint_path, const VocabMaps& vocabs,
                        const FeatureScaler& scaler) {
    auto lc = load_checkpoint(checkpoint_path);
    Embedder em;
    em.kind_ = lc.model_kind;

    const bool is_trace =
        lc.model_kind == kKindTrace || lc.model_kind.rfind(kKindSingleTaskPrefix, 0) == 0;
    if (is_trace) {
        auto cfg = TraceConfig::from_json(lc.config_json);
        auto model = std::make_shared<TraceModel>(cfg, std::move(lc.store));
        em.dim_ = cfg.out_dim;
        em.fn_ = [model, vocabs, scaler](const Journey& j) {
            const auto enc = encode_journey(j, vocabs, scaler, model->config().max_events,
                                            model->config().features);
            return model->embed(enc);
        };
    } else if (lc.model_kind == kKindLstm) {
        auto cfg = TraceConfig::from_json(lc.config_json);
        auto model = std::make_shared<LstmModel>(cfg, std::move(lc.store));
        em.dim_ = cfg.out_dim;
        em.fn_ = [model, vocabs, scaler](const Journey& j) {
            const auto enc = encode_journey(j, vocabs, scaler, model->config().max_events,
                                            model->config().features);
            return model->embed(enc);
        };
    } else if (lc.model_kind == kKindMiniGpt) {
        auto cfg = MiniGptConfig::from_json(lc.config_json);
        auto model = std::make_shared<MiniGptModel>(cfg, std::move(lc.store));
        em.dim_ = cfg.d_model;
        em.fn_ = [model, vocabs, scaler](const Journey& j) {
            const auto enc = encode_journey(j, vocabs, scaler, model->config().max_events);
            std::vector<int> tokens(static_cast<std::size_t>(enc.length));
            for (int r = 0; r < enc.length; ++r) tokens[static_cast<std::size_t>(r)] = enc.cat_at(r, 0);
            return model->embed(tokens, enc.mask);
        };
    } else {
        throw ConfigError("embedder: unknown model kind '" + lc.model_kind + "' in checkpoint");
    }
    return em;
}

}  // namespace trace
