#include "trace/synth.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include <json.hpp>

namespace trace {

namespace {

// Chain categories in index order; PageCategory::other is not generated.
constexpr PageCategory kChain[kChainCategories] = {
    PageCategory::homepage,       PageCategory::search_results, PageCategory::product_detail,
    PageCategory::checkout,       PageCategory::order_confirmation,
    PageCategory::upcoming_order, PageCategory::account,        PageCategory::content,
    PageCategory::support,
};

constexpr int kConfIdx = 4;  // order_confirmation position in kChain

std::vector<double> normalized(std::vector<double> v) {
    double s = 0.0;
    for (double x : v) s += x;
    if (s <= 0.0) throw ConfigError("generator: cannot normalize an all-zero row");
    for (double& x : v) x /= s;
    return v;
}

void check_stochastic(const std::vector<double>& row, const std::string& what) {
    double s = 0.0;
    for (double p : row) {
        if (p < 0.0 || p > 1.0) throw ConfigError("generator: probability outside [0,1] in " + what);
        s += p;
    }
    if (std::abs(s - 1.0) > 1e-9) throw ConfigError("generator: " + what + " does not sum to 1");
}

// Discretized lognormal pmf over lengths 1..max_len.
std::vector<double> discrete_lognormal_pmf(double median, double sigma, int max_len) {
    const double mu = std::log(median);
    auto cdf = [&](double x) { return 0.5 * std::erfc(-(std::log(x) - mu) / (sigma * std::sqrt(2.0))); };
    std::vector<double> pmf(static_cast<std::size_t>(max_len));
    for (int k = 1; k <= max_len; ++k) {
        const double lo = k == 1 ? 0.0 : cdf(k - 0.5);
        const double hi = k == max_len ? 1.0 : cdf(k + 0.5);
        pmf[static_cast<std::size_t>(k - 1)] = std::max(0.0, hi - lo);
    }
    return normalized(pmf);
}

std::vector<double> truncated_geometric_pmf(double p_stop, int max_n) {
    std::vector<double> pmf(static_cast<std::size_t>(max_n));
    double stay = 1.0;
    for (int m = 1; m <= max_n; ++m) {
        pmf[static_cast<std::size_t>(m - 1)] = stay * p_stop;
        stay *= 1.0 - p_stop;
    }
    return normalized(pmf);
}

}  // namespace

int chain_category_index(PageCategory c) {
    for (int i = 0; i < kChainCategories; ++i)
        if (kChain[i] == c) return i;
    throw ConfigError("generator: category not part of the chain");
}

void GeneratorConfig::validate() const {
    if (states.empty()) throw ConfigError("generator: no latent states configured");
    if (static_cast<int>(initial_state.size()) != static_cast<int>(states.size()))
        throw ConfigError("generator: initial_state size != state count");
    check_stochastic(initial_state, "initial_state");
    if (state_transitions.size() != states.size())
        throw ConfigError("generator: state_transitions size != state count");
    for (const auto& row : state_transitions) check_stochastic(row, "state_transitions row");
    check_stochastic(session_count_pmf, "session_count_pmf");
    for (const auto& st : states) {
        if (static_cast<int>(st.category_transitions.size()) != kChainCategories)
            throw ConfigError("generator: category matrix must be " + std::to_string(kChainCategories) +
                              " rows (state " + st.name + ")");
        for (const auto& row : st.category_transitions)
            check_stochastic(row, "category transitions of state " + st.name);
        check_stochastic(st.session_start, "session_start of state " + st.name);
        check_stochastic(st.session_length_pmf, "session_length_pmf of state " + st.name);
    }
    check_stochastic(device_prior, "device_prior");
    check_stochastic(platform_prior, "platform_prior");
    check_stochastic(locale_prior, "locale_prior");
    if (device_types.size() != device_prior.size() || platforms.size() != platform_prior.size() ||
        locales.size() != locale_prior.size())
        throw ConfigError("generator: attribute prior size mismatch");
    if (session_timeout <= 0.0) throw ConfigError("generator: session timeout must be positive");
    for (int i = 0; i < kChainCategories; ++i) {
        const bool reachable = std::any_of(states.begin(), states.end(), [&](const StateProfile& st) {
            if (st.session_start[static_cast<std::size_t>(i)] > 0.0) return true;
            for (const auto& row : st.category_transitions)
                if (row[static_cast<std::size_t>(i)] > 0.0) return true;
            return false;
        });
        if (reachable && catalog.names_in_category(kChain[i]).empty())
            throw ConfigError(std::string("generator: category '") + to_string(kChain[i]) +
                              "' reachable but has no pages in the catalog");
    }
}

GeneratorConfig default_generator_config() {
    GeneratorConfig cfg;

    auto add = [&](const std::string& name, PageCategory cat, bool common = false) {
        cfg.catalog.pages.push_back({name, cat, common});
    };
    add("home", PageCategory::homepage, true);
    add("srp_hotels", PageCategory::search_results, true);
    add("srp_flights", PageCategory::search_results);
    add("srp_packages", PageCategory::search_results);
    add("srp_cars", PageCategory::search_results);
    add("srp_activities", PageCategory::search_results);
    add("srp_trains", PageCategory::search_results);
    add("pdp_hotel", PageCategory::product_detail, true);
    add("pdp_flight", PageCategory::product_detail);
    add("pdp_package", PageCategory::product_detail);
    add("pdp_car", PageCategory::product_detail);
    add("pdp_activity", PageCategory::product_detail);
    add("pdp_cruise", PageCategory::product_detail);
    add("pdp_deal", PageCategory::product_detail);
    add("pdp_villa", PageCategory::product_detail);
    add("checkout_start", PageCategory::checkout, true);
    add("checkout_payment", PageCategory::checkout);
    add("checkout_review", PageCategory::checkout);
    add("order_confirmation", PageCategory::order_confirmation, true);
    add("trips_upcoming", PageCategory::upcoming_order, true);
    add("trip_details", PageCategory::upcoming_order);
    add("account_home", PageCategory::account);
    add("account_settings", PageCategory::account);
    add("account_payments", PageCategory::account);
    add("account_preferences", PageCategory::account);
    add("loyalty_hub", PageCategory::account);
    add("guide_paris", PageCategory::content);
    add("guide_rome", PageCategory::content);
    add("guide_tokyo", PageCategory::content);
    add("guide_london", PageCategory::content);
    add("guide_bali", PageCategory::content);
    add("guide_nyc", PageCategory::content);
    add("guide_sydney", PageCategory::content);
    add("deals_home", PageCategory::content);
    add("blog_travel_tips", PageCategory::content);
    add("blog_packing", PageCategory::content);
    add("blog_family", PageCategory::content);
    add("inspiration_beach", PageCategory::content);
    add("inspiration_city", PageCategory::content);
    add("currency_tools", PageCategory::content);
    add("weather_widget", PageCategory::content);
    add("app_landing", PageCategory::content);
    add("gift_cards", PageCategory::content);
    add("referrals", PageCategory::content);
    add("help_center", PageCategory::support, true);
    add("contact_us", PageCategory::support);
    add("faq", PageCategory::support);
    add("faq_payments", PageCategory::support);

    // Site structure: how plausible is a hop between categories, before any
    // intent bias. Order: home, srp, pdp, checkout, conf, upcoming,
    // account, content, support.
    const double adj[kChainCategories][kChainCategories] = {
        /* home     */ {0.50, 1.00, 0.30, 0.05, 0.00, 0.30, 0.30, 1.00, 0.20},
        /* srp      */ {0.30, 1.00, 1.00, 0.05, 0.00, 0.05, 0.10, 0.30, 0.10},
        /* pdp      */ {0.20, 0.80, 1.00, 1.00, 0.00, 0.05, 0.10, 0.30, 0.10},
        /* checkout */ {0.10, 0.10, 0.30, 1.00, 1.00, 0.00, 0.10, 0.00, 0.20},
        /* conf     */ {0.50, 0.20, 0.20, 0.00, 0.00, 1.00, 0.50, 0.30, 0.20},
        /* upcoming */ {0.40, 0.20, 0.30, 0.02, 0.00, 1.00, 0.50, 0.20, 0.30},
        /* account  */ {0.50, 0.20, 0.20, 0.02, 0.00, 0.50, 1.00, 0.30, 0.30},
        /* content  */ {0.50, 0.80, 0.50, 0.02, 0.00, 0.10, 0.20, 1.00, 0.20},
        /* support  */ {0.50, 0.20, 0.20, 0.05, 0.00, 0.30, 0.40, 0.30, 1.00},
    };

    struct StateSeed {
        const char* name;
        double attraction[kChainCategories];
        double start[kChainCategories];
        double median_len;
    };
    const StateSeed seeds[4] = {
        {"explore",
         {1.20, 0.80, 0.45, 0.05, 0.30, 0.20, 0.45, 1.80, 0.45},
         {0.50, 0.15, 0.03, 0.00, 0.00, 0.00, 0.03, 0.25, 0.04},
         9.0},
        {"research",
         {0.60, 1.20, 1.10, 0.15, 0.50, 0.30, 0.35, 0.80, 0.35},
         {0.35, 0.25, 0.15, 0.00, 0.00, 0.00, 0.04, 0.17, 0.04},
         11.0},
        {"compare",
         {0.40, 0.75, 1.40, 0.50, 0.80, 0.95, 0.55, 0.40, 0.35},
         {0.30, 0.15, 0.30, 0.00, 0.00, 0.15, 0.05, 0.00, 0.05},
         9.0},
        {"purchase_ready",
         {0.30, 0.45, 1.15, 2.20, 1.50, 0.60, 0.35, 0.20, 0.25},
         {0.30, 0.15, 0.35, 0.10, 0.00, 0.05, 0.05, 0.00, 0.00},
         7.0},
    };

    for (const auto& seed : seeds) {
        StateProfile st;
        st.name = seed.name;
        st.category_transitions.resize(kChainCategories);
        for (int i = 0; i < kChainCategories; ++i) {
            std::vector<double> row(kChainCategories);
            for (int j = 0; j < kChainCategories; ++j) row[static_cast<std::size_t>(j)] = adj[i][j] * seed.attraction[j];
            st.category_transitions[static_cast<std::size_t>(i)] = normalized(row);
        }
        st.session_start = normalized(std::vector<double>(seed.start, seed.start + kChainCategories));
        st.session_length_pmf = discrete_lognormal_pmf(seed.median_len, 0.55, 40);
        cfg.states.push_back(std::move(st));
    }

    cfg.initial_state = {0.40, 0.30, 0.18, 0.12};
    cfg.state_transitions = {
        {0.55, 0.30, 0.10, 0.05},
        {0.10, 0.50, 0.30, 0.10},
        {0.05, 0.15, 0.50, 0.30},
        {0.15, 0.10, 0.20, 0.55},
    };
    cfg.session_count_pmf = truncated_geometric_pmf(0.38, 8);

    cfg.session_timeout = 2.0 * 3600.0;
    cfg.intra_gap_log_mean = std::log(35.0);
    cfg.intra_gap_log_sigma = 0.9;
    cfg.inter_gap_log_mean = std::log(24.0 * 3600.0);
    cfg.inter_gap_log_sigma = 1.3;

    cfg.device_types = {"desktop", "mobile", "tablet"};
    cfg.device_prior = {0.50, 0.38, 0.12};
    cfg.platforms = {"web", "ios", "android"};
    cfg.platform_prior = {0.62, 0.22, 0.16};
    cfg.locales = {"en_US", "en_GB", "de_DE", "fr_FR"};
    cfg.locale_prior = {0.46, 0.22, 0.17, 0.15};

    cfg.start_time = 1.7e9;
    cfg.start_time_spread = 60.0 * 86400.0;
    cfg.seed = 20240914;
    return cfg;
}

Journey generate_journey(const GeneratorConfig& cfg, Rng& rng, std::string user_id,
                         std::vector<int>* state_trace) {
    // Per-category page lists, resolved once
    std::vector<std::vector<std::string>> pages(kChainCategories);
    for (int i = 0; i < kChainCategories; ++i) pages[static_cast<std::size_t>(i)] = cfg.catalog.names_in_category(kChain[i]);

    Journey j;
    j.user_id = std::move(user_id);
    if (state_trace) state_trace->clear();

    int state = rng.categorical(cfg.initial_state);
    const int n_sessions = rng.categorical(cfg.session_count_pmf) + 1;
    double t = cfg.start_time + rng.uniform() * cfg.start_time_spread;

    for (int s = 0; s < n_sessions; ++s) {
        if (state_trace) state_trace->push_back(state);
        const StateProfile& prof = cfg.states[static_cast<std::size_t>(state)];
        const std::string device = cfg.device_types[static_cast<std::size_t>(rng.categorical(cfg.device_prior))];
        const std::string platform = cfg.platforms[static_cast<std::size_t>(rng.categorical(cfg.platform_prior))];
        const std::string locale = cfg.locales[static_cast<std::size_t>(rng.categorical(cfg.locale_prior))];

        const int length = rng.categorical(prof.session_length_pmf) + 1;
        Session session;
        int cat = rng.categorical(prof.session_start);
        for (int e = 0; e < length; ++e) {
            if (e > 0) {
                double gap = rng.lognormal(cfg.intra_gap_log_mean, cfg.intra_gap_log_sigma);
                gap = std::clamp(gap, 1.0, 0.9 * cfg.session_timeout);
                t += gap;
                cat = rng.categorical(prof.category_transitions[static_cast<std::size_t>(cat)]);
            }
            const auto& candidates = pages[static_cast<std::size_t>(cat)];
            PageViewEvent ev;
            ev.page_name = candidates[static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(candidates.size()) - 1))];
            ev.timestamp = t;
            ev.device_type = device;
            ev.platform = platform;
            ev.locale = locale;
            ev.is_purchase = kChain[cat] == PageCategory::order_confirmation;
            session.events.push_back(std::move(ev));
        }
        j.sessions.push_back(std::move(session));

        if (s + 1 < n_sessions) {
            t += cfg.session_timeout + rng.lognormal(cfg.inter_gap_log_mean, cfg.inter_gap_log_sigma);
            state = rng.categorical(cfg.state_transitions[static_cast<std::size_t>(state)]);
        }
    }
    return j;
}

std::vector<Journey> generate_journeys(const GeneratorConfig& cfg, int n, int first_index,
                                       std::vector<std::vector<int>>* traces) {
    cfg.validate();
    std::vector<Journey> out;
    out.reserve(static_cast<std::size_t>(n));
    if (traces) traces->assign(static_cast<std::size_t>(n), {});
    char id[32];
    for (int i = 0; i < n; ++i) {
        const int user_index = first_index + i;
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(user_index)));
        std::snprintf(id, sizeof(id), "u%07d", user_index);
        out.push_back(generate_journey(cfg, rng, id, traces ? &(*traces)[static_cast<std::size_t>(i)] : nullptr));
    }
    return out;
}

double expected_purchase_rate(const GeneratorConfig& cfg) {
    cfg.validate();
    const int ns = static_cast<int>(cfg.states.size());

    // Per-state probability that one whole session contains no purchase:
    // taboo walk that never touches order_confirmation.
    std::vector<double> session_clean(static_cast<std::size_t>(ns));
    for (int s = 0; s < ns; ++s) {
        const StateProfile& prof = cfg.states[static_cast<std::size_t>(s)];
        std::vector<double> u(kChainCategories, 0.0);
        for (int c = 0; c < kChainCategories; ++c)
            if (c != kConfIdx) u[static_cast<std::size_t>(c)] = prof.session_start[static_cast<std::size_t>(c)];
        double q = 0.0;
        for (std::size_t len_idx = 0; len_idx < prof.session_length_pmf.size(); ++len_idx) {
            if (len_idx > 0) {
                std::vector<double> next(kChainCategories, 0.0);
                for (int c = 0; c < kChainCategories; ++c) {
                    if (u[static_cast<std::size_t>(c)] == 0.0) continue;
                    const auto& row = prof.category_transitions[static_cast<std::size_t>(c)];
                    for (int d = 0; d < kChainCategories; ++d) {
                        if (d == kConfIdx) continue;
                        next[static_cast<std::size_t>(d)] += u[static_cast<std::size_t>(c)] * row[static_cast<std::size_t>(d)];
                    }
                }
                u = std::move(next);
            }
            double surv = 0.0;
            for (double x : u) surv += x;
            q += prof.session_length_pmf[len_idx] * surv;
        }
        session_clean[static_cast<std::size_t>(s)] = q;
    }

    // Journey-level DP over the session-state chain.
    double p_clean_total = 0.0;
    std::vector<double> w(static_cast<std::size_t>(ns));
    for (int s = 0; s < ns; ++s) w[static_cast<std::size_t>(s)] = cfg.initial_state[static_cast<std::size_t>(s)] * session_clean[static_cast<std::size_t>(s)];
    for (std::size_t m = 0; m < cfg.session_count_pmf.size(); ++m) {
        if (m > 0) {
            std::vector<double> next(static_cast<std::size_t>(ns), 0.0);
            for (int a = 0; a < ns; ++a)
                for (int b = 0; b < ns; ++b)
                    next[static_cast<std::size_t>(b)] += w[static_cast<std::size_t>(a)] *
                                                          cfg.state_transitions[static_cast<std::size_t>(a)][static_cast<std::size_t>(b)] *
                                                          session_clean[static_cast<std::size_t>(b)];
            w = std::move(next);
        }
        double clean = 0.0;
        for (double x : w) clean += x;
        p_clean_total += cfg.session_count_pmf[m] * clean;
    }
    return 1.0 - p_clean_total;
}

// ------------------------------------------------------------------ JSON --

std::string GeneratorConfig::to_json() const {
    nlohmann::json j;
    j["catalog"] = nlohmann::json::parse(catalog.to_json());
    nlohmann::json states_j = nlohmann::json::array();
    for (const auto& st : states) {
        states_j.push_back({{"name", st.name},
                            {"category_transitions", st.category_transitions},
                            {"session_start", st.session_start},
                            {"session_length_pmf", st.session_length_pmf}});
    }
    j["states"] = std::move(states_j);
    j["initial_state"] = initial_state;
    j["state_transitions"] = state_transitions;
    j["session_count_pmf"] = session_count_pmf;
    j["session_timeout"] = session_timeout;
    j["intra_gap_log_mean"] = intra_gap_log_mean;
    j["intra_gap_log_sigma"] = intra_gap_log_sigma;
    j["inter_gap_log_mean"] = inter_gap_log_mean;
    j["inter_gap_log_sigma"] = inter_gap_log_sigma;
    j["device_types"] = device_types;
    j["device_prior"] = device_prior;
    j["platforms"] = platforms;
    j["platform_prior"] = platform_prior;
    j["locales"] = locales;
    j["locale_prior"] = locale_prior;
    j["start_time"] = start_time;
    j["start_time_spread"] = start_time_spread;
    j["seed"] = seed;
    return j.dump(2);
}

GeneratorConfig GeneratorConfig::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    GeneratorConfig cfg;
    cfg.catalog = PageCatalog::from_json(j.at("catalog").dump());
    for (const auto& st_j : j.at("states")) {
        StateProfile st;
        st.name = st_j.at("name").get<std::string>();
        st.category_transitions = st_j.at("category_transitions").get<std::vector<std::vector<double>>>();
        st.session_start = st_j.at("session_start").get<std::vector<double>>();
        st.session_length_pmf = st_j.at("session_length_pmf").get<std::vector<double>>();
        cfg.states.push_back(std::move(st));
    }
    cfg.initial_state = j.at("initial_state").get<std::vector<double>>();
    cfg.state_transitions = j.at("state_transitions").get<std::vector<std::vector<double>>>();
    cfg.session_count_pmf = j.at("session_count_pmf").get<std::vector<double>>();
    cfg.session_timeout = j.at("session_timeout").get<double>();
    cfg.intra_gap_log_mean = j.at("intra_gap_log_mean").get<double>();
    cfg.intra_gap_log_sigma = j.at("intra_gap_log_sigma").get<double>();
    cfg.inter_gap_log_mean = j.at("inter_gap_log_mean").get<double>();
    cfg.inter_gap_log_sigma = j.at("inter_gap_log_sigma").get<double>();
    cfg.device_types = j.at("device_types").get<std::vector<std::string>>();
    cfg.device_prior = j.at("device_prior").get<std::vector<double>>();
    cfg.platforms = j.at("platforms").get<std::vector<std::string>>();
    cfg.platform_prior = j.at("platform_prior").get<std::vector<double>>();
    cfg.locales = j.at("locales").get<std::vector<std::string>>();
    cfg.locale_prior = j.at("locale_prior").get<std::vector<double>>();
    cfg.start_time = j.at("start_time").get<double>();
    cfg.start_time_spread = j.at("start_time_spread").get<double>();
    cfg.seed = j.at("seed").get<std::uint64_t>();
    return cfg;
}

void GeneratorConfig::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("generator: cannot write '" + path + "'");
    out << to_json() << "\n";
}

GeneratorConfig GeneratorConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("generator: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

std::string CorpusManifest::to_json() const {
    nlohmann::json j;
    j["schema_version"] = schema_version;
    j["seed"] = seed;
    j["split_seed"] = split_seed;
    j["config_hash"] = config_hash;
    nlohmann::json files_j = nlohmann::json::array();
    for (const auto& f : files)
        files_j.push_back({{"name", f.name}, {"n_journeys", f.n_journeys}, {"content_hash", f.content_hash}});
    j["files"] = std::move(files_j);
    j["label_prevalence"] = label_prevalence;
    return j.dump(2);
}

CorpusManifest CorpusManifest::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    CorpusManifest m;
    m.schema_version = j.at("schema_version").get<int>();
    m.seed = j.at("seed").get<std::uint64_t>();
    m.split_seed = j.at("split_seed").get<std::uint64_t>();
    m.config_hash = j.at("config_hash").get<std::string>();
    for (const auto& f : j.at("files"))
        m.files.push_back({f.at("name").get<std::string>(), f.at("n_journeys").get<int>(),
                           f.at("content_hash").get<std::string>()});
    m.label_prevalence = j.at("label_prevalence").get<std::map<std::string, double>>();
    return m;
}

void CorpusManifest::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("manifest: cannot write '" + path + "'");
    out << to_json() << "\n";
}

CorpusManifest CorpusManifest::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("manifest: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

CorpusManifest generate_corpus(const GeneratorConfig& cfg, int n_train, int n_val, int n_test,
                               const std::string& out_dir) {
    if (n_train < 1 || n_val < 0 || n_test < 0) throw ConfigError("corpus: bad split sizes");
    cfg.validate();
    namespace fs = std::filesystem;
    std::error_code ec;
    fs::create_directories(out_dir, ec);

    CorpusManifest manifest;
    manifest.seed = cfg.seed;
    manifest.split_seed = derive_seed(cfg.seed, 0x5eedULL);
    manifest.config_hash = hex64(fnv1a64(cfg.to_json()));

    const struct {
        const char* name;
        int n;
        int first;
    } parts[] = {
        {"train.jsonl", n_train, 0},
        {"val.jsonl", n_val, n_train},
        {"test.jsonl", n_test, n_train + n_val},
    };

    std::vector<Journey> train_journeys;
    for (const auto& part : parts) {
        if (part.n == 0) continue;
        auto journeys = generate_journeys(cfg, part.n, part.first);
        const std::string path = (fs::path(out_dir) / part.name).string();
        write_journeys_jsonl(path, journeys);
        manifest.files.push_back({part.name, part.n, file_content_hash(path)});
        if (std::string(part.name) == "train.jsonl") train_journeys = std::move(journeys);
    }

    cfg.catalog.save((fs::path(out_dir) / "catalog.json").string());
    cfg.save((fs::path(out_dir) / "generator_config.json").string());

    // Label prevalence on the train split, using the same derived split
    // seeds every downstream consumer will use.
    LabelConfig label_cfg;
    label_cfg.session_timeout = cfg.session_timeout;
    std::array<int, kNumTasks> positives{};
    int counted = 0;
    for (const auto& j : train_journeys) {
        Rng rng(derive_seed(manifest.split_seed, fnv1a64(j.user_id)));
        auto ex = split_journey(j, rng);
        if (!ex) continue;
        const auto labels = compute_labels(*ex, cfg.catalog, label_cfg);
        for (int k = 0; k < kNumTasks; ++k) positives[static_cast<std::size_t>(k)] += labels.y[static_cast<std::size_t>(k)];
        ++counted;
    }
    for (int k = 0; k < kNumTasks; ++k)
        manifest.label_prevalence[kTaskNames[static_cast<std::size_t>(k)]] =
            counted ? static_cast<double>(positives[static_cast<std::size_t>(k)]) / counted : 0.0;

    manifest.save((fs::path(out_dir) / "manifest.json").string());
    return manifest;
}

}  // namespace trace
