#include "trace/encoding.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <set>

#include <json.hpp>

namespace trace {

namespace {

std::map<std::string, int> index_sorted(const std::set<std::string>& tokens) {
    std::map<std::string, int> m;
    int next = 2;  // 0 = pad, 1 = unknown
    for (const auto& t : tokens) m[t] = next++;
    return m;
}

nlohmann::json map_to_json(const std::map<std::string, int>& m) {
    nlohmann::json j = nlohmann::json::object();
    for (const auto& [k, v] : m) j[k] = v;
    return j;
}

std::map<std::string, int> map_from_json(const nlohmann::json& j) {
    std::map<std::string, int> m;
    for (auto it = j.begin(); it != j.end(); ++it) m[it.key()] = it.value().get<int>();
    return m;
}

constexpr double kStdFloor = 1e-8;

}  // namespace

int VocabMaps::lookup(const std::map<std::string, int>& m, const std::string& token) {
    auto it = m.find(token);
    return it == m.end() ? kUnknown : it->second;
}

std::string VocabMaps::to_json() const {
    nlohmann::json j;
    j["page_name"] = map_to_json(page_name);
    j["device_type"] = map_to_json(device_type);
    j["platform"] = map_to_json(platform);
    j["locale"] = map_to_json(locale);
    return j.dump(2);
}

VocabMaps VocabMaps::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    VocabMaps v;
    v.page_name = map_from_json(j.at("page_name"));
    v.device_type = map_from_json(j.at("device_type"));
    v.platform = map_from_json(j.at("platform"));
    v.locale = map_from_json(j.at("locale"));
    return v;
}

void VocabMaps::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("vocab: cannot write '" + path + "'");
    out << to_json() << "\n";
}

VocabMaps VocabMaps::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("vocab: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

VocabMaps build_vocabs(const std::vector<Journey>& train_corpus) {
    if (train_corpus.empty()) throw DataError("vocab: empty training corpus");
    std::set<std::string> pages, devices, platforms, locales;
    for (const auto& j : train_corpus) {
        for (const auto& s : j.sessions) {
            for (const auto& e : s.events) {
                pages.insert(e.page_name);
                devices.insert(e.device_type);
                platforms.insert(e.platform);
                locales.insert(e.locale);
            }
        }
    }
    VocabMaps v;
    v.page_name = index_sorted(pages);
    v.device_type = index_sorted(devices);
    v.platform = index_sorted(platforms);
    v.locale = index_sorted(locales);
    return v;
}

std::string FeatureScaler::to_json() const {
    nlohmann::json j;
    j["mean"] = mean;
    j["stddev"] = stddev;
    return j.dump(2);
}

FeatureScaler FeatureScaler::from_json(const std::string& text) {
    const auto j = nlohmann::json::parse(text);
    FeatureScaler s;
    const auto mean = j.at("mean").get<std::vector<double>>();
    const auto stddev = j.at("stddev").get<std::vector<double>>();
    if (mean.size() != 3 || stddev.size() != 3) throw DataError("scaler: expected 3 features");
    std::copy(mean.begin(), mean.end(), s.mean.begin());
    std::copy(stddev.begin(), stddev.end(), s.stddev.begin());
    return s;
}

void FeatureScaler::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("scaler: cannot write '" + path + "'");
    out << to_json() << "\n";
}

FeatureScaler FeatureScaler::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("scaler: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

namespace {

// Raw (pre-transform) features of every retained event of one journey:
// gap, elapsed, session index, in crop order.
struct RawRows {
    std::vector<std::array<double, 3>> rows;
    std::vector<int> event_pos;
    std::vector<int> session_pos;
};

RawRows raw_feature_rows(const Journey& journey, int max_events) {
    const auto flat = journey.flatten();
    if (flat.empty()) throw DataError("encode: empty journey");

    // session ordinal per flattened event
    std::vector<int> session_of;
    session_of.reserve(flat.size());
    int ord = 0;
    for (const auto& s : journey.sessions) {
        for (std::size_t k = 0; k < s.events.size(); ++k) session_of.push_back(ord);
        ++ord;
    }
    const int n_sessions = static_cast<int>(journey.sessions.size());

    const int total = static_cast<int>(flat.size());
    const int keep = std::min(total, max_events);
    const int first = total - keep;
    const double t_latest = flat.back().timestamp;

    RawRows out;
    out.rows.resize(static_cast<std::size_t>(keep));
    out.event_pos.resize(static_cast<std::size_t>(keep));
    out.session_pos.resize(static_cast<std::size_t>(keep));
    for (int r = 0; r < keep; ++r) {
        const int idx = first + r;
        const double gap = r == 0 ? 0.0 : flat[static_cast<std::size_t>(idx)].timestamp -
                                              flat[static_cast<std::size_t>(idx - 1)].timestamp;
        const double elapsed = t_latest - flat[static_cast<std::size_t>(idx)].timestamp;
        const int session_rank = n_sessions - session_of[static_cast<std::size_t>(idx)];
        out.rows[static_cast<std::size_t>(r)] = {gap, elapsed, static_cast<double>(session_rank)};
        out.event_pos[static_cast<std::size_t>(r)] = keep - r;
        out.session_pos[static_cast<std::size_t>(r)] = session_rank;
    }
    return out;
}

}  // namespace

FeatureScaler fit_scaler(const std::vector<Journey>& train_corpus, int max_events) {
    std::array<double, 3> sum{}, sumsq{};
    std::int64_t n = 0;
    for (const auto& j : train_corpus) {
        if (j.event_count() == 0) continue;
        const auto raw = raw_feature_rows(j, max_events);
        for (const auto& row : raw.rows) {
            for (int f = 0; f < 3; ++f) {
                const double v = std::log1p(row[static_cast<std::size_t>(f)]);
                sum[static_cast<std::size_t>(f)] += v;
                sumsq[static_cast<std::size_t>(f)] += v * v;
            }
            ++n;
        }
    }
    if (n < 2) throw DataError("scaler: need at least 2 events to fit");

    FeatureScaler s;
    for (int f = 0; f < 3; ++f) {
        const double m = sum[static_cast<std::size_t>(f)] / static_cast<double>(n);
        const double var = std::max(0.0, sumsq[static_cast<std::size_t>(f)] / static_cast<double>(n) - m * m);
        double sd = std::sqrt(var);
        if (sd < kStdFloor) {
            std::cerr << "warning: feature " << f << " is degenerate (all values equal); std floored\n";
            sd = kStdFloor;
        }
        s.mean[static_cast<std::size_t>(f)] = m;
        s.stddev[static_cast<std::size_t>(f)] = sd;
    }
    return s;
}

EncodedJourney encode_journey(const Journey& journey, const VocabMaps& vocabs,
                              const FeatureScaler& scaler, int max_events,
                              const FeatureConfig& features, int pad_to) {
    if (max_events < 1) throw ConfigError("encode: crop window must be >= 1");
    const auto flat = journey.flatten();
    if (flat.empty()) throw DataError("encode: empty journey");

    const auto raw = raw_feature_rows(journey, max_events);
    const int keep = static_cast<int>(raw.rows.size());
    const int rows = pad_to > 0 ? pad_to : keep;
    if (rows < keep) throw ConfigError("encode: pad_to smaller than true length");

    EncodedJourney enc;
    enc.length = rows;
    enc.true_length = keep;
    enc.num_width = features.numeric_width();
    enc.cat.assign(static_cast<std::size_t>(rows) * enc.n_cat, VocabMaps::kPad);
    enc.num.assign(static_cast<std::size_t>(rows) * enc.num_width, 0.0);
    enc.event_pos.assign(static_cast<std::size_t>(rows), 0);
    enc.session_pos.assign(static_cast<std::size_t>(rows), 0);
    enc.mask.assign(static_cast<std::size_t>(rows), 0);

    const int first = static_cast<int>(flat.size()) - keep;
    for (int r = 0; r < keep; ++r) {
        const auto& ev = flat[static_cast<std::size_t>(first + r)];
        int* cat_row = enc.cat.data() + static_cast<std::size_t>(r) * enc.n_cat;
        cat_row[0] = VocabMaps::lookup(vocabs.page_name, ev.page_name);
        cat_row[1] = VocabMaps::lookup(vocabs.device_type, ev.device_type);
        cat_row[2] = VocabMaps::lookup(vocabs.platform, ev.platform);
        cat_row[3] = VocabMaps::lookup(vocabs.locale, ev.locale);

        double* num_row = enc.num.data() + static_cast<std::size_t>(r) * enc.num_width;
        int w = 0;
        if (features.include_time) {
            num_row[w++] = scaler.transform(0, raw.rows[static_cast<std::size_t>(r)][0]);
            num_row[w++] = scaler.transform(1, raw.rows[static_cast<std::size_t>(r)][1]);
        }
        if (features.include_session)
            num_row[w++] = scaler.transform(2, raw.rows[static_cast<std::size_t>(r)][2]);

        enc.event_pos[static_cast<std::size_t>(r)] = raw.event_pos[static_cast<std::size_t>(r)];
        enc.session_pos[static_cast<std::size_t>(r)] = raw.session_pos[static_cast<std::size_t>(r)];
        enc.mask[static_cast<std::size_t>(r)] = 1;
    }
    return enc;
}

}  // namespace trace
