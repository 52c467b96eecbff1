#include "trace/clickstream.hpp"

#include <algorithm>
#include <fstream>

#include <json.hpp>

namespace trace {

const char* to_string(PageCategory c) {
    switch (c) {
        case PageCategory::homepage: return "homepage";
        case PageCategory::search_results: return "search_results";
        case PageCategory::product_detail: return "product_detail";
        case PageCategory::checkout: return "checkout";
        case PageCategory::order_confirmation: return "order_confirmation";
        case PageCategory::upcoming_order: return "upcoming_order";
        case PageCategory::account: return "account";
        case PageCategory::content: return "content";
        case PageCategory::support: return "support";
        case PageCategory::other: return "other";
    }
    return "other";
}

PageCategory page_category_from_string(const std::string& s) {
    static const std::pair<const char*, PageCategory> table[] = {
        {"homepage", PageCategory::homepage},
        {"search_results", PageCategory::search_results},
        {"product_detail", PageCategory::product_detail},
        {"checkout", PageCategory::checkout},
        {"order_confirmation", PageCategory::order_confirmation},
        {"upcoming_order", PageCategory::upcoming_order},
        {"account", PageCategory::account},
        {"content", PageCategory::content},
        {"support", PageCategory::support},
        {"other", PageCategory::other},
    };
    for (const auto& [name, cat] : table)
        if (s == name) return cat;
    throw ConfigError("catalog: unknown page category '" + s + "'");
}

int Journey::event_count() const {
    int n = 0;
    for (const auto& s : sessions) n += static_cast<int>(s.events.size());
    return n;
}

std::vector<PageViewEvent> Journey::flatten() const {
    std::vector<PageViewEvent> out;
    out.reserve(static_cast<std::size_t>(event_count()));
    for (const auto& s : sessions) out.insert(out.end(), s.events.begin(), s.events.end());
    return out;
}

bool PageCatalog::contains(const std::string& name) const {
    return std::any_of(pages.begin(), pages.end(), [&](const Entry& e) { return e.name == name; });
}

PageCategory PageCatalog::category_of(const std::string& name) const {
    for (const auto& e : pages)
        if (e.name == name) return e.category;
    return PageCategory::other;
}

std::vector<std::string> PageCatalog::common_pages() const {
    std::vector<std::string> out;
    for (const auto& e : pages)
        if (e.common) out.push_back(e.name);
    return out;
}

std::vector<std::string> PageCatalog::names_in_category(PageCategory c) const {
    std::vector<std::string> out;
    for (const auto& e : pages)
        if (e.category == c) out.push_back(e.name);
    return out;
}

std::string PageCatalog::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& e : pages)
        arr.push_back({{"name", e.name}, {"category", to_string(e.category)}, {"common", e.common}});
    return nlohmann::json{{"pages", arr}}.dump(2);
}

PageCatalog PageCatalog::from_json(const std::string& json_text) {
    PageCatalog cat;
    const auto j = nlohmann::json::parse(json_text);
    for (const auto& e : j.at("pages")) {
        Entry entry;
        entry.name = e.at("name").get<std::string>();
        entry.category = page_category_from_string(e.at("category").get<std::string>());
        entry.common = e.value("common", false);
        cat.pages.push_back(std::move(entry));
    }
    return cat;
}

void PageCatalog::save(const std::string& path) const {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("catalog: cannot write '" + path + "'");
    out << to_json() << "\n";
}

PageCatalog PageCatalog::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("catalog: cannot open '" + path + "'");
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

Journey sessionize(const std::vector<PageViewEvent>& events, double timeout_sec, std::string user_id) {
    if (timeout_sec <= 0.0) throw ConfigError("sessionize: timeout must be positive");
    Journey j;
    j.user_id = std::move(user_id);
    for (std::size_t i = 0; i < events.size(); ++i) {
        if (i > 0 && events[i].timestamp < events[i - 1].timestamp)
            throw DataError("sessionize: events not sorted by timestamp at index " + std::to_string(i));
        const bool new_session =
            j.sessions.empty() || events[i].timestamp - j.sessions.back().events.back().timestamp > timeout_sec;
        if (new_session) j.sessions.emplace_back();
        j.sessions.back().events.push_back(events[i]);
    }
    return j;
}

std::optional<SplitExample> split_journey(const Journey& journey, Rng& rng, int min_input, int min_future) {
    const int total = journey.event_count();
    if (min_input < 1 || min_future < 1) throw ConfigError("split: minimum lengths must be >= 1");
    if (total < min_input + min_future) return std::nullopt;

    const int split = static_cast<int>(rng.uniform_int(min_input, total - min_future));

    SplitExample ex;
    ex.split_index = split;
    ex.input.user_id = journey.user_id;
    int consumed = 0;
    for (const auto& s : journey.sessions) {
        if (consumed >= split) {
            ex.future.insert(ex.future.end(), s.events.begin(), s.events.end());
            continue;
        }
        const int take = std::min<int>(split - consumed, static_cast<int>(s.events.size()));
        Session head;
        head.events.assign(s.events.begin(), s.events.begin() + take);
        ex.input.sessions.push_back(std::move(head));
        ex.future.insert(ex.future.end(), s.events.begin() + take, s.events.end());
        consumed += static_cast<int>(s.events.size());
    }
    return ex;
}

TaskLabelSet compute_labels(const SplitExample& example, const PageCatalog& catalog,
                            const LabelConfig& cfg) {
    if (example.input.event_count() == 0) throw DataError("labels: split example has empty input");
    const auto input_events = example.input.flatten();
    const double split_time = input_events.back().timestamp;

    TaskLabelSet labels;

    // Remainder of the session containing the split point: future events
    // while consecutive gaps stay within the timeout.
    std::size_t i = 0;
    double prev_t = split_time;
    std::size_t session_rest = 0;
    for (; i < example.future.size(); ++i) {
        const auto& ev = example.future[i];
        if (ev.timestamp - prev_t > cfg.session_timeout) break;
        prev_t = ev.timestamp;
        ++session_rest;
        const PageCategory cat = catalog.category_of(ev.page_name);
        if (cat == PageCategory::search_results) labels.y[2] = 1;        // srp
        if (cat == PageCategory::product_detail) labels.y[3] = 1;        // pdp
        if (cat == PageCategory::upcoming_order) labels.y[4] = 1;        // vuo
        if (cat == PageCategory::homepage) labels.y[5] = 1;              // hom
        if (ev.is_purchase) labels.y[6] = 1;                             // pws
    }
    const double session_end = prev_t;

    labels.y[1] = session_rest < static_cast<std::size_t>(cfg.bounce_n) ? 1 : 0;  // bn5

    for (const auto& ev : example.future) {
        if (ev.is_purchase && ev.timestamp <= split_time + cfg.purchase_horizon) {
            labels.y[0] = 1;  // pw2
            break;
        }
    }

    // re7: first event after the current session ends, within the window
    if (i < example.future.size() && example.future[i].timestamp <= session_end + cfg.return_window)
        labels.y[7] = 1;

    return labels;
}

std::vector<PageViewEvent> crop_recent(const Journey& journey, int max_events) {
    if (max_events < 1) throw ConfigError("crop: window must be >= 1");
    auto flat = journey.flatten();
    if (static_cast<int>(flat.size()) <= max_events) return flat;
    return {flat.end() - max_events, flat.end()};
}

// --------------------------------------------------------------- dataset --

void write_journeys_jsonl(const std::string& path, const std::vector<Journey>& journeys) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw IoError("dataset: cannot write '" + path + "'");
    for (const auto& j : journeys) {
        nlohmann::json events = nlohmann::json::array();
        for (const auto& ev : j.flatten())
            events.push_back({ev.page_name, ev.timestamp, ev.device_type, ev.platform, ev.locale,
                              ev.is_purchase ? 1 : 0});
        nlohmann::json line = {{"u", j.user_id}, {"e", std::move(events)}};
        out << line.dump() << "\n";
    }
    if (!out) throw IoError("dataset: write failed for '" + path + "'");
}

std::vector<Journey> read_journeys_jsonl(const std::string& path, double session_timeout) {
    std::ifstream in(path);
    if (!in) throw IoError("dataset: cannot open '" + path + "'");
    std::vector<Journey> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
            throw DataError("dataset: bad JSON at " + path + ":" + std::to_string(lineno) + ": " + e.what());
        }
        std::vector<PageViewEvent> events;
        for (const auto& e : j.at("e")) {
            PageViewEvent ev;
            ev.page_name = e.at(0).get<std::string>();
            ev.timestamp = e.at(1).get<double>();
            ev.device_type = e.at(2).get<std::string>();
            ev.platform = e.at(3).get<std::string>();
            ev.locale = e.at(4).get<std::string>();
            ev.is_purchase = e.at(5).get<int>() != 0;
            events.push_back(std::move(ev));
        }
        out.push_back(sessionize(events, session_timeout, j.at("u").get<std::string>()));
    }
    return out;
}

}  // namespace trace
