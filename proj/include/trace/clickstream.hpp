#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "trace/common.hpp"
#include "trace/rng.hpp"

namespace trace {

enum class PageCategory {
    homepage,
    search_results,
    product_detail,
    checkout,
    order_confirmation,
    upcoming_order,
    account,
    content,
    support,
    other,
};

const char* to_string(PageCategory c);
PageCategory page_category_from_string(const std::string& s);

struct PageViewEvent {
    std::string page_name;
    double timestamp = 0.0;  // seconds since epoch
    std::string device_type;
    std::string platform;
    std::string locale;
    bool is_purchase = false;
};

struct Session {
    std::vector<PageViewEvent> events;
};

struct Journey {
    std::string user_id;
    std::vector<Session> sessions;

    int event_count() const;
    std::vector<PageViewEvent> flatten() const;
};

// Page name -> category/common-page declarations. Which names count as
// search-results, product-detail etc. for label construction lives here,
// not in code.
struct PageCatalog {
    struct Entry {
        std::string name;
        PageCategory category = PageCategory::other;
        bool common = false;  // eligible for the 7-way projection sample
    };
    std::vector<Entry> pages;

    bool contains(const std::string& name) const;
    PageCategory category_of(const std::string& name) const;  // unknown -> other
    std::vector<std::string> common_pages() const;
    std::vector<std::string> names_in_category(PageCategory c) const;

    std::string to_json() const;
    static PageCatalog from_json(const std::string& json_text);
    void save(const std::string& path) const;
    static PageCatalog load(const std::string& path);
};

// The eight binary engagement targets. The first five are training
// targets, the last three are evaluation-only.
struct TaskLabelSet {
    std::array<int, 8> y{};  // pw2, bn5, srp, pdp, vuo, hom, pws, re7

    int pw2() const { return y[0]; }
    int bn5() const { return y[1]; }
    int srp() const { return y[2]; }
    int pdp() const { return y[3]; }
    int vuo() const { return y[4]; }
    int hom() const { return y[5]; }
    int pws() const { return y[6]; }
    int re7() const { return y[7]; }
};

inline constexpr int kNumTasks = 8;
inline constexpr int kNumTrainTasks = 5;
inline constexpr std::array<const char*, 8> kTaskNames = {"pw2", "bn5", "srp", "pdp",
                                                          "vuo", "hom", "pws", "re7"};

struct SplitExample {
    Journey input;                       // events before the split, sessions intact
    std::vector<PageViewEvent> future;   // events after the split
    int split_index = 0;                 // global event index == input event count
};

struct LabelConfig {
    double session_timeout = 2.0 * 3600.0;        // T of the sessionization rule
    double purchase_horizon = 14.0 * 86400.0;     // pw2 window after the split
    int bounce_n = 5;                             // bn5 threshold
    double return_window = 7.0 * 86400.0;         // re7 window after session end
};

// Partition a time-ordered event stream into sessions: a gap greater than
// `timeout_sec` starts a new session. No events are dropped or reordered.
Journey sessionize(const std::vector<PageViewEvent>& events, double timeout_sec,
                   std::string user_id = std::string());

// Split uniformly at random over positions that leave at least min_input
// events before and min_future after. Returns nothing when the journey is
// too short; callers filter.
std::optional<SplitExample> split_journey(const Journey& journey, Rng& rng, int min_input = 2,
                                          int min_future = 1);

// Binary labels from the post-split future. Session-scoped tasks look only
// at the remainder of the session containing the split point; pw2 and re7
// use absolute time windows.
TaskLabelSet compute_labels(const SplitExample& example, const PageCatalog& catalog,
                            const LabelConfig& cfg);

// The min(L, total) most recent events, order preserved (a suffix).
std::vector<PageViewEvent> crop_recent(const Journey& journey, int max_events);

// ------------------------------------------------------------ dataset IO --
// One journey per line: {"u": user_id, "e": [[page, t, device, platform,
// locale, purchase], ...]}. Events are stored flat; session structure is
// recovered by the timeout rule on read.

void write_journeys_jsonl(const std::string& path, const std::vector<Journey>& journeys);
std::vector<Journey> read_journeys_jsonl(const std::string& path, double session_timeout);

inline constexpr int kDatasetSchemaVersion = 1;

}  // namespace trace
