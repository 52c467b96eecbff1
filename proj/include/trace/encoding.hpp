#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "trace/clickstream.hpp"

namespace trace {

// Which engineered inputs the encoder receives. The ablation variants
// switch these off: no-session drops the session index (numeric feature
// and position embedding both), no-time additionally drops the two
// timestamp features.
struct FeatureConfig {
    bool include_time = true;     // inter-event gap + time-to-most-recent
    bool include_session = true;  // session index feature + session-position embedding

    int numeric_width() const { return (include_time ? 2 : 0) + (include_session ? 1 : 0); }
};

// Per-attribute token -> dense index. Index 0 is reserved for padding,
// index 1 for unknown tokens; real tokens start at 2 in sorted order so a
// rebuild on the same corpus is identical.
struct VocabMaps {
    static constexpr int kPad = 0;
    static constexpr int kUnknown = 1;

    std::map<std::string, int> page_name;
    std::map<std::string, int> device_type;
    std::map<std::string, int> platform;
    std::map<std::string, int> locale;

    static int lookup(const std::map<std::string, int>& m, const std::string& token);
    static int size(const std::map<std::string, int>& m) { return static_cast<int>(m.size()) + 2; }

    std::string to_json() const;
    static VocabMaps from_json(const std::string& text);
    void save(const std::string& path) const;
    static VocabMaps load(const std::string& path);
};

VocabMaps build_vocabs(const std::vector<Journey>& train_corpus);

// log1p then standardize, statistics fit on the training split only.
// Feature order: inter-event gap, time-to-most-recent, session index.
struct FeatureScaler {
    std::array<double, 3> mean{};
    std::array<double, 3> stddev{1.0, 1.0, 1.0};

    double transform(int feature, double raw) const {
        return (std::log1p(raw) - mean[static_cast<std::size_t>(feature)]) /
               stddev[static_cast<std::size_t>(feature)];
    }

    std::string to_json() const;
    static FeatureScaler from_json(const std::string& text);
    void save(const std::string& path) const;
    static FeatureScaler load(const std::string& path);
};

// `max_events` is the crop window L: statistics cover the features exactly
// as the encoder will see them (the oldest retained event has gap 0).
FeatureScaler fit_scaler(const std::vector<Journey>& train_corpus, int max_events);

// Fixed-shape model input. Row layout: rows 0..true_length-1 hold the
// retained events oldest to newest, padding rows follow. Padded rows have
// mask 0, categorical index 0, numeric 0 and position index 0. event_pos
// is the recency rank m (most recent event = 1); session_pos is the
// session recency rank n (most recent session = 1).
struct EncodedJourney {
    int length = 0;       // total rows including padding
    int true_length = 0;  // real events
    int n_cat = 4;
    int num_width = 0;

    std::vector<int> cat;              // [length × n_cat] page, device, platform, locale
    std::vector<double> num;           // [length × num_width]
    std::vector<int> event_pos;        // [length]
    std::vector<int> session_pos;      // [length]
    std::vector<std::uint8_t> mask;    // [length], 1 = real event

    int cat_at(int row, int a) const { return cat[static_cast<std::size_t>(row) * n_cat + a]; }
};

// Crops to the `max_events` most recent events and encodes. `pad_to`
// selects total rows (0 = exactly true_length); growing it only appends
// masked padding rows.
EncodedJourney encode_journey(const Journey& journey, const VocabMaps& vocabs,
                              const FeatureScaler& scaler, int max_events,
                              const FeatureConfig& features = {}, int pad_to = 0);

}  // namespace trace
