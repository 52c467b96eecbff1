#include "trace/optim.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "trace/common.hpp"

namespace trace {

Tensor& ParamStore::add(const std::string& name, Tensor t) {
    if (!t.requires_grad()) throw ConfigError("param_store: parameter '" + name + "' must carry gradients");
    if (params_.count(name)) throw ConfigError("param_store: duplicate parameter '" + name + "'");
    order_.push_back(name);
    auto [it, _] = params_.emplace(name, std::move(t));
    m_[name].assign(static_cast<std::size_t>(it->second.size()), 0.0);
    v_[name].assign(static_cast<std::size_t>(it->second.size()), 0.0);
    return it->second;
}

Tensor& ParamStore::get(const std::string& name) {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("param_store: unknown parameter '" + name + "'");
    return it->second;
}

const Tensor& ParamStore::get(const std::string& name) const {
    auto it = params_.find(name);
    if (it == params_.end()) throw ConfigError("param_store: unknown parameter '" + name + "'");
    return it->second;
}

void ParamStore::zero_grad() {
    for (const auto& n : order_) params_.at(n).zero_grad();
}

double ParamStore::global_grad_norm() const {
    double sq = 0.0;
    for (const auto& n : order_) {
        const Tensor& t = params_.at(n);
        const double* g = t.grad();
        for (std::int64_t i = 0; i < t.size(); ++i) sq += g[i] * g[i];
    }
    return std::sqrt(sq);
}

void ParamStore::clip_grad_norm(double max_norm) {
    const double norm = global_grad_norm();
    if (norm <= max_norm || norm == 0.0) return;
    const double s = max_norm / norm;
    for (const auto& n : order_) {
        Tensor& t = params_.at(n);
        double* g = t.grad();
        for (std::int64_t i = 0; i < t.size(); ++i) g[i] *= s;
    }
}

std::int64_t ParamStore::param_element_count() const {
    std::int64_t total = 0;
    for (const auto& n : order_) total += params_.at(n).size();
    return total;
}

std::uint64_t ParamStore::value_hash() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const auto& n : order_) {
        h = fnv1a64(n, h);
        const Tensor& t = params_.at(n);
        h = fnv1a64(std::string_view(reinterpret_cast<const char*>(t.data()),
                                     static_cast<std::size_t>(t.size()) * sizeof(double)),
                    h);
    }
    return h;
}

std::vector<std::vector<double>> ParamStore::snapshot_values() const {
    std::vector<std::vector<double>> snap;
    snap.reserve(order_.size());
    for (const auto& n : order_) {
        const Tensor& t = params_.at(n);
        snap.emplace_back(t.data(), t.data() + t.size());
    }
    return snap;
}

void ParamStore::restore_values(const std::vector<std::vector<double>>& snap) {
    if (snap.size() != order_.size()) throw ConfigError("param_store: snapshot layout mismatch");
    for (std::size_t i = 0; i < order_.size(); ++i) {
        Tensor& t = params_.at(order_[i]);
        if (static_cast<std::int64_t>(snap[i].size()) != t.size())
            throw ConfigError("param_store: snapshot size mismatch for '" + order_[i] + "'");
        std::memcpy(t.data(), snap[i].data(), snap[i].size() * sizeof(double));
    }
}

void adam_step(ParamStore& store, const AdamConfig& cfg) {
    store.step_ += 1;
    const double t = static_cast<double>(store.step_);
    const double bc1 = 1.0 - std::pow(cfg.beta1, t);
    const double bc2 = 1.0 - std::pow(cfg.beta2, t);
    for (const auto& name : store.order_) {
        Tensor& p = store.params_.at(name);
        double* m = store.m_.at(name).data();
        double* v = store.v_.at(name).data();
        const double* g = p.grad();
        double* w = p.data();
        for (std::int64_t i = 0; i < p.size(); ++i) {
            if (!std::isfinite(g[i]))
                throw TrainError("adam: non-finite gradient in parameter '" + name + "'");
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            w[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        }
    }
}

// ------------------------------------------------------------- checkpoint --

namespace {
constexpr char kMagic[8] = {'T', 'R', 'C', 'K', 'P', 'T', '0', '1'};
}

void save_checkpoint(const std::string& path, const ParamStore& store, const std::string& model_kind,
                     const std::string& config_json, std::uint64_t seed) {
    nlohmann::json header;
    header["model_kind"] = model_kind;
    header["seed"] = seed;
    header["config"] = config_json.empty() ? nlohmann::json(nullptr) : nlohmann::json::parse(config_json);
    header["param_count"] = store.param_element_count();

    std::string payload;
    nlohmann::json plist = nlohmann::json::array();
    for (const auto& name : store.names()) {
        const Tensor& t = store.get(name);
        nlohmann::json e;
        e["name"] = name;
        e["shape"] = t.shape();
        e["offset"] = payload.size();
        payload.append(reinterpret_cast<const char*>(t.data()),
                       static_cast<std::size_t>(t.size()) * sizeof(double));
        plist.push_back(std::move(e));
    }
    header["params"] = std::move(plist);
    header["payload_hash"] = hex64(fnv1a64(payload));

    const std::string hjson = header.dump();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("checkpoint: cannot open '" + path + "' for writing");
    out.write(kMagic, sizeof(kMagic));
    const std::uint64_t hlen = hjson.size();
    out.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
    out.write(hjson.data(), static_cast<std::streamsize>(hjson.size()));
    out.write(payload.data(), static_cast<std::streamsize>(payload.size()));
    if (!out) throw IoError("checkpoint: write failed for '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("checkpoint: cannot open '" + path + "'");
    char magic[8];
    in.read(magic, sizeof(magic));
    if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
        throw IoError("checkpoint: '" + path + "' is not a checkpoint file");
    std::uint64_t hlen = 0;
    in.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    std::string hjson(hlen, '\0');
    in.read(hjson.data(), static_cast<std::streamsize>(hlen));
    if (!in) throw IoError("checkpoint: truncated header in '" + path + "'");
    nlohmann::json header = nlohmann::json::parse(hjson);

    std::string payload((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string expect = header.at("payload_hash").get<std::string>();
    if (hex64(fnv1a64(payload)) != expect)
        throw IoError("checkpoint: payload hash mismatch in '" + path + "'");

    LoadedCheckpoint lc;
    lc.model_kind = header.at("model_kind").get<std::string>();
    lc.seed = header.at("seed").get<std::uint64_t>();
    lc.config_json = header.at("config").is_null() ? "" : header.at("config").dump();
    lc.payload_hash = expect;
    for (const auto& e : header.at("params")) {
        const auto name = e.at("name").get<std::string>();
        const auto shape = e.at("shape").get<std::vector<int>>();
        const auto offset = e.at("offset").get<std::size_t>();
        Tensor t(shape, true);
        const std::size_t bytes = static_cast<std::size_t>(t.size()) * sizeof(double);
        if (offset + bytes > payload.size()) throw IoError("checkpoint: truncated payload in '" + path + "'");
        std::memcpy(t.data(), payload.data() + offset, bytes);
        lc.store.add(name, std::move(t));
    }
    return lc;
}

}  // namespace trace
