#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>
#include <vector>

#include "trace/tensor.hpp"

namespace trace {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Named parameter map plus per-parameter first/second moment buffers and a
// step counter. Iteration order is insertion order, which keeps updates and
// serialization deterministic.
class ParamStore {
public:
    Tensor& add(const std::string& name, Tensor t);
    Tensor& get(const std::string& name);
    const Tensor& get(const std::string& name) const;
    bool has(const std::string& name) const { return params_.count(name) > 0; }
    const std::vector<std::string>& names() const { return order_; }

    void zero_grad();
    double global_grad_norm() const;
    // Scales all gradients so the global norm does not exceed max_norm.
    void clip_grad_norm(double max_norm);

    std::int64_t step_count() const { return step_; }
    std::int64_t param_element_count() const;
    std::uint64_t value_hash() const;

    // Deep snapshot of parameter values (for best-epoch keeping).
    std::vector<std::vector<double>> snapshot_values() const;
    void restore_values(const std::vector<std::vector<double>>& snap);

    friend void adam_step(ParamStore& store, const AdamConfig& cfg);

private:
    std::vector<std::string> order_;
    std::unordered_map<std::string, Tensor> params_;
    std::unordered_map<std::string, std::vector<double>> m_;
    std::unordered_map<std::string, std::vector<double>> v_;
    std::int64_t step_ = 0;
};

// Bias-corrected adaptive-moment update over every parameter in the store.
// Throws TrainError naming the parameter if a gradient is non-finite.
void adam_step(ParamStore& store, const AdamConfig& cfg);

// ---------------------------------------------------------------------------
// Checkpoint container: little-endian f64 buffers keyed by parameter name,
// plus a model-kind tag, a config snapshot and the RNG seed. Round-trips
// bit-exactly.
// ---------------------------------------------------------------------------

struct LoadedCheckpoint {
    ParamStore store;
    std::string model_kind;
    std::string config_json;
    std::uint64_t seed = 0;
    std::string payload_hash;
};

void save_checkpoint(const std::string& path, const ParamStore& store, const std::string& model_kind,
                     const std::string& config_json, std::uint64_t seed);

LoadedCheckpoint load_checkpoint(const std::string& path);

}  // namespace trace
