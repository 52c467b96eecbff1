#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "trace/common.hpp"
#include "trace/rng.hpp"

namespace trace {

// Dense row-major f64 tensor. Copies are shallow handles onto shared
// storage; clone() makes a deep copy. A gradient buffer of identical shape
// is allocated when requires_grad is set.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::vector<int> shape, bool requires_grad = false);

    static Tensor zeros(std::vector<int> shape, bool requires_grad = false);
    static Tensor from(std::vector<int> shape, std::vector<double> values, bool requires_grad = false);
    static Tensor scalar(double v, bool requires_grad = false);

    bool defined() const { return impl_ != nullptr; }
    const std::vector<int>& shape() const { return impl_->shape; }
    int rank() const { return static_cast<int>(impl_->shape.size()); }
    std::int64_t size() const { return static_cast<std::int64_t>(impl_->data.size()); }
    int rows() const;  // rank-2 only
    int cols() const;  // rank-2 only

    double* data() { return impl_->data.data(); }
    const double* data() const { return impl_->data.data(); }
    bool requires_grad() const { return impl_->requires_grad; }
    // Gradient buffers are shared mutable state: backward closures
    // accumulate through const handles. Throws if no buffer exists.
    double* grad() const;
    void zero_grad();

    double item() const;  // single-element tensors
    double& at(int i) { return impl_->data[static_cast<std::size_t>(i)]; }
    double at(int i) const { return impl_->data[static_cast<std::size_t>(i)]; }
    double& at(int i, int j) { return impl_->data[static_cast<std::size_t>(i) * cols() + j]; }
    double at(int i, int j) const { return impl_->data[static_cast<std::size_t>(i) * cols() + j]; }

    Tensor clone() const;

    bool same_storage(const Tensor& other) const { return impl_ == other.impl_; }

private:
    struct Impl {
        std::vector<int> shape;
        std::vector<double> data;
        std::vector<double> grad;  // empty unless requires_grad
        bool requires_grad = false;
    };
    std::shared_ptr<Impl> impl_;
};

// Ordered record of executed primitives. Each op pushes one backward
// closure; backward() seeds the loss gradient and replays the closures in
// reverse execution order, visiting each exactly once.
class Tape {
public:
    void record(std::function<void()> backward_fn) { nodes_.push_back(std::move(backward_fn)); }
    std::size_t node_count() const { return nodes_.size(); }
    void backward(Tensor& loss);
    void clear() { nodes_.clear(); }

private:
    std::vector<std::function<void()>> nodes_;
};

// --------------------------------------------------------------------------
// Primitives. `tape == nullptr` means inference: no gradient buffers are
// allocated and nothing is recorded. Backward closures skip inputs that
// carry no grad buffer, so constants flow through training graphs freely.
// --------------------------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape, bool trans_a = false, bool trans_b = false);

Tensor add(const Tensor& a, const Tensor& b, Tape* tape);
Tensor mul(const Tensor& a, const Tensor& b, Tape* tape);
Tensor scale(const Tensor& x, double c, Tape* tape);
// x [m×n] + row vector b [n]
Tensor add_bias(const Tensor& x, const Tensor& b, Tape* tape);

Tensor relu(const Tensor& x, Tape* tape);
Tensor sigmoid(const Tensor& x, Tape* tape);
Tensor tanh(const Tensor& x, Tape* tape);
Tensor log(const Tensor& x, Tape* tape);

// Row-wise softmax over the last dimension with max-subtraction. `mask`
// (0/1 values, shape equal to x or to {cols}) marks entries that take part;
// masked entries come out exactly 0. A fully masked row is an error.
Tensor softmax_lastdim(const Tensor& x, Tape* tape, const Tensor* mask = nullptr);

// Per-row normalization to zero mean / unit variance, then out*gain + bias.
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps, Tape* tape);

// Training: zero entries with probability `rate`, scale survivors by
// 1/(1-rate). Inference: identity.
Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng, Tape* tape);

// rows of `table` selected by index; backward scatter-adds into the table.
Tensor gather_rows(const Tensor& table, const std::vector<int>& indices, Tape* tape);

Tensor concat_cols(const std::vector<Tensor>& xs, Tape* tape);
Tensor slice_cols(const Tensor& x, int start, int len, Tape* tape);
Tensor slice_rows(const Tensor& x, int start, int len, Tape* tape);

// Fused single-head scaled dot-product attention over row-major q,k,v
// [L×dk]. key_mask marks real positions; causal additionally restricts
// query i to keys j <= i. Masked keys are skipped outright, which keeps
// position-i outputs bit-identical under changes beyond position i.
Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const std::vector<std::uint8_t>& key_mask, bool causal, Tape* tape);

struct AttentionParams {
    Tensor wq, wk, wv, wo;  // [d_model × d_model]
    Tensor bq, bk, bv, bo;  // [d_model]
};

// Multi-head self-attention: per-head scaled dot-product with scale
// 1/sqrt(d_model/n_heads), head concatenation, learned output projection.
Tensor multi_head_self_attention(const Tensor& x, int n_heads, const AttentionParams& p,
                                 const std::vector<std::uint8_t>& mask, bool causal, Tape* tape);

// Per-dimension max over unmasked rows; gradient routes to the lowest
// argmax row. Result is [1×d].
Tensor masked_max_pool(const Tensor& x, const std::vector<std::uint8_t>& mask, Tape* tape);

// Mean over unmasked rows, [1×d].
Tensor masked_mean_pool(const Tensor& x, const std::vector<std::uint8_t>& mask, Tape* tape);

// Class-weighted binary cross-entropy on a logit, evaluated in
// log-sum-exp form: w*y*softplus(-z) + (1-y)*softplus(z).
Tensor bce_with_logits(const Tensor& logit, double label, double pos_weight, Tape* tape);

// Mean cross-entropy of row-wise next-token logits [L×V] against integer
// targets, restricted to rows with valid[i] != 0.
Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets,
                          const std::vector<std::uint8_t>& valid, Tape* tape);

// Sum of scalar tensors (loss accumulation).
Tensor add_scalars(const std::vector<Tensor>& xs, Tape* tape);

}  // namespace trace
