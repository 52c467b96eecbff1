#include "trace/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <sstream>

namespace trace {

namespace {

std::int64_t shape_size(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) {
        if (d <= 0) throw ConfigError("tensor: non-positive extent in shape");
        n *= d;
    }
    return n;
}

std::string shape_str(const std::vector<int>& s) {
    std::ostringstream os;
    os << "[";
    for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
    os << "]";
    return os.str();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw ConfigError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) + " vs " +
                          shape_str(b.shape()));
}

// C[m×n] += A[m×k] * B[k×n]
void mm_nn(double* c, const double* a, const double* b, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int p = 0; p < k; ++p) {
            const double av = arow[p];
            if (av == 0.0) continue;
            const double* brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

// C[m×n] += A[m×k] * B[n×k]^T
void mm_nt(double* c, const double* a, const double* b, int m, int k, int n) {
    for (int i = 0; i < m; ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* brow = b + static_cast<std::size_t>(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] += s;
        }
    }
}

// C[m×n] += A[k×m]^T * B[k×n]
void mm_tn(double* c, const double* a, const double* b, int m, int k, int n) {
    for (int p = 0; p < k; ++p) {
        const double* arow = a + static_cast<std::size_t>(p) * m;
        const double* brow = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const double av = arow[i];
            if (av == 0.0) continue;
            double* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

double stable_sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

double softplus(double t) {
    return t > 0.0 ? t + std::log1p(std::exp(-t)) : std::log1p(std::exp(t));
}

Tensor make_output(std::vector<int> shape, Tape* tape) {
    return Tensor(std::move(shape), tape != nullptr);
}

}  // namespace

// ---------------------------------------------------------------- Tensor --

Tensor::Tensor(std::vector<int> shape, bool requires_grad) {
    const auto n = static_cast<std::size_t>(shape_size(shape));
    impl_ = std::make_shared<Impl>();
    impl_->shape = std::move(shape);
    impl_->data.assign(n, 0.0);
    impl_->requires_grad = requires_grad;
    if (requires_grad) impl_->grad.assign(n, 0.0);
}

Tensor Tensor::zeros(std::vector<int> shape, bool requires_grad) {
    return Tensor(std::move(shape), requires_grad);
}

Tensor Tensor::from(std::vector<int> shape, std::vector<double> values, bool requires_grad) {
    if (shape_size(shape) != static_cast<std::int64_t>(values.size()))
        throw ConfigError("tensor: value count does not match shape");
    Tensor t(std::move(shape), requires_grad);
    std::copy(values.begin(), values.end(), t.data());
    return t;
}

Tensor Tensor::scalar(double v, bool requires_grad) {
    Tensor t(std::vector<int>{1}, requires_grad);
    t.data()[0] = v;
    return t;
}

int Tensor::rows() const {
    if (rank() != 2) throw ConfigError("tensor: rows() on rank-" + std::to_string(rank()));
    return impl_->shape[0];
}

int Tensor::cols() const {
    if (rank() != 2) throw ConfigError("tensor: cols() on rank-" + std::to_string(rank()));
    return impl_->shape[1];
}

double* Tensor::grad() const {
    if (!impl_->requires_grad) throw ConfigError("tensor: grad() without requires_grad");
    return impl_->grad.data();
}

void Tensor::zero_grad() {
    if (impl_->requires_grad) std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0);
}

double Tensor::item() const {
    if (size() != 1) throw ConfigError("tensor: item() on size-" + std::to_string(size()));
    return impl_->data[0];
}

Tensor Tensor::clone() const {
    Tensor t(impl_->shape, false);
    std::copy(impl_->data.begin(), impl_->data.end(), t.data());
    return t;
}

// ------------------------------------------------------------------ Tape --

void Tape::backward(Tensor& loss) {
    if (loss.size() != 1) throw ConfigError("tape: backward target must be scalar");
    if (!loss.requires_grad()) throw ConfigError("tape: backward target carries no gradient");
    loss.grad()[0] += 1.0;
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
}

// ------------------------------------------------------------------- ops --

Tensor matmul(const Tensor& a, const Tensor& b, Tape* tape, bool trans_a, bool trans_b) {
    if (trans_a && trans_b) throw ConfigError("matmul: double-transpose unsupported");
    if (a.rank() != 2 || b.rank() != 2) throw ConfigError("matmul: operands must be rank-2");
    const int m = trans_a ? a.cols() : a.rows();
    const int k = trans_a ? a.rows() : a.cols();
    const int kb = trans_b ? b.cols() : b.rows();
    const int n = trans_b ? b.rows() : b.cols();
    if (k != kb)
        throw ConfigError("matmul: inner dimensions differ, " + shape_str(a.shape()) +
                          (trans_a ? "^T" : "") + " * " + shape_str(b.shape()) + (trans_b ? "^T" : ""));

    Tensor out = make_output({m, n}, tape);
    if (!trans_a && !trans_b)
        mm_nn(out.data(), a.data(), b.data(), m, k, n);
    else if (!trans_a && trans_b)
        mm_nt(out.data(), a.data(), b.data(), m, k, n);
    else
        mm_tn(out.data(), a.data(), b.data(), m, k, n);

    if (tape) {
        tape->record([a, b, out, m, k, n, trans_a, trans_b]() mutable {
            const double* g = out.grad();
            if (!trans_a && !trans_b) {
                if (a.requires_grad()) mm_nt(a.grad(), g, b.data(), m, n, k);
                if (b.requires_grad()) mm_tn(b.grad(), a.data(), g, n, m, k);
            } else if (!trans_a && trans_b) {
                // c = a * b^T, a[m×k], b[n×k]
                if (a.requires_grad()) mm_nn(a.grad(), g, b.data(), m, n, k);
                if (b.requires_grad()) mm_tn(b.grad(), g, a.data(), k, m, n);
            } else {
                // c = a^T * b, a[k×m], b[k×n]
                if (a.requires_grad()) mm_nt(a.grad(), b.data(), g, k, n, m);
                if (b.requires_grad()) mm_nn(b.grad(), a.data(), g, k, m, n);
            }
        });
    }
    return out;
}

Tensor add(const Tensor& a, const Tensor& b, Tape* tape) {
    require_same_shape(a, b, "add");
    Tensor out = make_output(a.shape(), tape);
    const auto n = static_cast<std::size_t>(a.size());
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] + b.data()[i];
    if (tape) {
        tape->record([a, b, out, n]() mutable {
            const double* g = out.grad();
            if (a.requires_grad()) {
                double* ga = a.grad();
                for (std::size_t i = 0; i < n; ++i) ga[i] += g[i];
            }
            if (b.requires_grad()) {
                double* gb = b.grad();
                for (std::size_t i = 0; i < n; ++i) gb[i] += g[i];
            }
        });
    }
    return out;
}

Tensor mul(const Tensor& a, const Tensor& b, Tape* tape) {
    require_same_shape(a, b, "mul");
    Tensor out = make_output(a.shape(), tape);
    const auto n = static_cast<std::size_t>(a.size());
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = a.data()[i] * b.data()[i];
    if (tape) {
        tape->record([a, b, out, n]() mutable {
            const double* g = out.grad();
            if (a.requires_grad()) {
                double* ga = a.grad();
                for (std::size_t i = 0; i < n; ++i) ga[i] += g[i] * b.data()[i];
            }
            if (b.requires_grad()) {
                double* gb = b.grad();
                for (std::size_t i = 0; i < n; ++i) gb[i] += g[i] * a.data()[i];
            }
        });
    }
    return out;
}

Tensor scale(const Tensor& x, double c, Tape* tape) {
    Tensor out = make_output(x.shape(), tape);
    const auto n = static_cast<std::size_t>(x.size());
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = c * x.data()[i];
    if (tape) {
        tape->record([x, out, c, n]() mutable {
            if (!x.requires_grad()) return;
            const double* g = out.grad();
            double* gx = x.grad();
            for (std::size_t i = 0; i < n; ++i) gx[i] += c * g[i];
        });
    }
    return out;
}

Tensor add_bias(const Tensor& x, const Tensor& b, Tape* tape) {
    if (x.rank() != 2 || b.rank() != 1 || b.shape()[0] != x.cols())
        throw ConfigError("add_bias: bias length must equal column count");
    const int m = x.rows(), n = x.cols();
    Tensor out = make_output({m, n}, tape);
    for (int i = 0; i < m; ++i)
        for (int j = 0; j < n; ++j) out.at(i, j) = x.at(i, j) + b.at(j);
    if (tape) {
        tape->record([x, b, out, m, n]() mutable {
            const double* g = out.grad();
            if (x.requires_grad()) {
                double* gx = x.grad();
                for (std::size_t i = 0; i < static_cast<std::size_t>(m) * n; ++i) gx[i] += g[i];
            }
            if (b.requires_grad()) {
                double* gb = b.grad();
                for (int i = 0; i < m; ++i)
                    for (int j = 0; j < n; ++j) gb[j] += g[static_cast<std::size_t>(i) * n + j];
            }
        });
    }
    return out;
}

Tensor relu(const Tensor& x, Tape* tape) {
    Tensor out = make_output(x.shape(), tape);
    const auto n = static_cast<std::size_t>(x.size());
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = x.data()[i] > 0.0 ? x.data()[i] : 0.0;
    if (tape) {
        tape->record([x, out, n]() mutable {
            if (!x.requires_grad()) return;
            const double* g = out.grad();
            double* gx = x.grad();
            // relu'(0) := 0
            for (std::size_t i = 0; i < n; ++i)
                if (x.data()[i] > 0.0) gx[i] += g[i];
        });
    }
    return out;
}

Tensor sigmoid(const Tensor& x, Tape* tape) {
    Tensor out = make_output(x.shape(), tape);
    const auto n = static_cast<std::size_t>(x.size());
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = stable_sigmoid(x.data()[i]);
    if (tape) {
        tape->record([x, out, n]() mutable {
            if (!x.requires_grad()) return;
            const double* g = out.grad();
            double* gx = x.grad();
            for (std::size_t i = 0; i < n; ++i) {
                const double s = out.data()[i];
                gx[i] += g[i] * s * (1.0 - s);
            }
        });
    }
    return out;
}

Tensor tanh(const Tensor& x, Tape* tape) {
    Tensor out = make_output(x.shape(), tape);
    const auto n = static_cast<std::size_t>(x.size());
    for (std::size_t i = 0; i < n; ++i) out.data()[i] = std::tanh(x.data()[i]);
    if (tape) {
        tape->record([x, out, n]() mutable {
            if (!x.requires_grad()) return;
            const double* g = out.grad();
            double* gx = x.grad();
            for (std::size_t i = 0; i < n; ++i) {
                const double t = out.data()[i];
                gx[i] += g[i] * (1.0 - t * t);
            }
        });
    }
    return out;
}

Tensor log(const Tensor& x, Tape* tape) {
    Tensor out = make_output(x.shape(), tape);
    const auto n = static_cast<std::size_t>(x.size());
    for (std::size_t i = 0; i < n; ++i) {
        if (x.data()[i] <= 0.0) throw DataError("log: non-positive input");
        out.data()[i] = std::log(x.data()[i]);
    }
    if (tape) {
        tape->record([x, out, n]() mutable {
            if (!x.requires_grad()) return;
            const double* g = out.grad();
            double* gx = x.grad();
            for (std::size_t i = 0; i < n; ++i) gx[i] += g[i] / x.data()[i];
        });
    }
    return out;
}

Tensor softmax_lastdim(const Tensor& x, Tape* tape, const Tensor* mask) {
    if (x.rank() < 1) throw ConfigError("softmax: rank must be >= 1");
    const int cols = x.shape().back();
    const int rows = static_cast<int>(x.size() / cols);
    const double* mdat = nullptr;
    bool mask_per_row = false;
    if (mask) {
        if (mask->size() == cols)
            mask_per_row = false;
        else if (mask->size() == x.size())
            mask_per_row = true;
        else
            throw ConfigError("softmax: mask not broadcastable to input");
        mdat = mask->data();
    }

    Tensor out = make_output(x.shape(), tape);
    for (int r = 0; r < rows; ++r) {
        const double* xr = x.data() + static_cast<std::size_t>(r) * cols;
        double* yr = out.data() + static_cast<std::size_t>(r) * cols;
        const double* mr = mdat ? (mask_per_row ? mdat + static_cast<std::size_t>(r) * cols : mdat) : nullptr;
        double mx = -std::numeric_limits<double>::infinity();
        int live = 0;
        for (int j = 0; j < cols; ++j) {
            if (mr && mr[j] == 0.0) continue;
            ++live;
            mx = std::max(mx, xr[j]);
        }
        if (live == 0) throw DataError("softmax: fully masked row");
        double sum = 0.0;
        for (int j = 0; j < cols; ++j) {
            if (mr && mr[j] == 0.0) {
                yr[j] = 0.0;
            } else {
                yr[j] = std::exp(xr[j] - mx);
                sum += yr[j];
            }
        }
        for (int j = 0; j < cols; ++j)
            if (!(mr && mr[j] == 0.0)) yr[j] /= sum;
    }

    if (tape) {
        Tensor mask_copy = mask ? mask->clone() : Tensor();
        tape->record([x, out, mask_copy, rows, cols, mask_per_row]() mutable {
            if (!x.requires_grad()) return;
            const double* g = out.grad();
            double* gx = x.grad();
            const double* mdat2 = mask_copy.defined() ? mask_copy.data() : nullptr;
            for (int r = 0; r < rows; ++r) {
                const double* yr = out.data() + static_cast<std::size_t>(r) * cols;
                const double* gr = g + static_cast<std::size_t>(r) * cols;
                const double* mr =
                    mdat2 ? (mask_per_row ? mdat2 + static_cast<std::size_t>(r) * cols : mdat2) : nullptr;
                double dot = 0.0;
                for (int j = 0; j < cols; ++j) {
                    if (mr && mr[j] == 0.0) continue;
                    dot += gr[j] * yr[j];
                }
                double* gxr = gx + static_cast<std::size_t>(r) * cols;
                for (int j = 0; j < cols; ++j) {
                    if (mr && mr[j] == 0.0) continue;
                    gxr[j] += yr[j] * (gr[j] - dot);
                }
            }
        });
    }
    return out;
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias, double eps, Tape* tape) {
    if (x.rank() < 1) throw ConfigError("layer_norm: rank must be >= 1");
    const int cols = x.shape().back();
    const int rows = static_cast<int>(x.size() / cols);
    if (gain.size() != cols || bias.size() != cols)
        throw ConfigError("layer_norm: gain/bias length must equal last extent");

    Tensor out = make_output(x.shape(), tape);
    std::vector<double> inv_std(rows), mean(rows);
    for (int r = 0; r < rows; ++r) {
        const double* xr = x.data() + static_cast<std::size_t>(r) * cols;
        double mu = 0.0;
        for (int j = 0; j < cols; ++j) mu += xr[j];
        mu /= cols;
        double var = 0.0;
        for (int j = 0; j < cols; ++j) var += (xr[j] - mu) * (xr[j] - mu);
        var /= cols;
        const double is = 1.0 / std::sqrt(var + eps);
        mean[r] = mu;
        inv_std[r] = is;
        double* yr = out.data() + static_cast<std::size_t>(r) * cols;
        for (int j = 0; j < cols; ++j) yr[j] = (xr[j] - mu) * is * gain.at(j) + bias.at(j);
    }

    if (tape) {
        tape->record([x, gain, bias, out, rows, cols, mean, inv_std]() mutable {
            const double* g = out.grad();
            for (int r = 0; r < rows; ++r) {
                const double* xr = x.data() + static_cast<std::size_t>(r) * cols;
                const double* gr = g + static_cast<std::size_t>(r) * cols;
                const double mu = mean[r], is = inv_std[r];
                if (gain.requires_grad()) {
                    double* gg = gain.grad();
                    for (int j = 0; j < cols; ++j) gg[j] += gr[j] * (xr[j] - mu) * is;
                }
                if (bias.requires_grad()) {
                    double* gb = bias.grad();
                    for (int j = 0; j < cols; ++j) gb[j] += gr[j];
                }
                if (x.requires_grad()) {
                    // dxhat, then the two mean-coupling corrections
                    double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
                    for (int j = 0; j < cols; ++j) {
                        const double xhat = (xr[j] - mu) * is;
                        const double dxhat = gr[j] * gain.at(j);
                        sum_dxhat += dxhat;
                        sum_dxhat_xhat += dxhat * xhat;
                    }
                    double* gxr = x.grad() + static_cast<std::size_t>(r) * cols;
                    for (int j = 0; j < cols; ++j) {
                        const double xhat = (xr[j] - mu) * is;
                        const double dxhat = gr[j] * gain.at(j);
                        gxr[j] += is * (dxhat - sum_dxhat / cols - xhat * sum_dxhat_xhat / cols);
                    }
                }
            }
        });
    }
    return out;
}

Tensor dropout(const Tensor& x, double rate, bool training, Rng& rng, Tape* tape) {
    if (rate < 0.0 || rate >= 1.0) throw ConfigError("dropout: rate must be in [0, 1)");
    if (!training || rate == 0.0) return x;

    const auto n = static_cast<std::size_t>(x.size());
    auto keep = std::make_shared<std::vector<std::uint8_t>>(n);
    const double inv_keep = 1.0 / (1.0 - rate);
    Tensor out = make_output(x.shape(), tape);
    for (std::size_t i = 0; i < n; ++i) {
        const bool k = rng.uniform() >= rate;
        (*keep)[i] = k ? 1 : 0;
        out.data()[i] = k ? x.data()[i] * inv_keep : 0.0;
    }
    if (tape) {
        tape->record([x, out, keep, n, inv_keep]() mutable {
            if (!x.requires_grad()) return;
            const double* g = out.grad();
            double* gx = x.grad();
            for (std::size_t i = 0; i < n; ++i)
                if ((*keep)[i]) gx[i] += g[i] * inv_keep;
        });
    }
    return out;
}

Tensor gather_rows(const Tensor& table, const std::vector<int>& indices, Tape* tape) {
    if (table.rank() != 2) throw ConfigError("gather_rows: table must be rank-2");
    const int v = table.rows(), d = table.cols();
    const int n = static_cast<int>(indices.size());
    for (int idx : indices)
        if (idx < 0 || idx >= v)
            throw DataError("gather_rows: index " + std::to_string(idx) + " outside table of " +
                            std::to_string(v) + " rows");
    Tensor out = make_output({n, d}, tape);
    for (int i = 0; i < n; ++i)
        std::memcpy(out.data() + static_cast<std::size_t>(i) * d,
                    table.data() + static_cast<std::size_t>(indices[i]) * d, sizeof(double) * d);
    if (tape) {
        tape->record([table, out, indices, n, d]() mutable {
            if (!table.requires_grad()) return;
            const double* g = out.grad();
            double* gt = table.grad();
            for (int i = 0; i < n; ++i) {
                double* row = gt + static_cast<std::size_t>(indices[i]) * d;
                const double* gr = g + static_cast<std::size_t>(i) * d;
                for (int j = 0; j < d; ++j) row[j] += gr[j];
            }
        });
    }
    return out;
}

Tensor concat_cols(const std::vector<Tensor>& xs, Tape* tape) {
    if (xs.empty()) throw ConfigError("concat_cols: empty input list");
    const int m = xs.front().rows();
    int total = 0;
    for (const auto& t : xs) {
        if (t.rows() != m) throw ConfigError("concat_cols: row counts differ");
        total += t.cols();
    }
    Tensor out = make_output({m, total}, tape);
    int off = 0;
    for (const auto& t : xs) {
        const int c = t.cols();
        for (int i = 0; i < m; ++i)
            std::memcpy(out.data() + static_cast<std::size_t>(i) * total + off,
                        t.data() + static_cast<std::size_t>(i) * c, sizeof(double) * c);
        off += c;
    }
    if (tape) {
        tape->record([xs, out, m, total]() mutable {
            const double* g = out.grad();
            int off2 = 0;
            for (auto& t : xs) {
                const int c = t.cols();
                if (t.requires_grad()) {
                    double* gt = t.grad();
                    for (int i = 0; i < m; ++i) {
                        const double* gr = g + static_cast<std::size_t>(i) * total + off2;
                        double* tr = gt + static_cast<std::size_t>(i) * c;
                        for (int j = 0; j < c; ++j) tr[j] += gr[j];
                    }
                }
                off2 += c;
            }
        });
    }
    return out;
}

Tensor slice_cols(const Tensor& x, int start, int len, Tape* tape) {
    if (x.rank() != 2 || start < 0 || len <= 0 || start + len > x.cols())
        throw ConfigError("slice_cols: range outside tensor");
    const int m = x.rows(), n = x.cols();
    Tensor out = make_output({m, len}, tape);
    for (int i = 0; i < m; ++i)
        std::memcpy(out.data() + static_cast<std::size_t>(i) * len,
                    x.data() + static_cast<std::size_t>(i) * n + start, sizeof(double) * len);
    if (tape) {
        tape->record([x, out, start, len, m, n]() mutable {
            if (!x.requires_grad()) return;
            const double* g = out.grad();
            double* gx = x.grad();
            for (int i = 0; i < m; ++i) {
                const double* gr = g + static_cast<std::size_t>(i) * len;
                double* xr = gx + static_cast<std::size_t>(i) * n + start;
                for (int j = 0; j < len; ++j) xr[j] += gr[j];
            }
        });
    }
    return out;
}

Tensor slice_rows(const Tensor& x, int start, int len, Tape* tape) {
    if (x.rank() != 2 || start < 0 || len <= 0 || start + len > x.rows())
        throw ConfigError("slice_rows: range outside tensor");
    const int n = x.cols();
    Tensor out = make_output({len, n}, tape);
    std::memcpy(out.data(), x.data() + static_cast<std::size_t>(start) * n,
                sizeof(double) * static_cast<std::size_t>(len) * n);
    if (tape) {
        tape->record([x, out, start, len, n]() mutable {
            if (!x.requires_grad()) return;
            const double* g = out.grad();
            double* gx = x.grad() + static_cast<std::size_t>(start) * n;
            for (std::size_t i = 0; i < static_cast<std::size_t>(len) * n; ++i) gx[i] += g[i];
        });
    }
    return out;
}

Tensor scaled_dot_attention(const Tensor& q, const Tensor& k, const Tensor& v,
                            const std::vector<std::uint8_t>& key_mask, bool causal, Tape* tape) {
    require_same_shape(q, k, "attention(q,k)");
    require_same_shape(q, v, "attention(q,v)");
    const int L = q.rows(), dk = q.cols();
    if (static_cast<int>(key_mask.size()) != L) throw ConfigError("attention: mask length != L");
    const double sc = 1.0 / std::sqrt(static_cast<double>(dk));

    auto weights = std::make_shared<std::vector<double>>(static_cast<std::size_t>(L) * L, 0.0);
    Tensor out = make_output({L, dk}, tape);
    std::vector<double> srow(L);
    for (int i = 0; i < L; ++i) {
        double mx = -std::numeric_limits<double>::infinity();
        int live = 0;
        for (int j = 0; j < L; ++j) {
            if (!key_mask[j] || (causal && j > i)) continue;
            double s = 0.0;
            const double* qi = q.data() + static_cast<std::size_t>(i) * dk;
            const double* kj = k.data() + static_cast<std::size_t>(j) * dk;
            for (int p = 0; p < dk; ++p) s += qi[p] * kj[p];
            s *= sc;
            srow[j] = s;
            mx = std::max(mx, s);
            ++live;
        }
        if (live == 0) throw DataError("attention: no unmasked key for query row " + std::to_string(i));
        double sum = 0.0;
        double* wrow = weights->data() + static_cast<std::size_t>(i) * L;
        for (int j = 0; j < L; ++j) {
            if (!key_mask[j] || (causal && j > i)) continue;
            wrow[j] = std::exp(srow[j] - mx);
            sum += wrow[j];
        }
        double* oi = out.data() + static_cast<std::size_t>(i) * dk;
        for (int j = 0; j < L; ++j) {
            if (!key_mask[j] || (causal && j > i)) continue;
            wrow[j] /= sum;
            const double w = wrow[j];
            const double* vj = v.data() + static_cast<std::size_t>(j) * dk;
            for (int p = 0; p < dk; ++p) oi[p] += w * vj[p];
        }
    }

    if (tape) {
        tape->record([q, k, v, out, weights, key_mask, causal, L, dk, sc]() mutable {
            const double* g = out.grad();
            std::vector<double> da(L), ds(L);
            for (int i = 0; i < L; ++i) {
                const double* gi = g + static_cast<std::size_t>(i) * dk;
                const double* wrow = weights->data() + static_cast<std::size_t>(i) * L;
                double dot = 0.0;
                for (int j = 0; j < L; ++j) {
                    if (!key_mask[j] || (causal && j > i)) continue;
                    const double* vj = v.data() + static_cast<std::size_t>(j) * dk;
                    double s = 0.0;
                    for (int p = 0; p < dk; ++p) s += gi[p] * vj[p];
                    da[j] = s;
                    dot += s * wrow[j];
                }
                for (int j = 0; j < L; ++j) {
                    if (!key_mask[j] || (causal && j > i)) continue;
                    ds[j] = wrow[j] * (da[j] - dot);
                    if (v.requires_grad()) {
                        double* gv = v.grad() + static_cast<std::size_t>(j) * dk;
                        for (int p = 0; p < dk; ++p) gv[p] += wrow[j] * gi[p];
                    }
                    if (q.requires_grad()) {
                        double* gq = q.grad() + static_cast<std::size_t>(i) * dk;
                        const double* kj = k.data() + static_cast<std::size_t>(j) * dk;
                        for (int p = 0; p < dk; ++p) gq[p] += sc * ds[j] * kj[p];
                    }
                    if (k.requires_grad()) {
                        double* gk = k.grad() + static_cast<std::size_t>(j) * dk;
                        const double* qi = q.data() + static_cast<std::size_t>(i) * dk;
                        for (int p = 0; p < dk; ++p) gk[p] += sc * ds[j] * qi[p];
                    }
                }
            }
        });
    }
    return out;
}

Tensor multi_head_self_attention(const Tensor& x, int n_heads, const AttentionParams& p,
                                 const std::vector<std::uint8_t>& mask, bool causal, Tape* tape) {
    const int d_model = x.cols();
    if (n_heads <= 0 || d_model % n_heads != 0)
        throw ConfigError("attention: d_model " + std::to_string(d_model) + " not divisible by " +
                          std::to_string(n_heads) + " heads");
    const int dk = d_model / n_heads;

    Tensor qs = add_bias(matmul(x, p.wq, tape), p.bq, tape);
    Tensor ks = add_bias(matmul(x, p.wk, tape), p.bk, tape);
    Tensor vs = add_bias(matmul(x, p.wv, tape), p.bv, tape);

    std::vector<Tensor> heads;
    heads.reserve(static_cast<std::size_t>(n_heads));
    for (int h = 0; h < n_heads; ++h) {
        Tensor qh = slice_cols(qs, h * dk, dk, tape);
        Tensor kh = slice_cols(ks, h * dk, dk, tape);
        Tensor vh = slice_cols(vs, h * dk, dk, tape);
        heads.push_back(scaled_dot_attention(qh, kh, vh, mask, causal, tape));
    }
    Tensor cat = concat_cols(heads, tape);
    return add_bias(matmul(cat, p.wo, tape), p.bo, tape);
}

Tensor masked_max_pool(const Tensor& x, const std::vector<std::uint8_t>& mask, Tape* tape) {
    const int L = x.rows(), d = x.cols();
    if (static_cast<int>(mask.size()) != L) throw ConfigError("max_pool: mask length != L");
    auto argmax = std::make_shared<std::vector<int>>(d, -1);
    Tensor out = make_output({1, d}, tape);
    bool any = false;
    for (int i = 0; i < L; ++i) {
        if (!mask[i]) continue;
        any = true;
        for (int j = 0; j < d; ++j) {
            const double val = x.at(i, j);
            // ties keep the lowest row index
            if ((*argmax)[j] < 0 || val > out.at(0, j)) {
                out.at(0, j) = val;
                (*argmax)[j] = i;
            }
        }
    }
    if (!any) throw DataError("max_pool: empty mask");
    if (tape) {
        tape->record([x, out, argmax, d]() mutable {
            if (!x.requires_grad()) return;
            const double* g = out.grad();
            for (int j = 0; j < d; ++j) x.grad()[static_cast<std::size_t>((*argmax)[j]) * d + j] += g[j];
        });
    }
    return out;
}

Tensor masked_mean_pool(const Tensor& x, const std::vector<std::uint8_t>& mask, Tape* tape) {
    const int L = x.rows(), d = x.cols();
    if (static_cast<int>(mask.size()) != L) throw ConfigError("mean_pool: mask length != L");
    int count = 0;
    for (int i = 0; i < L; ++i) count += mask[i] ? 1 : 0;
    if (count == 0) throw DataError("mean_pool: empty mask");
    Tensor out = make_output({1, d}, tape);
    for (int i = 0; i < L; ++i) {
        if (!mask[i]) continue;
        for (int j = 0; j < d; ++j) out.at(0, j) += x.at(i, j);
    }
    for (int j = 0; j < d; ++j) out.at(0, j) /= count;
    if (tape) {
        tape->record([x, out, mask, L, d, count]() mutable {
            if (!x.requires_grad()) return;
            const double* g = out.grad();
            for (int i = 0; i < L; ++i) {
                if (!mask[i]) continue;
                double* gx = x.grad() + static_cast<std::size_t>(i) * d;
                for (int j = 0; j < d; ++j) gx[j] += g[j] / count;
            }
        });
    }
    return out;
}

Tensor bce_with_logits(const Tensor& logit, double label, double pos_weight, Tape* tape) {
    if (logit.size() != 1) throw ConfigError("bce: logit must be scalar");
    if (pos_weight <= 0.0) throw ConfigError("bce: pos_weight must be positive");
    if (label != 0.0 && label != 1.0) throw ConfigError("bce: label must be 0 or 1");
    const double z = logit.item();
    const double loss = pos_weight * label * softplus(-z) + (1.0 - label) * softplus(z);
    Tensor out = Tensor::scalar(loss, tape != nullptr);
    if (tape) {
        tape->record([logit, out, label, pos_weight, z]() mutable {
            if (!logit.requires_grad()) return;
            const double s = stable_sigmoid(z);
            logit.grad()[0] += out.grad()[0] * (pos_weight * label * (s - 1.0) + (1.0 - label) * s);
        });
    }
    return out;
}

Tensor cross_entropy_rows(const Tensor& logits, const std::vector<int>& targets,
                          const std::vector<std::uint8_t>& valid, Tape* tape) {
    const int L = logits.rows(), vsz = logits.cols();
    if (static_cast<int>(targets.size()) != L || static_cast<int>(valid.size()) != L)
        throw ConfigError("cross_entropy: targets/valid length != rows");
    int count = 0;
    double total = 0.0;
    std::vector<double> lse(L, 0.0);
    for (int i = 0; i < L; ++i) {
        if (!valid[i]) continue;
        if (targets[i] < 0 || targets[i] >= vsz)
            throw DataError("cross_entropy: target token " + std::to_string(targets[i]) +
                            " outside vocabulary of " + std::to_string(vsz));
        const double* row = logits.data() + static_cast<std::size_t>(i) * vsz;
        double mx = row[0];
        for (int j = 1; j < vsz; ++j) mx = std::max(mx, row[j]);
        double sum = 0.0;
        for (int j = 0; j < vsz; ++j) sum += std::exp(row[j] - mx);
        lse[i] = mx + std::log(sum);
        total += lse[i] - row[targets[i]];
        ++count;
    }
    if (count == 0) throw DataError("cross_entropy: no valid rows");
    Tensor out = Tensor::scalar(total / count, tape != nullptr);
    if (tape) {
        tape->record([logits, out, targets, valid, lse, L, vsz, count]() mutable {
            if (!logits.requires_grad()) return;
            const double g = out.grad()[0] / count;
            for (int i = 0; i < L; ++i) {
                if (!valid[i]) continue;
                const double* row = logits.data() + static_cast<std::size_t>(i) * vsz;
                double* grow = logits.grad() + static_cast<std::size_t>(i) * vsz;
                for (int j = 0; j < vsz; ++j) {
                    const double p = std::exp(row[j] - lse[i]);
                    grow[j] += g * (p - (j == targets[i] ? 1.0 : 0.0));
                }
            }
        });
    }
    return out;
}

Tensor add_scalars(const std::vector<Tensor>& xs, Tape* tape) {
    if (xs.empty()) throw ConfigError("add_scalars: empty input list");
    double total = 0.0;
    for (const auto& t : xs) total += t.item();
    Tensor out = Tensor::scalar(total, tape != nullptr);
    if (tape) {
        tape->record([xs, out]() mutable {
            const double g = out.grad()[0];
            for (auto& t : xs)
                if (t.requires_grad()) t.grad()[0] += g;
        });
    }
    return out;
}

}  // namespace trace
