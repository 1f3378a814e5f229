#pragma once

// Dense float64 tensors with reverse-mode automatic differentiation.
//
// Every operation whose inputs track gradients records its parent nodes and
// a pull-back closure on the output node. Node ids grow monotonically at
// creation, so sorting reachable nodes by descending id replays the
// operation record in reverse -- that is the whole "graph". backward() seeds
// the scalar loss with 1, resets interior gradients, and accumulates (+=)
// into leaves; leaves keep accumulating across calls until zero_grad().
//
// Operations on tensors that do not require gradients skip the record
// entirely, so frozen-model evaluation carries no tape overhead.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "dfkd/errors.hpp"

namespace dfkd {

using Shape = std::vector<size_t>;

inline std::string shape_str(const Shape& s) {
    std::ostringstream os;
    os << '[';
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) os << 'x';
        os << s[i];
    }
    os << ']';
    return os.str();
}

inline size_t shape_numel(const Shape& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

namespace detail {

struct TensorNode {
    Shape shape;
    std::vector<double> data;
    std::vector<double> grad; // empty until backward() reaches this node
    bool requires_grad = false;
    uint64_t id = 0; // creation order among grad-tracking nodes
    std::vector<std::shared_ptr<TensorNode>> parents;
    std::function<void()> backprop; // pulls this->grad into parents' grads

    size_t size() const { return data.size(); }
    bool is_leaf() const { return parents.empty(); }
};

inline std::atomic<uint64_t>& node_counter() {
    static std::atomic<uint64_t> counter{0};
    return counter;
}

} // namespace detail

class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        return from_data(std::move(shape), {}, requires_grad, /*fill_zero=*/true);
    }

    static Tensor full(Shape shape, double value, bool requires_grad = false) {
        const size_t n = shape_numel(shape);
        return from_data(std::move(shape), std::vector<double>(n, value), requires_grad);
    }

    static Tensor scalar(double value, bool requires_grad = false) {
        return from_data({1}, {value}, requires_grad);
    }

    static Tensor from_data(Shape shape, std::vector<double> data, bool requires_grad = false,
                            bool fill_zero = false) {
        auto node = std::make_shared<detail::TensorNode>();
        const size_t n = shape_numel(shape);
        if (fill_zero) data.assign(n, 0.0);
        if (data.size() != n)
            throw dimension_error("tensor data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
        node->shape = std::move(shape);
        node->data = std::move(data);
        node->requires_grad = requires_grad;
        if (requires_grad) node->id = ++detail::node_counter();
        return Tensor(std::move(node));
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    size_t ndim() const { return node_->shape.size(); }
    size_t size() const { return node_->data.size(); }
    size_t dim(size_t i) const { return node_->shape[i]; }
    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->is_leaf(); }

    const std::vector<double>& data() const { return node_->data; }
    // In-place mutation is reserved for leaves (optimizer updates, batch
    // staging); mutating an interior node would desynchronize the tape.
    std::vector<double>& mutable_data() {
        if (!node_->is_leaf()) throw contract_error("mutable_data: only leaf tensors may be mutated");
        return node_->data;
    }

    bool has_grad() const { return !node_->grad.empty(); }
    const std::vector<double>& grad() const {
        if (!has_grad()) throw contract_error("grad accessed before backward()");
        return node_->grad;
    }
    void zero_grad() {
        if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), 0.0);
    }

    double item() const {
        if (size() != 1) throw contract_error("item() requires a single-element tensor, got " + shape_str(shape()));
        return node_->data[0];
    }

    // Value copy that is cut off from the graph.
    Tensor detach() const { return from_data(node_->shape, node_->data, false); }

    std::shared_ptr<detail::TensorNode> node() const { return node_; }

private:
    explicit Tensor(std::shared_ptr<detail::TensorNode> node) : node_(std::move(node)) {}
    std::shared_ptr<detail::TensorNode> node_;

    friend Tensor make_op(Shape, std::vector<double>, std::vector<Tensor>,
                          std::function<std::function<void()>(detail::TensorNode*)>);
};

// Assembles an op result: plain value if no input tracks gradients,
// otherwise a recorded node. make_backprop receives the finished output node
// and returns the pull-back closure.
inline Tensor make_op(Shape shape, std::vector<double> data, std::vector<Tensor> inputs,
                      std::function<std::function<void()>(detail::TensorNode*)> make_backprop) {
    bool track = false;
    for (const auto& t : inputs)
        if (t.requires_grad()) track = true;
    Tensor out = Tensor::from_data(std::move(shape), std::move(data), track);
    if (track) {
        auto node = out.node();
        node->parents.reserve(inputs.size());
        for (const auto& t : inputs) node->parents.push_back(t.node());
        node->backprop = make_backprop(node.get());
    }
    return out;
}

namespace detail {

inline void accumulate(const std::shared_ptr<TensorNode>& dst, const std::vector<double>& g) {
    if (!dst->requires_grad) return;
    double* d = dst->grad.data();
    const double* s = g.data();
    const size_t n = g.size();
    for (size_t i = 0; i < n; ++i) d[i] += s[i];
}

// ---- matrix kernels (row-major, accumulate into C) ----

// C(m x n) += A(m x k) * B(k x n)
inline void mm_nn_acc(const double* A, const double* B, double* C, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double* ai = A + i * k;
        double* ci = C + i * n;
        for (size_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            const double* bp = B + p * n;
            for (size_t j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

// C(m x k) += A(m x n) * B(k x n)^T. Goes through an explicit transpose of
// B so the hot loop is a broadcast-accumulate over contiguous rows, which
// vectorizes without reassociation.
inline void mm_nt_acc(const double* A, const double* B, double* C, size_t m, size_t n, size_t k) {
    std::vector<double> bt(n * k);
    for (size_t p = 0; p < k; ++p)
        for (size_t j = 0; j < n; ++j) bt[j * k + p] = B[p * n + j];
    mm_nn_acc(A, bt.data(), C, m, n, k);
}

// C(k x n) += A(m x k)^T * B(m x n)
inline void mm_tn_acc(const double* A, const double* B, double* C, size_t m, size_t k, size_t n) {
    for (size_t i = 0; i < m; ++i) {
        const double* ai = A + i * k;
        const double* bi = B + i * n;
        for (size_t p = 0; p < k; ++p) {
            const double aip = ai[p];
            double* cp = C + p * n;
            for (size_t j = 0; j < n; ++j) cp[j] += aip * bi[j];
        }
    }
}

} // namespace detail

// ---- core operations ----

inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw dimension_error("matmul: incompatible shapes " + shape_str(a.shape()) + " and " +
                              shape_str(b.shape()));
    const size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    std::vector<double> out(m * n, 0.0);
    detail::mm_nn_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
    return make_op({m, n}, std::move(out), {a, b}, [=](detail::TensorNode* self) {
        auto pa = a.node(), pb = b.node();
        return [self, pa, pb, m, k, n]() {
            const double* g = self->grad.data();
            if (pa->requires_grad) // dA = g * B^T
                detail::mm_nt_acc(g, pb->data.data(), pa->grad.data(), m, n, k);
            if (pb->requires_grad) // dB = A^T * g
                detail::mm_tn_acc(pa->data.data(), g, pb->grad.data(), m, k, n);
        };
    });
}

namespace detail {

enum class BinKind { add, sub, mul };

inline Tensor binary_op(const Tensor& a, const Tensor& b, BinKind kind, const char* name) {
    const bool a_scalar = a.size() == 1, b_scalar = b.size() == 1;
    if (a.shape() != b.shape() && !a_scalar && !b_scalar)
        throw dimension_error(std::string(name) + ": shape mismatch " + shape_str(a.shape()) +
                              " vs " + shape_str(b.shape()) + " (only scalar broadcast supported)");
    const Tensor& big = a_scalar && !b_scalar ? b : a;
    const size_t n = big.size();
    std::vector<double> out(n);
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for (size_t i = 0; i < n; ++i) {
        const double x = a_scalar ? pa[0] : pa[i];
        const double y = b_scalar ? pb[0] : pb[i];
        out[i] = kind == BinKind::add ? x + y : kind == BinKind::sub ? x - y : x * y;
    }
    return make_op(big.shape(), std::move(out), {a, b}, [=](TensorNode* self) {
        auto na = a.node(), nb = b.node();
        return [self, na, nb, kind, a_scalar, b_scalar, n]() {
            const double* g = self->grad.data();
            if (na->requires_grad) {
                double* da = na->grad.data();
                const double* y = nb->data.data();
                for (size_t i = 0; i < n; ++i) {
                    const double gi = kind == BinKind::mul ? g[i] * (b_scalar ? y[0] : y[i]) : g[i];
                    da[a_scalar ? 0 : i] += gi;
                }
            }
            if (nb->requires_grad) {
                double* db = nb->grad.data();
                const double* x = na->data.data();
                for (size_t i = 0; i < n; ++i) {
                    double gi = g[i];
                    if (kind == BinKind::mul) gi *= a_scalar ? x[0] : x[i];
                    else if (kind == BinKind::sub) gi = -gi;
                    db[b_scalar ? 0 : i] += gi;
                }
            }
        };
    });
}

// elementwise unary with local gradient computed from (x, y)
template <typename Fwd, typename Bwd>
Tensor unary_op(const Tensor& x, Fwd fwd, Bwd bwd) {
    const size_t n = x.size();
    std::vector<double> out(n);
    const double* px = x.data().data();
    for (size_t i = 0; i < n; ++i) out[i] = fwd(px[i]);
    return make_op(x.shape(), std::move(out), {x}, [=](TensorNode* self) {
        auto nx = x.node();
        return [self, nx, bwd, n]() {
            if (!nx->requires_grad) return;
            const double* g = self->grad.data();
            const double* xv = nx->data.data();
            const double* yv = self->data.data();
            double* dx = nx->grad.data();
            for (size_t i = 0; i < n; ++i) dx[i] += g[i] * bwd(xv[i], yv[i]);
        };
    });
}

} // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) { return detail::binary_op(a, b, detail::BinKind::add, "add"); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return detail::binary_op(a, b, detail::BinKind::sub, "sub"); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return detail::binary_op(a, b, detail::BinKind::mul, "mul"); }

inline Tensor relu(const Tensor& x) {
    return detail::unary_op(x, [](double v) { return v > 0.0 ? v : 0.0; },
                            [](double v, double) { return v > 0.0 ? 1.0 : 0.0; });
}

inline Tensor tanh(const Tensor& x) {
    return detail::unary_op(x, [](double v) { return std::tanh(v); },
                            [](double, double y) { return 1.0 - y * y; });
}

inline Tensor sigmoid(const Tensor& x) {
    return detail::unary_op(x, [](double v) { return 1.0 / (1.0 + std::exp(-v)); },
                            [](double, double y) { return y * (1.0 - y); });
}

inline Tensor square(const Tensor& x) {
    return detail::unary_op(x, [](double v) { return v * v; },
                            [](double v, double) { return 2.0 * v; });
}

inline Tensor scale(const Tensor& x, double c) {
    return detail::unary_op(x, [c](double v) { return c * v; },
                            [c](double, double) { return c; });
}

inline Tensor add_const(const Tensor& x, double c) {
    return detail::unary_op(x, [c](double v) { return v + c; },
                            [](double, double) { return 1.0; });
}

inline Tensor neg(const Tensor& x) { return scale(x, -1.0); }

inline Tensor reshape(const Tensor& x, Shape shape) {
    if (shape_numel(shape) != x.size())
        throw dimension_error("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    return make_op(std::move(shape), x.data(), {x}, [=](detail::TensorNode* self) {
        auto nx = x.node();
        return [self, nx]() { detail::accumulate(nx, self->grad); };
    });
}

inline Tensor sum_all(const Tensor& x) {
    double total = 0.0;
    for (double v : x.data()) total += v;
    return make_op({1}, {total}, {x}, [=](detail::TensorNode* self) {
        auto nx = x.node();
        return [self, nx]() {
            if (!nx->requires_grad) return;
            const double g = self->grad[0];
            for (double& d : nx->grad) d += g;
        };
    });
}

inline Tensor mean_all(const Tensor& x) { return scale(sum_all(x), 1.0 / static_cast<double>(x.size())); }

// reduce over the last axis: [... x M] -> [...]
inline Tensor sum_last(const Tensor& x) {
    if (x.ndim() == 0) throw dimension_error("sum_last: scalar input");
    const size_t m = x.shape().back();
    const size_t rows = x.size() / m;
    Shape out_shape(x.shape().begin(), x.shape().end() - 1);
    if (out_shape.empty()) out_shape = {1};
    std::vector<double> out(rows, 0.0);
    const double* px = x.data().data();
    for (size_t r = 0; r < rows; ++r)
        for (size_t j = 0; j < m; ++j) out[r] += px[r * m + j];
    return make_op(std::move(out_shape), std::move(out), {x}, [=](detail::TensorNode* self) {
        auto nx = x.node();
        return [self, nx, rows, m]() {
            if (!nx->requires_grad) return;
            const double* g = self->grad.data();
            double* dx = nx->grad.data();
            for (size_t r = 0; r < rows; ++r)
                for (size_t j = 0; j < m; ++j) dx[r * m + j] += g[r];
        };
    });
}

namespace detail {

inline void softmax_rows(const double* z, double* p, size_t rows, size_t m, double inv_t) {
    for (size_t r = 0; r < rows; ++r) {
        const double* zr = z + r * m;
        double* pr = p + r * m;
        double mx = zr[0];
        for (size_t j = 1; j < m; ++j) mx = std::max(mx, zr[j]);
        double sum = 0.0;
        for (size_t j = 0; j < m; ++j) {
            pr[j] = std::exp((zr[j] - mx) * inv_t);
            sum += pr[j];
        }
        const double inv = 1.0 / sum;
        for (size_t j = 0; j < m; ++j) pr[j] *= inv;
    }
}

} // namespace detail

// softmax over the last axis at temperature T (entries divided by T first),
// stabilized by row-max subtraction.
inline Tensor softmax(const Tensor& z, double temperature = 1.0) {
    if (temperature <= 0.0)
        throw parameter_error("softmax: temperature must be positive, got " + std::to_string(temperature));
    const size_t m = z.shape().back();
    const size_t rows = z.size() / m;
    std::vector<double> out(z.size());
    detail::softmax_rows(z.data().data(), out.data(), rows, m, 1.0 / temperature);
    return make_op(z.shape(), std::move(out), {z}, [=](detail::TensorNode* self) {
        auto nz = z.node();
        const double inv_t = 1.0 / temperature;
        return [self, nz, rows, m, inv_t]() {
            if (!nz->requires_grad) return;
            const double* g = self->grad.data();
            const double* p = self->data.data();
            double* dz = nz->grad.data();
            for (size_t r = 0; r < rows; ++r) {
                const double* gr = g + r * m;
                const double* pr = p + r * m;
                double dot = 0.0;
                for (size_t j = 0; j < m; ++j) dot += gr[j] * pr[j];
                double* dzr = dz + r * m;
                for (size_t j = 0; j < m; ++j) dzr[j] += inv_t * pr[j] * (gr[j] - dot);
            }
        };
    });
}

inline Tensor log_softmax(const Tensor& z, double temperature = 1.0) {
    if (temperature <= 0.0)
        throw parameter_error("log_softmax: temperature must be positive, got " + std::to_string(temperature));
    const size_t m = z.shape().back();
    const size_t rows = z.size() / m;
    const double inv_t = 1.0 / temperature;
    std::vector<double> out(z.size());
    const double* pz = z.data().data();
    for (size_t r = 0; r < rows; ++r) {
        const double* zr = pz + r * m;
        double* lr = out.data() + r * m;
        double mx = zr[0];
        for (size_t j = 1; j < m; ++j) mx = std::max(mx, zr[j]);
        double sum = 0.0;
        for (size_t j = 0; j < m; ++j) sum += std::exp((zr[j] - mx) * inv_t);
        const double lse = std::log(sum);
        for (size_t j = 0; j < m; ++j) lr[j] = (zr[j] - mx) * inv_t - lse;
    }
    return make_op(z.shape(), std::move(out), {z}, [=](detail::TensorNode* self) {
        auto nz = z.node();
        return [self, nz, rows, m, inv_t]() {
            if (!nz->requires_grad) return;
            const double* g = self->grad.data();
            const double* lp = self->data.data();
            double* dz = nz->grad.data();
            for (size_t r = 0; r < rows; ++r) {
                const double* gr = g + r * m;
                const double* lr = lp + r * m;
                double gsum = 0.0;
                for (size_t j = 0; j < m; ++j) gsum += gr[j];
                double* dzr = dz + r * m;
                for (size_t j = 0; j < m; ++j) dzr[j] += inv_t * (gr[j] - std::exp(lr[j]) * gsum);
            }
        };
    });
}

// Per-feature mean and biased variance (divide by B) across the batch axis
// of a [B x H] tensor. Both outputs are differentiable w.r.t. x.
inline std::pair<Tensor, Tensor> moments(const Tensor& x) {
    if (x.ndim() != 2) throw dimension_error("moments: expected [B x H], got " + shape_str(x.shape()));
    const size_t b = x.dim(0), h = x.dim(1);
    if (b < 1) throw parameter_error("moments: empty batch");
    std::vector<double> mean(h, 0.0), var(h, 0.0);
    const double* px = x.data().data();
    for (size_t i = 0; i < b; ++i)
        for (size_t j = 0; j < h; ++j) mean[j] += px[i * h + j];
    const double inv_b = 1.0 / static_cast<double>(b);
    for (size_t j = 0; j < h; ++j) mean[j] *= inv_b;
    for (size_t i = 0; i < b; ++i)
        for (size_t j = 0; j < h; ++j) {
            const double d = px[i * h + j] - mean[j];
            var[j] += d * d;
        }
    for (size_t j = 0; j < h; ++j) var[j] *= inv_b;

    std::vector<double> mean_copy = mean;
    Tensor mean_t = make_op({h}, std::move(mean_copy), {x}, [=](detail::TensorNode* self) {
        auto nx = x.node();
        return [self, nx, b, h, inv_b]() {
            if (!nx->requires_grad) return;
            const double* g = self->grad.data();
            double* dx = nx->grad.data();
            for (size_t i = 0; i < b; ++i)
                for (size_t j = 0; j < h; ++j) dx[i * h + j] += g[j] * inv_b;
        };
    });
    Tensor var_t = make_op({h}, std::move(var), {x}, [=, mu = std::move(mean)](detail::TensorNode* self) {
        auto nx = x.node();
        return [self, nx, b, h, inv_b, mu]() {
            if (!nx->requires_grad) return;
            const double* g = self->grad.data();
            const double* xv = nx->data.data();
            double* dx = nx->grad.data();
            for (size_t i = 0; i < b; ++i)
                for (size_t j = 0; j < h; ++j)
                    dx[i * h + j] += g[j] * 2.0 * inv_b * (xv[i * h + j] - mu[j]);
        };
    });
    return {mean_t, var_t};
}

// [R x C] matrix plus a length-C vector added to every row. Kept as a
// dedicated op so general broadcasting stays out of the core.
inline Tensor add_rowvec(const Tensor& mat, const Tensor& vec) {
    if (mat.ndim() != 2 || vec.ndim() != 1 || mat.dim(1) != vec.dim(0))
        throw dimension_error("add_rowvec: incompatible shapes " + shape_str(mat.shape()) + " and " +
                              shape_str(vec.shape()));
    const size_t r = mat.dim(0), c = mat.dim(1);
    std::vector<double> out(mat.data());
    const double* pv = vec.data().data();
    for (size_t i = 0; i < r; ++i)
        for (size_t j = 0; j < c; ++j) out[i * c + j] += pv[j];
    return make_op(mat.shape(), std::move(out), {mat, vec}, [=](detail::TensorNode* self) {
        auto nm = mat.node(), nv = vec.node();
        return [self, nm, nv, r, c]() {
            const double* g = self->grad.data();
            if (nm->requires_grad) detail::accumulate(nm, self->grad);
            if (nv->requires_grad) {
                double* dv = nv->grad.data();
                for (size_t i = 0; i < r; ++i)
                    for (size_t j = 0; j < c; ++j) dv[j] += g[i * c + j];
            }
        };
    });
}

inline Tensor concat_cols(const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(0) != b.dim(0))
        throw dimension_error("concat_cols: incompatible shapes " + shape_str(a.shape()) + " and " +
                              shape_str(b.shape()));
    const size_t r = a.dim(0), ca = a.dim(1), cb = b.dim(1);
    std::vector<double> out(r * (ca + cb));
    const double* pa = a.data().data();
    const double* pb = b.data().data();
    for (size_t i = 0; i < r; ++i) {
        std::copy(pa + i * ca, pa + (i + 1) * ca, out.begin() + static_cast<long>(i * (ca + cb)));
        std::copy(pb + i * cb, pb + (i + 1) * cb, out.begin() + static_cast<long>(i * (ca + cb) + ca));
    }
    return make_op({r, ca + cb}, std::move(out), {a, b}, [=](detail::TensorNode* self) {
        auto na = a.node(), nb = b.node();
        return [self, na, nb, r, ca, cb]() {
            const double* g = self->grad.data();
            if (na->requires_grad) {
                double* da = na->grad.data();
                for (size_t i = 0; i < r; ++i)
                    for (size_t j = 0; j < ca; ++j) da[i * ca + j] += g[i * (ca + cb) + j];
            }
            if (nb->requires_grad) {
                double* db = nb->grad.data();
                for (size_t i = 0; i < r; ++i)
                    for (size_t j = 0; j < cb; ++j) db[i * cb + j] += g[i * (ca + cb) + ca + j];
            }
        };
    });
}

// [B x T x D] -> [B x D] frame at step t
inline Tensor time_slice(const Tensor& x, size_t t) {
    if (x.ndim() != 3) throw dimension_error("time_slice: expected [B x T x D], got " + shape_str(x.shape()));
    const size_t b = x.dim(0), steps = x.dim(1), d = x.dim(2);
    if (t >= steps) throw parameter_error("time_slice: step " + std::to_string(t) + " out of range");
    std::vector<double> out(b * d);
    const double* px = x.data().data();
    for (size_t i = 0; i < b; ++i)
        std::copy(px + (i * steps + t) * d, px + (i * steps + t + 1) * d, out.begin() + static_cast<long>(i * d));
    return make_op({b, d}, std::move(out), {x}, [=](detail::TensorNode* self) {
        auto nx = x.node();
        return [self, nx, b, steps, d, t]() {
            if (!nx->requires_grad) return;
            const double* g = self->grad.data();
            double* dx = nx->grad.data();
            for (size_t i = 0; i < b; ++i)
                for (size_t j = 0; j < d; ++j) dx[(i * steps + t) * d + j] += g[i * d + j];
        };
    });
}

// stack S tensors of shape [B x M] into [B x S x M]
inline Tensor stack_steps(const std::vector<Tensor>& steps) {
    if (steps.empty()) throw parameter_error("stack_steps: empty input");
    const size_t b = steps[0].dim(0), m = steps[0].dim(1), s = steps.size();
    for (const auto& t : steps)
        if (t.ndim() != 2 || t.dim(0) != b || t.dim(1) != m)
            throw dimension_error("stack_steps: inconsistent step shape " + shape_str(t.shape()));
    std::vector<double> out(b * s * m);
    for (size_t k = 0; k < s; ++k) {
        const double* p = steps[k].data().data();
        for (size_t i = 0; i < b; ++i)
            std::copy(p + i * m, p + (i + 1) * m, out.begin() + static_cast<long>((i * s + k) * m));
    }
    return make_op({b, s, m}, std::move(out), steps, [=](detail::TensorNode* self) {
        std::vector<std::shared_ptr<detail::TensorNode>> nodes;
        nodes.reserve(s);
        for (const auto& t : steps) nodes.push_back(t.node());
        return [self, nodes, b, s, m]() {
            const double* g = self->grad.data();
            for (size_t k = 0; k < s; ++k) {
                if (!nodes[k]->requires_grad) continue;
                double* dk = nodes[k]->grad.data();
                for (size_t i = 0; i < b; ++i)
                    for (size_t j = 0; j < m; ++j) dk[i * m + j] += g[(i * s + k) * m + j];
            }
        };
    });
}

// [B x (L*D)] -> [B x (L+V) x D]; the trailing V frames are exact zeros.
inline Tensor pad_frames(const Tensor& flat, size_t obs_len, size_t horizon, size_t feat_dim) {
    if (flat.ndim() != 2 || flat.dim(1) != obs_len * feat_dim)
        throw dimension_error("pad_frames: expected [B x " + std::to_string(obs_len * feat_dim) +
                              "], got " + shape_str(flat.shape()));
    const size_t b = flat.dim(0), total = obs_len + horizon;
    std::vector<double> out(b * total * feat_dim, 0.0);
    const double* p = flat.data().data();
    for (size_t i = 0; i < b; ++i)
        std::copy(p + i * obs_len * feat_dim, p + (i + 1) * obs_len * feat_dim,
                  out.begin() + static_cast<long>(i * total * feat_dim));
    return make_op({b, total, feat_dim}, std::move(out), {flat}, [=](detail::TensorNode* self) {
        auto nf = flat.node();
        return [self, nf, b, total, obs_len, feat_dim]() {
            if (!nf->requires_grad) return;
            const double* g = self->grad.data();
            double* df = nf->grad.data();
            const size_t w = obs_len * feat_dim;
            for (size_t i = 0; i < b; ++i)
                for (size_t j = 0; j < w; ++j) df[i * w + j] += g[i * total * feat_dim + j];
        };
    });
}

// per-row Euclidean norm of [R x C] -> [R]; zero rows get zero gradient
inline Tensor row_l2norm(const Tensor& x) {
    if (x.ndim() != 2) throw dimension_error("row_l2norm: expected 2-d input, got " + shape_str(x.shape()));
    const size_t r = x.dim(0), c = x.dim(1);
    std::vector<double> out(r, 0.0);
    const double* px = x.data().data();
    for (size_t i = 0; i < r; ++i) {
        double s = 0.0;
        for (size_t j = 0; j < c; ++j) s += px[i * c + j] * px[i * c + j];
        out[i] = std::sqrt(s);
    }
    return make_op({r}, std::move(out), {x}, [=](detail::TensorNode* self) {
        auto nx = x.node();
        return [self, nx, r, c]() {
            if (!nx->requires_grad) return;
            const double* g = self->grad.data();
            const double* xv = nx->data.data();
            const double* norms = self->data.data();
            double* dx = nx->grad.data();
            for (size_t i = 0; i < r; ++i) {
                if (norms[i] == 0.0) continue;
                const double gi = g[i] / norms[i];
                for (size_t j = 0; j < c; ++j) dx[i * c + j] += gi * xv[i * c + j];
            }
        };
    });
}

// select one entry per row: [R x M], idx[R] -> [R]
inline Tensor pick_per_row(const Tensor& x, const std::vector<int>& idx) {
    if (x.ndim() != 2) throw dimension_error("pick_per_row: expected 2-d input, got " + shape_str(x.shape()));
    const size_t r = x.dim(0), m = x.dim(1);
    if (idx.size() != r)
        throw dimension_error("pick_per_row: " + std::to_string(idx.size()) + " indices for " +
                              std::to_string(r) + " rows");
    for (int v : idx)
        if (v < 0 || static_cast<size_t>(v) >= m)
            throw contract_error("pick_per_row: index " + std::to_string(v) + " outside [0, " +
                                 std::to_string(m) + ")");
    std::vector<double> out(r);
    const double* px = x.data().data();
    for (size_t i = 0; i < r; ++i) out[i] = px[i * m + static_cast<size_t>(idx[i])];
    return make_op({r}, std::move(out), {x}, [=](detail::TensorNode* self) {
        auto nx = x.node();
        return [self, nx, idx, m, r]() {
            if (!nx->requires_grad) return;
            const double* g = self->grad.data();
            double* dx = nx->grad.data();
            for (size_t i = 0; i < r; ++i) dx[i * m + static_cast<size_t>(idx[i])] += g[i];
        };
    });
}

// Reverse-mode sweep from a scalar loss. Interior gradients are reset per
// call; leaf gradients accumulate until zero_grad(), matching the usual
// optimizer loop.
inline void backward(const Tensor& loss) {
    if (loss.size() != 1)
        throw contract_error("backward: loss must be a scalar, got " + shape_str(loss.shape()));
    if (!loss.requires_grad()) return;

    std::vector<detail::TensorNode*> nodes;
    std::unordered_set<detail::TensorNode*> seen;
    std::vector<detail::TensorNode*> stack{loss.node().get()};
    seen.insert(loss.node().get());
    while (!stack.empty()) {
        detail::TensorNode* n = stack.back();
        stack.pop_back();
        nodes.push_back(n);
        for (const auto& p : n->parents)
            if (p->requires_grad && seen.insert(p.get()).second) stack.push_back(p.get());
    }
    for (detail::TensorNode* n : nodes) {
        if (n->grad.size() != n->size()) n->grad.assign(n->size(), 0.0);
        else if (!n->is_leaf()) std::fill(n->grad.begin(), n->grad.end(), 0.0);
    }
    std::sort(nodes.begin(), nodes.end(),
              [](const detail::TensorNode* a, const detail::TensorNode* b) { return a->id > b->id; });
    loss.node()->grad[0] += 1.0;
    for (detail::TensorNode* n : nodes)
        if (n->backprop) n->backprop();
}

} // namespace dfkd
