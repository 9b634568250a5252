#pragma once

// Dense float32 tensors with a reverse-mode autodiff tape.
// Single-threaded by design: one forward/backward pass owns the tape, frozen
// parameter sets are immutable and safe to share across readers.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <functional>
#include <limits>
#include <memory>
#include <numeric>
#include <string>
#include <vector>

#include "pgen/error.hpp"
#include "pgen/rng.hpp"

namespace pgen {

using Shape = std::vector<int64_t>;

inline int64_t numel_of(const Shape& s) {
    int64_t n = 1;
    for (int64_t d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        out += std::to_string(s[i]);
        if (i + 1 < s.size()) out += ",";
    }
    return out + ")";
}

struct TensorImpl {
    Shape shape;
    std::vector<float> data;
    std::vector<float> grad;  // empty until first accumulation
    bool requires_grad = false;

    int64_t numel() const { return int64_t(data.size()); }

    void ensure_grad() {
        if (grad.empty()) grad.assign(data.size(), 0.0f);
    }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(std::shared_ptr<TensorImpl> impl) : impl_(std::move(impl)) {}

    static Tensor zeros(Shape shape, bool requires_grad = false) {
        auto impl = std::make_shared<TensorImpl>();
        impl->shape = std::move(shape);
        impl->data.assign(size_t(numel_of(impl->shape)), 0.0f);
        impl->requires_grad = requires_grad;
        return Tensor(impl);
    }

    static Tensor full(Shape shape, float value) {
        Tensor t = zeros(std::move(shape));
        std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
        return t;
    }

    static Tensor scalar(float value) { return full({}, value); }

    static Tensor from(std::vector<float> values, Shape shape) {
        if (int64_t(values.size()) != numel_of(shape))
            shape_fail("Tensor::from: value count does not match shape " + shape_str(shape));
        auto impl = std::make_shared<TensorImpl>();
        impl->shape = std::move(shape);
        impl->data = std::move(values);
        return Tensor(impl);
    }

    static Tensor randn(Rng& rng, Shape shape, float stddev, bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (auto& v : t.impl_->data) v = float(rng.normal(0.0, stddev));
        return t;
    }

    static Tensor rand_uniform(Rng& rng, Shape shape, float lo, float hi,
                               bool requires_grad = false) {
        Tensor t = zeros(std::move(shape), requires_grad);
        for (auto& v : t.impl_->data) v = float(rng.uniform(lo, hi));
        return t;
    }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    int64_t dim(int i) const {
        int n = int(impl_->shape.size());
        if (i < 0) i += n;
        return impl_->shape[size_t(i)];
    }
    int ndim() const { return int(impl_->shape.size()); }
    int64_t numel() const { return impl_->numel(); }

    float* data() { return impl_->data.data(); }
    const float* data() const { return impl_->data.data(); }
    std::vector<float>& values() { return impl_->data; }
    const std::vector<float>& values() const { return impl_->data; }

    bool requires_grad() const { return impl_->requires_grad; }
    Tensor& set_requires_grad(bool v) {
        impl_->requires_grad = v;
        return *this;
    }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::vector<float>& grad() {
        impl_->ensure_grad();
        return impl_->grad;
    }
    const std::vector<float>& grad_view() const { return impl_->grad; }
    void zero_grad() { std::fill(impl_->grad.begin(), impl_->grad.end(), 0.0f); }

    float item() const {
        if (numel() != 1) shape_fail("item() on tensor with numel " + std::to_string(numel()));
        return impl_->data[0];
    }

    float at(std::initializer_list<int64_t> idx) const {
        int64_t off = 0;
        size_t i = 0;
        for (int64_t v : idx) {
            off = off * impl_->shape[i] + v;
            ++i;
        }
        return impl_->data[size_t(off)];
    }

    std::shared_ptr<TensorImpl> impl() const { return impl_; }

private:
    std::shared_ptr<TensorImpl> impl_;
};

// ---------------------------------------------------------------------------
// Tape
// ---------------------------------------------------------------------------

// Records backward closures in forward (topological) order; backward() runs
// them in reverse once. A second backward without a fresh forward is an error.
class Tape {
public:
    Tape() {
        prev_ = active_;
        active_ = this;
    }
    ~Tape() { active_ = prev_; }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* active() { return active_; }

    void record(std::function<void()> backward_fn) { ops_.push_back(std::move(backward_fn)); }

    size_t size() const { return ops_.size(); }

    void backward(Tensor loss) {
        if (consumed_) throw NumericalError("tape: backward called twice without a new forward pass");
        if (loss.numel() != 1) shape_fail("backward: loss must be scalar, got " + shape_str(loss.shape()));
        if (ops_.empty()) throw NumericalError("tape: backward on a detached graph (no recorded ops)");
        consumed_ = true;
        loss.grad()[0] = 1.0f;
        for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
    }

private:
    std::vector<std::function<void()>> ops_;
    bool consumed_ = false;
    Tape* prev_ = nullptr;
    static inline thread_local Tape* active_ = nullptr;
};

inline bool grad_enabled_for(const Tensor& t) { return Tape::active() != nullptr && t.requires_grad(); }

namespace detail {

inline bool tracked(std::initializer_list<const Tensor*> ins) {
    if (!Tape::active()) return false;
    for (auto* t : ins)
        if (t->requires_grad()) return true;
    return false;
}

inline void mark_output(Tensor& out, bool track) { out.set_requires_grad(track); }

// Gradient accumulation target: allocates lazily so untouched branches stay cheap.
inline float* grad_ptr(const Tensor& t) {
    auto impl = t.impl();
    impl->ensure_grad();
    return impl->grad.data();
}

inline bool has_incoming_grad(const Tensor& t) { return t.impl()->grad.size() == t.impl()->data.size(); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Small GEMM kernels (row-major, accumulate into c)
// ---------------------------------------------------------------------------

// c(m,n) += a(m,k) * b(k,n)
inline void sgemm_nn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const float* ai = a + i * k;
        float* ci = c + i * n;
        for (int64_t p = 0; p < k; ++p) {
            const float av = ai[p];
            const float* bp = b + p * n;
            for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// c(m,n) += a(m,k) * b(n,k)^T  (dot-product form, 8 independent accumulators)
inline void sgemm_nt(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t i = 0; i < m; ++i) {
        const float* ai = a + i * k;
        float* ci = c + i * n;
        for (int64_t j = 0; j < n; ++j) {
            const float* bj = b + j * k;
            float acc[8] = {0, 0, 0, 0, 0, 0, 0, 0};
            int64_t p = 0;
            for (; p + 8 <= k; p += 8)
                for (int l = 0; l < 8; ++l) acc[l] += ai[p + l] * bj[p + l];
            float tail = 0.0f;
            for (; p < k; ++p) tail += ai[p] * bj[p];
            ci[j] += ((acc[0] + acc[1]) + (acc[2] + acc[3])) + ((acc[4] + acc[5]) + (acc[6] + acc[7])) + tail;
        }
    }
}

// c(m,n) += a(k,m)^T * b(k,n)
inline void sgemm_tn(const float* a, const float* b, float* c, int64_t m, int64_t k, int64_t n) {
    for (int64_t p = 0; p < k; ++p) {
        const float* ap = a + p * m;
        const float* bp = b + p * n;
        for (int64_t i = 0; i < m; ++i) {
            const float av = ap[i];
            float* ci = c + i * n;
            for (int64_t j = 0; j < n; ++j) ci[j] += av * bp[j];
        }
    }
}

// ---------------------------------------------------------------------------
// Broadcasting helpers
// ---------------------------------------------------------------------------

inline Shape broadcast_shapes(const Shape& a, const Shape& b) {
    size_t n = std::max(a.size(), b.size());
    Shape out(n);
    for (size_t i = 0; i < n; ++i) {
        int64_t da = i < n - a.size() ? 1 : a[i - (n - a.size())];
        int64_t db = i < n - b.size() ? 1 : b[i - (n - b.size())];
        if (da != db && da != 1 && db != 1)
            shape_fail("broadcast mismatch " + shape_str(a) + " vs " + shape_str(b));
        out[i] = std::max(da, db);
    }
    return out;
}

namespace detail {

// Strides for reading a (possibly smaller) shape as if broadcast to `out`.
inline std::vector<int64_t> broadcast_strides(const Shape& shape, const Shape& out) {
    std::vector<int64_t> strides(out.size(), 0);
    int64_t s = 1;
    for (int i = int(shape.size()) - 1, o = int(out.size()) - 1; i >= 0; --i, --o) {
        strides[size_t(o)] = (shape[size_t(i)] == 1) ? 0 : s;
        s *= shape[size_t(i)];
    }
    return strides;
}

template <class F>
inline void for_each_broadcast(const Shape& out, const std::vector<int64_t>& sa,
                               const std::vector<int64_t>& sb, F&& f) {
    int nd = int(out.size());
    std::vector<int64_t> idx(size_t(nd), 0);
    int64_t total = numel_of(out);
    int64_t oa = 0, ob = 0;
    for (int64_t lin = 0; lin < total; ++lin) {
        f(lin, oa, ob);
        for (int d = nd - 1; d >= 0; --d) {
            idx[size_t(d)]++;
            oa += sa[size_t(d)];
            ob += sb[size_t(d)];
            if (idx[size_t(d)] < out[size_t(d)]) break;
            idx[size_t(d)] = 0;
            oa -= sa[size_t(d)] * out[size_t(d)];
            ob -= sb[size_t(d)] * out[size_t(d)];
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise binary ops
// ---------------------------------------------------------------------------

namespace detail {

enum class BinOp { Add, Sub, Mul };

inline Tensor binary_op(const Tensor& a, const Tensor& b, BinOp op) {
    const bool track = tracked({&a, &b});
    Tensor out;
    const bool same = a.shape() == b.shape();
    if (same) {
        out = Tensor::zeros(a.shape());
        const float* pa = a.data();
        const float* pb = b.data();
        float* po = out.data();
        const int64_t n = a.numel();
        switch (op) {
            case BinOp::Add: for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + pb[i]; break;
            case BinOp::Sub: for (int64_t i = 0; i < n; ++i) po[i] = pa[i] - pb[i]; break;
            case BinOp::Mul: for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * pb[i]; break;
        }
    } else {
        Shape os = broadcast_shapes(a.shape(), b.shape());
        out = Tensor::zeros(os);
        auto sa = broadcast_strides(a.shape(), os);
        auto sb = broadcast_strides(b.shape(), os);
        const float* pa = a.data();
        const float* pb = b.data();
        float* po = out.data();
        for_each_broadcast(os, sa, sb, [&](int64_t lin, int64_t oa, int64_t ob) {
            switch (op) {
                case BinOp::Add: po[lin] = pa[oa] + pb[ob]; break;
                case BinOp::Sub: po[lin] = pa[oa] - pb[ob]; break;
                case BinOp::Mul: po[lin] = pa[oa] * pb[ob]; break;
            }
        });
    }
    mark_output(out, track);
    if (track) {
        Tape::active()->record([a, b, out, op, same]() {
            if (!has_incoming_grad(out)) return;
            const float* go = out.impl()->grad.data();
            const int64_t n = out.numel();
            if (same) {
                if (a.requires_grad()) {
                    float* ga = grad_ptr(a);
                    if (op == BinOp::Mul) {
                        const float* pb = b.data();
                        for (int64_t i = 0; i < n; ++i) ga[i] += go[i] * pb[i];
                    } else {
                        for (int64_t i = 0; i < n; ++i) ga[i] += go[i];
                    }
                }
                if (b.requires_grad()) {
                    float* gb = grad_ptr(b);
                    if (op == BinOp::Mul) {
                        const float* pa = a.data();
                        for (int64_t i = 0; i < n; ++i) gb[i] += go[i] * pa[i];
                    } else if (op == BinOp::Sub) {
                        for (int64_t i = 0; i < n; ++i) gb[i] -= go[i];
                    } else {
                        for (int64_t i = 0; i < n; ++i) gb[i] += go[i];
                    }
                }
            } else {
                const Shape& os = out.shape();
                auto sa = broadcast_strides(a.shape(), os);
                auto sb = broadcast_strides(b.shape(), os);
                float* ga = a.requires_grad() ? grad_ptr(a) : nullptr;
                float* gb = b.requires_grad() ? grad_ptr(b) : nullptr;
                const float* pa = a.data();
                const float* pb = b.data();
                for_each_broadcast(os, sa, sb, [&](int64_t lin, int64_t oa, int64_t ob) {
                    const float g = go[lin];
                    switch (op) {
                        case BinOp::Add:
                            if (ga) ga[oa] += g;
                            if (gb) gb[ob] += g;
                            break;
                        case BinOp::Sub:
                            if (ga) ga[oa] += g;
                            if (gb) gb[ob] -= g;
                            break;
                        case BinOp::Mul:
                            if (ga) ga[oa] += g * pb[ob];
                            if (gb) gb[ob] += g * pa[oa];
                            break;
                    }
                });
            }
        });
    }
    return out;
}

}  // namespace detail

inline Tensor add(const Tensor& a, const Tensor& b) { return detail::binary_op(a, b, detail::BinOp::Add); }
inline Tensor sub(const Tensor& a, const Tensor& b) { return detail::binary_op(a, b, detail::BinOp::Sub); }
inline Tensor mul(const Tensor& a, const Tensor& b) { return detail::binary_op(a, b, detail::BinOp::Mul); }

inline Tensor scale(const Tensor& a, float s) {
    const bool track = detail::tracked({&a});
    Tensor out = Tensor::zeros(a.shape());
    const float* pa = a.data();
    float* po = out.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] * s;
    detail::mark_output(out, track);
    if (track) {
        Tape::active()->record([a, out, s]() {
            if (!detail::has_incoming_grad(out)) return;
            const float* go = out.impl()->grad.data();
            float* ga = detail::grad_ptr(a);
            const int64_t n = out.numel();
            for (int64_t i = 0; i < n; ++i) ga[i] += go[i] * s;
        });
    }
    return out;
}

inline Tensor add_scalar(const Tensor& a, float s) {
    const bool track = detail::tracked({&a});
    Tensor out = Tensor::zeros(a.shape());
    const int64_t n = a.numel();
    const float* pa = a.data();
    float* po = out.data();
    for (int64_t i = 0; i < n; ++i) po[i] = pa[i] + s;
    detail::mark_output(out, track);
    if (track) {
        Tape::active()->record([a, out]() {
            if (!detail::has_incoming_grad(out)) return;
            const float* go = out.impl()->grad.data();
            float* ga = detail::grad_ptr(a);
            const int64_t n = out.numel();
            for (int64_t i = 0; i < n; ++i) ga[i] += go[i];
        });
    }
    return out;
}

// Stop-gradient marker: shares nothing, value copy, never tracks.
inline Tensor detach(const Tensor& a) {
    Tensor out = Tensor::zeros(a.shape());
    std::copy(a.values().begin(), a.values().end(), out.values().begin());
    return out;
}

// ---------------------------------------------------------------------------
// Unary elementwise ops
// ---------------------------------------------------------------------------

namespace detail {

template <class Fwd, class Bwd>
inline Tensor unary_op(const Tensor& a, Fwd fwd, Bwd bwd) {
    const bool track = tracked({&a});
    Tensor out = Tensor::zeros(a.shape());
    const float* pa = a.data();
    float* po = out.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) po[i] = fwd(pa[i]);
    mark_output(out, track);
    if (track) {
        Tape::active()->record([a, out, bwd]() {
            if (!has_incoming_grad(out)) return;
            const float* go = out.impl()->grad.data();
            const float* pa = a.data();
            const float* po = out.data();
            float* ga = grad_ptr(a);
            const int64_t n = out.numel();
            for (int64_t i = 0; i < n; ++i) ga[i] += go[i] * bwd(pa[i], po[i]);
        });
    }
    return out;
}

}  // namespace detail

inline Tensor relu(const Tensor& a) {
    return detail::unary_op(
        a, [](float x) { return x > 0.0f ? x : 0.0f; },
        [](float x, float) { return x > 0.0f ? 1.0f : 0.0f; });
}

inline Tensor sigmoid(const Tensor& a) {
    return detail::unary_op(
        a, [](float x) { return 1.0f / (1.0f + std::exp(-x)); },
        [](float, float y) { return y * (1.0f - y); });
}

inline Tensor tanh_op(const Tensor& a) {
    return detail::unary_op(
        a, [](float x) { return std::tanh(x); },
        [](float, float y) { return 1.0f - y * y; });
}

inline Tensor sin_op(const Tensor& a) {
    return detail::unary_op(
        a, [](float x) { return std::sin(x); },
        [](float x, float) { return std::cos(x); });
}

inline Tensor cos_op(const Tensor& a) {
    return detail::unary_op(
        a, [](float x) { return std::cos(x); },
        [](float x, float) { return -std::sin(x); });
}

// tanh-approximation GELU (GPT-2 flavor).
inline Tensor gelu(const Tensor& a) {
    constexpr float kC = 0.7978845608028654f;  // sqrt(2/pi)
    constexpr float kA = 0.044715f;
    return detail::unary_op(
        a,
        [](float x) {
            const float u = kC * (x + kA * x * x * x);
            return 0.5f * x * (1.0f + std::tanh(u));
        },
        [](float x, float) {
            const float u = kC * (x + kA * x * x * x);
            const float t = std::tanh(u);
            const float du = kC * (1.0f + 3.0f * kA * x * x);
            return 0.5f * (1.0f + t) + 0.5f * x * (1.0f - t * t) * du;
        });
}

// ---------------------------------------------------------------------------
// Matmul
// ---------------------------------------------------------------------------

// a: (..., m, k), b: (..., k, n) with equal batch prefix, or b: (k, n) shared.
inline Tensor matmul(const Tensor& a, const Tensor& b) {
    if (a.ndim() < 2 || b.ndim() < 2) shape_fail("matmul: inputs must have >= 2 dims");
    const int64_t m = a.dim(-2), k = a.dim(-1);
    const int64_t kb = b.dim(-2), n = b.dim(-1);
    if (k != kb)
        shape_fail("matmul: inner dims differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    Shape batch(a.shape().begin(), a.shape().end() - 2);
    const bool b_shared = b.ndim() == 2 && a.ndim() > 2;
    if (!b_shared) {
        Shape bbatch(b.shape().begin(), b.shape().end() - 2);
        if (bbatch != batch)
            shape_fail("matmul: batch dims differ " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    }
    Shape os = batch;
    os.push_back(m);
    os.push_back(n);
    const bool track = detail::tracked({&a, &b});
    Tensor out = Tensor::zeros(os);
    const int64_t nb = numel_of(batch);
    const float* pa = a.data();
    const float* pb = b.data();
    float* po = out.data();
    for (int64_t i = 0; i < nb; ++i)
        sgemm_nn(pa + i * m * k, b_shared ? pb : pb + i * k * n, po + i * m * n, m, k, n);
    detail::mark_output(out, track);
    if (track) {
        Tape::active()->record([a, b, out, m, k, n, nb, b_shared]() {
            if (!detail::has_incoming_grad(out)) return;
            const float* go = out.impl()->grad.data();
            const float* pa = a.data();
            const float* pb = b.data();
            if (a.requires_grad()) {
                float* ga = detail::grad_ptr(a);
                for (int64_t i = 0; i < nb; ++i)
                    sgemm_nt(go + i * m * n, b_shared ? pb : pb + i * k * n, ga + i * m * k, m, n, k);
            }
            if (b.requires_grad()) {
                float* gb = detail::grad_ptr(b);
                for (int64_t i = 0; i < nb; ++i)
                    sgemm_tn(pa + i * m * k, go + i * m * n, b_shared ? gb : gb + i * k * n, k, m, n);
            }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

inline Tensor reshape(const Tensor& a, Shape shape) {
    // One dim may be -1 (inferred).
    int64_t prod = 1;
    int infer = -1;
    for (size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] == -1) {
            if (infer >= 0) shape_fail("reshape: multiple -1 dims");
            infer = int(i);
        } else {
            prod *= shape[i];
        }
    }
    if (infer >= 0) shape[size_t(infer)] = a.numel() / prod;
    if (numel_of(shape) != a.numel())
        shape_fail("reshape: numel mismatch " + shape_str(a.shape()) + " -> " + shape_str(shape));
    const bool track = detail::tracked({&a});
    Tensor out = Tensor::zeros(shape);
    std::copy(a.values().begin(), a.values().end(), out.values().begin());
    detail::mark_output(out, track);
    if (track) {
        Tape::active()->record([a, out]() {
            if (!detail::has_incoming_grad(out)) return;
            const float* go = out.impl()->grad.data();
            float* ga = detail::grad_ptr(a);
            const int64_t n = out.numel();
            for (int64_t i = 0; i < n; ++i) ga[i] += go[i];
        });
    }
    return out;
}

namespace detail {

inline void permute_copy(const float* src, float* dst, const Shape& in_shape,
                         const std::vector<int>& perm, bool inverse) {
    const int nd = int(in_shape.size());
    Shape out_shape(static_cast<size_t>(nd));
    for (int i = 0; i < nd; ++i) out_shape[size_t(i)] = in_shape[size_t(perm[size_t(i)])];
    std::vector<int64_t> in_strides(static_cast<size_t>(nd)), out_strides(static_cast<size_t>(nd));
    int64_t s = 1;
    for (int i = nd - 1; i >= 0; --i) {
        in_strides[size_t(i)] = s;
        s *= in_shape[size_t(i)];
    }
    s = 1;
    for (int i = nd - 1; i >= 0; --i) {
        out_strides[size_t(i)] = s;
        s *= out_shape[size_t(i)];
    }
    const int64_t total = numel_of(in_shape);
    std::vector<int64_t> idx(size_t(nd), 0);
    int64_t src_off = 0;
    for (int64_t lin = 0; lin < total; ++lin) {
        int64_t dst_off = 0;
        for (int i = 0; i < nd; ++i) dst_off += idx[size_t(perm[size_t(i)])] * out_strides[size_t(i)];
        if (inverse)
            dst[src_off] += src[dst_off];
        else
            dst[dst_off] = src[src_off];
        for (int d = nd - 1; d >= 0; --d) {
            idx[size_t(d)]++;
            src_off += in_strides[size_t(d)];
            if (idx[size_t(d)] < in_shape[size_t(d)]) break;
            idx[size_t(d)] = 0;
            src_off -= in_strides[size_t(d)] * in_shape[size_t(d)];
        }
    }
}

}  // namespace detail

inline Tensor transpose(const Tensor& a, std::vector<int> perm) {
    if (int(perm.size()) != a.ndim()) shape_fail("transpose: perm rank mismatch");
    Shape os(perm.size());
    for (size_t i = 0; i < perm.size(); ++i) os[i] = a.shape()[size_t(perm[i])];
    const bool track = detail::tracked({&a});
    Tensor out = Tensor::zeros(os);
    detail::permute_copy(a.data(), out.data(), a.shape(), perm, false);
    detail::mark_output(out, track);
    if (track) {
        Tape::active()->record([a, out, perm]() {
            if (!detail::has_incoming_grad(out)) return;
            detail::permute_copy(out.impl()->grad.data(), detail::grad_ptr(a), a.shape(), perm, true);
        });
    }
    return out;
}

// Swap the last two dims.
inline Tensor transpose2d(const Tensor& a) {
    std::vector<int> perm(static_cast<size_t>(a.ndim()));
    std::iota(perm.begin(), perm.end(), 0);
    std::swap(perm[perm.size() - 1], perm[perm.size() - 2]);
    return transpose(a, perm);
}

inline Tensor concat(const std::vector<Tensor>& parts, int axis) {
    if (parts.empty()) shape_fail("concat: no inputs");
    const int nd = parts[0].ndim();
    if (axis < 0) axis += nd;
    Shape os = parts[0].shape();
    int64_t total_axis = 0;
    for (const auto& p : parts) {
        if (p.ndim() != nd) shape_fail("concat: rank mismatch");
        for (int i = 0; i < nd; ++i)
            if (i != axis && p.shape()[size_t(i)] != os[size_t(i)]) shape_fail("concat: dim mismatch");
        total_axis += p.shape()[size_t(axis)];
    }
    os[size_t(axis)] = total_axis;
    bool track = false;
    if (Tape::active())
        for (const auto& p : parts)
            if (p.requires_grad()) track = true;
    Tensor out = Tensor::zeros(os);
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= os[size_t(i)];
    for (int i = axis + 1; i < nd; ++i) inner *= os[size_t(i)];
    int64_t off = 0;
    for (const auto& p : parts) {
        const int64_t ax = p.shape()[size_t(axis)];
        const float* ps = p.data();
        for (int64_t o = 0; o < outer; ++o)
            std::memcpy(out.data() + (o * total_axis + off) * inner, ps + o * ax * inner,
                        size_t(ax * inner) * sizeof(float));
        off += ax;
    }
    detail::mark_output(out, track);
    if (track) {
        Tape::active()->record([parts, out, axis, outer, inner, total_axis]() {
            if (!detail::has_incoming_grad(out)) return;
            const float* go = out.impl()->grad.data();
            int64_t off = 0;
            for (const auto& p : parts) {
                const int64_t ax = p.shape()[size_t(axis)];
                if (p.requires_grad()) {
                    float* gp = detail::grad_ptr(p);
                    for (int64_t o = 0; o < outer; ++o) {
                        const float* src = go + (o * total_axis + off) * inner;
                        float* dst = gp + o * ax * inner;
                        for (int64_t i = 0; i < ax * inner; ++i) dst[i] += src[i];
                    }
                }
                off += ax;
            }
        });
    }
    return out;
}

inline Tensor slice(const Tensor& a, int axis, int64_t start, int64_t len) {
    const int nd = a.ndim();
    if (axis < 0) axis += nd;
    if (start < 0 || start + len > a.shape()[size_t(axis)]) shape_fail("slice: out of range");
    Shape os = a.shape();
    os[size_t(axis)] = len;
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= a.shape()[size_t(i)];
    for (int i = axis + 1; i < nd; ++i) inner *= a.shape()[size_t(i)];
    const int64_t ax = a.shape()[size_t(axis)];
    const bool track = detail::tracked({&a});
    Tensor out = Tensor::zeros(os);
    for (int64_t o = 0; o < outer; ++o)
        std::memcpy(out.data() + o * len * inner, a.data() + (o * ax + start) * inner,
                    size_t(len * inner) * sizeof(float));
    detail::mark_output(out, track);
    if (track) {
        Tape::active()->record([a, out, start, len, outer, inner, ax]() {
            if (!detail::has_incoming_grad(out)) return;
            const float* go = out.impl()->grad.data();
            float* ga = detail::grad_ptr(a);
            for (int64_t o = 0; o < outer; ++o) {
                const float* src = go + o * len * inner;
                float* dst = ga + (o * ax + start) * inner;
                for (int64_t i = 0; i < len * inner; ++i) dst[i] += src[i];
            }
        });
    }
    return out;
}

// Rows of `table` (V, d) gathered by integer ids; backward scatter-adds.
inline Tensor embedding(const Tensor& table, const std::vector<int32_t>& ids) {
    if (table.ndim() != 2) shape_fail("embedding: table must be 2-D");
    const int64_t v = table.dim(0), d = table.dim(1);
    for (int32_t id : ids)
        if (id < 0 || id >= v) throw NumericalError("embedding: id out of range: " + std::to_string(id));
    const bool track = detail::tracked({&table});
    Tensor out = Tensor::zeros({int64_t(ids.size()), d});
    for (size_t i = 0; i < ids.size(); ++i)
        std::memcpy(out.data() + int64_t(i) * d, table.data() + int64_t(ids[i]) * d, size_t(d) * sizeof(float));
    detail::mark_output(out, track);
    if (track) {
        Tape::active()->record([table, out, ids, d]() {
            if (!detail::has_incoming_grad(out)) return;
            const float* go = out.impl()->grad.data();
            float* gt = detail::grad_ptr(table);
            for (size_t i = 0; i < ids.size(); ++i) {
                float* dst = gt + int64_t(ids[i]) * d;
                const float* src = go + int64_t(i) * d;
                for (int64_t j = 0; j < d; ++j) dst[j] += src[j];
            }
        });
    }
    return out;
}

// Gather rows of a (N, d) tensor; same mechanics as embedding.
inline Tensor gather_rows(const Tensor& x, const std::vector<int32_t>& rows) { return embedding(x, rows); }

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

inline Tensor sum(const Tensor& a) {
    const bool track = detail::tracked({&a});
    double acc = 0.0;
    const float* pa = a.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) acc += pa[i];
    Tensor out = Tensor::scalar(float(acc));
    detail::mark_output(out, track);
    if (track) {
        Tape::active()->record([a, out]() {
            if (!detail::has_incoming_grad(out)) return;
            const float g = out.impl()->grad[0];
            float* ga = detail::grad_ptr(a);
            const int64_t n = a.numel();
            for (int64_t i = 0; i < n; ++i) ga[i] += g;
        });
    }
    return out;
}

inline Tensor mean(const Tensor& a) {
    Tensor s = sum(a);
    return scale(s, 1.0f / float(a.numel()));
}

// Mean over the given axis (removing it).
inline Tensor mean_axis(const Tensor& a, int axis) {
    const int nd = a.ndim();
    if (axis < 0) axis += nd;
    Shape os;
    for (int i = 0; i < nd; ++i)
        if (i != axis) os.push_back(a.shape()[size_t(i)]);
    int64_t outer = 1, inner = 1;
    for (int i = 0; i < axis; ++i) outer *= a.shape()[size_t(i)];
    for (int i = axis + 1; i < nd; ++i) inner *= a.shape()[size_t(i)];
    const int64_t ax = a.shape()[size_t(axis)];
    const bool track = detail::tracked({&a});
    Tensor out = Tensor::zeros(os);
    const float* pa = a.data();
    float* po = out.data();
    const float inv = 1.0f / float(ax);
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t x = 0; x < ax; ++x) {
            const float* src = pa + (o * ax + x) * inner;
            float* dst = po + o * inner;
            for (int64_t i = 0; i < inner; ++i) dst[i] += src[i] * inv;
        }
    detail::mark_output(out, track);
    if (track) {
        Tape::active()->record([a, out, outer, inner, ax, inv]() {
            if (!detail::has_incoming_grad(out)) return;
            const float* go = out.impl()->grad.data();
            float* ga = detail::grad_ptr(a);
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t x = 0; x < ax; ++x) {
                    float* dst = ga + (o * ax + x) * inner;
                    const float* src = go + o * inner;
                    for (int64_t i = 0; i < inner; ++i) dst[i] += src[i] * inv;
                }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Softmax / normalization / losses
// ---------------------------------------------------------------------------

// Softmax over the last axis. -inf entries become exact zeros; a fully masked
// row is an error.
inline Tensor softmax_lastdim(const Tensor& a) {
    const int64_t d = a.dim(-1);
    const int64_t rows = a.numel() / d;
    const bool track = detail::tracked({&a});
    Tensor out = Tensor::zeros(a.shape());
    const float* pa = a.data();
    float* po = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        const float* x = pa + r * d;
        float* y = po + r * d;
        float mx = -std::numeric_limits<float>::infinity();
        for (int64_t i = 0; i < d; ++i) mx = std::max(mx, x[i]);
        if (!(mx > -std::numeric_limits<float>::infinity()))
            throw NumericalError("softmax: fully masked row (all -inf)");
        if (std::isnan(mx)) throw NumericalError("softmax: NaN input");
        double denom = 0.0;
        for (int64_t i = 0; i < d; ++i) {
            const float e = std::exp(x[i] - mx);
            y[i] = e;
            denom += e;
        }
        const float inv = float(1.0 / denom);
        for (int64_t i = 0; i < d; ++i) y[i] *= inv;
    }
    detail::mark_output(out, track);
    if (track) {
        Tape::active()->record([a, out, d, rows]() {
            if (!detail::has_incoming_grad(out)) return;
            const float* go = out.impl()->grad.data();
            const float* po = out.data();
            float* ga = detail::grad_ptr(a);
            for (int64_t r = 0; r < rows; ++r) {
                const float* y = po + r * d;
                const float* gy = go + r * d;
                float* gx = ga + r * d;
                double dot = 0.0;
                for (int64_t i = 0; i < d; ++i) dot += double(gy[i]) * double(y[i]);
                for (int64_t i = 0; i < d; ++i) gx[i] += (gy[i] - float(dot)) * y[i];
            }
        });
    }
    return out;
}

inline Tensor softmax(const Tensor& a, int axis) {
    const int nd = a.ndim();
    if (axis < 0) axis += nd;
    if (axis == nd - 1) return softmax_lastdim(a);
    std::vector<int> perm(static_cast<size_t>(nd));
    std::iota(perm.begin(), perm.end(), 0);
    std::swap(perm[size_t(axis)], perm[size_t(nd - 1)]);
    return transpose(softmax_lastdim(transpose(a, perm)), perm);
}

// LayerNorm over the last axis with affine params gamma/beta of shape (d).
inline Tensor layer_norm(const Tensor& a, const Tensor& gamma, const Tensor& beta, float eps = 1e-5f) {
    const int64_t d = a.dim(-1);
    if (gamma.numel() != d || beta.numel() != d) shape_fail("layer_norm: gamma/beta size mismatch");
    const int64_t rows = a.numel() / d;
    const bool track = detail::tracked({&a, &gamma, &beta});
    Tensor out = Tensor::zeros(a.shape());
    // Cache inverse stddev and normalized values for backward.
    auto xhat = std::make_shared<std::vector<float>>(size_t(a.numel()));
    auto rstd = std::make_shared<std::vector<float>>(size_t(rows));
    const float* pa = a.data();
    const float* pg = gamma.data();
    const float* pb = beta.data();
    float* po = out.data();
    for (int64_t r = 0; r < rows; ++r) {
        const float* x = pa + r * d;
        double m = 0.0;
        for (int64_t i = 0; i < d; ++i) m += x[i];
        m /= double(d);
        double var = 0.0;
        for (int64_t i = 0; i < d; ++i) {
            const double c = double(x[i]) - m;
            var += c * c;
        }
        var /= double(d);
        const float rs = float(1.0 / std::sqrt(var + double(eps)));
        (*rstd)[size_t(r)] = rs;
        float* xh = xhat->data() + r * d;
        float* y = po + r * d;
        for (int64_t i = 0; i < d; ++i) {
            xh[i] = (x[i] - float(m)) * rs;
            y[i] = xh[i] * pg[i] + pb[i];
        }
    }
    detail::mark_output(out, track);
    if (track) {
        Tape::active()->record([a, gamma, beta, out, xhat, rstd, d, rows]() {
            if (!detail::has_incoming_grad(out)) return;
            const float* go = out.impl()->grad.data();
            const float* pg = gamma.data();
            float* ga = a.requires_grad() ? detail::grad_ptr(a) : nullptr;
            float* gg = gamma.requires_grad() ? detail::grad_ptr(gamma) : nullptr;
            float* gb = beta.requires_grad() ? detail::grad_ptr(beta) : nullptr;
            for (int64_t r = 0; r < rows; ++r) {
                const float* gy = go + r * d;
                const float* xh = xhat->data() + r * d;
                const float rs = (*rstd)[size_t(r)];
                if (gg || gb) {
                    for (int64_t i = 0; i < d; ++i) {
                        if (gg) gg[i] += gy[i] * xh[i];
                        if (gb) gb[i] += gy[i];
                    }
                }
                if (ga) {
                    double sum_g = 0.0, sum_gx = 0.0;
                    for (int64_t i = 0; i < d; ++i) {
                        const double gt = double(gy[i]) * double(pg[i]);
                        sum_g += gt;
                        sum_gx += gt * double(xh[i]);
                    }
                    const float mg = float(sum_g / double(d));
                    const float mgx = float(sum_gx / double(d));
                    float* gx = ga + r * d;
                    for (int64_t i = 0; i < d; ++i) {
                        const float gt = gy[i] * pg[i];
                        gx[i] += rs * (gt - mg - xh[i] * mgx);
                    }
                }
            }
        });
    }
    return out;
}

// Per-row negative log-likelihood from logits (N, C) and integer targets (N).
// Returns a length-N tensor of NLL in nats.
inline Tensor cross_entropy_logits(const Tensor& logits, const std::vector<int32_t>& targets) {
    if (logits.ndim() != 2) shape_fail("cross_entropy: logits must be (N, C)");
    const int64_t n = logits.dim(0), c = logits.dim(1);
    if (int64_t(targets.size()) != n) shape_fail("cross_entropy: target count mismatch");
    for (int32_t t : targets)
        if (t < 0 || t >= c) throw NumericalError("cross_entropy: target out of range");
    const bool track = detail::tracked({&logits});
    Tensor out = Tensor::zeros({n});
    const float* pl = logits.data();
    float* po = out.data();
    for (int64_t r = 0; r < n; ++r) {
        const float* x = pl + r * c;
        float mx = x[0];
        for (int64_t i = 1; i < c; ++i) mx = std::max(mx, x[i]);
        double denom = 0.0;
        for (int64_t i = 0; i < c; ++i) denom += std::exp(double(x[i]) - double(mx));
        po[r] = float(double(mx) + std::log(denom) - double(x[targets[size_t(r)]]));
    }
    detail::mark_output(out, track);
    if (track) {
        Tape::active()->record([logits, out, targets, n, c]() {
            if (!detail::has_incoming_grad(out)) return;
            const float* go = out.impl()->grad.data();
            const float* pl = logits.data();
            float* gl = detail::grad_ptr(logits);
            for (int64_t r = 0; r < n; ++r) {
                const float g = go[r];
                if (g == 0.0f) continue;
                const float* x = pl + r * c;
                float mx = x[0];
                for (int64_t i = 1; i < c; ++i) mx = std::max(mx, x[i]);
                double denom = 0.0;
                for (int64_t i = 0; i < c; ++i) denom += std::exp(double(x[i]) - double(mx));
                float* gx = gl + r * c;
                for (int64_t i = 0; i < c; ++i) {
                    const float p = float(std::exp(double(x[i]) - double(mx)) / denom);
                    gx[i] += g * (p - (i == targets[size_t(r)] ? 1.0f : 0.0f));
                }
            }
        });
    }
    return out;
}

// Inverted dropout: scales kept activations by 1/(1-p) at train time.
inline Tensor dropout(const Tensor& a, float p, bool train, Rng& rng) {
    if (!train || p <= 0.0f) return a;
    if (p >= 1.0f) shape_fail("dropout: p must be < 1");
    const bool track = detail::tracked({&a});
    Tensor out = Tensor::zeros(a.shape());
    auto mask = std::make_shared<std::vector<float>>(size_t(a.numel()));
    const float keep = 1.0f - p;
    const float inv = 1.0f / keep;
    const float* pa = a.data();
    float* po = out.data();
    const int64_t n = a.numel();
    for (int64_t i = 0; i < n; ++i) {
        const float m = (rng.uniform_float() < p) ? 0.0f : inv;
        (*mask)[size_t(i)] = m;
        po[i] = pa[i] * m;
    }
    detail::mark_output(out, track);
    if (track) {
        Tape::active()->record([a, out, mask]() {
            if (!detail::has_incoming_grad(out)) return;
            const float* go = out.impl()->grad.data();
            float* ga = detail::grad_ptr(a);
            const int64_t n = out.numel();
            for (int64_t i = 0; i < n; ++i) ga[i] += go[i] * (*mask)[size_t(i)];
        });
    }
    return out;
}

// Running sum along axis 1 of (B, T, C); backward is the suffix sum.
inline Tensor cumsum_time(const Tensor& a) {
    if (a.ndim() != 3) shape_fail("cumsum_time: expected (B, T, C)");
    const int64_t b = a.dim(0), t = a.dim(1), c = a.dim(2);
    const bool track = detail::tracked({&a});
    Tensor out = Tensor::zeros(a.shape());
    const float* pa = a.data();
    float* po = out.data();
    for (int64_t i = 0; i < b; ++i)
        for (int64_t j = 0; j < c; ++j) {
            double acc = 0.0;
            for (int64_t s = 0; s < t; ++s) {
                acc += pa[(i * t + s) * c + j];
                po[(i * t + s) * c + j] = float(acc);
            }
        }
    detail::mark_output(out, track);
    if (track) {
        Tape::active()->record([a, out, b, t, c]() {
            if (!detail::has_incoming_grad(out)) return;
            const float* go = out.impl()->grad.data();
            float* ga = detail::grad_ptr(a);
            for (int64_t i = 0; i < b; ++i)
                for (int64_t j = 0; j < c; ++j) {
                    double acc = 0.0;
                    for (int64_t s = t - 1; s >= 0; --s) {
                        acc += go[(i * t + s) * c + j];
                        ga[(i * t + s) * c + j] += float(acc);
                    }
                }
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// Convenience compositions
// ---------------------------------------------------------------------------

inline Tensor square(const Tensor& a) { return mul(a, a); }

inline Tensor mse(const Tensor& a, const Tensor& b) { return mean(square(sub(a, b))); }

// Backward entry point: seeds d(loss)=1 on the active tape and runs it.
inline void backward(Tensor loss) {
    Tape* t = Tape::active();
    if (!t) throw NumericalError("backward: no active tape");
    t->backward(std::move(loss));
}

inline bool all_finite(const Tensor& t) {
    for (float v : t.values())
        if (!std::isfinite(v)) return false;
    return true;
}

}  // namespace pgen
