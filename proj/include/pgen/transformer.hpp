#pragma once

// Pre-LN transformer blocks shared by the motion codec and the next-index
// model. Multi-head attention with an optional additive -inf future mask.

#include <cmath>
#include <string>
#include <vector>

#include "pgen/adam.hpp"
#include "pgen/rng.hpp"
#include "pgen/tensor.hpp"

namespace pgen {

struct TrainCtx {
    bool train = false;
    float dropout = 0.0f;
    Rng* rng = nullptr;

    Tensor drop(const Tensor& x) const {
        if (!train || dropout <= 0.0f || rng == nullptr) return x;
        return pgen::dropout(x, dropout, true, *rng);
    }
};

struct Linear {
    Tensor w;  // (in, out)
    Tensor b;  // (out)

    static Linear init(Rng& rng, int64_t in, int64_t out) {
        Linear l;
        l.w = Tensor::randn(rng, {in, out}, 1.0f / std::sqrt(float(in)), true);
        l.b = Tensor::zeros({out}, true);
        return l;
    }

    // Zero weights: used for output heads so an untrained model emits exactly
    // uniform logits.
    static Linear zeros(int64_t in, int64_t out) {
        Linear l;
        l.w = Tensor::zeros({in, out}, true);
        l.b = Tensor::zeros({out}, true);
        return l;
    }

    Tensor forward(const Tensor& x) const { return add(matmul(x, w), b); }

    void collect(const std::string& prefix, std::vector<NamedParam>& out) {
        out.push_back({prefix + ".w", w});
        out.push_back({prefix + ".b", b});
    }
};

struct LayerNormParams {
    Tensor gamma, beta;

    static LayerNormParams init(int64_t dim) {
        LayerNormParams ln;
        ln.gamma = Tensor::full({dim}, 1.0f);
        ln.gamma.set_requires_grad(true);
        ln.beta = Tensor::zeros({dim}, true);
        return ln;
    }

    Tensor forward(const Tensor& x) const { return layer_norm(x, gamma, beta); }

    void collect(const std::string& prefix, std::vector<NamedParam>& out) {
        out.push_back({prefix + ".g", gamma});
        out.push_back({prefix + ".b", beta});
    }
};

// Additive mask (t, t): 0 on or below the diagonal, -inf strictly above
// (key position j in the future of query position i).
inline Tensor causal_mask(int64_t t) {
    Tensor m = Tensor::zeros({t, t});
    const float inf = std::numeric_limits<float>::infinity();
    for (int64_t i = 0; i < t; ++i)
        for (int64_t j = i + 1; j < t; ++j) m.data()[i * t + j] = -inf;
    return m;
}

// Scaled dot-product attention over explicit Q, K, V of shape (..., T, d).
inline Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v, bool causal,
                        const TrainCtx& ctx = {}) {
    if (q.dim(-1) != k.dim(-1)) shape_fail("attention: q/k head dims differ");
    const int64_t t = q.dim(-2);
    Tensor scores = scale(matmul(q, transpose2d(k)), 1.0f / std::sqrt(float(q.dim(-1))));
    if (causal) scores = add(scores, causal_mask(t));
    Tensor att = softmax_lastdim(scores);
    att = ctx.drop(att);
    return matmul(att, v);
}

struct MultiHeadAttention {
    int heads = 4;
    int64_t dim = 64;
    Linear qkv, proj;

    static MultiHeadAttention init(Rng& rng, int64_t dim, int heads) {
        if (dim % heads != 0) throw ConfigError("attention: heads must divide embed dim");
        MultiHeadAttention a;
        a.heads = heads;
        a.dim = dim;
        a.qkv = Linear::init(rng, dim, 3 * dim);
        a.proj = Linear::init(rng, dim, dim);
        return a;
    }

    // x: (B, T, d) -> (B, T, d)
    Tensor forward(const Tensor& x, bool causal, const TrainCtx& ctx) const {
        const int64_t b = x.dim(0), t = x.dim(1);
        const int64_t hd = dim / heads;
        Tensor qkv_out = qkv.forward(x);  // (B, T, 3d)
        auto split_heads = [&](int64_t off) {
            Tensor part = slice(qkv_out, 2, off, dim);
            return transpose(reshape(part, {b, t, heads, hd}), {0, 2, 1, 3});  // (B,H,T,hd)
        };
        Tensor q = split_heads(0), k = split_heads(dim), v = split_heads(2 * dim);
        Tensor att = attention(q, k, v, causal, ctx);                      // (B,H,T,hd)
        Tensor merged = reshape(transpose(att, {0, 2, 1, 3}), {b, t, dim});
        return ctx.drop(proj.forward(merged));
    }

    void collect(const std::string& prefix, std::vector<NamedParam>& out) {
        qkv.collect(prefix + ".qkv", out);
        proj.collect(prefix + ".proj", out);
    }
};

struct TransformerLayer {
    MultiHeadAttention attn;
    LayerNormParams ln1, ln2;
    Linear fc1, fc2;

    static TransformerLayer init(Rng& rng, int64_t dim, int heads, int64_t ff) {
        TransformerLayer l;
        l.attn = MultiHeadAttention::init(rng, dim, heads);
        l.ln1 = LayerNormParams::init(dim);
        l.ln2 = LayerNormParams::init(dim);
        l.fc1 = Linear::init(rng, dim, ff);
        l.fc2 = Linear::init(rng, ff, dim);
        return l;
    }

    Tensor forward(const Tensor& x, bool causal, const TrainCtx& ctx) const {
        Tensor h = add(x, attn.forward(ln1.forward(x), causal, ctx));
        Tensor m = ctx.drop(fc2.forward(gelu(fc1.forward(ln2.forward(h)))));
        return add(h, m);
    }

    void collect(const std::string& prefix, std::vector<NamedParam>& out) {
        attn.collect(prefix + ".attn", out);
        ln1.collect(prefix + ".ln1", out);
        ln2.collect(prefix + ".ln2", out);
        fc1.collect(prefix + ".fc1", out);
        fc2.collect(prefix + ".fc2", out);
    }
};

struct TransformerStack {
    std::vector<TransformerLayer> layers;

    static TransformerStack init(Rng& rng, int n_layers, int64_t dim, int heads, int64_t ff) {
        TransformerStack s;
        for (int i = 0; i < n_layers; ++i) s.layers.push_back(TransformerLayer::init(rng, dim, heads, ff));
        return s;
    }

    Tensor forward(Tensor x, bool causal, const TrainCtx& ctx) const {
        for (const auto& l : layers) x = l.forward(x, causal, ctx);
        return x;
    }

    void collect(const std::string& prefix, std::vector<NamedParam>& out) {
        for (size_t i = 0; i < layers.size(); ++i)
            layers[i].collect(prefix + ".l" + std::to_string(i), out);
    }
};

// Temporal halving by mean over adjacent pairs: (B, T, d) -> (B, T/2, d).
inline Tensor pool_halve(const Tensor& x) {
    const int64_t b = x.dim(0), t = x.dim(1), d = x.dim(2);
    if (t % 2 != 0) shape_fail("pool_halve: odd sequence length");
    return mean_axis(reshape(x, {b, t / 2, 2, d}), 2);
}

// Nearest-repeat temporal doubling: (B, T, d) -> (B, 2T, d).
inline Tensor repeat_double(const Tensor& x) {
    const int64_t b = x.dim(0), t = x.dim(1), d = x.dim(2);
    return reshape(concat({x, x}, 2), {b, 2 * t, d});
}

}  // namespace pgen
