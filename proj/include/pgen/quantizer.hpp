#pragma once

// K-way product quantization: each latent vector is cut into K chunks, each
// matched to its own codebook by L2. The forward value passes through the
// straight-through estimator; codebook and commitment losses carry the
// stop-gradient placement of the VQ objective.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pgen/adam.hpp"
#include "pgen/error.hpp"
#include "pgen/rng.hpp"
#include "pgen/tensor.hpp"

namespace pgen {

struct CodebookSet {
    int k = 1;        // number of factors
    int total_c = 0;  // total centroids across factors
    int nz = 0;       // latent dimension
    float beta = 0.25f;
    std::vector<Tensor> books;                      // k tensors of (total_c/k, nz/k)
    std::vector<std::vector<uint64_t>> usage_count; // lifetime selections per code
    std::vector<std::vector<double>> usage_ema;     // decayed per-batch selection counts
    uint64_t events_per_factor = 0;
    double ema_decay = 0.99;

    int codes_per_book() const { return total_c / k; }
    int chunk_dim() const { return nz / k; }

    static CodebookSet init(int k, int total_c, int nz, float beta, Rng& rng) {
        if (k < 1 || total_c < 1 || nz < 1) throw ConfigError("quantizer: K, C, n_z must be positive");
        if (total_c % k != 0) throw ConfigError("quantizer: K must divide C");
        if (nz % k != 0) throw ConfigError("quantizer: K must divide n_z");
        CodebookSet cb;
        cb.k = k;
        cb.total_c = total_c;
        cb.nz = nz;
        cb.beta = beta;
        const float bound = 1.0f / std::sqrt(float(nz / k));
        for (int f = 0; f < k; ++f) {
            cb.books.push_back(
                Tensor::rand_uniform(rng, {int64_t(total_c / k), int64_t(nz / k)}, -bound, bound, true));
            cb.usage_count.emplace_back(size_t(total_c / k), 0);
            cb.usage_ema.emplace_back(size_t(total_c / k), 0.0);
        }
        return cb;
    }

    std::vector<NamedParam> params() {
        std::vector<NamedParam> out;
        for (size_t f = 0; f < books.size(); ++f)
            out.push_back({"quant.book" + std::to_string(f), books[f]});
        return out;
    }
};

struct QuantizationResult {
    Tensor z_q;                   // exact centroid rows (N, nz), untracked
    Tensor z_q_st;                // straight-through value for the decoder
    std::vector<int32_t> indices; // N*K, row-major (time-major, factor-minor)
    Tensor codebook_loss;         // pulls selected centroids toward sg[encoder output]
    Tensor commit_loss;           // pulls encoder output toward sg[centroids], unweighted
};

// Nearest centroid per chunk, L2, ties to the lowest index. Distances are
// accumulated in double so the result matches an exhaustive oracle exactly.
inline void nearest_codes(const float* chunks, int64_t n, int dim, const Tensor& book,
                          int32_t* out_idx) {
    const int64_t codes = book.dim(0);
    const float* cb = book.data();
    for (int64_t i = 0; i < n; ++i) {
        const float* x = chunks + i * dim;
        double best = std::numeric_limits<double>::infinity();
        int32_t best_idx = 0;
        for (int64_t c = 0; c < codes; ++c) {
            const float* e = cb + c * dim;
            double d = 0.0;
            for (int j = 0; j < dim; ++j) {
                const double diff = double(x[j]) - double(e[j]);
                d += diff * diff;
            }
            if (d < best) {
                best = d;
                best_idx = int32_t(c);
            }
        }
        out_idx[i] = best_idx;
    }
}

inline QuantizationResult quantize(CodebookSet& books, const Tensor& z_hat,
                                   bool record_usage = false) {
    if (z_hat.ndim() != 2 || z_hat.dim(1) != books.nz)
        shape_fail("quantize: expected (N, " + std::to_string(books.nz) + "), got " +
                   shape_str(z_hat.shape()));
    for (const auto& b : books.books)
        if (b.numel() == 0) throw ConfigError("quantize: empty codebook");
    const int64_t n = z_hat.dim(0);
    const int dim = books.chunk_dim();

    QuantizationResult res;
    res.indices.resize(size_t(n * books.k));

    std::vector<Tensor> gathered;  // tracked gathers, gradient flows to codebooks
    gathered.reserve(size_t(books.k));
    for (int f = 0; f < books.k; ++f) {
        Tensor chunk = slice(z_hat, 1, int64_t(f) * dim, dim);
        std::vector<int32_t> idx(static_cast<size_t>(n));
        nearest_codes(chunk.data(), n, dim, books.books[size_t(f)], idx.data());
        for (int64_t i = 0; i < n; ++i) res.indices[size_t(i * books.k + f)] = idx[size_t(i)];
        gathered.push_back(embedding(books.books[size_t(f)], idx));
        if (record_usage) {
            auto& count = books.usage_count[size_t(f)];
            std::vector<uint64_t> batch_counts(count.size(), 0);
            for (int32_t id : idx) {
                count[size_t(id)]++;
                batch_counts[size_t(id)]++;
            }
            auto& ema = books.usage_ema[size_t(f)];
            for (size_t c = 0; c < ema.size(); ++c)
                ema[c] = books.ema_decay * ema[c] + (1.0 - books.ema_decay) * double(batch_counts[c]);
        }
    }
    if (record_usage) books.events_per_factor += uint64_t(n);

    Tensor z_q_tracked = concat(gathered, 1);  // (N, nz)
    res.z_q = detach(z_q_tracked);             // exact centroid values
    res.z_q_st = add(z_hat, detach(sub(res.z_q, z_hat)));
    res.codebook_loss = mse(z_q_tracked, detach(z_hat));
    res.commit_loss = mse(z_hat, res.z_q);
    return res;
}

// Index grid -> exact centroid rows (N, nz); used when decoding sampled
// index sequences. Tracks gradients only if the codebooks require them.
inline Tensor dequantize(const CodebookSet& books, const std::vector<int32_t>& indices, int64_t n) {
    if (int64_t(indices.size()) != n * books.k) shape_fail("dequantize: index count mismatch");
    std::vector<Tensor> gathered;
    for (int f = 0; f < books.k; ++f) {
        std::vector<int32_t> idx(static_cast<size_t>(n));
        for (int64_t i = 0; i < n; ++i) {
            const int32_t id = indices[size_t(i * books.k + f)];
            if (id < 0 || id >= books.codes_per_book())
                throw NumericalError("dequantize: index out of codebook range");
            idx[size_t(i)] = id;
        }
        gathered.push_back(embedding(books.books[size_t(f)], idx));
    }
    return concat(gathered, 1);
}

// Latent-grid capacity in bits: T_d * K * log2(C/K) under the total-centroid
// reading of C.
inline double capacity_bits(int64_t t_d, int k, int total_c) {
    if (k < 1 || total_c % k != 0) throw ConfigError("capacity_bits: K must divide C");
    return double(t_d) * double(k) * std::log2(double(total_c / k));
}

struct DeadCodeReport {
    int reset_count = 0;
    std::vector<std::pair<int, int>> reset_codes;  // (factor, code)
};

// Re-seed centroids whose decayed usage rate falls below `threshold` uses per
// 10k events with random encoder outputs from the current batch.
inline DeadCodeReport reinit_dead_codes(CodebookSet& books, const Tensor& batch_latents,
                                        Rng& rng, double threshold = 1.0) {
    if (batch_latents.ndim() != 2 || batch_latents.dim(1) != books.nz)
        shape_fail("reinit_dead_codes: batch latents must be (N, nz)");
    const int64_t n = batch_latents.dim(0);
    const int dim = books.chunk_dim();
    DeadCodeReport report;
    for (int f = 0; f < books.k; ++f) {
        auto& ema = books.usage_ema[size_t(f)];
        double total = 0.0;
        for (double e : ema) total += e;
        if (total <= 0.0) continue;
        const double cutoff = threshold * total / 10000.0;
        for (size_t c = 0; c < ema.size(); ++c) {
            if (ema[c] >= cutoff) continue;
            const int64_t pick = int64_t(rng.uniform_int(uint64_t(n)));
            const float* src = batch_latents.data() + pick * books.nz + int64_t(f) * dim;
            float* dst = books.books[size_t(f)].data() + int64_t(c) * dim;
            for (int j = 0; j < dim; ++j) dst[j] = src[j];
            ema[c] = total / double(ema.size());  // neutral usage, avoids instant re-death
            report.reset_count++;
            report.reset_codes.emplace_back(f, int(c));
        }
    }
    return report;
}

struct StraightThroughReport {
    double max_abs_dev = 0.0;  // deviation from identity pass-through
    bool ok(double tol = 1e-6) const { return max_abs_dev < tol; }
};

// Verifies that the gradient received by z_hat from a loss on the
// straight-through output equals the gradient assigned to z_q itself.
inline StraightThroughReport straight_through_report(CodebookSet& books, const Tensor& z_hat_values) {
    StraightThroughReport rep;
    Tensor z_hat = detach(z_hat_values).set_requires_grad(true);
    {
        Tape tape;
        auto q = quantize(books, z_hat);
        backward(sum(q.z_q_st));
    }
    for (float g : z_hat.grad_view())
        rep.max_abs_dev = std::max(rep.max_abs_dev, std::abs(double(g) - 1.0));
    return rep;
}

}  // namespace pgen
