#pragma once

// Autoregressive next-index model over quantized latent grids. One stream
// position per latent step emits all K factor indices; the ar head refines
// factor k on the embedded values of factors < k (teacher-forced at train
// time, sampled values at generation time).

#include <cmath>
#include <string>
#include <vector>

#include "pgen/config.hpp"
#include "pgen/error.hpp"
#include "pgen/transformer.hpp"

namespace pgen {

// One encoded motion: a T_d x K index grid plus its conditioning.
struct IndexSequence {
    std::vector<int32_t> indices;  // T_d * K, time-major factor-minor
    int32_t action = 0;
    int64_t frames = 0;            // original motion length T (length conditioning)
    int64_t obs_steps = 0;         // observed-prefix latent steps, 0 when free

    int64_t steps(int k) const { return int64_t(indices.size()) / k; }
};

enum class EmbeddingStrategy { Sum, Concat, ExtraToken };
enum class HeadType { Linear, Mlp, Ar };

inline EmbeddingStrategy parse_embedding(const std::string& s) {
    if (s == "sum") return EmbeddingStrategy::Sum;
    if (s == "concat") return EmbeddingStrategy::Concat;
    if (s == "extra_token_t0") return EmbeddingStrategy::ExtraToken;
    throw ConfigError("gpt: unknown embedding strategy '" + s + "'");
}

inline HeadType parse_head(const std::string& s) {
    if (s == "linear") return HeadType::Linear;
    if (s == "mlp") return HeadType::Mlp;
    if (s == "ar") return HeadType::Ar;
    throw ConfigError("gpt: unknown head type '" + s + "'");
}

struct GptConfig {
    int layers = 2;
    int heads = 4;
    int embed = 64;
    int ff = 128;
    float dropout = 0.2f;
    float cond_drop = 0.1f;
    float temperature = 1.0f;
    EmbeddingStrategy embedding = EmbeddingStrategy::Concat;
    HeadType head = HeadType::Ar;
    int context = 64;   // latent steps
    int k = 2;          // quantization factors
    int codes = 128;    // per-factor codebook size
    int actions = 6;    // real action classes; id==actions is the null token
    int max_frames = 256;

    static GptConfig from_config(const Config& cfg, int k, int codes, int actions, int max_frames) {
        GptConfig g;
        g.layers = int(cfg.get_int("gpt.layers"));
        g.heads = int(cfg.get_int("gpt.heads"));
        g.embed = int(cfg.get_int("gpt.embed"));
        g.ff = int(cfg.get_int("gpt.ff"));
        g.dropout = float(cfg.get_float("gpt.dropout"));
        g.cond_drop = float(cfg.get_float("gpt.cond_drop"));
        g.temperature = float(cfg.get_float("gpt.temperature"));
        g.embedding = parse_embedding(cfg.get("gpt.embedding"));
        g.head = parse_head(cfg.get("gpt.head"));
        g.context = int(cfg.get_int("gpt.context"));
        g.k = k;
        g.codes = codes;
        g.actions = actions;
        g.max_frames = max_frames;
        if (g.embed % g.heads != 0) throw ConfigError("gpt: heads must divide embed");
        return g;
    }

    int32_t null_action() const { return int32_t(actions); }
};

// Teacher-forced batch: grids padded to the longest T_d with per-sample valid
// step counts.
struct GptBatch {
    std::vector<int32_t> indices;   // B * t_max * K, padded with 0
    std::vector<int32_t> steps;     // B valid latent steps
    std::vector<int32_t> actions;   // B (may contain the null token)
    std::vector<int32_t> frames;    // B original motion lengths
    int64_t b = 0;
    int64_t t_max = 0;

    static GptBatch from_sequences(const std::vector<const IndexSequence*>& seqs, int k) {
        GptBatch out;
        out.b = int64_t(seqs.size());
        for (const auto* s : seqs) out.t_max = std::max(out.t_max, s->steps(k));
        out.indices.assign(size_t(out.b * out.t_max * k), 0);
        for (int64_t i = 0; i < out.b; ++i) {
            const auto* s = seqs[size_t(i)];
            const int64_t td = s->steps(k);
            std::copy(s->indices.begin(), s->indices.end(),
                      out.indices.begin() + i * out.t_max * k);
            out.steps.push_back(int32_t(td));
            out.actions.push_back(s->action);
            out.frames.push_back(int32_t(s->frames));
        }
        return out;
    }
};

class Gpt {
public:
    Gpt() = default;

    static Gpt init(const GptConfig& cfg, Rng& rng) {
        Gpt g;
        g.cfg_ = cfg;
        const int64_t d = cfg.embed;
        for (int f = 0; f < cfg.k; ++f)
            g.idx_emb_.push_back(Tensor::randn(rng, {cfg.codes, d}, 0.02f, true));
        g.bos_ = Tensor::randn(rng, {1, d}, 0.02f, true);
        g.pos_ = Tensor::randn(rng, {int64_t(cfg.context) + 1, d}, 0.02f, true);
        g.act_emb_ = Tensor::randn(rng, {int64_t(cfg.actions) + 1, d}, 0.02f, true);
        g.len_emb_ = Tensor::randn(rng, {int64_t(cfg.max_frames) + 1, d}, 0.02f, true);
        if (cfg.embedding == EmbeddingStrategy::Concat) g.cat_proj_ = Linear::init(rng, 4 * d, d);
        g.trunk_ = TransformerStack::init(rng, cfg.layers, d, cfg.heads, cfg.ff);
        g.ln_f_ = LayerNormParams::init(d);
        // Heads: final projections start at zero so the untrained model is
        // exactly uniform over indices.
        for (int f = 0; f < cfg.k; ++f) {
            if (cfg.head == HeadType::Linear) {
                g.head_out_.push_back(Linear::zeros(d, cfg.codes));
            } else {
                g.head_hidden_.push_back(Linear::init(rng, d, d));
                g.head_out_.push_back(Linear::zeros(d, cfg.codes));
            }
        }
        if (cfg.head == HeadType::Ar)
            for (int f = 1; f < cfg.k; ++f)
                g.ar_refine_.push_back(Linear::zeros(int64_t(f) * (cfg.codes + d), cfg.codes));
        return g;
    }

    const GptConfig& config() const { return cfg_; }

    // Teacher-forced logits for every latent step and factor.
    // Returns K tensors of shape (B * t_max, codes).
    std::vector<Tensor> forward_logits(const GptBatch& batch, const TrainCtx& ctx) const {
        Tensor h = trunk_hidden(batch, ctx);  // (B, t_max, d)
        Tensor flat = reshape(h, {batch.b * batch.t_max, cfg_.embed});
        return head_logits(flat, [&](int factor) {
            // Teacher-forced values of earlier factors at each step.
            std::vector<int32_t> v(static_cast<size_t>(batch.b * batch.t_max));
            for (int64_t i = 0; i < batch.b * batch.t_max; ++i)
                v[size_t(i)] = batch.indices[size_t(i * cfg_.k + factor)];
            return v;
        });
    }

    // Mean NLL (nats) over valid index slots; also exposes per-slot counts.
    struct NllStats {
        double total_nats = 0.0;
        int64_t slots = 0;
        std::vector<double> per_seq_nats;  // aligned with the batch
        double bits_total() const { return total_nats / std::log(2.0); }
        double bits_per_dim() const { return slots ? total_nats / double(slots) / std::log(2.0) : 0.0; }
    };

    Tensor nll_loss(const GptBatch& batch, const TrainCtx& ctx, NllStats* stats = nullptr) const {
        auto logits = forward_logits(batch, ctx);
        const int64_t rows = batch.b * batch.t_max;
        Tensor mask = Tensor::zeros({rows});
        int64_t valid = 0;
        for (int64_t i = 0; i < batch.b; ++i)
            for (int64_t t = 0; t < batch.steps[size_t(i)]; ++t) {
                mask.data()[i * batch.t_max + t] = 1.0f;
                ++valid;
            }
        if (stats) {
            stats->per_seq_nats.assign(size_t(batch.b), 0.0);
            stats->slots = valid * cfg_.k;
        }
        Tensor total = Tensor::scalar(0.0f);
        for (int f = 0; f < cfg_.k; ++f) {
            std::vector<int32_t> targets(static_cast<size_t>(rows));
            for (int64_t i = 0; i < rows; ++i)
                targets[size_t(i)] = batch.indices[size_t(i * cfg_.k + f)];
            Tensor nll = cross_entropy_logits(logits[size_t(f)], targets);  // (rows)
            if (stats) {
                for (int64_t i = 0; i < batch.b; ++i)
                    for (int64_t t = 0; t < batch.steps[size_t(i)]; ++t)
                        stats->per_seq_nats[size_t(i)] += double(nll.values()[size_t(i * batch.t_max + t)]);
            }
            total = add(total, sum(mul(nll, mask)));
        }
        if (stats) {
            stats->total_nats = 0.0;
            for (double v : stats->per_seq_nats) stats->total_nats += v;
        }
        return scale(total, 1.0f / float(std::max<int64_t>(1, valid * cfg_.k)));
    }

    // Top-1 next-index accuracy averaged over factors (teacher-forced).
    double accuracy(const GptBatch& batch) const {
        auto logits = forward_logits(batch, {});
        int64_t hits = 0, total = 0;
        for (int f = 0; f < cfg_.k; ++f) {
            const Tensor& lg = logits[size_t(f)];
            for (int64_t i = 0; i < batch.b; ++i)
                for (int64_t t = 0; t < batch.steps[size_t(i)]; ++t) {
                    const float* row = lg.data() + (i * batch.t_max + t) * cfg_.codes;
                    int32_t best = 0;
                    for (int c = 1; c < cfg_.codes; ++c)
                        if (row[c] > row[best]) best = c;
                    hits += best == batch.indices[size_t((i * batch.t_max + t) * cfg_.k + f)];
                    ++total;
                }
        }
        return total ? double(hits) / double(total) : 0.0;
    }

    // Sample an index grid of t_d steps. Prefix rows (seq.obs_steps) are
    // copied verbatim; remaining steps draw factor-by-factor at temperature
    // tau (tau == 0 is argmax). Dropout stays off.
    std::vector<int32_t> sample(int32_t action, int64_t frames, int64_t t_d, float tau, Rng& rng,
                                const std::vector<int32_t>& prefix = {}) const {
        if (tau < 0.0f) throw ConfigError("sample: temperature must be >= 0");
        if (t_d < 1) throw ConfigError("sample: need at least one latent step");
        if (t_d > cfg_.context)
            throw ConfigError("sample: " + std::to_string(t_d) + " latent steps exceed the trained context of " +
                              std::to_string(cfg_.context));
        const int64_t prefix_steps = int64_t(prefix.size()) / cfg_.k;
        if (prefix_steps > t_d) throw ConfigError("sample: prefix longer than the requested grid");
        std::vector<int32_t> grid(size_t(t_d * cfg_.k), 0);
        std::copy(prefix.begin(), prefix.end(), grid.begin());

        IndexSequence work;
        work.action = action;
        work.frames = frames;
        for (int64_t t = prefix_steps; t < t_d; ++t) {
            work.indices.assign(grid.begin(), grid.begin() + (t + 1) * cfg_.k);
            GptBatch batch = GptBatch::from_sequences({&work}, cfg_.k);
            Tensor h = trunk_hidden(batch, {});
            Tensor h_t = slice(reshape(h, {t + 1, cfg_.embed}), 0, t, 1);  // step t hidden
            std::vector<int32_t> drawn;
            auto logits = head_logits_sequential(h_t, drawn, [&](int factor, const Tensor& lg) {
                const int32_t pick = draw_index(lg.data(), cfg_.codes, tau, rng);
                grid[size_t(t * cfg_.k + factor)] = pick;
                return pick;
            });
            (void)logits;
        }
        return grid;
    }

    // Log2-probabilities the sampler assigns along a forced index path; used
    // by the teacher-forcing/sampling equivalence checks.
    double forced_path_bits(const IndexSequence& seq) const {
        GptBatch batch = GptBatch::from_sequences({&seq}, cfg_.k);
        NllStats stats;
        nll_loss(batch, {}, &stats);
        return stats.bits_total();
    }

    std::vector<NamedParam> params() {
        std::vector<NamedParam> out;
        for (size_t f = 0; f < idx_emb_.size(); ++f)
            out.push_back({"gpt.emb.idx" + std::to_string(f), idx_emb_[f]});
        out.push_back({"gpt.emb.bos", bos_});
        out.push_back({"gpt.emb.pos", pos_});
        out.push_back({"gpt.emb.act", act_emb_});
        out.push_back({"gpt.emb.len", len_emb_});
        if (cfg_.embedding == EmbeddingStrategy::Concat) cat_proj_.collect("gpt.emb.cat", out);
        trunk_.collect("gpt.trunk", out);
        ln_f_.collect("gpt.lnf", out);
        for (size_t f = 0; f < head_hidden_.size(); ++f)
            head_hidden_[f].collect("gpt.head.h" + std::to_string(f), out);
        for (size_t f = 0; f < head_out_.size(); ++f)
            head_out_[f].collect("gpt.head.o" + std::to_string(f), out);
        for (size_t f = 0; f < ar_refine_.size(); ++f)
            ar_refine_[f].collect("gpt.head.ar" + std::to_string(f), out);
        return out;
    }

    // Hidden states per latent step (B, t_max, d); causal masking is always on.
    Tensor trunk_hidden(const GptBatch& batch, const TrainCtx& ctx) const {
        if (batch.t_max > cfg_.context)
            throw ConfigError("gpt: sequence of " + std::to_string(batch.t_max) +
                              " latent steps exceeds the context of " + std::to_string(cfg_.context));
        const int64_t b = batch.b, t = batch.t_max, d = cfg_.embed;
        const bool extra = cfg_.embedding == EmbeddingStrategy::ExtraToken;
        const int64_t s = extra ? t + 1 : t;

        // Shifted input-index embeddings: position of step 0 carries BOS.
        Tensor in_emb = Tensor::zeros({b, t, d});
        {
            std::vector<Tensor> rows;
            rows.reserve(size_t(b));
            for (int64_t i = 0; i < b; ++i) {
                std::vector<Tensor> steps = {reshape(bos_, {1, 1, d})};
                if (t > 1) {
                    Tensor summed;
                    for (int f = 0; f < cfg_.k; ++f) {
                        std::vector<int32_t> ids(static_cast<size_t>(t - 1));
                        for (int64_t p = 0; p < t - 1; ++p)
                            ids[size_t(p)] = batch.indices[size_t((i * t + p) * cfg_.k + f)];
                        Tensor e = embedding(idx_emb_[size_t(f)], ids);
                        summed = f == 0 ? e : add(summed, e);
                    }
                    steps.push_back(reshape(summed, {1, t - 1, d}));
                }
                rows.push_back(concat(steps, 1));
            }
            in_emb = concat(rows, 0);
        }

        Tensor act = embedding(act_emb_, batch.actions);  // (B, d)
        std::vector<int32_t> len_ids(static_cast<size_t>(b));
        for (int64_t i = 0; i < b; ++i)
            len_ids[size_t(i)] = int32_t(std::min<int64_t>(batch.frames[size_t(i)], cfg_.max_frames));
        Tensor len = embedding(len_emb_, len_ids);  // (B, d)

        Tensor x;
        switch (cfg_.embedding) {
            case EmbeddingStrategy::Sum: {
                Tensor pos = slice(pos_, 0, 0, t);
                x = add(add(in_emb, pos), add(reshape(act, {b, 1, d}), reshape(len, {b, 1, d})));
                break;
            }
            case EmbeddingStrategy::Concat: {
                Tensor pos = slice(pos_, 0, 0, t);
                Tensor pos_b = add(Tensor::zeros({b, t, d}), pos);  // broadcast to batch
                Tensor act_b = add(Tensor::zeros({b, t, d}), reshape(act, {b, 1, d}));
                Tensor len_b = add(Tensor::zeros({b, t, d}), reshape(len, {b, 1, d}));
                x = cat_proj_.forward(concat({in_emb, pos_b, act_b, len_b}, 2));
                break;
            }
            case EmbeddingStrategy::ExtraToken: {
                // Conditioning token prepended; indices shift right by one.
                Tensor cond = add(add(reshape(act, {b, 1, d}), reshape(len, {b, 1, d})),
                                  slice(pos_, 0, 0, 1));
                Tensor shifted = add(in_emb, slice(pos_, 0, 1, t));
                x = concat({cond, shifted}, 1);  // (B, t+1, d)
                break;
            }
        }
        Tensor h = trunk_.forward(x, /*causal=*/true, ctx);
        h = ln_f_.forward(h);
        if (extra) h = slice(h, 1, 1, t);  // step t reads stream position t+1
        (void)s;
        return h;  // (B, t, d)
    }

private:
    // Factor logits over flattened step rows. `teacher` yields the value of
    // factor f at every row for ar-head conditioning.
    template <class TeacherFn>
    std::vector<Tensor> head_logits(const Tensor& flat, TeacherFn teacher) const {
        std::vector<Tensor> base;
        base.reserve(size_t(cfg_.k));
        for (int f = 0; f < cfg_.k; ++f) base.push_back(base_head(flat, f));
        if (cfg_.head != HeadType::Ar || cfg_.k == 1) return base;
        std::vector<Tensor> out = {base[0]};
        std::vector<Tensor> cond;  // accumulated [logits_j, emb_j(v_j)] blocks
        for (int f = 1; f < cfg_.k; ++f) {
            std::vector<int32_t> v = teacher(f - 1);
            cond.push_back(base[size_t(f - 1)]);
            cond.push_back(embedding(idx_emb_[size_t(f - 1)], v));
            out.push_back(add(base[size_t(f)], ar_refine_[size_t(f - 1)].forward(concat(cond, 1))));
        }
        return out;
    }

    // Sequential flavor for sampling: factor f's refinement sees the values
    // drawn for factors < f at this step. Conditioning uses the base logits,
    // exactly as the teacher-forced path does, so forcing the same values
    // reproduces the same distributions bit-for-bit.
    template <class DrawFn>
    std::vector<Tensor> head_logits_sequential(const Tensor& h_row, std::vector<int32_t>& drawn,
                                               DrawFn draw) const {
        std::vector<Tensor> out;
        std::vector<Tensor> cond;
        for (int f = 0; f < cfg_.k; ++f) {
            Tensor base = base_head(h_row, f);
            Tensor lg = base;
            if (cfg_.head == HeadType::Ar && f > 0) {
                lg = add(base, ar_refine_[size_t(f - 1)].forward(concat(cond, 1)));
            }
            drawn.push_back(draw(f, lg));
            if (cfg_.head == HeadType::Ar && f + 1 < cfg_.k) {
                cond.push_back(base);
                cond.push_back(embedding(idx_emb_[size_t(f)], {drawn[size_t(f)]}));
            }
            out.push_back(lg);
        }
        return out;
    }

    Tensor base_head(const Tensor& rows, int f) const {
        if (cfg_.head == HeadType::Linear) return head_out_[size_t(f)].forward(rows);
        return head_out_[size_t(f)].forward(gelu(head_hidden_[size_t(f)].forward(rows)));
    }

    static int32_t draw_index(const float* logits, int n, float tau, Rng& rng) {
        if (tau == 0.0f) {
            int32_t best = 0;
            for (int c = 1; c < n; ++c)
                if (logits[c] > logits[best]) best = c;
            return best;
        }
        double mx = -std::numeric_limits<double>::infinity();
        for (int c = 0; c < n; ++c) mx = std::max(mx, double(logits[c]) / double(tau));
        double denom = 0.0;
        std::vector<double> ex(static_cast<size_t>(n));
        for (int c = 0; c < n; ++c) {
            ex[size_t(c)] = std::exp(double(logits[c]) / double(tau) - mx);
            denom += ex[size_t(c)];
        }
        const double u = rng.uniform() * denom;
        double acc = 0.0;
        for (int c = 0; c < n; ++c) {
            acc += ex[size_t(c)];
            if (u < acc) return int32_t(c);
        }
        return int32_t(n - 1);
    }

    GptConfig cfg_;
    std::vector<Tensor> idx_emb_;
    Tensor bos_, pos_, act_emb_, len_emb_;
    Linear cat_proj_;
    TransformerStack trunk_;
    LayerNormParams ln_f_;
    std::vector<Linear> head_hidden_, head_out_;
    std::vector<Linear> ar_refine_;
};

}  // namespace pgen
