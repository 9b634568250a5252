#pragma once

// Motion codec: a causal transformer encoder that downsamples time by r into
// n_z-dim latents, and a mirrored decoder that upsamples back to full frame
// rate. Trained end-to-end with the product quantizer.
//
// Alignment contract for lengths not divisible by r: the encoder front-pads
// (repeating the first frame) so latent t never sees frames beyond
// floor(t*T/T_d); the decoder emits T_d*r frames and keeps the first T so
// output frame f depends only on latents up to ceil(f/r).

#include <cmath>
#include <string>
#include <vector>

#include "pgen/config.hpp"
#include "pgen/motion.hpp"
#include "pgen/quantizer.hpp"
#include "pgen/serialize.hpp"
#include "pgen/transformer.hpp"

namespace pgen {

struct CodecConfig {
    int r = 2;  // temporal downsample T/T_d, power of two
    int nz = 64;
    int embed = 64;
    int blocks = 2;
    int layers_per_block = 1;
    int heads = 4;
    int ff = 128;
    float dropout = 0.1f;
    bool causal_encoder = true;
    bool causal_decoder = false;
    bool root_delta = true;
    int max_t = 256;
    int pose_dim = 24;

    static CodecConfig from_config(const Config& cfg, int pose_dim) {
        CodecConfig c;
        c.r = int(cfg.get_int("codec.r"));
        c.nz = int(cfg.get_int("codec.nz"));
        c.embed = int(cfg.get_int("codec.embed"));
        c.blocks = int(cfg.get_int("codec.blocks"));
        c.layers_per_block = int(cfg.get_int("codec.layers_per_block"));
        c.heads = int(cfg.get_int("codec.heads"));
        c.ff = int(cfg.get_int("codec.ff"));
        c.dropout = float(cfg.get_float("codec.dropout"));
        c.causal_encoder = cfg.get_bool("codec.causal_encoder");
        c.causal_decoder = cfg.get_bool("codec.causal_decoder");
        c.root_delta = cfg.get_bool("codec.root_delta");
        c.max_t = int(cfg.get_int("codec.max_t"));
        c.pose_dim = pose_dim;
        c.validate();
        return c;
    }

    int stages() const { return int(std::round(std::log2(double(r)))); }

    void validate() const {
        if (r < 1 || (r & (r - 1)) != 0) throw ConfigError("codec: r must be a power of two");
        if (r > 1 && blocks < stages())
            throw ConfigError("codec: need at least log2(r) blocks for the downsampling stages");
        if (embed % heads != 0) throw ConfigError("codec: heads must divide embed");
    }

    int64_t latent_steps(int64_t frames) const { return (frames + r - 1) / r; }
};

struct DecodedMotion {
    Tensor theta;       // (B, T, P)
    Tensor root;        // (B, T, 3) absolute positions
    Tensor root_local;  // (B, T, 3) raw head output (deltas in root_delta mode)
};

class Codec {
public:
    Codec() = default;

    static Codec init(const CodecConfig& cfg, Rng& rng) {
        Codec c;
        c.cfg_ = cfg;
        const int64_t d = cfg.embed;
        c.enc_in_ = Linear::init(rng, cfg.pose_dim + 3, d);
        c.enc_out_ = Linear::init(rng, d, cfg.nz);
        c.dec_in_ = Linear::init(rng, cfg.nz, d);
        c.dec_theta_ = Linear::init(rng, d, cfg.pose_dim);
        c.dec_root_ = Linear::init(rng, d, 3);
        int64_t len = cfg.max_t;
        for (int b = 0; b < cfg.blocks; ++b) {
            c.enc_blocks_.push_back(
                TransformerStack::init(rng, cfg.layers_per_block, d, cfg.heads, cfg.ff));
            c.enc_pos_.push_back(Tensor::randn(rng, {len, d}, 0.02f, true));
            if (b < cfg.stages()) len = (len + 1) / 2;
        }
        for (int b = 0; b < cfg.blocks; ++b) {
            c.dec_blocks_.push_back(
                TransformerStack::init(rng, cfg.layers_per_block, d, cfg.heads, cfg.ff));
        }
        // Decoder positional tables, one per stage resolution (finest last).
        len = cfg.max_t;
        std::vector<int64_t> lens;
        for (int b = 0; b < cfg.blocks; ++b) {
            lens.push_back(len);
            if (b < cfg.stages()) len = (len + 1) / 2;
        }
        for (int b = cfg.blocks - 1; b >= 0; --b)
            c.dec_pos_.push_back(Tensor::randn(rng, {lens[size_t(b)], d}, 0.02f, true));
        return c;
    }

    const CodecConfig& config() const { return cfg_; }

    // theta (B, T, P), root_feat (B, T, 3): per-frame input features, already
    // delta-encoded when root_delta is on. T must be a multiple of r
    // (callers front-pad via pad_front()).
    Tensor encode(const Tensor& theta, const Tensor& root_feat, const TrainCtx& ctx) const {
        const int64_t t = theta.dim(1);
        if (t % cfg_.r != 0) shape_fail("encode: frame count must be a multiple of r after padding");
        Tensor x = enc_in_.forward(concat({theta, root_feat}, 2));
        for (int b = 0; b < cfg_.blocks; ++b) {
            x = add(x, slice(enc_pos_[size_t(b)], 0, 0, x.dim(1)));
            x = enc_blocks_[size_t(b)].forward(x, cfg_.causal_encoder, ctx);
            if (b < cfg_.stages()) x = pool_halve(x);
        }
        return enc_out_.forward(x);  // (B, T_d, nz)
    }

    // z (B, T_d, nz) -> frames trimmed to `frames`.
    DecodedMotion decode(const Tensor& z, int64_t frames, const TrainCtx& ctx) const {
        if (frames < 1) throw ConfigError("decode: target length must be >= 1");
        if (z.dim(1) != cfg_.latent_steps(frames))
            shape_fail("decode: latent steps " + std::to_string(z.dim(1)) + " do not cover " +
                       std::to_string(frames) + " frames at r=" + std::to_string(cfg_.r));
        Tensor x = dec_in_.forward(z);
        int upsamples_left = cfg_.stages();
        for (int d = 0; d < cfg_.blocks; ++d) {
            const int b = cfg_.blocks - 1 - d;  // mirror the encoder order
            if (b < cfg_.stages()) {
                x = repeat_double(x);
                --upsamples_left;
            }
            x = add(x, slice(dec_pos_[size_t(d)], 0, 0, x.dim(1)));
            x = dec_blocks_[size_t(d)].forward(x, cfg_.causal_decoder, ctx);
        }
        (void)upsamples_left;
        x = slice(x, 1, 0, frames);  // keep the first T of T_d*r
        DecodedMotion out;
        out.theta = dec_theta_.forward(x);
        out.root_local = dec_root_.forward(x);
        out.root = cfg_.root_delta ? cumsum_time(out.root_local) : out.root_local;
        return out;
    }

    std::vector<NamedParam> params() {
        std::vector<NamedParam> out;
        enc_in_.collect("enc.in", out);
        enc_out_.collect("enc.out", out);
        for (size_t b = 0; b < enc_blocks_.size(); ++b) {
            enc_blocks_[b].collect("enc.b" + std::to_string(b), out);
            out.push_back({"enc.pos" + std::to_string(b), enc_pos_[b]});
        }
        dec_in_.collect("dec.in", out);
        for (size_t d = 0; d < dec_blocks_.size(); ++d) {
            dec_blocks_[d].collect("dec.b" + std::to_string(d), out);
            out.push_back({"dec.pos" + std::to_string(d), dec_pos_[d]});
        }
        dec_theta_.collect("dec.theta", out);
        dec_root_.collect("dec.root", out);
        return out;
    }

private:
    CodecConfig cfg_;
    Linear enc_in_, enc_out_, dec_in_, dec_theta_, dec_root_;
    std::vector<TransformerStack> enc_blocks_, dec_blocks_;
    std::vector<Tensor> enc_pos_, dec_pos_;
};

// ---------------------------------------------------------------------------
// Batch assembly
// ---------------------------------------------------------------------------

// Per-frame input features for one sequence: theta rows plus the root motion
// channel rebased to the first frame (frame deltas or start-relative
// positions). The codec is translation-invariant; absolute placement is the
// consumer's concern.
inline void sequence_features(const MotionSequence& seq, bool root_delta,
                              std::vector<float>& theta_out, std::vector<float>& root_out) {
    const int64_t t = seq.length();
    theta_out = seq.theta;
    root_out.resize(size_t(t) * 3);
    for (int64_t f = 0; f < t; ++f)
        for (int d = 0; d < 3; ++d) {
            const float cur = seq.delta[size_t(f * 3 + d)];
            if (root_delta) {
                root_out[size_t(f * 3 + d)] =
                    f > 0 ? cur - seq.delta[size_t((f - 1) * 3 + d)] : 0.0f;
            } else {
                root_out[size_t(f * 3 + d)] = cur - seq.delta[size_t(d)];
            }
        }
}

// Front-pad to a multiple of r by repeating the first frame; keeps latent t
// from seeing frames beyond floor(t*T/T_d).
inline int64_t pad_front_count(int64_t frames, int r) { return (frames + r - 1) / r * r - frames; }

inline Tensor pad_front(const Tensor& x, int64_t pad) {
    if (pad == 0) return x;
    Tensor first = slice(x, 1, 0, 1);
    std::vector<Tensor> parts;
    for (int64_t i = 0; i < pad; ++i) parts.push_back(first);
    parts.push_back(x);
    return concat(parts, 1);
}

// Full encode path for one raw sequence: features, padding, latents.
inline Tensor encode_sequence_latents(const Codec& codec, const MotionSequence& seq,
                                      const TrainCtx& ctx = {}) {
    std::vector<float> th, rt;
    sequence_features(seq, codec.config().root_delta, th, rt);
    const int64_t t = seq.length();
    Tensor theta = Tensor::from(th, {1, t, seq.pose_dim});
    Tensor root = Tensor::from(rt, {1, t, 3});
    const int64_t pad = pad_front_count(t, codec.config().r);
    return codec.encode(pad_front(theta, pad), pad_front(root, pad), ctx);  // (1, T_d, nz)
}

// Encode + quantize one sequence into its index grid (T_d x K, factor-minor).
inline std::vector<int32_t> encode_sequence_indices(const Codec& codec, CodebookSet& books,
                                                    const MotionSequence& seq) {
    Tensor z = encode_sequence_latents(codec, seq);
    const int64_t td = z.dim(1);
    auto q = quantize(books, reshape(z, {td, codec.config().nz}));
    return q.indices;
}

// Decode an index grid into a motion sequence of `frames` frames.
inline MotionSequence decode_indices(const Codec& codec, const CodebookSet& books,
                                     const std::vector<int32_t>& indices, int64_t frames,
                                     int32_t action, float fps) {
    const int64_t td = int64_t(indices.size()) / books.k;
    Tensor z = dequantize(books, indices, td);
    auto dec = codec.decode(reshape(z, {1, td, codec.config().nz}), frames, {});
    MotionSequence out;
    out.action = action;
    out.pose_dim = codec.config().pose_dim;
    out.fps = fps;
    out.theta.resize(size_t(frames) * size_t(out.pose_dim));
    out.delta.resize(size_t(frames) * 3);
    for (size_t i = 0; i < out.theta.size(); ++i) out.theta[i] = wrap_angle(dec.theta.values()[i]);
    std::copy(dec.root.values().begin(), dec.root.values().end(), out.delta.begin());
    return out;
}

// Codec round trip used by reconstruction metrics. The decoded root track is
// start-relative; re-anchor it at the reference's first-frame position.
inline MotionSequence reconstruct(const Codec& codec, CodebookSet& books,
                                  const MotionSequence& seq) {
    auto indices = encode_sequence_indices(codec, books, seq);
    MotionSequence rec = decode_indices(codec, books, indices, seq.length(), seq.action, seq.fps);
    for (int64_t f = 0; f < rec.length(); ++f)
        for (int d = 0; d < 3; ++d) rec.delta[size_t(f * 3 + d)] += seq.delta[size_t(d)];
    return rec;
}

}  // namespace pgen
