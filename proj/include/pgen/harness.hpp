#pragma once

// Training orchestration: codec and density-model training loops with
// crop-batched data draws, checkpoint bundles that round-trip every piece of
// training state (weights, Adam moments, usage statistics, RNG), and the
// dataset encode pass feeding the second stage.

#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "pgen/adam.hpp"
#include "pgen/classifier.hpp"
#include "pgen/codec.hpp"
#include "pgen/config.hpp"
#include "pgen/gpt.hpp"
#include "pgen/metrics.hpp"
#include "pgen/motion.hpp"
#include "pgen/quantizer.hpp"
#include "pgen/serialize.hpp"

namespace pgen {

// ---------------------------------------------------------------------------
// Exact float/int <-> tensor packing for auxiliary training state
// ---------------------------------------------------------------------------

namespace detail {

// Doubles and u64 counters ride in checkpoints as pairs of f32 bit patterns
// so resume stays bit-exact.
inline NamedTensor pack_u64(const std::string& name, const std::vector<uint64_t>& vals) {
    NamedTensor t;
    t.name = name;
    t.shape = {int64_t(vals.size()), 2};
    t.data.resize(vals.size() * 2);
    for (size_t i = 0; i < vals.size(); ++i) {
        const uint32_t lo = uint32_t(vals[i] & 0xFFFFFFFFull);
        const uint32_t hi = uint32_t(vals[i] >> 32);
        std::memcpy(&t.data[2 * i], &lo, 4);
        std::memcpy(&t.data[2 * i + 1], &hi, 4);
    }
    return t;
}

inline std::vector<uint64_t> unpack_u64(const NamedTensor& t) {
    std::vector<uint64_t> out(t.data.size() / 2);
    for (size_t i = 0; i < out.size(); ++i) {
        uint32_t lo, hi;
        std::memcpy(&lo, &t.data[2 * i], 4);
        std::memcpy(&hi, &t.data[2 * i + 1], 4);
        out[i] = uint64_t(lo) | (uint64_t(hi) << 32);
    }
    return out;
}

inline NamedTensor pack_doubles(const std::string& name, const std::vector<double>& vals) {
    std::vector<uint64_t> bits(vals.size());
    std::memcpy(bits.data(), vals.data(), vals.size() * 8);
    return pack_u64(name, bits);
}

inline std::vector<double> unpack_doubles(const NamedTensor& t) {
    auto bits = unpack_u64(t);
    std::vector<double> out(bits.size());
    std::memcpy(out.data(), bits.data(), bits.size() * 8);
    return out;
}

inline void copy_params_from_checkpoint(const Checkpoint& ck, std::vector<NamedParam> params,
                                        const std::string& what) {
    for (auto& p : params) {
        const NamedTensor* t = ck.find(p.name);
        if (!t) throw FormatError(what + ": missing tensor '" + p.name + "'");
        if (t->shape != p.tensor.shape())
            throw FormatError(what + ": tensor '" + p.name + "' has shape " + shape_str(t->shape) +
                              ", model expects " + shape_str(p.tensor.shape()));
        std::copy(t->data.begin(), t->data.end(), p.tensor.values().begin());
    }
}

inline void restore_optimizer(Adam& opt, const Checkpoint& ck, const std::string& what) {
    if (!ck.has_optimizer) return;
    if (ck.opt_m.size() != opt.param_count())
        throw FormatError(what + ": optimizer state count mismatch");
    opt.set_step_count(ck.opt_step);
    for (size_t i = 0; i < opt.param_count(); ++i) {
        if (ck.opt_m[i].data.size() != opt.moment1(i).size())
            throw FormatError(what + ": optimizer moment size mismatch");
        opt.moment1(i) = ck.opt_m[i].data;
        opt.moment2(i) = ck.opt_v[i].data;
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Codec bundle
// ---------------------------------------------------------------------------

struct CodecBundle {
    Config cfg;
    Skeleton skel;
    Codec codec;
    CodebookSet books;
    Adam opt;
    Rng train_rng{0};
    int64_t step = 0;

    uint64_t compat_hash() const { return cfg.codec_compat_hash(); }

    std::vector<NamedParam> all_params() {
        auto out = codec.params();
        for (auto& p : books.params()) out.push_back(p);
        return out;
    }
};

inline void record_derived_keys(Config& cfg, const DatasetSplit& ds) {
    cfg.set("derived.pose_dim", std::to_string(ds.pose_dim));
    cfg.set("derived.joints", std::to_string(ds.joints));
    cfg.set("derived.classes", std::to_string(ds.classes));
    cfg.set("derived.fps", std::to_string(int(ds.fps)));
}

inline CodecBundle build_codec(Config cfg, const DatasetSplit& ds) {
    record_derived_keys(cfg, ds);
    CodecBundle b;
    b.cfg = cfg;
    b.skel = Skeleton::default_skeleton();
    if (b.skel.pose_dim() != ds.pose_dim)
        throw StagingError("codec: dataset pose dim " + std::to_string(ds.pose_dim) +
                           " does not match the default skeleton");
    Rng init_rng = Rng(uint64_t(cfg.get_int("train.seed"))).split(0);
    b.codec = Codec::init(CodecConfig::from_config(cfg, ds.pose_dim), init_rng);
    b.books = CodebookSet::init(int(cfg.get_int("quant.k")), int(cfg.get_int("quant.c")),
                                int(cfg.get_int("codec.nz")), float(cfg.get_float("quant.beta")),
                                init_rng);
    b.opt = Adam(b.all_params(),
                 AdamConfig{float(cfg.get_float("train.codec_lr")), 0.9f, 0.999f, 1e-8f});
    b.train_rng = Rng(uint64_t(cfg.get_int("train.seed"))).split(1);
    return b;
}

inline Checkpoint codec_checkpoint(CodecBundle& b, bool with_optimizer = true) {
    Checkpoint ck;
    ck.component = Component::Codec;
    ck.config_text = b.cfg.canonical_text();
    ck.train_step = b.step;
    uint64_t st[4];
    b.train_rng.state(st);
    for (int i = 0; i < 4; ++i) ck.rng_state[size_t(i)] = st[i];
    for (auto& p : b.all_params())
        ck.tensors.push_back({p.name, p.tensor.shape(), p.tensor.values()});
    for (int f = 0; f < b.books.k; ++f) {
        ck.tensors.push_back(
            detail::pack_u64("quant.usage_count" + std::to_string(f), b.books.usage_count[size_t(f)]));
        ck.tensors.push_back(
            detail::pack_doubles("quant.usage_ema" + std::to_string(f), b.books.usage_ema[size_t(f)]));
    }
    ck.tensors.push_back(detail::pack_u64("quant.events", {b.books.events_per_factor}));
    if (with_optimizer) {
        ck.has_optimizer = true;
        ck.opt_step = b.opt.step_count();
        for (size_t i = 0; i < b.opt.param_count(); ++i) {
            const auto& p = b.opt.params()[i];
            ck.opt_m.push_back({p.name, p.tensor.shape(), b.opt.moment1(i)});
            ck.opt_v.push_back({p.name, p.tensor.shape(), b.opt.moment2(i)});
        }
    }
    return ck;
}

inline CodecBundle codec_from_checkpoint(const Checkpoint& ck) {
    if (ck.component != Component::Codec)
        throw StagingError("expected a codec checkpoint, found " +
                           std::string(component_name(ck.component)));
    Config cfg = Config::from_text(ck.config_text);
    CodecBundle b;
    b.cfg = cfg;
    b.skel = Skeleton::default_skeleton();
    Rng dummy(0);
    b.codec = Codec::init(CodecConfig::from_config(cfg, int(cfg.get_int("derived.pose_dim"))), dummy);
    b.books = CodebookSet::init(int(cfg.get_int("quant.k")), int(cfg.get_int("quant.c")),
                                int(cfg.get_int("codec.nz")), float(cfg.get_float("quant.beta")),
                                dummy);
    detail::copy_params_from_checkpoint(ck, b.all_params(), "codec checkpoint");
    for (int f = 0; f < b.books.k; ++f) {
        if (const auto* t = ck.find("quant.usage_count" + std::to_string(f)))
            b.books.usage_count[size_t(f)] = detail::unpack_u64(*t);
        if (const auto* t = ck.find("quant.usage_ema" + std::to_string(f)))
            b.books.usage_ema[size_t(f)] = detail::unpack_doubles(*t);
    }
    if (const auto* t = ck.find("quant.events")) b.books.events_per_factor = detail::unpack_u64(*t)[0];
    b.opt = Adam(b.all_params(),
                 AdamConfig{float(cfg.get_float("train.codec_lr")), 0.9f, 0.999f, 1e-8f});
    detail::restore_optimizer(b.opt, ck, "codec checkpoint");
    b.step = ck.train_step;
    uint64_t st[4];
    for (int i = 0; i < 4; ++i) st[i] = ck.rng_state[size_t(i)];
    b.train_rng.set_state(st);
    return b;
}

// ---------------------------------------------------------------------------
// Codec training
// ---------------------------------------------------------------------------

struct CodecLossRow {
    int64_t step = 0;
    double total = 0, recon_theta = 0, recon_root = 0, fk = 0, codebook = 0, commit = 0;
};

using StepSink = std::function<void(int64_t step)>;

// One optimizer step over a crop batch. Crops keep batches rectangular: a
// shared length L (multiple of r) is drawn per step, then sequences with
// T >= L contribute a random window.
inline CodecLossRow codec_train_step(CodecBundle& b, const std::vector<MotionSequence>& train) {
    const int batch = int(b.cfg.get_int("train.batch"));
    const int r = int(b.cfg.get_int("codec.r"));
    const float beta = b.books.beta;
    const float fk_frac = float(b.cfg.get_float("train.fk_frac"));
    const float fk_weight = float(b.cfg.get_float("train.fk_weight"));
    const int pose_dim = b.skel.pose_dim();
    Rng& rng = b.train_rng;

    // Shared crop length from a uniformly drawn pivot sequence.
    int64_t min_t = train[0].length();
    for (const auto& s : train) min_t = std::min(min_t, s.length());
    const auto& pivot = train[size_t(rng.uniform_int(uint64_t(train.size())))];
    const int64_t lo_steps = std::max<int64_t>(1, min_t / r);
    const int64_t hi_steps = std::max(lo_steps, pivot.length() / r);
    const int64_t crop = r * rng.uniform_int(lo_steps, hi_steps);

    std::vector<float> theta_buf, root_buf, th_tmp, rt_tmp;
    theta_buf.reserve(size_t(batch * crop * pose_dim));
    root_buf.reserve(size_t(batch * crop * 3));
    for (int i = 0; i < batch; ++i) {
        const MotionSequence* seq = nullptr;
        while (!seq) {
            const auto& cand = train[size_t(rng.uniform_int(uint64_t(train.size())))];
            if (cand.length() >= crop) seq = &cand;
        }
        const int64_t start = int64_t(rng.uniform_int(uint64_t(seq->length() - crop + 1)));
        MotionSequence window;
        window.pose_dim = pose_dim;
        window.theta.assign(seq->theta.begin() + start * pose_dim,
                            seq->theta.begin() + (start + crop) * pose_dim);
        window.delta.assign(seq->delta.begin() + start * 3, seq->delta.begin() + (start + crop) * 3);
        sequence_features(window, b.codec.config().root_delta, th_tmp, rt_tmp);
        theta_buf.insert(theta_buf.end(), th_tmp.begin(), th_tmp.end());
        root_buf.insert(root_buf.end(), rt_tmp.begin(), rt_tmp.end());
    }
    Tensor theta = Tensor::from(theta_buf, {batch, crop, pose_dim});
    Tensor root = Tensor::from(root_buf, {batch, crop, 3});

    // FK targets on a random frame subset (positions relative to each crop's start).
    const int64_t n_frames = batch * crop;
    const int64_t n_fk = std::max<int64_t>(1, int64_t(double(n_frames) * fk_frac));
    std::vector<int32_t> fk_rows(static_cast<size_t>(n_fk));
    for (auto& v : fk_rows) v = int32_t(rng.uniform_int(uint64_t(n_frames)));

    TrainCtx ctx;
    ctx.train = true;
    ctx.dropout = float(b.cfg.get_float("codec.dropout"));
    ctx.rng = &rng;

    CodecLossRow row;
    row.step = b.step + 1;
    b.opt.zero_grad();
    Tensor batch_latents;  // flattened (B*T_d, nz) for dead-code reseeding
    {
        Tape tape;
        Tensor z = b.codec.encode(theta, root, ctx);
        const int64_t td = z.dim(1);
        Tensor z_flat = reshape(z, {batch * td, b.codec.config().nz});
        batch_latents = detach(z_flat);
        auto q = quantize(b.books, z_flat, /*record_usage=*/true);
        auto dec = b.codec.decode(reshape(q.z_q_st, {batch, td, b.codec.config().nz}), crop, ctx);

        Tensor l_theta = mse(dec.theta, theta);
        Tensor l_root = mse(dec.root_local, root);
        // Joint-position term: absolute root positions within the crop.
        Tensor target_abs_root = b.codec.config().root_delta ? cumsum_time(root) : root;
        Tensor pred_theta_rows = gather_rows(reshape(dec.theta, {n_frames, pose_dim}), fk_rows);
        Tensor pred_root_rows = gather_rows(reshape(dec.root, {n_frames, 3}), fk_rows);
        Tensor tgt_theta_rows = gather_rows(reshape(theta, {n_frames, pose_dim}), fk_rows);
        Tensor tgt_root_rows = gather_rows(reshape(target_abs_root, {n_frames, 3}), fk_rows);
        Tensor l_fk = mse(fk_forward(b.skel, pred_theta_rows, pred_root_rows),
                          detach(fk_forward(b.skel, tgt_theta_rows, tgt_root_rows)));

        Tensor loss = add(add(add(l_theta, l_root), scale(l_fk, fk_weight)),
                          add(q.codebook_loss, scale(q.commit_loss, beta)));
        row.total = loss.item();
        row.recon_theta = l_theta.item();
        row.recon_root = l_root.item();
        row.fk = l_fk.item();
        row.codebook = q.codebook_loss.item();
        row.commit = q.commit_loss.item();
        if (!std::isfinite(row.total))
            throw NumericalError("train-codec: loss diverged (NaN/Inf) at step " +
                                 std::to_string(row.step));
        backward(loss);
    }
    b.opt.step();
    b.step++;

    const int64_t dead_every = b.cfg.get_int("quant.dead_check_every");
    if (dead_every > 0 && b.step % dead_every == 0)
        reinit_dead_codes(b.books, batch_latents, rng, b.cfg.get_float("quant.dead_threshold"));
    return row;
}

inline std::vector<CodecLossRow> train_codec_steps(CodecBundle& b,
                                                   const std::vector<MotionSequence>& train,
                                                   int64_t steps, const StepSink& on_ckpt = {}) {
    if (train.empty()) throw ConfigError("train-codec: empty training split");
    const int64_t ckpt_every = b.cfg.get_int("train.ckpt_every");
    std::vector<CodecLossRow> curve;
    for (int64_t i = 0; i < steps; ++i) {
        curve.push_back(codec_train_step(b, train));
        if (on_ckpt && ckpt_every > 0 && b.step % ckpt_every == 0) on_ckpt(b.step);
    }
    return curve;
}

// Mean reconstruction error over a split, in mm.
inline double split_pve(CodecBundle& b, const std::vector<MotionSequence>& seqs) {
    double total = 0.0;
    for (const auto& s : seqs) total += pve_mm(b.skel, s, reconstruct(b.codec, b.books, s));
    return seqs.empty() ? 0.0 : total / double(seqs.size());
}

// ---------------------------------------------------------------------------
// Dataset encode pass (stage 1 -> stage 2 interface)
// ---------------------------------------------------------------------------

inline std::vector<IndexSequence> encode_split(CodecBundle& b,
                                               const std::vector<MotionSequence>& seqs) {
    std::vector<IndexSequence> out;
    out.reserve(seqs.size());
    for (const auto& s : seqs) {
        IndexSequence is;
        is.indices = encode_sequence_indices(b.codec, b.books, s);
        is.action = s.action;
        is.frames = s.length();
        out.push_back(std::move(is));
    }
    return out;
}

// ---------------------------------------------------------------------------
// GPT bundle
// ---------------------------------------------------------------------------

struct GptBundle {
    Config cfg;
    Gpt gpt;
    Adam opt;
    Rng train_rng{0};
    int64_t step = 0;

    uint64_t stored_codec_hash() const {
        const std::string hex = cfg.get("derived.codec_hash");
        return hex.empty() ? 0 : std::stoull(hex, nullptr, 16);
    }
};

inline GptBundle build_gpt(Config cfg, const CodecBundle& codec) {
    cfg.set("derived.codec_hash", hash_hex(codec.compat_hash()));
    cfg.set("derived.pose_dim", codec.cfg.get("derived.pose_dim"));
    cfg.set("derived.joints", codec.cfg.get("derived.joints"));
    cfg.set("derived.classes", codec.cfg.get("derived.classes"));
    cfg.set("derived.fps", codec.cfg.get("derived.fps"));
    GptBundle g;
    g.cfg = cfg;
    Rng init_rng = Rng(uint64_t(cfg.get_int("train.seed"))).split(10);
    g.gpt = Gpt::init(GptConfig::from_config(cfg, codec.books.k, codec.books.codes_per_book(),
                                             int(cfg.get_int("derived.classes")),
                                             int(cfg.get_int("codec.max_t"))),
                      init_rng);
    g.opt = Adam(g.gpt.params(), AdamConfig{float(cfg.get_float("train.gpt_lr")), 0.9f, 0.999f, 1e-8f});
    g.train_rng = Rng(uint64_t(cfg.get_int("train.seed"))).split(11);
    return g;
}

inline Checkpoint gpt_checkpoint(GptBundle& g, bool with_optimizer = true) {
    Checkpoint ck;
    ck.component = Component::Gpt;
    ck.config_text = g.cfg.canonical_text();
    ck.train_step = g.step;
    uint64_t st[4];
    g.train_rng.state(st);
    for (int i = 0; i < 4; ++i) ck.rng_state[size_t(i)] = st[i];
    for (auto& p : g.gpt.params()) ck.tensors.push_back({p.name, p.tensor.shape(), p.tensor.values()});
    if (with_optimizer) {
        ck.has_optimizer = true;
        ck.opt_step = g.opt.step_count();
        for (size_t i = 0; i < g.opt.param_count(); ++i) {
            const auto& p = g.opt.params()[i];
            ck.opt_m.push_back({p.name, p.tensor.shape(), g.opt.moment1(i)});
            ck.opt_v.push_back({p.name, p.tensor.shape(), g.opt.moment2(i)});
        }
    }
    return ck;
}

inline GptBundle gpt_from_checkpoint(const Checkpoint& ck) {
    if (ck.component != Component::Gpt)
        throw StagingError("expected a gpt checkpoint, found " +
                           std::string(component_name(ck.component)));
    Config cfg = Config::from_text(ck.config_text);
    GptBundle g;
    g.cfg = cfg;
    Rng dummy(0);
    const int k = int(cfg.get_int("quant.k"));
    const int codes = int(cfg.get_int("quant.c")) / k;
    g.gpt = Gpt::init(GptConfig::from_config(cfg, k, codes, int(cfg.get_int("derived.classes")),
                                             int(cfg.get_int("codec.max_t"))),
                      dummy);
    detail::copy_params_from_checkpoint(ck, g.gpt.params(), "gpt checkpoint");
    g.opt = Adam(g.gpt.params(), AdamConfig{float(cfg.get_float("train.gpt_lr")), 0.9f, 0.999f, 1e-8f});
    detail::restore_optimizer(g.opt, ck, "gpt checkpoint");
    g.step = ck.train_step;
    uint64_t st[4];
    for (int i = 0; i < 4; ++i) st[i] = ck.rng_state[size_t(i)];
    g.train_rng.set_state(st);
    return g;
}

// Stage-compatibility gate: a gpt checkpoint never runs against a codec with
// a different quantizer/codec fingerprint.
inline void check_stage_compat(const GptBundle& gpt, const CodecBundle& codec) {
    if (gpt.stored_codec_hash() != codec.compat_hash())
        throw StagingError("gpt/codec mismatch: the gpt was trained against codec config " +
                           gpt.cfg.get("derived.codec_hash") + ", this codec is " +
                           hash_hex(codec.compat_hash()));
}

// ---------------------------------------------------------------------------
// GPT training
// ---------------------------------------------------------------------------

struct GptLossRow {
    int64_t step = 0;
    double bits_per_dim = 0.0;
};

inline GptLossRow gpt_train_step(GptBundle& g, const std::vector<IndexSequence>& train) {
    const int batch = int(g.cfg.get_int("train.batch"));
    const float cond_drop = float(g.cfg.get_float("gpt.cond_drop"));
    Rng& rng = g.train_rng;

    std::vector<IndexSequence> picked;
    picked.reserve(size_t(batch));
    for (int i = 0; i < batch; ++i) {
        IndexSequence s = train[size_t(rng.uniform_int(uint64_t(train.size())))];
        if (cond_drop > 0.0f && rng.uniform_float() < cond_drop)
            s.action = g.gpt.config().null_action();
        picked.push_back(std::move(s));
    }
    std::vector<const IndexSequence*> ptrs;
    for (const auto& s : picked) ptrs.push_back(&s);
    GptBatch b = GptBatch::from_sequences(ptrs, g.gpt.config().k);

    TrainCtx ctx;
    ctx.train = true;
    ctx.dropout = g.gpt.config().dropout;
    ctx.rng = &rng;

    GptLossRow row;
    row.step = g.step + 1;
    g.opt.zero_grad();
    {
        Tape tape;
        Tensor loss = g.gpt.nll_loss(b, ctx);
        row.bits_per_dim = double(loss.item()) / std::log(2.0);
        if (!std::isfinite(row.bits_per_dim))
            throw NumericalError("train-gpt: loss diverged (NaN/Inf) at step " +
                                 std::to_string(row.step));
        backward(loss);
    }
    g.opt.step();
    g.step++;
    return row;
}

inline std::vector<GptLossRow> train_gpt_steps(GptBundle& g, const std::vector<IndexSequence>& train,
                                               int64_t steps, const StepSink& on_ckpt = {}) {
    if (train.empty()) throw ConfigError("train-gpt: empty encoded training set");
    const int64_t ckpt_every = g.cfg.get_int("train.ckpt_every");
    std::vector<GptLossRow> curve;
    for (int64_t i = 0; i < steps; ++i) {
        curve.push_back(gpt_train_step(g, train));
        if (on_ckpt && ckpt_every > 0 && g.step % ckpt_every == 0) on_ckpt(g.step);
    }
    return curve;
}

// Aggregate NLL of a set of encoded sequences under the model.
struct DatasetNll {
    double bits_per_seq = 0.0;  // mean total bits per sequence
    double bits_per_dim = 0.0;
    double total_bits = 0.0;
    int64_t sequences = 0;
};

inline DatasetNll dataset_nll(const GptBundle& g, const std::vector<IndexSequence>& seqs) {
    DatasetNll out;
    out.sequences = int64_t(seqs.size());
    double total_nats = 0.0;
    int64_t total_slots = 0;
    for (const auto& s : seqs) {
        GptBatch b = GptBatch::from_sequences({&s}, g.gpt.config().k);
        Gpt::NllStats stats;
        g.gpt.nll_loss(b, {}, &stats);
        total_nats += stats.total_nats;
        total_slots += stats.slots;
    }
    out.total_bits = total_nats / std::log(2.0);
    out.bits_per_seq = out.sequences ? out.total_bits / double(out.sequences) : 0.0;
    out.bits_per_dim = total_slots ? out.total_bits / double(total_slots) : 0.0;
    return out;
}

inline double dataset_gpt_accuracy(const GptBundle& g, const std::vector<IndexSequence>& seqs) {
    double acc = 0.0;
    for (const auto& s : seqs) {
        GptBatch b = GptBatch::from_sequences({&s}, g.gpt.config().k);
        acc += g.gpt.accuracy(b);
    }
    return seqs.empty() ? 0.0 : acc / double(seqs.size());
}

// ---------------------------------------------------------------------------
// Sampling pipeline
// ---------------------------------------------------------------------------

struct SampleRequest {
    int32_t action = 0;
    int64_t frames = 64;
};

// Samples one motion; the observed prefix (if any) is truncated down to whole
// latent steps, encoded with the frozen codec, and copied verbatim into the
// index grid before the free continuation.
inline MotionSequence sample_motion(const Gpt& gpt, CodecBundle& codec, const SampleRequest& req,
                                    float tau, Rng& rng, const MotionSequence* observed = nullptr,
                                    int64_t observe_frames = 0,
                                    std::vector<int32_t>* grid_out = nullptr) {
    const int r = codec.codec.config().r;
    if (req.frames < 1) throw ConfigError("sample: requested length must be >= 1");
    const int64_t t_d = codec.codec.config().latent_steps(req.frames);
    std::vector<int32_t> prefix;
    if (observed && observe_frames > 0) {
        if (observe_frames > observed->length())
            throw ConfigError("sample: observed prefix longer than the provided motion");
        const int64_t whole = observe_frames / r * r;  // truncate to whole latent steps
        if (whole > 0) {
            MotionSequence head = observed->head(whole);
            prefix = encode_sequence_indices(codec.codec, codec.books, head);
        }
    }
    auto grid = gpt.sample(req.action, req.frames, t_d, tau, rng, prefix);
    MotionSequence out = decode_indices(codec.codec, codec.books, grid, req.frames, req.action,
                                        float(codec.cfg.get_float("data.fps")));
    if (grid_out) *grid_out = std::move(grid);
    return out;
}

inline std::vector<MotionSequence> sample_motions(const Gpt& gpt, CodecBundle& codec,
                                                  const std::vector<SampleRequest>& reqs, float tau,
                                                  uint64_t seed) {
    Rng master(seed);
    std::vector<MotionSequence> out;
    out.reserve(reqs.size());
    for (size_t i = 0; i < reqs.size(); ++i) {
        Rng rng = master.split(i);
        out.push_back(sample_motion(gpt, codec, reqs[i], tau, rng));
    }
    return out;
}

}  // namespace pgen
