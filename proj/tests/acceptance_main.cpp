// Acceptance suite: one pass/fail line per criterion. Heavyweight artifacts
// (the default-config pipeline run) are built once through the real CLI and
// shared by the criteria that need them. Run a subset with --only N[,M...].

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "gradcheck.hpp"
#include "pgen/evaluate.hpp"
#include "pgen/harness.hpp"

namespace fs = std::filesystem;
using namespace pgen;

#ifndef PGEN_CLI_PATH
#define PGEN_CLI_PATH "./pgen"
#endif

namespace {

struct Stopwatch {
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    double seconds() const {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};

std::string g_work;

std::string wpath(const std::string& name) { return (fs::path(g_work) / name).string(); }

int run_cli(const std::string& args) {
    const std::string cmd = std::string(PGEN_CLI_PATH) + " " + args + " >> " + wpath("cli.log") +
                            " 2>&1";
    const int rc = std::system(cmd.c_str());
    return rc < 0 ? rc : WEXITSTATUS(rc);
}

std::map<std::string, std::string> parse_report(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw FormatError("missing report: " + path);
    std::map<std::string, std::string> out;
    std::string line;
    while (std::getline(in, line)) {
        const auto eq = line.find(" = ");
        if (eq != std::string::npos) out[line.substr(0, eq)] = line.substr(eq + 3);
    }
    return out;
}

double report_num(const std::map<std::string, std::string>& rep, const std::string& key) {
    return std::stod(rep.at(key));
}

bool files_equal(const std::string& a, const std::string& b) {
    std::ifstream fa(a, std::ios::binary), fb(b, std::ios::binary);
    if (!fa || !fb) return false;
    std::vector<char> ba((std::istreambuf_iterator<char>(fa)), std::istreambuf_iterator<char>());
    std::vector<char> bb((std::istreambuf_iterator<char>(fb)), std::istreambuf_iterator<char>());
    return ba == bb;
}

// Shared artifacts for the pipeline-dependent criteria.
struct Context {
    bool pipeline_ready = false;
    double pipeline_minutes = 0.0;
    std::map<std::string, std::string> report;
    std::optional<CodecBundle> codec;
    std::optional<GptBundle> gpt;
    std::optional<DatasetSplit> dataset;

    void ensure_pipeline() {
        if (pipeline_ready) return;
        std::printf("  [pipeline] gen-data -> train-codec -> train-gpt -> sample -> evaluate "
                    "(default config)\n");
        Stopwatch sw;
        auto check = [&](int rc, const char* what) {
            if (rc != 0) throw std::runtime_error(std::string(what) + " exited with code " +
                                                  std::to_string(rc));
        };
        check(run_cli("gen-data --seed 1 --out " + wpath("data.pgds") + " --force"), "gen-data");
        check(run_cli("train-codec --data " + wpath("data.pgds") + " --out " + wpath("codec.pgck") +
                      " --curve " + wpath("codec_curve.csv")),
              "train-codec");
        check(run_cli("train-gpt --data " + wpath("data.pgds") + " --codec " + wpath("codec.pgck") +
                      " --out " + wpath("gpt.pgck") + " --curve " + wpath("gpt_curve.csv")),
              "train-gpt");
        check(run_cli("sample --gpt " + wpath("gpt.pgck") + " --codec " + wpath("codec.pgck") +
                      " --action 3 --length 48 --n 5 --seed 7 --out " + wpath("samples")),
              "sample");
        check(run_cli("evaluate --gpt " + wpath("gpt.pgck") + " --codec " + wpath("codec.pgck") +
                      " --data " + wpath("data.pgds") + " --seed 1 --out " + wpath("report.txt")),
              "evaluate");
        pipeline_minutes = sw.seconds() / 60.0;
        report = parse_report(wpath("report.txt"));
        codec = codec_from_checkpoint(load_checkpoint(wpath("codec.pgck")));
        gpt = gpt_from_checkpoint(load_checkpoint(wpath("gpt.pgck")));
        dataset = load_dataset(wpath("data.pgds"));
        pipeline_ready = true;
        std::printf("  [pipeline] finished in %.1f min\n", pipeline_minutes);
    }
};

// ---------------------------------------------------------------------------
// Criterion 1: gradient suite
// ---------------------------------------------------------------------------

bool criterion_gradients(Context&) {
    Stopwatch sw;
    double worst = 0.0;
    std::string worst_name;
    auto check = [&](const char* name, double rel, bool ok_flag = true) {
        if (!ok_flag) {
            std::printf("  gradcheck %s: FAILED to produce a result\n", name);
            worst = 1.0;
        }
        if (rel > worst) {
            worst = rel;
            worst_name = name;
        }
        std::printf("  gradcheck %-22s max rel err %.3e\n", name, rel);
    };
    Rng rng(2024);
    auto probe = [&](const char* name, std::function<Tensor()> loss,
                     std::vector<Tensor> inputs) {
        {
            Tape tape;
            backward(loss());
        }
        auto res = pgen_test::finite_difference_check([&] { return loss().item(); }, inputs);
        check(name, res.max_rel_err, res.checked > 0);
    };

    {
        Tensor a = Tensor::randn(rng, {3, 4}, 0.6f, true), b = Tensor::randn(rng, {3, 4}, 0.6f, true);
        Tensor w = Tensor::randn(rng, {3, 4}, 0.7f, false);
        probe("add/sub/mul", [=] { return sum(mul(w, mul(add(a, b), sub(a, b)))); }, {a, b});
    }
    {
        Tensor a = Tensor::randn(rng, {2, 4, 5}, 0.7f, true);
        Tensor m = Tensor::randn(rng, {5, 3}, 0.7f, true);
        probe("matmul", [=] { return sum(matmul(a, m)); }, {a, m});
    }
    {
        Tensor a = Tensor::randn(rng, {3, 6}, 1.0f, true);
        Tensor w = Tensor::randn(rng, {3, 6}, 1.0f, false);
        probe("softmax", [=] { return sum(mul(softmax_lastdim(a), w)); }, {a});
    }
    {
        Tensor a = Tensor::randn(rng, {4, 8}, 1.0f, true);
        Tensor g = Tensor::randn(rng, {8}, 0.5f, true), be = Tensor::randn(rng, {8}, 0.5f, true);
        Tensor w = Tensor::randn(rng, {4, 8}, 1.0f, false);
        probe("layer_norm", [=] { return sum(mul(layer_norm(a, g, be), w)); }, {a, g, be});
    }
    {
        Tensor a = Tensor::randn(rng, {3, 5}, 0.8f, true);
        Tensor w = Tensor::randn(rng, {3, 5}, 1.0f, false);
        probe("unary nonlinearities",
              [=] {
                  Tensor y = add(add(gelu(a), relu(a)), add(sigmoid(a), tanh_op(a)));
                  return sum(mul(add(y, add(sin_op(a), cos_op(a))), w));
              },
              {a});
    }
    {
        Tensor table = Tensor::randn(rng, {7, 4}, 0.8f, true);
        std::vector<int32_t> ids = {1, 6, 3, 3, 0};
        Tensor w = Tensor::randn(rng, {5, 4}, 1.0f, false);
        probe("embedding", [=] { return sum(mul(embedding(table, ids), w)); }, {table});
    }
    {
        Tensor a = Tensor::randn(rng, {2, 3, 4}, 0.8f, true);
        Tensor b = Tensor::randn(rng, {2, 2, 4}, 0.8f, true);
        Tensor w = Tensor::randn(rng, {4, 2, 5}, 1.0f, false);
        probe("shape ops",
              [=] {
                  Tensor cat = concat({a, b}, 1);
                  return sum(mul(reshape(transpose(cat, {2, 0, 1}), {4, 2, 5}), w));
              },
              {a, b});
    }
    {
        Tensor a = Tensor::randn(rng, {2, 5, 3}, 0.8f, true);
        probe("slice+reductions",
              [=] { return add(mean(slice(a, 1, 1, 3)), sum(mean_axis(a, 1))); }, {a});
    }
    {
        Tensor a = Tensor::randn(rng, {2, 4, 3}, 0.8f, true);
        Tensor w = Tensor::randn(rng, {2, 4, 3}, 1.0f, false);
        probe("cumsum_time", [=] { return sum(mul(cumsum_time(a), w)); }, {a});
    }
    {
        Tensor logits = Tensor::randn(rng, {4, 6}, 1.0f, true);
        std::vector<int32_t> t = {0, 5, 2, 2};
        probe("cross_entropy", [=] { return sum(cross_entropy_logits(logits, t)); }, {logits});
    }
    {
        Tensor a = Tensor::randn(rng, {4, 6}, 0.8f, true);
        Tensor w = Tensor::randn(rng, {4, 6}, 1.0f, false);
        // Fixed-seed mask keeps dropout deterministic across FD evals.
        probe("dropout",
              [=] {
                  Rng drop_rng(42);
                  return sum(mul(dropout(a, 0.3f, true, drop_rng), w));
              },
              {a});
    }
    {
        Skeleton skel = Skeleton::default_skeleton();
        Tensor th = Tensor::randn(rng, {3, int64_t(skel.pose_dim())}, 0.5f, true);
        Tensor de = Tensor::randn(rng, {3, 3}, 0.5f, true);
        Tensor w = Tensor::randn(rng, {3, int64_t(skel.joints()), 3}, 1.0f, false);
        probe("forward kinematics", [=, &skel] { return sum(mul(fk_forward(skel, th, de), w)); },
              {th, de});
    }
    {
        // Full codec step loss on the differentiable path (encoder composed
        // with decoder; quantizer gradients are covered analytically by
        // criterion 3, matching the straight-through estimator's contract).
        CodecConfig cfg;
        cfg.r = 1;
        cfg.nz = 4;
        cfg.embed = 8;
        cfg.blocks = 1;
        cfg.layers_per_block = 1;
        cfg.heads = 2;
        cfg.ff = 16;
        cfg.dropout = 0;
        cfg.max_t = 16;
        cfg.pose_dim = 4;
        Codec codec = Codec::init(cfg, rng);
        Tensor theta = Tensor::randn(rng, {1, 4, 4}, 0.5f, false);
        Tensor root = Tensor::randn(rng, {1, 4, 3}, 0.5f, false);
        std::vector<Tensor> params;
        for (auto& p : codec.params()) params.push_back(p.tensor);
        probe("codec step loss",
              [&codec, theta, root] {
                  Tensor z = codec.encode(theta, root, {});
                  auto dec = codec.decode(z, 4, {});
                  return add(add(mse(dec.theta, detach(theta)), mse(dec.root_local, detach(root))),
                             scale(mean(square(z)), 0.25f));
              },
              params);
    }
    {
        GptConfig cfg;
        cfg.layers = 1;
        cfg.heads = 2;
        cfg.embed = 8;
        cfg.ff = 16;
        cfg.dropout = 0;
        cfg.head = HeadType::Ar;
        cfg.embedding = EmbeddingStrategy::Concat;
        cfg.context = 8;
        cfg.k = 2;
        cfg.codes = 5;
        cfg.actions = 3;
        cfg.max_frames = 32;
        Gpt gpt = Gpt::init(cfg, rng);
        for (auto& p : gpt.params())
            for (auto& v : p.tensor.values()) v += float(rng.normal(0.0, 0.05));
        IndexSequence s;
        s.action = 1;
        s.frames = 16;
        for (int i = 0; i < 8; ++i) s.indices.push_back(int32_t(rng.uniform_int(5)));
        GptBatch batch = GptBatch::from_sequences({&s}, 2);
        std::vector<Tensor> params;
        for (auto& p : gpt.params()) params.push_back(p.tensor);
        probe("gpt step loss", [&gpt, batch] { return gpt.nll_loss(batch, {}); }, params);
    }

    const double secs = sw.seconds();
    std::printf("  worst %.3e (%s), runtime %.1f s\n", worst, worst_name.c_str(), secs);
    return worst < 1e-3 && secs < 120.0;
}

// ---------------------------------------------------------------------------
// Criterion 2: causality suite
// ---------------------------------------------------------------------------

bool criterion_causality(Context&) {
    Stopwatch sw;
    bool ok = true;
    Rng rng(7);

    // Encoder bound: latents 1..t fixed under perturbations past floor(t*T/T_d).
    CodecConfig ccfg;
    ccfg.r = 2;
    ccfg.nz = 8;
    ccfg.embed = 16;
    ccfg.blocks = 2;
    ccfg.layers_per_block = 1;
    ccfg.heads = 2;
    ccfg.ff = 32;
    ccfg.dropout = 0;
    ccfg.max_t = 64;
    ccfg.pose_dim = 6;
    ccfg.causal_encoder = true;
    ccfg.causal_decoder = true;
    Codec codec = Codec::init(ccfg, rng);
    for (int64_t frames : {16, 13}) {
        MotionSequence seq;
        seq.pose_dim = 6;
        seq.theta.resize(size_t(frames * 6));
        seq.delta.resize(size_t(frames * 3));
        for (auto& v : seq.theta) v = float(rng.uniform(-1, 1));
        for (auto& v : seq.delta) v = float(rng.uniform(-1, 1));
        Tensor base = encode_sequence_latents(codec, seq);
        const int64_t td = base.dim(1);
        for (int64_t t = 1; t <= td; ++t) {
            const int64_t bound = t * frames / td;
            if (bound >= frames) continue;
            MotionSequence mod = seq;
            mod.theta[size_t(bound * 6 + 1)] += 2.5f;
            Tensor probe = encode_sequence_latents(codec, mod);
            for (int64_t s = 0; s < t * 8; ++s) ok &= probe.values()[size_t(s)] == base.values()[size_t(s)];
        }
    }
    std::printf("  encoder perturbation probes: %s\n", ok ? "bit-exact" : "VIOLATED");

    // Decoder bound: frames <= t fixed under perturbations of latents > ceil(t/r).
    bool dec_ok = true;
    {
        Tensor z = Tensor::randn(rng, {1, 6, 8}, 1.0f, false);
        auto base = codec.decode(z, 12, {});
        for (int64_t keep = 1; keep < 6; ++keep) {
            Tensor z2 = detach(z);
            for (int64_t s = keep; s < 6; ++s)
                for (int64_t i = 0; i < 8; ++i) z2.data()[s * 8 + i] += 1.0f + float(i);
            auto probe = codec.decode(z2, 12, {});
            for (int64_t f = 0; f < keep * 2; ++f)
                for (int64_t p = 0; p < 6; ++p)
                    dec_ok &= probe.theta.values()[size_t(f * 6 + p)] ==
                              base.theta.values()[size_t(f * 6 + p)];
        }
    }
    std::printf("  decoder perturbation probes: %s\n", dec_ok ? "bit-exact" : "VIOLATED");

    // GPT: token j perturbations touch only later positions (and later
    // factors of the same step through the ar head).
    bool gpt_ok = true;
    {
        GptConfig gcfg;
        gcfg.layers = 1;
        gcfg.heads = 2;
        gcfg.embed = 16;
        gcfg.ff = 32;
        gcfg.dropout = 0;
        gcfg.head = HeadType::Ar;
        gcfg.context = 16;
        gcfg.k = 2;
        gcfg.codes = 5;
        gcfg.actions = 3;
        gcfg.max_frames = 64;
        Gpt gpt = Gpt::init(gcfg, rng);
        for (auto& p : gpt.params())
            for (auto& v : p.tensor.values()) v += float(rng.normal(0.0, 0.05));
        IndexSequence s;
        s.action = 1;
        s.frames = 20;
        for (int i = 0; i < 16; ++i) s.indices.push_back(int32_t(rng.uniform_int(5)));
        GptBatch base_b = GptBatch::from_sequences({&s}, 2);
        auto base = gpt.forward_logits(base_b, {});
        for (int64_t j = 0; j < 7; ++j) {
            IndexSequence mod = s;
            mod.indices[size_t(j * 2)] = (mod.indices[size_t(j * 2)] + 2) % 5;
            GptBatch mb = GptBatch::from_sequences({&mod}, 2);
            auto probe = gpt.forward_logits(mb, {});
            for (int64_t t = 0; t <= j; ++t)
                for (int c = 0; c < 5; ++c)
                    gpt_ok &= probe[0].values()[size_t(t * 5 + c)] == base[0].values()[size_t(t * 5 + c)];
            for (int64_t t = 0; t < j; ++t)
                for (int c = 0; c < 5; ++c)
                    gpt_ok &= probe[1].values()[size_t(t * 5 + c)] == base[1].values()[size_t(t * 5 + c)];
        }
    }
    std::printf("  gpt perturbation probes: %s\n", gpt_ok ? "bit-exact" : "VIOLATED");
    const double secs = sw.seconds();
    std::printf("  runtime %.1f s\n", secs);
    return ok && dec_ok && gpt_ok && secs < 60.0;
}

// ---------------------------------------------------------------------------
// Criterion 3: quantizer oracle
// ---------------------------------------------------------------------------

bool criterion_quantizer(Context&) {
    Rng rng(11);
    bool ok = true;
    int checked = 0;
    for (int k : {1, 2, 4}) {
        const int nz = 8 * k;
        const int total_c = std::min(64, 16 * k);
        CodebookSet cb = CodebookSet::init(k, total_c, nz, 0.25f, rng);
        const int64_t n = 1000;
        Tensor z = Tensor::randn(rng, {n, nz}, 1.2f);
        auto res = quantize(cb, z);
        const int dim = cb.chunk_dim();
        for (int64_t i = 0; i < n; ++i)
            for (int f = 0; f < k; ++f) {
                // Exhaustive oracle in double precision.
                double best = 1e300;
                int32_t best_idx = 0;
                for (int32_t c = 0; c < cb.codes_per_book(); ++c) {
                    double d = 0;
                    for (int j = 0; j < dim; ++j) {
                        const double diff = double(z.data()[i * nz + f * dim + j]) -
                                            double(cb.books[size_t(f)].data()[c * dim + j]);
                        d += diff * diff;
                    }
                    if (d < best) {
                        best = d;
                        best_idx = c;
                    }
                }
                ok &= res.indices[size_t(i * k + f)] == best_idx;
                ++checked;
            }
    }
    std::printf("  exhaustive nearest-neighbor check: %d assignments %s\n", checked,
                ok ? "all exact" : "MISMATCH");

    // Straight-through identity and the analytic Eq.-4 gradient routing.
    bool st_ok = true;
    {
        CodebookSet cb = CodebookSet::init(2, 8, 4, 0.25f, rng);
        Tensor z = Tensor::randn(rng, {6, 4}, 1.0f);
        st_ok &= straight_through_report(cb, z).ok(1e-6);

        Tensor z2 = Tensor::randn(rng, {5, 4}, 1.0f).set_requires_grad(true);
        Tensor v;
        {
            Tape tape;
            auto q = quantize(cb, z2);
            v = q.z_q;
            backward(sum(square(q.z_q_st)));
        }
        for (int64_t i = 0; i < z2.numel(); ++i)
            st_ok &= std::abs(z2.grad_view()[size_t(i)] - 2.0f * v.values()[size_t(i)]) < 1e-4;

        z2.zero_grad();
        {
            Tape tape;
            auto q = quantize(cb, z2);
            backward(scale(sum(square(sub(z2, detach(q.z_q)))), 0.25f));
        }
        for (int64_t i = 0; i < z2.numel(); ++i) {
            const float expect = 2.0f * 0.25f * (z2.values()[size_t(i)] - v.values()[size_t(i)]);
            st_ok &= std::abs(z2.grad_view()[size_t(i)] - expect) < 1e-4;
        }

        // Routing: codebook term -> centroids only; commitment -> encoder only.
        for (auto& b : cb.books) b.zero_grad();
        z2.zero_grad();
        {
            Tape tape;
            auto q = quantize(cb, z2);
            backward(q.codebook_loss);
        }
        bool enc_zero = true, book_nonzero = false;
        for (float g : z2.grad_view()) enc_zero &= g == 0.0f;
        for (auto& b : cb.books)
            if (b.has_grad())
                for (float g : b.grad_view()) book_nonzero |= g != 0.0f;
        st_ok &= enc_zero && book_nonzero;
    }
    std::printf("  straight-through and Eq.-4 routing: %s\n", st_ok ? "analytic checks pass" : "FAILED");
    return ok && st_ok;
}

// ---------------------------------------------------------------------------
// Criterion 4: capacity arithmetic
// ---------------------------------------------------------------------------

bool criterion_capacity(Context&) {
    const bool ok = capacity_bits(32, 1, 256) == 256.0 && capacity_bits(32, 2, 256) == 448.0 &&
                    capacity_bits(32, 4, 256) == 768.0;
    std::printf("  capacity_bits(32,{1,2,4},256) = %g / %g / %g\n", capacity_bits(32, 1, 256),
                capacity_bits(32, 2, 256), capacity_bits(32, 4, 256));
    return ok;
}

// ---------------------------------------------------------------------------
// Criterion 5: overfit oracles
// ---------------------------------------------------------------------------

bool criterion_overfit(Context&) {
    Stopwatch sw;

    // Codec: 8 fixed-length sequences, target train pve < 5 mm within 20k steps.
    Config cfg;
    cfg.set("data.classes", "2");
    cfg.set("data.train_count", "8");
    cfg.set("data.val_count", "2");
    cfg.set("data.test_count", "2");
    cfg.set("data.t_min", "32");
    cfg.set("data.t_max", "32");
    cfg.set("train.batch", "8");
    cfg.set("train.codec_lr", "1e-3");
    cfg.set("train.fk_frac", "0.3");
    cfg.set("quant.dead_check_every", "500");
    DatasetSplit ds = generate_dataset(GeneratorSpec::from_config(cfg), 123);
    CodecBundle codec = build_codec(cfg, ds);
    double train_pve = 1e9;
    int64_t codec_steps = 0;
    while (codec_steps < 20000) {
        train_codec_steps(codec, ds.train, 500);
        codec_steps += 500;
        train_pve = split_pve(codec, ds.train);
        if (codec_steps % 2000 == 0 || train_pve < 5.0)
            std::printf("  codec overfit: step %lld, train pve %.2f mm\n", (long long)codec_steps,
                        train_pve);
        if (train_pve < 5.0) break;
    }
    const bool codec_ok = train_pve < 5.0;

    // GPT: 4 fixed index grids, target < 0.1 bits/dim within 10k steps.
    Config gcfg;
    gcfg.set("train.batch", "4");
    gcfg.set("train.gpt_lr", "1e-3");
    gcfg.set("gpt.dropout", "0.0");
    gcfg.set("gpt.cond_drop", "0.0");
    GptBundle gpt = build_gpt(gcfg, codec);
    Rng grid_rng(55);
    std::vector<IndexSequence> fixed;
    for (int i = 0; i < 4; ++i) {
        IndexSequence s;
        s.action = i % 2;
        s.frames = 32;
        for (int t = 0; t < 16 * codec.books.k; ++t)
            s.indices.push_back(int32_t(grid_rng.uniform_int(uint64_t(codec.books.codes_per_book()))));
        fixed.push_back(std::move(s));
    }
    double bits_per_dim = 1e9;
    int64_t gpt_steps = 0;
    while (gpt_steps < 10000) {
        train_gpt_steps(gpt, fixed, 250);
        gpt_steps += 250;
        bits_per_dim = dataset_nll(gpt, fixed).bits_per_dim;
        if (gpt_steps % 1000 == 0 || bits_per_dim < 0.1)
            std::printf("  gpt overfit: step %lld, %.3f bits/dim\n", (long long)gpt_steps,
                        bits_per_dim);
        if (bits_per_dim < 0.1) break;
    }
    const bool gpt_ok = bits_per_dim < 0.1;
    const double mins = sw.seconds() / 60.0;
    std::printf("  combined overfit runtime %.1f min\n", mins);
    return codec_ok && gpt_ok && mins < 20.0;
}

// ---------------------------------------------------------------------------
// Criterion 6: uniform bound and compression
// ---------------------------------------------------------------------------

bool criterion_uniform_bound(Context& ctx) {
    ctx.ensure_pipeline();
    CodecBundle& codec = *ctx.codec;
    DatasetSplit& ds = *ctx.dataset;

    // Untrained model: exact capacity.
    GptBundle fresh = build_gpt(codec.cfg, codec);
    auto test_idx = encode_split(codec, ds.test);
    auto nll = dataset_nll(fresh, test_idx);
    double cap_mean = 0.0;
    for (const auto& s : test_idx)
        cap_mean += capacity_bits(s.steps(codec.books.k), codec.books.k, codec.books.total_c);
    cap_mean /= double(test_idx.size());
    const double rel = std::abs(nll.bits_per_seq - cap_mean) / cap_mean;
    std::printf("  untrained bits/seq %.2f vs capacity %.2f (rel %.2e)\n", nll.bits_per_seq,
                cap_mean, rel);
    const bool uniform_ok = rel < 1e-3;

    // After 50k steps on the default dataset: compression below 0.9x capacity.
    // A slim model keeps this 50k-step run affordable; the criterion pins the
    // dataset and step count, not the architecture.
    Config cfg = codec.cfg;
    cfg.set("gpt.embed", "32");
    cfg.set("gpt.layers", "1");
    cfg.set("gpt.ff", "64");
    cfg.set("gpt.heads", "2");
    GptBundle slim = build_gpt(cfg, codec);
    auto train_idx = encode_split(codec, ds.train);
    Stopwatch sw;
    train_gpt_steps(slim, train_idx, 50000);
    auto trained = dataset_nll(slim, test_idx);
    std::printf("  50k-step bits/seq %.2f vs 0.9x capacity %.2f (%.1f min)\n", trained.bits_per_seq,
                0.9 * cap_mean, sw.seconds() / 60.0);
    return uniform_ok && trained.bits_per_seq < 0.9 * cap_mean;
}

// ---------------------------------------------------------------------------
// Criterion 7: end-to-end pipeline
// ---------------------------------------------------------------------------

bool criterion_pipeline(Context& ctx) {
    ctx.ensure_pipeline();
    bool ok = ctx.pipeline_minutes < 90.0;
    std::printf("  wall time %.1f min (< 90)\n", ctx.pipeline_minutes);

    // Sampled sequences honor requested action and length.
    std::ifstream in(wpath("samples.jsonl"));
    std::string line;
    int n_lines = 0;
    bool honored = true;
    while (std::getline(in, line)) {
        auto j = nlohmann::json::parse(line);
        honored &= j["action"].get<int>() == 3;
        honored &= j["theta"].size() == 48;
        ++n_lines;
    }
    honored &= n_lines == 5;
    std::printf("  samples honor action/length: %s\n", honored ? "yes" : "NO");
    ok &= honored;

    // Complete report with every schema key.
    bool complete = true;
    for (const auto& key : EvalReport::schema()) complete &= ctx.report.count(key) > 0;
    std::printf("  report complete: %s\n", complete ? "yes" : "NO");
    ok &= complete;

    const double r_t = report_num(ctx.report, "r_t");
    const double r_s = report_num(ctx.report, "r_s");
    std::printf("  r_t %.3f (>= 0.7), r_s %.3f (>= 0.5)\n", r_t, r_s);
    ok &= r_t >= 0.7 && r_s >= 0.5;
    return ok;
}

// ---------------------------------------------------------------------------
// Criterion 8: metric sanity
// ---------------------------------------------------------------------------

bool criterion_metric_sanity(Context& ctx) {
    ctx.ensure_pipeline();
    bool ok = true;
    Rng rng(23);

    // FID(X, X) and the 1-D Gaussian closed form.
    {
        std::vector<std::vector<float>> rows;
        for (int i = 0; i < 400; ++i) {
            std::vector<float> r(8);
            for (auto& v : r) v = float(rng.normal(0, 1));
            rows.push_back(r);
        }
        auto fs = FeatureSet::from_rows(rows);
        const double self = fid(fs, fs);
        std::printf("  fid(X,X) = %.2e\n", self);
        ok &= self <= 1e-6;

        std::vector<std::vector<float>> a, b;
        for (int i = 0; i < 100000; ++i) {
            a.push_back({float(rng.normal(0, 1))});
            b.push_back({float(rng.normal(1, 1))});
        }
        const double g = fid(FeatureSet::from_rows(a), FeatureSet::from_rows(b));
        std::printf("  fid gaussian = %.4f (closed form 1.0)\n", g);
        ok &= std::abs(g - 1.0) < 0.05;
    }

    // R_T of the test data against itself.
    {
        DatasetSplit& ds = *ctx.dataset;
        CodecBundle& codec = *ctx.codec;
        EvalOptions opt;
        opt.self_debug = true;
        opt.seed = 9;
        opt.quiet = true;
        EvalReport rep = evaluate_pipeline(*ctx.gpt, codec, ds, opt);
        std::printf("  self-debug: fid %.2e, r_t %.4f\n", rep.fid, rep.r_t);
        ok &= rep.fid <= 1e-6 && std::abs(rep.r_t - 1.0) < 1e-12;
    }

    // Constructed mode collapse: samples covering half the classes must
    // strictly lower R_S versus full coverage (real train data as samples).
    {
        DatasetSplit& ds = *ctx.dataset;
        CodecBundle& codec = *ctx.codec;
        auto t_clf = fit_classifier(codec.cfg, codec.skel, ds.train, &ds.val, ds.classes, 31, "T");
        const double acc_t = classifier_accuracy(t_clf.clf, codec.skel, ds.test);

        auto fit_rs = [&](const std::vector<MotionSequence>& fake_samples) {
            auto s_clf = fit_classifier(codec.cfg, codec.skel, fake_samples, nullptr, ds.classes,
                                        33, "S");
            const double acc_s = classifier_accuracy(s_clf.clf, codec.skel, ds.test);
            return *r_s_ratio(acc_s, acc_t);
        };
        std::vector<MotionSequence> full, half;
        for (const auto& s : ds.train) {
            if (full.size() < 180) full.push_back(s);
            if (s.action < ds.classes / 2 && half.size() < 180) half.push_back(s);
        }
        const double rs_full = fit_rs(full);
        const double rs_half = fit_rs(half);
        std::printf("  mode-collapse probe: r_s full %.3f vs half-class %.3f\n", rs_full, rs_half);
        ok &= rs_half < rs_full;
    }
    return ok;
}

// ---------------------------------------------------------------------------
// Criterion 9: ablation directions
// ---------------------------------------------------------------------------

bool criterion_ablations(Context& ctx) {
    ctx.ensure_pipeline();
    DatasetSplit& ds = *ctx.dataset;
    bool ok = true;

    // (a) causal-attention ordering on test pve at a matched budget.
    {
        auto run = [&](bool causal_e, bool causal_d) {
            Config cfg = ctx.codec->cfg;
            cfg.set("codec.causal_encoder", causal_e ? "true" : "false");
            cfg.set("codec.causal_decoder", causal_d ? "true" : "false");
            CodecBundle b = build_codec(cfg, ds);
            train_codec_steps(b, ds.train, 3500);
            return split_pve(b, ds.test);
        };
        const double pve_nc = run(false, false);
        const double pve_e = run(true, false);
        const double pve_ed = run(true, true);
        std::printf("  causal ordering pve: none %.2f <= E %.2f <= E+D %.2f\n", pve_nc, pve_e,
                    pve_ed);
        ok &= pve_nc <= pve_e * 1.05 && pve_e <= pve_ed * 1.05;
    }

    // (b) embedding-strategy ordering on next-index validation accuracy.
    {
        auto run = [&](const char* emb) {
            Config cfg = ctx.codec->cfg;
            cfg.set("gpt.embedding", emb);
            cfg.set("gpt.head", "mlp");
            GptBundle g = build_gpt(cfg, *ctx.codec);
            auto encoded = encode_split(*ctx.codec, ds.train);
            train_gpt_steps(g, encoded, 1500);
            return dataset_gpt_accuracy(g, encode_split(*ctx.codec, ds.val));
        };
        const double acc_cat = run("concat");
        const double acc_sum = run("sum");
        const double acc_tok = run("extra_token_t0");
        std::printf("  embedding ordering acc: concat %.3f >= sum %.3f >= extra-token %.3f\n",
                    acc_cat, acc_sum, acc_tok);
        ok &= acc_cat >= acc_sum * 0.98 && acc_sum >= acc_tok * 0.98;
    }

    // (c) temperature trade-off: fid and r_s move in opposite quality
    // directions across the sweep (numerically: same-signed deltas, since fid
    // is lower-better and r_s higher-better).
    double fid_lo, fid_hi, rs_lo, rs_hi;
    {
        auto eval_at = [&](float tau, int64_t obs) {
            EvalOptions opt;
            opt.n_samples = 300;
            opt.seed = 17;
            opt.temperature = tau;
            opt.observe_frames = obs;
            opt.quiet = true;
            return evaluate_pipeline(*ctx.gpt, *ctx.codec, ds, opt);
        };
        EvalReport lo = eval_at(0.7f, 0);
        EvalReport hi = eval_at(1.3f, 0);
        fid_lo = lo.fid;
        fid_hi = hi.fid;
        rs_lo = lo.r_s;
        rs_hi = hi.r_s;
        std::printf("  temperature sweep: tau 0.7 -> fid %.3f r_s %.3f | tau 1.3 -> fid %.3f r_s %.3f\n",
                    fid_lo, rs_lo, fid_hi, rs_hi);
        const double dfid = fid_hi - fid_lo;
        const double drs = rs_hi - rs_lo;
        ok &= (dfid > 0) == (drs > 0) && dfid != 0 && drs != 0;

        // (d) longer observed prefixes do not worsen fid.
        EvalReport obs16 = eval_at(1.0f, 16);
        EvalReport obs0 = eval_at(1.0f, 0);
        std::printf("  observe sweep: fid obs=0 %.3f vs obs=16 %.3f\n", obs0.fid, obs16.fid);
        ok &= obs16.fid <= obs0.fid * 1.10;
    }

    // (e) drift stability over 16 self-conditioned iterations.
    {
        auto t_clf = fit_classifier(ctx.codec->cfg, ctx.codec->skel, ds.train, &ds.val, ds.classes,
                                    41, "T");
        auto fids = drift_probe(*ctx.gpt, *ctx.codec, ds, t_clf.clf, 16, 48, 48, 16, 1.0f, 43);
        double worst = 0;
        for (size_t i = 1; i < fids.size(); ++i) worst = std::max(worst, fids[i]);
        std::printf("  drift: iter-1 fid %.3f, max iters 2..16 %.3f (<= 3x)\n", fids[0], worst);
        ok &= worst <= 3.0 * fids[0];
    }
    return ok;
}

// ---------------------------------------------------------------------------
// Criterion 10: determinism
// ---------------------------------------------------------------------------

bool criterion_determinism(Context&) {
    bool ok = true;
    auto check_rc = [&](int rc, const char* what) {
        if (rc != 0) {
            std::printf("  %s exited with %d\n", what, rc);
            ok = false;
        }
    };

    // gen-data reruns are byte-identical.
    check_rc(run_cli("gen-data --seed 5 --out " + wpath("det_a.pgds") +
                     " --force --set data.train_count=60 --set data.val_count=12 --set "
                     "data.test_count=12"),
             "gen-data a");
    check_rc(run_cli("gen-data --seed 5 --out " + wpath("det_b.pgds") +
                     " --force --set data.train_count=60 --set data.val_count=12 --set "
                     "data.test_count=12"),
             "gen-data b");
    const bool gen_ok = files_equal(wpath("det_a.pgds"), wpath("det_b.pgds"));
    std::printf("  gen-data rerun byte-identical: %s\n", gen_ok ? "yes" : "NO");
    ok &= gen_ok;

    // train-codec reruns are byte-identical; resume == uninterrupted.
    const std::string common = " --data " + wpath("det_a.pgds") + " --set data.train_count=60 "
                               "--set data.val_count=12 --set data.test_count=12 "
                               "--set codec.embed=32 --set codec.ff=64 --set quant.c=32 "
                               "--set codec.nz=16 ";
    check_rc(run_cli("train-codec" + common + "--steps 150 --out " + wpath("det_c1.pgck")),
             "train-codec c1");
    check_rc(run_cli("train-codec" + common + "--steps 150 --out " + wpath("det_c2.pgck")),
             "train-codec c2");
    const bool codec_ok = files_equal(wpath("det_c1.pgck"), wpath("det_c2.pgck"));
    std::printf("  train-codec rerun byte-identical: %s\n", codec_ok ? "yes" : "NO");
    ok &= codec_ok;

    check_rc(run_cli("train-codec" + common + "--steps 75 --out " + wpath("det_c3.pgck")),
             "train-codec c3");
    check_rc(run_cli("train-codec --data " + wpath("det_a.pgds") + " --steps 75 --resume " +
                     wpath("det_c3.pgck") + " --out " + wpath("det_c4.pgck")),
             "train-codec resume");
    const bool resume_ok = files_equal(wpath("det_c1.pgck"), wpath("det_c4.pgck"));
    std::printf("  resumed training equals uninterrupted: %s\n", resume_ok ? "yes" : "NO");
    ok &= resume_ok;

    // train-gpt + sample determinism through the CLI.
    check_rc(run_cli("train-gpt" + common + "--steps 100 --set gpt.embed=32 --set gpt.ff=64 "
                     "--codec " + wpath("det_c1.pgck") + " --out " + wpath("det_g1.pgck")),
             "train-gpt g1");
    check_rc(run_cli("sample --gpt " + wpath("det_g1.pgck") + " --codec " + wpath("det_c1.pgck") +
                     " --action 1 --length 32 --n 3 --seed 9 --out " + wpath("det_s1")),
             "sample s1");
    check_rc(run_cli("sample --gpt " + wpath("det_g1.pgck") + " --codec " + wpath("det_c1.pgck") +
                     " --action 1 --length 32 --n 3 --seed 9 --out " + wpath("det_s2")),
             "sample s2");
    const bool sample_ok = files_equal(wpath("det_s1.jsonl"), wpath("det_s2.jsonl")) &&
                           files_equal(wpath("det_s1.indices.jsonl"), wpath("det_s2.indices.jsonl"));
    std::printf("  sample rerun byte-identical: %s\n", sample_ok ? "yes" : "NO");
    ok &= sample_ok;
    return ok;
}

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> only;
    for (int i = 1; i < argc; ++i) {
        const std::string arg = argv[i];
        if (arg == "--only" && i + 1 < argc) {
            std::stringstream ss(argv[++i]);
            std::string tok;
            while (std::getline(ss, tok, ',')) only.push_back(std::stoi(tok));
        } else if (arg == "--work" && i + 1 < argc) {
            g_work = argv[++i];
        }
    }
    if (g_work.empty()) g_work = (fs::temp_directory_path() / "pgen_acceptance").string();
    fs::create_directories(g_work);
    std::printf("acceptance work dir: %s\n", g_work.c_str());

    struct Criterion {
        int num;
        const char* name;
        std::function<bool(Context&)> fn;
    };
    const std::vector<Criterion> criteria = {
        {1, "gradient suite (finite differences, < 2 min)", criterion_gradients},
        {2, "causality suite (bit-exact perturbation probes, < 1 min)", criterion_causality},
        {3, "quantizer oracle (exhaustive NN + analytic gradients)", criterion_quantizer},
        {4, "capacity arithmetic (256/448/768 bits)", criterion_capacity},
        {5, "overfit oracles (codec < 5 mm, gpt < 0.1 bits/dim, < 20 min)", criterion_overfit},
        {6, "uniform bound and 50k-step compression", criterion_uniform_bound},
        {7, "end-to-end pipeline (< 90 min, R_T >= 0.7, R_S >= 0.5)", criterion_pipeline},
        {8, "metric sanity (fid, ratios, mode-collapse probe)", criterion_metric_sanity},
        {9, "ablation directions (causality, embedding, temperature, observe, drift)",
         criterion_ablations},
        {10, "determinism (rerun and resume bit-identical)", criterion_determinism},
    };

    Context ctx;
    int failures = 0;
    for (const auto& c : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), c.num) == only.end()) continue;
        std::printf("---- criterion %d: %s\n", c.num, c.name);
        bool pass = false;
        try {
            pass = c.fn(ctx);
        } catch (const std::exception& e) {
            std::printf("  exception: %s\n", e.what());
        }
        std::printf("[%s] criterion %d: %s\n", pass ? "PASS" : "FAIL", c.num, c.name);
        std::fflush(stdout);
        if (!pass) ++failures;
    }
    if (failures) std::printf("%d criterion(s) failed\n", failures);
    return failures == 0 ? 0 : 1;
}
