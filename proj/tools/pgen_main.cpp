// pgen: two-stage generative pipeline for pose sequences.
// Subcommands: gen-data, train-codec, train-gpt, sample, evaluate, sweep,
// drift, export-jsonl. Exit codes: 0 ok, 2 config/format error, 3
// staging/compatibility error, 4 numerical failure.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pgen/evaluate.hpp"
#include "pgen/harness.hpp"

namespace fs = std::filesystem;
using namespace pgen;

namespace {

// Relative output paths resolve under PGEN_OUT_ROOT when it is set.
std::string out_path(const std::string& p) {
    const char* root = std::getenv("PGEN_OUT_ROOT");
    if (!root || *root == '\0' || fs::path(p).is_absolute()) return p;
    fs::create_directories(root);
    return (fs::path(root) / p).string();
}

Config load_config(const std::string& path, const std::vector<std::string>& overrides) {
    Config cfg = path.empty() ? Config() : Config::from_file(path);
    for (const auto& kv : overrides) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + kv + "'");
        cfg.set(kv.substr(0, eq), kv.substr(eq + 1));
    }
    return cfg;
}

void write_motion_jsonl(const std::vector<MotionSequence>& motions, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path);
    for (const auto& m : motions) out << sequence_to_json(m).dump() << "\n";
}

void write_index_sidecar(const std::vector<IndexSequence>& grids, int k, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path);
    for (const auto& g : grids) {
        nlohmann::json j;
        j["action"] = g.action;
        j["frames"] = g.frames;
        auto rows = nlohmann::json::array();
        const int64_t td = g.steps(k);
        for (int64_t t = 0; t < td; ++t) {
            auto row = nlohmann::json::array();
            for (int f = 0; f < k; ++f) row.push_back(g.indices[size_t(t * k + f)]);
            rows.push_back(std::move(row));
        }
        j["indices"] = std::move(rows);
        out << j.dump() << "\n";
    }
}

MotionSequence read_motion_jsonl(const std::string& path, int expected_pose_dim) {
    std::ifstream in(path);
    if (!in) throw FormatError("cannot open motion file: " + path);
    std::string line;
    if (!std::getline(in, line)) throw FormatError("empty motion file: " + path);
    auto j = nlohmann::json::parse(line);
    MotionSequence m;
    m.action = j.value("action", 0);
    m.fps = j.value("fps", 30.0f);
    const auto& theta = j.at("theta");
    const auto& delta = j.at("delta");
    if (theta.empty()) throw FormatError("motion file has no frames: " + path);
    m.pose_dim = int32_t(theta[0].size());
    if (expected_pose_dim > 0 && m.pose_dim != expected_pose_dim)
        throw StagingError("motion file pose dim " + std::to_string(m.pose_dim) +
                           " does not match the codec's " + std::to_string(expected_pose_dim));
    for (const auto& row : theta)
        for (const auto& v : row) m.theta.push_back(v.get<float>());
    for (const auto& row : delta)
        for (const auto& v : row) m.delta.push_back(v.get<float>());
    return m;
}

void write_csv(const std::string& path, const std::string& header,
               const std::vector<std::string>& rows) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot write " + path);
    out << header << "\n";
    for (const auto& r : rows) out << r << "\n";
}

struct LoadedStages {
    CodecBundle codec;
    GptBundle gpt;
};

LoadedStages load_stages(const std::string& gpt_path, const std::string& codec_path) {
    LoadedStages s{codec_from_checkpoint(load_checkpoint(codec_path)),
                   gpt_from_checkpoint(load_checkpoint(gpt_path))};
    check_stage_compat(s.gpt, s.codec);
    return s;
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

int cmd_gen_data(const Config& cfg, uint64_t seed, const std::string& out, bool force,
                 const std::string& jsonl) {
    const std::string path = out_path(out);
    if (fs::exists(path) && !force)
        throw ConfigError("output exists (use --force to overwrite): " + path);
    DatasetSplit ds = generate_dataset(GeneratorSpec::from_config(cfg), seed);
    save_dataset(ds, path);
    std::vector<int> counts(static_cast<size_t>(ds.classes), 0);
    for (const auto& s : ds.train) counts[size_t(s.action)]++;
    std::printf("wrote %s: %zu train / %zu val / %zu test, %d classes\n", path.c_str(),
                ds.train.size(), ds.val.size(), ds.test.size(), ds.classes);
    for (int c = 0; c < ds.classes; ++c)
        std::printf("  class %d: %d train sequences\n", c, counts[size_t(c)]);
    if (!jsonl.empty()) {
        export_jsonl(ds, out_path(jsonl));
        std::printf("exported JSONL to %s\n", out_path(jsonl).c_str());
    }
    return 0;
}

int cmd_train_codec(Config cfg, const std::string& data, const std::string& out, int64_t steps,
                    const std::string& resume, const std::string& curve_path, bool cfg_given) {
    DatasetSplit ds = load_dataset(data);
    CodecBundle bundle =
        resume.empty() ? build_codec(cfg, ds) : codec_from_checkpoint(load_checkpoint(resume));
    if (!resume.empty() && cfg_given) {
        Config requested = cfg;
        record_derived_keys(requested, ds);
        if (bundle.cfg.hash() != requested.hash())
            throw StagingError(
                "train-codec --resume: checkpoint config does not match the requested config");
    }
    const std::string path = out_path(out);
    auto save_now = [&](int64_t step) {
        save_checkpoint(path, codec_checkpoint(bundle));
        std::printf("[train-codec] step %lld: checkpoint -> %s\n", (long long)step, path.c_str());
    };
    auto curve = train_codec_steps(bundle, ds.train, steps, save_now);
    save_checkpoint(path, codec_checkpoint(bundle));

    if (!curve_path.empty()) {
        std::vector<std::string> rows;
        for (const auto& r : curve) {
            char buf[256];
            std::snprintf(buf, sizeof buf, "%lld,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g", (long long)r.step,
                          r.total, r.recon_theta, r.recon_root, r.fk, r.codebook, r.commit);
            rows.emplace_back(buf);
        }
        write_csv(out_path(curve_path), "step,total,recon_theta,recon_root,fk,codebook,commit",
                  rows);
    }
    const double val = split_pve(bundle, ds.val);
    std::printf("[train-codec] done at step %lld, val pve %.2f mm -> %s\n", (long long)bundle.step,
                val, path.c_str());
    EvalReport stub;
    stub.pve_mm = val;
    stub.split = "val";
    stub.seed = uint64_t(bundle.cfg.get_int("train.seed"));
    stub.config_hash = hash_hex(bundle.cfg.hash());
    stub.save(path + ".report.txt");
    return 0;
}

int cmd_train_gpt(Config cfg, const std::string& data, const std::string& codec_path,
                  const std::string& out, int64_t steps, const std::string& resume,
                  const std::string& curve_path) {
    if (codec_path.empty())
        throw StagingError("train-gpt requires a frozen codec checkpoint (--codec); train one first");
    DatasetSplit ds = load_dataset(data);
    CodecBundle codec = codec_from_checkpoint(load_checkpoint(codec_path));
    GptBundle bundle =
        resume.empty() ? build_gpt(cfg, codec) : gpt_from_checkpoint(load_checkpoint(resume));
    check_stage_compat(bundle, codec);

    auto encoded = encode_split(codec, ds.train);
    const std::string path = out_path(out);
    auto save_now = [&](int64_t step) {
        save_checkpoint(path, gpt_checkpoint(bundle));
        std::printf("[train-gpt] step %lld: checkpoint -> %s\n", (long long)step, path.c_str());
    };
    auto curve = train_gpt_steps(bundle, encoded, steps, save_now);
    save_checkpoint(path, gpt_checkpoint(bundle));

    if (!curve_path.empty()) {
        std::vector<std::string> rows;
        for (const auto& r : curve) {
            char buf[128];
            std::snprintf(buf, sizeof buf, "%lld,%.6g", (long long)r.step, r.bits_per_dim);
            rows.emplace_back(buf);
        }
        write_csv(out_path(curve_path), "step,bits_per_dim", rows);
    }
    auto val_idx = encode_split(codec, ds.val);
    auto nll = dataset_nll(bundle, val_idx);
    std::printf("[train-gpt] done at step %lld, val %.3f bits/dim, %.1f bits/seq -> %s\n",
                (long long)bundle.step, nll.bits_per_dim, nll.bits_per_seq, path.c_str());
    EvalReport stub;
    stub.gpt_bits_per_seq = nll.bits_per_seq;
    stub.gpt_bits_per_dim = nll.bits_per_dim;
    stub.split = "val";
    stub.seed = uint64_t(bundle.cfg.get_int("train.seed"));
    stub.config_hash = hash_hex(bundle.cfg.hash());
    stub.save(path + ".report.txt");
    return 0;
}

int cmd_sample(const std::string& gpt_path, const std::string& codec_path, int action,
               int64_t length, double temperature, const std::string& observe, int64_t n,
               uint64_t seed, const std::string& out) {
    auto stages = load_stages(gpt_path, codec_path);
    MotionSequence observed;
    int64_t observe_frames = 0;
    if (!observe.empty()) {
        const auto colon = observe.rfind(':');
        if (colon == std::string::npos)
            throw ConfigError("--observe expects file:frames, got '" + observe + "'");
        const std::string file = observe.substr(0, colon);
        observe_frames = std::stoll(observe.substr(colon + 1));
        observed = read_motion_jsonl(file, stages.codec.codec.config().pose_dim);
        if (observe_frames > observed.length())
            throw ConfigError("--observe frames " + std::to_string(observe_frames) +
                              " exceed the file's " + std::to_string(observed.length()));
    }
    const int classes = int(stages.gpt.cfg.get_int("derived.classes"));
    if (action < 0 || action >= classes)
        throw ConfigError("--action must be in [0, " + std::to_string(classes) + ")");

    std::vector<MotionSequence> motions;
    std::vector<IndexSequence> grids;
    Rng master(seed);
    for (int64_t i = 0; i < n; ++i) {
        Rng rng = master.split(uint64_t(i));
        SampleRequest req{int32_t(action), length};
        std::vector<int32_t> grid;
        MotionSequence m =
            sample_motion(stages.gpt.gpt, stages.codec, req, float(temperature), rng,
                          observe_frames > 0 ? &observed : nullptr, observe_frames, &grid);
        IndexSequence is;
        is.indices = std::move(grid);
        is.action = int32_t(action);
        is.frames = length;
        grids.push_back(std::move(is));
        motions.push_back(std::move(m));
    }
    const std::string base = out_path(out);
    write_motion_jsonl(motions, base + ".jsonl");
    write_index_sidecar(grids, stages.codec.books.k, base + ".indices.jsonl");
    std::printf("wrote %lld samples -> %s.jsonl (+ index sidecar)\n", (long long)n, base.c_str());
    return 0;
}

int cmd_evaluate(const std::string& gpt_path, const std::string& codec_path,
                 const std::string& data, int64_t n_samples, uint64_t seed, double temperature,
                 int64_t observe_frames, bool self_debug, const std::string& out) {
    auto stages = load_stages(gpt_path, codec_path);
    DatasetSplit ds = load_dataset(data);
    EvalOptions opt;
    opt.n_samples = n_samples;
    opt.seed = seed;
    opt.temperature = float(temperature);
    opt.self_debug = self_debug;
    opt.observe_frames = observe_frames;
    EvalReport rep = evaluate_pipeline(stages.gpt, stages.codec, ds, opt);
    std::printf("%s", rep.to_text().c_str());
    if (!out.empty()) {
        rep.save(out_path(out));
        std::printf("report -> %s\n", out_path(out).c_str());
    }
    return 0;
}

int cmd_drift(const std::string& gpt_path, const std::string& codec_path, const std::string& data,
              int iters, int n_per_iter, int64_t frames, int64_t observe_frames, double temperature,
              uint64_t seed, const std::string& out) {
    auto stages = load_stages(gpt_path, codec_path);
    DatasetSplit ds = load_dataset(data);
    auto t_clf = fit_classifier(stages.codec.cfg, stages.codec.skel, ds.train, &ds.val, ds.classes,
                                seed + 101, "T");
    auto fids = drift_probe(stages.gpt, stages.codec, ds, t_clf.clf, iters, n_per_iter, frames,
                            observe_frames, float(temperature), seed);
    std::vector<std::string> rows;
    for (size_t i = 0; i < fids.size(); ++i) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%zu,%.6g", i + 1, fids[i]);
        rows.emplace_back(buf);
        std::printf("iteration %zu: fid %.4f\n", i + 1, fids[i]);
    }
    if (!out.empty()) write_csv(out_path(out), "iteration,fid", rows);
    return 0;
}

int cmd_sweep(Config base, const std::string& axis, const std::vector<std::string>& values,
              const std::string& data, int64_t codec_steps, int64_t gpt_steps, int64_t n_samples,
              uint64_t seed, const std::string& out_dir) {
    static const std::vector<std::string> axes = {"k",          "c",    "r",           "embedding",
                                                  "head",       "temperature", "observe-len"};
    if (std::find(axes.begin(), axes.end(), axis) == axes.end())
        throw ConfigError("sweep: unknown axis '" + axis + "'");
    DatasetSplit ds = load_dataset(data);
    const std::string dir = out_path(out_dir);
    fs::create_directories(dir);

    const bool retrain_codec = axis == "k" || axis == "c" || axis == "r";
    const bool retrain_gpt = retrain_codec || axis == "embedding" || axis == "head";

    CodecBundle shared_codec;
    GptBundle shared_gpt;
    if (!retrain_codec) {
        std::printf("[sweep] training shared codec (%lld steps)\n", (long long)codec_steps);
        shared_codec = build_codec(base, ds);
        train_codec_steps(shared_codec, ds.train, codec_steps);
        if (!retrain_gpt) {
            std::printf("[sweep] training shared gpt (%lld steps)\n", (long long)gpt_steps);
            shared_gpt = build_gpt(base, shared_codec);
            auto encoded = encode_split(shared_codec, ds.train);
            train_gpt_steps(shared_gpt, encoded, gpt_steps);
        }
    }

    std::vector<std::string> rows;
    for (const auto& value : values) {
        Config cfg = base;
        EvalOptions opt;
        opt.n_samples = n_samples;
        opt.seed = seed;
        if (axis == "k") cfg.set("quant.k", value);
        if (axis == "c") cfg.set("quant.c", value);
        if (axis == "r") cfg.set("codec.r", value);
        if (axis == "embedding") cfg.set("gpt.embedding", value);
        if (axis == "head") cfg.set("gpt.head", value);
        if (axis == "temperature") opt.temperature = std::stof(value);
        if (axis == "observe-len") opt.observe_frames = std::stoll(value);

        std::printf("[sweep] %s = %s\n", axis.c_str(), value.c_str());
        CodecBundle* codec = &shared_codec;
        GptBundle* gpt = &shared_gpt;
        CodecBundle local_codec;
        GptBundle local_gpt;
        if (retrain_codec) {
            local_codec = build_codec(cfg, ds);
            train_codec_steps(local_codec, ds.train, codec_steps);
            codec = &local_codec;
        }
        if (retrain_gpt) {
            local_gpt = build_gpt(cfg, *codec);
            auto encoded = encode_split(*codec, ds.train);
            train_gpt_steps(local_gpt, encoded, gpt_steps);
            gpt = &local_gpt;
        }
        EvalReport rep = evaluate_pipeline(*gpt, *codec, ds, opt);
        const int64_t t_d = codec->codec.config().latent_steps(base.get_int("data.t_max"));
        const double cap = capacity_bits(t_d, codec->books.k, codec->books.total_c);
        char buf[512];
        std::snprintf(buf, sizeof buf, "%s,%s,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g,%.6g",
                      axis.c_str(), value.c_str(), cap, rep.pve_mm, rep.fid, rep.r_t, rep.r_s,
                      rep.gpt_bits_per_seq, rep.gpt_bits_per_dim, rep.gpt_acc);
        rows.emplace_back(buf);
        rep.save(dir + "/report_" + axis + "_" + value + ".txt");
    }
    write_csv(dir + "/sweep_" + axis + ".csv",
              "axis,value,capacity_bits,pve,fid,r_t,r_s,gpt_bits_per_seq,gpt_bits_per_dim,gpt_acc",
              rows);
    std::printf("[sweep] wrote %s/sweep_%s.csv\n", dir.c_str(), axis.c_str());
    return 0;
}

int cmd_export_jsonl(const std::string& data, const std::string& out) {
    DatasetSplit ds = load_dataset(data);
    export_jsonl(ds, out_path(out));
    std::printf("exported %s -> %s\n", data.c_str(), out_path(out).c_str());
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"pgen: quantized-latent generative pipeline for pose sequences"};
    app.require_subcommand(1);

    std::string config_path, data, out, codec_path, gpt_path, resume, curve, observe, jsonl, axis;
    std::vector<std::string> overrides, values;
    uint64_t seed = 1;
    int64_t steps = -1, n = 1, length = 64, n_samples = -1, observe_frames = 0;
    int action = 0, iters = 8, n_per_iter = 64;
    int64_t sweep_gpt_steps = -1;
    double temperature = 1.0;
    bool force = false, self_debug = false;

    auto add_common = [&](CLI::App* cmd) {
        cmd->add_option("--config", config_path, "config file (flat dotted keys)");
        cmd->add_option("--set", overrides, "config override key=value (repeatable)");
    };

    auto* gen = app.add_subcommand("gen-data", "generate the labeled synthetic dataset");
    add_common(gen);
    gen->add_option("--spec", config_path, "generator spec file (alias of --config)");
    gen->add_option("--seed", seed, "generator seed");
    gen->add_option("--out", out, "output dataset path")->required();
    gen->add_flag("--force", force, "overwrite an existing file");
    gen->add_option("--jsonl", jsonl, "also export JSONL to this path");
    std::string classes_override;
    gen->add_option("--classes", classes_override, "class count shorthand");

    auto* tc = app.add_subcommand("train-codec", "stage 1: train the motion codec + quantizer");
    add_common(tc);
    tc->add_option("--data", data, "dataset file")->required();
    tc->add_option("--out", out, "checkpoint path")->required();
    tc->add_option("--steps", steps, "training steps (default train.codec_steps)");
    tc->add_option("--seed", seed, "training seed (sets train.seed)");
    tc->add_option("--resume", resume, "resume from this checkpoint");
    tc->add_option("--curve", curve, "write the loss curve CSV here");

    auto* tg = app.add_subcommand("train-gpt", "stage 2: train the next-index model");
    add_common(tg);
    tg->add_option("--data", data, "dataset file")->required();
    tg->add_option("--codec", codec_path, "frozen codec checkpoint");
    tg->add_option("--out", out, "checkpoint path")->required();
    tg->add_option("--steps", steps, "training steps (default train.gpt_steps)");
    tg->add_option("--seed", seed, "training seed");
    tg->add_option("--resume", resume, "resume from this checkpoint");
    tg->add_option("--curve", curve, "write the loss curve CSV here");

    auto* sa = app.add_subcommand("sample", "draw motions from trained checkpoints");
    sa->add_option("--gpt", gpt_path, "gpt checkpoint")->required();
    sa->add_option("--codec", codec_path, "codec checkpoint")->required();
    sa->add_option("--action", action, "action class id")->required();
    sa->add_option("--length", length, "frames per sample")->required();
    sa->add_option("--temperature", temperature, "softmax temperature (0 = argmax)");
    sa->add_option("--observe", observe, "file:frames observed motion prefix");
    sa->add_option("--n", n, "number of samples");
    sa->add_option("--seed", seed, "sampling seed");
    sa->add_option("--out", out, "output basename (.jsonl and .indices.jsonl)")->required();

    auto* ev = app.add_subcommand("evaluate", "full evaluation protocol on a dataset");
    ev->add_option("--gpt", gpt_path, "gpt checkpoint")->required();
    ev->add_option("--codec", codec_path, "codec checkpoint")->required();
    ev->add_option("--data", data, "dataset file")->required();
    ev->add_option("--n-samples", n_samples, "samples to draw (default eval.n_samples)");
    ev->add_option("--seed", seed, "evaluation seed");
    ev->add_option("--temperature", temperature, "sampling temperature");
    ev->add_option("--observe-frames", observe_frames, "condition samples on test prefixes");
    ev->add_flag("--self-debug", self_debug, "score real test data as samples");
    ev->add_option("--out", out, "report file path");

    auto* dr = app.add_subcommand("drift", "iterated self-conditioning drift probe");
    dr->add_option("--gpt", gpt_path, "gpt checkpoint")->required();
    dr->add_option("--codec", codec_path, "codec checkpoint")->required();
    dr->add_option("--data", data, "dataset file")->required();
    dr->add_option("--iters", iters, "number of iterations")->required();
    dr->add_option("--n", n_per_iter, "samples per iteration");
    dr->add_option("--frames", length, "frames per sample");
    dr->add_option("--observe-frames", observe_frames, "conditioning tail length (frames)");
    dr->add_option("--temperature", temperature, "sampling temperature");
    dr->add_option("--seed", seed, "probe seed");
    dr->add_option("--out", out, "CSV output path");

    auto* sw = app.add_subcommand("sweep", "ablation sweep over one axis");
    add_common(sw);
    sw->add_option("--axis", axis, "k|c|r|embedding|head|temperature|observe-len")->required();
    sw->add_option("--values", values, "axis values")->required()->delimiter(',');
    sw->add_option("--data", data, "dataset file")->required();
    sw->add_option("--codec-steps", steps, "codec steps per run (default train.codec_steps)");
    sw->add_option("--gpt-steps", sweep_gpt_steps, "gpt steps per run (default train.gpt_steps)");
    sw->add_option("--n-samples", n_samples, "samples per evaluation");
    sw->add_option("--seed", seed, "seed");
    sw->add_option("--out", out, "output directory")->required();

    auto* ex = app.add_subcommand("export-jsonl", "dump a dataset as JSONL");
    ex->add_option("--data", data, "dataset file")->required();
    ex->add_option("--out", out, "output path")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 2;
    }

    try {
        if (gen->parsed()) {
            if (!classes_override.empty()) overrides.push_back("data.classes=" + classes_override);
            Config cfg = load_config(config_path, overrides);
            return cmd_gen_data(cfg, seed, out, force, jsonl);
        }
        if (tc->parsed()) {
            Config cfg = load_config(config_path, overrides);
            if (tc->count("--seed")) cfg.set("train.seed", std::to_string(seed));
            const int64_t run_steps = steps >= 0 ? steps : cfg.get_int("train.codec_steps");
            const bool cfg_given = !config_path.empty() || !overrides.empty() || tc->count("--seed");
            return cmd_train_codec(cfg, data, out, run_steps, resume, curve, cfg_given);
        }
        if (tg->parsed()) {
            Config cfg = load_config(config_path, overrides);
            if (tg->count("--seed")) cfg.set("train.seed", std::to_string(seed));
            const int64_t run_steps = steps >= 0 ? steps : cfg.get_int("train.gpt_steps");
            return cmd_train_gpt(cfg, data, codec_path, out, run_steps, resume, curve);
        }
        if (sa->parsed())
            return cmd_sample(gpt_path, codec_path, action, length, temperature, observe, n, seed,
                              out);
        if (ev->parsed()) {
            Config defaults;
            const int64_t ns = n_samples >= 0 ? n_samples : defaults.get_int("eval.n_samples");
            return cmd_evaluate(gpt_path, codec_path, data, ns, seed, temperature, observe_frames,
                                self_debug, out);
        }
        if (dr->parsed())
            return cmd_drift(gpt_path, codec_path, data, iters, n_per_iter, length, observe_frames,
                             temperature, seed, out);
        if (sw->parsed()) {
            Config cfg = load_config(config_path, overrides);
            const int64_t cs = steps >= 0 ? steps : cfg.get_int("train.codec_steps");
            const int64_t gs =
                sweep_gpt_steps >= 0 ? sweep_gpt_steps : cfg.get_int("train.gpt_steps");
            const int64_t ns = n_samples >= 0 ? n_samples : cfg.get_int("eval.n_samples");
            return cmd_sweep(cfg, axis, values, data, cs, gs, ns, seed, out);
        }
        if (ex->parsed()) return cmd_export_jsonl(data, out);
    } catch (const StagingError& e) {
        std::fprintf(stderr, "staging error: %s\n", e.what());
        return 3;
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return 4;
    } catch (const ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 2;
    } catch (const FormatError& e) {
        std::fprintf(stderr, "format error: %s\n", e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
    return 0;
}
