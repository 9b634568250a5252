#pragma once

// Pose-sequence container, procedural labeled dataset generator, and the PGDS
// binary dataset format with a JSONL export mode.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pgen/config.hpp"
#include "pgen/error.hpp"
#include "pgen/rng.hpp"
#include "pgen/serialize.hpp"
#include "pgen/skeleton.hpp"

namespace pgen {

inline float wrap_angle(float a) {
    // Wrap to (-pi, pi].
    a = std::remainder(a, 2.0f * float(M_PI));
    if (a <= -float(M_PI)) a += 2.0f * float(M_PI);
    return a;
}

struct MotionSequence {
    std::vector<float> theta;  // T * P, radians, wrapped to (-pi, pi]
    std::vector<float> delta;  // T * 3, meters
    int32_t action = 0;
    int32_t pose_dim = 0;
    float fps = 30.0f;

    int64_t length() const { return pose_dim == 0 ? 0 : int64_t(theta.size()) / pose_dim; }

    MotionSequence head(int64_t frames) const {
        MotionSequence out = *this;
        out.theta.assign(theta.begin(), theta.begin() + frames * pose_dim);
        out.delta.assign(delta.begin(), delta.begin() + frames * 3);
        return out;
    }
};

struct GeneratorSpec {
    int classes = 6;
    int train_count = 600;
    int val_count = 100;
    int test_count = 100;
    int t_min = 16;
    int t_max = 64;
    float fps = 30.0f;

    static GeneratorSpec from_config(const Config& cfg) {
        GeneratorSpec s;
        s.classes = int(cfg.get_int("data.classes"));
        s.train_count = int(cfg.get_int("data.train_count"));
        s.val_count = int(cfg.get_int("data.val_count"));
        s.test_count = int(cfg.get_int("data.test_count"));
        s.t_min = int(cfg.get_int("data.t_min"));
        s.t_max = int(cfg.get_int("data.t_max"));
        s.fps = float(cfg.get_float("data.fps"));
        return s;
    }

    void validate() const {
        if (classes < 2) throw ConfigError("generator: need at least 2 action classes");
        if (t_min < 2) throw ConfigError("generator: t_min must be >= 2");
        if (t_max < t_min) throw ConfigError("generator: t_max < t_min");
        if (train_count < classes || val_count < classes || test_count < classes)
            throw ConfigError("generator: every class must appear in every split");
    }
};

struct DatasetSplit {
    std::vector<MotionSequence> train, val, test;
    int32_t classes = 0;
    int32_t pose_dim = 0;
    int32_t joints = 0;
    float fps = 30.0f;
    uint64_t seed = 0;

    const std::vector<MotionSequence>& split(const std::string& name) const {
        if (name == "train") return train;
        if (name == "val") return val;
        if (name == "test") return test;
        throw ConfigError("unknown split: " + name);
    }
};

// ---------------------------------------------------------------------------
// Procedural motion families
// ---------------------------------------------------------------------------

namespace detail {

// Per-class parameters: a frequency band, a sparse joint-amplitude mask, a
// static posture offset, and a root-trajectory template. Classes are spread
// far enough apart that a small classifier separates them comfortably.
struct ClassTemplate {
    float f_lo, f_hi;                 // Hz
    std::vector<float> amp_profile;   // per pose dim
    std::vector<float> offset;        // per pose dim
    int root_kind;                    // 0 still, 1 line-x, 2 circle, 3 line-y, 4 bob, 5 zigzag
};

inline ClassTemplate class_template(int cls, int pose_dim) {
    ClassTemplate t;
    t.f_lo = 0.6f + 0.35f * float(cls);
    t.f_hi = t.f_lo + 0.2f;
    t.amp_profile.resize(size_t(pose_dim));
    t.offset.resize(size_t(pose_dim));
    for (int p = 0; p < pose_dim; ++p) {
        const bool active = ((p * 5 + cls * 7) % 11) < 4;
        // Leaf-joint rotations barely move FK positions, so class identity
        // concentrates on the root/spine dims (low p).
        const float visibility = p < pose_dim / 2 ? 1.0f : 0.5f;
        t.amp_profile[size_t(p)] = (active ? 0.55f : 0.05f) * visibility;
        t.offset[size_t(p)] = 0.6f * visibility * std::sin(0.9f * float(p) + 1.7f * float(cls));
    }
    t.root_kind = cls % 6;
    return t;
}

}  // namespace detail

inline MotionSequence generate_sequence(const Skeleton& skel, int cls, const GeneratorSpec& spec,
                                        Rng rng) {
    const int pose_dim = skel.pose_dim();
    const auto tmpl = detail::class_template(cls, pose_dim);
    MotionSequence seq;
    seq.action = cls;
    seq.pose_dim = pose_dim;
    seq.fps = spec.fps;

    const int64_t frames = rng.uniform_int(spec.t_min, spec.t_max);
    const float freq = float(rng.uniform(tmpl.f_lo, tmpl.f_hi));
    const float amp_jitter = float(rng.uniform(0.8, 1.2));
    std::vector<float> phase(static_cast<size_t>(pose_dim));
    for (auto& p : phase) p = float(rng.uniform(0.0, 2.0 * M_PI));
    const float speed = float(rng.uniform(0.5, 0.9));
    const float radius = float(rng.uniform(0.3, 0.6));
    const float root_phase = float(rng.uniform(0.0, 2.0 * M_PI));

    seq.theta.resize(size_t(frames * pose_dim));
    seq.delta.resize(size_t(frames * 3));
    const float w = 2.0f * float(M_PI) * freq;
    for (int64_t f = 0; f < frames; ++f) {
        const float time = float(f) / spec.fps;
        for (int p = 0; p < pose_dim; ++p) {
            const float a = tmpl.offset[size_t(p)] +
                            amp_jitter * tmpl.amp_profile[size_t(p)] * std::sin(w * time + phase[size_t(p)]);
            seq.theta[size_t(f * pose_dim + p)] = wrap_angle(a);
        }
        float x = 0, y = 0, z = 0;
        switch (tmpl.root_kind) {
            case 0: break;
            case 1: x = speed * time; break;
            case 2:
                x = radius * std::cos(w * 0.5f * time + root_phase) - radius * std::cos(root_phase);
                y = radius * std::sin(w * 0.5f * time + root_phase) - radius * std::sin(root_phase);
                break;
            case 3: y = speed * time; break;
            case 4: z = 0.15f * std::sin(w * time + root_phase); break;
            case 5:
                x = speed * time;
                y = 0.2f * std::sin(w * 0.7f * time + root_phase);
                break;
        }
        seq.delta[size_t(f * 3 + 0)] = x;
        seq.delta[size_t(f * 3 + 1)] = y;
        seq.delta[size_t(f * 3 + 2)] = z;
    }
    return seq;
}

// Pure function of (spec, seed): split streams are derived from disjoint
// tags so the three splits never share a draw.
inline DatasetSplit generate_dataset(const GeneratorSpec& spec, uint64_t seed,
                                     const Skeleton& skel = Skeleton::default_skeleton()) {
    spec.validate();
    skel.validate();
    DatasetSplit ds;
    ds.classes = spec.classes;
    ds.pose_dim = skel.pose_dim();
    ds.joints = skel.joints();
    ds.fps = spec.fps;
    ds.seed = seed;
    Rng master(seed);
    auto fill = [&](std::vector<MotionSequence>& out, int count, uint64_t split_tag) {
        Rng stream = master.split(split_tag);
        out.reserve(size_t(count));
        for (int i = 0; i < count; ++i) {
            const int cls = i % spec.classes;  // round-robin keeps splits class-balanced
            out.push_back(generate_sequence(skel, cls, spec, stream.split(uint64_t(i))));
        }
    };
    fill(ds.train, spec.train_count, 1);
    fill(ds.val, spec.val_count, 2);
    fill(ds.test, spec.test_count, 3);
    return ds;
}

// ---------------------------------------------------------------------------
// PGDS file format
// ---------------------------------------------------------------------------

inline void save_dataset(const DatasetSplit& ds, const std::string& path) {
    ByteWriter w;
    w.raw(reinterpret_cast<const uint8_t*>("PGDS"), 4);
    w.u32(kFormatVersion);
    w.u16(uint16_t(ds.classes));
    w.u16(uint16_t(ds.pose_dim));
    w.u16(uint16_t(ds.joints));
    w.f32(ds.fps);
    w.u64(ds.seed);
    w.u32(uint32_t(ds.train.size()));
    w.u32(uint32_t(ds.val.size()));
    w.u32(uint32_t(ds.test.size()));
    auto write_seqs = [&](const std::vector<MotionSequence>& seqs) {
        for (const auto& s : seqs) {
            w.u16(uint16_t(s.action));
            w.u32(uint32_t(s.length()));
            w.f32_array(s.theta.data(), s.theta.size());
            w.f32_array(s.delta.data(), s.delta.size());
        }
    };
    write_seqs(ds.train);
    write_seqs(ds.val);
    write_seqs(ds.test);
    w.append_crc();
    w.write_file(path);
}

inline DatasetSplit load_dataset(const std::string& path) {
    ByteReader r = ByteReader::from_file(path);
    r.check_crc("dataset " + path);
    char magic[5] = {0};
    for (int i = 0; i < 4; ++i) magic[i] = char(r.u8());
    if (std::string(magic) != "PGDS") throw FormatError("dataset " + path + ": bad magic");
    check_version(r.u32(), "dataset " + path);
    DatasetSplit ds;
    ds.classes = r.u16();
    ds.pose_dim = r.u16();
    ds.joints = r.u16();
    ds.fps = r.f32();
    ds.seed = r.u64();
    const uint32_t n_train = r.u32();
    const uint32_t n_val = r.u32();
    const uint32_t n_test = r.u32();
    auto read_seqs = [&](std::vector<MotionSequence>& out, uint32_t n) {
        out.resize(n);
        for (auto& s : out) {
            s.action = r.u16();
            const uint32_t frames = r.u32();
            s.pose_dim = ds.pose_dim;
            s.fps = ds.fps;
            s.theta.resize(size_t(frames) * size_t(ds.pose_dim));
            s.delta.resize(size_t(frames) * 3);
            r.f32_array(s.theta.data(), s.theta.size());
            r.f32_array(s.delta.data(), s.delta.size());
        }
    };
    read_seqs(ds.train, n_train);
    read_seqs(ds.val, n_val);
    read_seqs(ds.test, n_test);
    return ds;
}

// ---------------------------------------------------------------------------
// JSONL export (one sequence per line)
// ---------------------------------------------------------------------------

inline nlohmann::json sequence_to_json(const MotionSequence& s) {
    nlohmann::json j;
    j["action"] = s.action;
    j["fps"] = s.fps;
    auto theta = nlohmann::json::array();
    auto delta = nlohmann::json::array();
    for (int64_t f = 0; f < s.length(); ++f) {
        auto row = nlohmann::json::array();
        for (int p = 0; p < s.pose_dim; ++p) row.push_back(s.theta[size_t(f * s.pose_dim + p)]);
        theta.push_back(std::move(row));
        delta.push_back({s.delta[size_t(f * 3)], s.delta[size_t(f * 3 + 1)], s.delta[size_t(f * 3 + 2)]});
    }
    j["theta"] = std::move(theta);
    j["delta"] = std::move(delta);
    return j;
}

inline void export_jsonl(const DatasetSplit& ds, const std::string& path) {
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw FormatError("cannot open for writing: " + path);
    for (const char* name : {"train", "val", "test"}) {
        for (const auto& s : ds.split(name)) {
            nlohmann::json j = sequence_to_json(s);
            j["split"] = name;
            out << j.dump() << "\n";
        }
    }
}

}  // namespace pgen
