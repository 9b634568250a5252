#pragma once

// The full evaluation protocol: reconstruction error on the test split, test
// NLL of the density model, classifier-based sample metrics (FID, accuracy
// ratios, diversity/multimodality), and the iterated self-conditioning drift
// probe. Sub-metric failures mark their keys with the -1 sentinel and the
// run continues.

#include <cstdio>
#include <string>
#include <vector>

#include "pgen/classifier.hpp"
#include "pgen/harness.hpp"
#include "pgen/metrics.hpp"

namespace pgen {

struct TrainedClassifier {
    ActionClassifier clf;
    double val_acc = 0.0;
};

inline std::vector<std::vector<float>> features_of(const Skeleton& skel,
                                                   const std::vector<MotionSequence>& seqs) {
    std::vector<std::vector<float>> out;
    out.reserve(seqs.size());
    for (const auto& s : seqs) out.push_back(classifier_features(skel, s));
    return out;
}

inline std::vector<int32_t> labels_of(const std::vector<MotionSequence>& seqs) {
    std::vector<int32_t> out;
    out.reserve(seqs.size());
    for (const auto& s : seqs) out.push_back(s.action);
    return out;
}

// Train an action classifier on arbitrary labeled sequences; a deterministic
// tail of the data becomes the early-stopping validation set when no explicit
// validation sequences are supplied.
inline TrainedClassifier fit_classifier(const Config& cfg, const Skeleton& skel,
                                        const std::vector<MotionSequence>& train,
                                        const std::vector<MotionSequence>* val, int classes,
                                        uint64_t seed, const std::string& tag) {
    ClassifierConfig ccfg = ClassifierConfig::from_config(cfg, (skel.joints() - 1) * 3, classes);
    Rng rng(seed);
    TrainedClassifier out{ActionClassifier::init(ccfg, rng, tag), 0.0};

    std::vector<std::vector<float>> train_feats, val_feats;
    std::vector<int32_t> train_labels, val_labels;
    if (val) {
        train_feats = features_of(skel, train);
        train_labels = labels_of(train);
        val_feats = features_of(skel, *val);
        val_labels = labels_of(*val);
    } else {
        const size_t holdout = std::max<size_t>(classes, train.size() / 7);
        for (size_t i = 0; i < train.size(); ++i) {
            auto feats = classifier_features(skel, train[i]);
            if (i + holdout >= train.size()) {
                val_feats.push_back(std::move(feats));
                val_labels.push_back(train[i].action);
            } else {
                train_feats.push_back(std::move(feats));
                train_labels.push_back(train[i].action);
            }
        }
    }
    auto res = train_classifier(out.clf, train_feats, train_labels, val_feats, val_labels,
                                seed ^ 0x5eedf00dull);
    out.val_acc = res.best_val_acc;
    return out;
}

inline double classifier_accuracy(const ActionClassifier& clf, const Skeleton& skel,
                                  const std::vector<MotionSequence>& seqs) {
    if (seqs.empty()) return 0.0;
    int hits = 0;
    const size_t bsz = 16;
    for (size_t off = 0; off < seqs.size(); off += bsz) {
        std::vector<std::vector<float>> feats;
        std::vector<const std::vector<float>*> ptrs;
        std::vector<int32_t> labels;
        for (size_t i = off; i < std::min(seqs.size(), off + bsz); ++i) {
            feats.push_back(classifier_features(skel, seqs[i]));
            labels.push_back(seqs[i].action);
        }
        for (const auto& f : feats) ptrs.push_back(&f);
        auto pred = clf.predict(ptrs);
        for (size_t i = 0; i < pred.size(); ++i) hits += pred[i] == labels[i];
    }
    return double(hits) / double(seqs.size());
}

inline FeatureSet classifier_feature_set(const ActionClassifier& clf, const Skeleton& skel,
                                         const std::vector<MotionSequence>& seqs) {
    std::vector<std::vector<float>> rows;
    rows.reserve(seqs.size());
    const size_t bsz = 16;
    for (size_t off = 0; off < seqs.size(); off += bsz) {
        std::vector<std::vector<float>> feats;
        std::vector<const std::vector<float>*> ptrs;
        for (size_t i = off; i < std::min(seqs.size(), off + bsz); ++i)
            feats.push_back(classifier_features(skel, seqs[i]));
        for (const auto& f : feats) ptrs.push_back(&f);
        Tensor emb = clf.feature_batch(ptrs);
        for (int64_t r = 0; r < emb.dim(0); ++r) {
            std::vector<float> row(static_cast<size_t>(emb.dim(1)));
            std::copy(emb.data() + r * emb.dim(1), emb.data() + (r + 1) * emb.dim(1), row.begin());
            rows.push_back(std::move(row));
        }
    }
    return FeatureSet::from_rows(rows);
}

// (action, frames) pairs mirroring the label/length distribution of a split.
inline std::vector<SampleRequest> requests_matching_split(const std::vector<MotionSequence>& split,
                                                          int64_t n, uint64_t seed) {
    Rng rng(seed);
    std::vector<SampleRequest> out;
    out.reserve(size_t(n));
    for (int64_t i = 0; i < n; ++i) {
        const auto& pick = split[size_t(rng.uniform_int(uint64_t(split.size())))];
        out.push_back({pick.action, pick.length()});
    }
    return out;
}

struct EvalOptions {
    int64_t n_samples = 1000;
    float temperature = 1.0f;
    uint64_t seed = 1;
    int64_t observe_frames = 0;  // condition each sample on a test prefix of this length
    bool self_debug = false;     // score real test data as if it were samples
    bool quiet = false;
};

inline EvalReport evaluate_pipeline(GptBundle& gpt, CodecBundle& codec, const DatasetSplit& ds,
                                    const EvalOptions& opt) {
    check_stage_compat(gpt, codec);
    const Config& cfg = codec.cfg;
    EvalReport rep;
    rep.split = "test";
    rep.seed = opt.seed;
    rep.config_hash = hash_hex(gpt.cfg.hash());
    auto note = [&](const char* what) {
        if (!opt.quiet) std::printf("[evaluate] %s\n", what);
    };

    // Reconstruction error of the frozen codec on unseen data.
    try {
        note("codec reconstruction (pve)");
        rep.pve_mm = split_pve(codec, ds.test);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "[evaluate] pve failed: %s\n", e.what());
        rep.pve_mm = -1.0;
    }

    // Compression cost of encoded test sequences.
    std::vector<IndexSequence> test_idx;
    try {
        note("test NLL of the density model");
        test_idx = encode_split(codec, ds.test);
        auto nll = dataset_nll(gpt, test_idx);
        rep.gpt_bits_per_seq = nll.bits_per_seq;
        rep.gpt_bits_per_dim = nll.bits_per_dim;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "[evaluate] nll failed: %s\n", e.what());
        rep.gpt_bits_per_seq = rep.gpt_bits_per_dim = -1.0;
    }
    try {
        auto val_idx = encode_split(codec, ds.val);
        rep.gpt_acc = dataset_gpt_accuracy(gpt, val_idx);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "[evaluate] gpt-acc failed: %s\n", e.what());
        rep.gpt_acc = -1.0;
    }

    // Samples mirroring the test label/length distribution; optionally
    // conditioned on observed test prefixes.
    std::vector<MotionSequence> samples;
    try {
        note("drawing samples");
        if (opt.self_debug) {
            samples = ds.test;
        } else if (opt.observe_frames > 0) {
            Rng pick_rng(opt.seed ^ 0xabcdull);
            Rng master(opt.seed);
            for (int64_t i = 0; i < opt.n_samples; ++i) {
                const auto& ref = ds.test[size_t(pick_rng.uniform_int(uint64_t(ds.test.size())))];
                const int64_t obs = std::min<int64_t>(opt.observe_frames, ref.length());
                Rng rng = master.split(uint64_t(i));
                SampleRequest req{ref.action, ref.length()};
                samples.push_back(sample_motion(gpt.gpt, codec, req, opt.temperature, rng, &ref, obs));
            }
        } else {
            auto reqs = requests_matching_split(ds.test, opt.n_samples, opt.seed ^ 0xabcdull);
            samples = sample_motions(gpt.gpt, codec, reqs, opt.temperature, opt.seed);
        }
        rep.sample_count = int64_t(samples.size());
    } catch (const std::exception& e) {
        std::fprintf(stderr, "[evaluate] sampling failed: %s\n", e.what());
        rep.sample_count = 0;
    }

    // Classifier T on real train data.
    TrainedClassifier t_clf;
    bool have_t = false;
    try {
        note("training classifier T on real data");
        t_clf = fit_classifier(cfg, codec.skel, ds.train, &ds.val, ds.classes, opt.seed + 101, "T");
        have_t = true;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "[evaluate] classifier T failed: %s\n", e.what());
    }

    if (have_t) {
        try {
            rep.acc_t_test = classifier_accuracy(t_clf.clf, codec.skel, ds.test);
            if (!samples.empty())
                rep.acc_t_samples = classifier_accuracy(t_clf.clf, codec.skel, samples);
            auto rt = r_t_ratio(rep.acc_t_test, rep.acc_t_samples);
            rep.r_t = rt ? *rt : -1.0;
            auto rti = r_t_ratio(rep.acc_t_samples, rep.acc_t_test);
            rep.r_t_inverse = rti ? *rti : -1.0;
        } catch (const std::exception& e) {
            std::fprintf(stderr, "[evaluate] r_t failed: %s\n", e.what());
        }
        try {
            note("fid over classifier features");
            auto real_fs = classifier_feature_set(t_clf.clf, codec.skel, ds.test);
            auto sample_fs = classifier_feature_set(t_clf.clf, codec.skel, samples);
            rep.fid = fid(real_fs, sample_fs, cfg.get_float("eval.fid_jitter"));
            auto div = diversity_multimodality(sample_fs, labels_of(samples), ds.classes,
                                               int(cfg.get_int("eval.n_pairs")), opt.seed + 77);
            rep.diversity = div.diversity;
            rep.multimodality = div.multimodality;
        } catch (const std::exception& e) {
            std::fprintf(stderr, "[evaluate] fid/diversity failed: %s\n", e.what());
            rep.fid = -1.0;
        }
        try {
            note("training classifier S on samples");
            TrainedClassifier s_clf = fit_classifier(cfg, codec.skel, samples, nullptr, ds.classes,
                                                     opt.seed + 202, "S");
            rep.acc_s_test = classifier_accuracy(s_clf.clf, codec.skel, ds.test);
            auto rs = r_s_ratio(rep.acc_s_test, rep.acc_t_test);
            rep.r_s = rs ? *rs : -1.0;
        } catch (const std::exception& e) {
            std::fprintf(stderr, "[evaluate] r_s failed: %s\n", e.what());
            rep.r_s = -1.0;
        }
    }
    return rep;
}

// ---------------------------------------------------------------------------
// Error-drift probe
// ---------------------------------------------------------------------------

// Iteration 1 samples without temporal conditioning (null action token);
// every later iteration re-conditions on the tail of its own last output.
// Returns the FID of the accumulated sample set after each iteration.
inline std::vector<double> drift_probe(GptBundle& gpt, CodecBundle& codec, const DatasetSplit& ds,
                                       const ActionClassifier& t_clf, int n_iters, int n_per_iter,
                                       int64_t frames, int64_t observe_frames, float tau,
                                       uint64_t seed) {
    if (n_iters < 1) throw ConfigError("drift: need at least one iteration");
    check_stage_compat(gpt, codec);
    auto real_fs = classifier_feature_set(t_clf, codec.skel, ds.test);

    Rng master(seed);
    std::vector<MotionSequence> accumulated;
    std::vector<MotionSequence> last;
    std::vector<double> fids;
    const int32_t null_act = gpt.gpt.config().null_action();
    for (int it = 0; it < n_iters; ++it) {
        std::vector<MotionSequence> cur;
        for (int i = 0; i < n_per_iter; ++i) {
            Rng rng = master.split(uint64_t(it) * 100003ull + uint64_t(i));
            SampleRequest req{null_act, frames};
            if (it == 0) {
                cur.push_back(sample_motion(gpt.gpt, codec, req, tau, rng));
            } else {
                const MotionSequence& prev = last[size_t(i)];
                const int64_t obs = std::min<int64_t>(observe_frames, prev.length());
                // Condition on the last poses generated previously.
                MotionSequence tail;
                tail.pose_dim = prev.pose_dim;
                tail.fps = prev.fps;
                tail.action = prev.action;
                tail.theta.assign(prev.theta.end() - obs * prev.pose_dim, prev.theta.end());
                tail.delta.assign(prev.delta.end() - obs * 3, prev.delta.end());
                cur.push_back(sample_motion(gpt.gpt, codec, req, tau, rng, &tail, obs));
            }
        }
        last = cur;
        for (auto& s : cur) accumulated.push_back(std::move(s));
        auto fs = classifier_feature_set(t_clf, codec.skel, accumulated);
        fids.push_back(fid(real_fs, fs));
    }
    return fids;
}

}  // namespace pgen
