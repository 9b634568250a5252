#pragma once

// Recurrent action classifier: a GRU over root-centered joint positions with
// a fully-connected output layer. The final hidden state doubles as the
// feature vector for distribution metrics. The same architecture and
// hyperparameters serve both the train-data classifier and the sample-data
// classifier; only the provenance tag differs.

#include <string>
#include <vector>

#include "pgen/adam.hpp"
#include "pgen/config.hpp"
#include "pgen/motion.hpp"
#include "pgen/skeleton.hpp"
#include "pgen/transformer.hpp"

namespace pgen {

struct ClassifierConfig {
    int hidden = 64;
    int input_dim = 21;  // (J-1) * 3 root-centered joint coordinates
    int classes = 6;
    float lr = 1e-3f;
    int batch = 8;
    int max_steps = 4000;
    int eval_every = 200;
    int patience = 10;

    static ClassifierConfig from_config(const Config& cfg, int input_dim, int classes) {
        ClassifierConfig c;
        c.hidden = int(cfg.get_int("clf.hidden"));
        c.lr = float(cfg.get_float("clf.lr"));
        c.batch = int(cfg.get_int("clf.batch"));
        c.max_steps = int(cfg.get_int("clf.max_steps"));
        c.eval_every = int(cfg.get_int("clf.eval_every"));
        c.patience = int(cfg.get_int("clf.patience"));
        c.input_dim = input_dim;
        c.classes = classes;
        return c;
    }
};

// Per-frame classifier input: FK joint positions centered on the root joint,
// root row dropped (it is identically zero after centering).
inline std::vector<float> classifier_features(const Skeleton& skel, const MotionSequence& seq) {
    const int64_t t = seq.length();
    const int j = skel.joints();
    auto pos = fk_positions(skel, seq.theta, seq.delta, t);
    std::vector<float> out(size_t(t) * size_t((j - 1) * 3));
    for (int64_t f = 0; f < t; ++f) {
        const float* frame = pos.data() + f * j * 3;
        for (int jr = 1; jr < j; ++jr)
            for (int d = 0; d < 3; ++d)
                out[size_t(f * (j - 1) * 3 + (jr - 1) * 3 + d)] = frame[jr * 3 + d] - frame[d];
    }
    return out;
}

class ActionClassifier {
public:
    ActionClassifier() = default;

    static ActionClassifier init(const ClassifierConfig& cfg, Rng& rng, std::string provenance) {
        ActionClassifier c;
        c.cfg_ = cfg;
        c.provenance_ = std::move(provenance);
        const int64_t d = cfg.input_dim, h = cfg.hidden;
        c.wz_ = Linear::init(rng, d + h, h);
        c.wr_ = Linear::init(rng, d + h, h);
        c.wh_ = Linear::init(rng, d + h, h);
        c.fc_ = Linear::init(rng, h, cfg.classes);
        return c;
    }

    const ClassifierConfig& config() const { return cfg_; }
    const std::string& provenance() const { return provenance_; }

    // features: per-sequence (T_i x input_dim) rows. Returns (B, hidden): the
    // GRU state at each sequence's own last frame.
    Tensor feature_batch(const std::vector<const std::vector<float>*>& seqs) const {
        const int64_t b = int64_t(seqs.size());
        const int64_t d = cfg_.input_dim, h = cfg_.hidden;
        int64_t t_max = 0;
        std::vector<int64_t> lens(static_cast<size_t>(b));
        for (int64_t i = 0; i < b; ++i) {
            lens[size_t(i)] = int64_t(seqs[size_t(i)]->size()) / d;
            t_max = std::max(t_max, lens[size_t(i)]);
        }
        std::vector<float> padded(size_t(b * t_max * d), 0.0f);
        for (int64_t i = 0; i < b; ++i)
            std::copy(seqs[size_t(i)]->begin(), seqs[size_t(i)]->end(),
                      padded.begin() + i * t_max * d);
        Tensor x = Tensor::from(std::move(padded), {b, t_max, d});

        Tensor state = Tensor::zeros({b, h});
        std::vector<Tensor> history;
        history.reserve(size_t(t_max));
        for (int64_t t = 0; t < t_max; ++t) {
            Tensor xt = reshape(slice(x, 1, t, 1), {b, d});
            Tensor xs = concat({xt, state}, 1);
            Tensor z = sigmoid(wz_.forward(xs));
            Tensor r = sigmoid(wr_.forward(xs));
            Tensor cand = tanh_op(wh_.forward(concat({xt, mul(r, state)}, 1)));
            Tensor one_minus_z = add_scalar(scale(z, -1.0f), 1.0f);
            state = add(mul(one_minus_z, state), mul(z, cand));
            history.push_back(state);
        }
        std::vector<Tensor> rows;
        rows.reserve(size_t(b));
        for (int64_t i = 0; i < b; ++i)
            rows.push_back(slice(history[size_t(lens[size_t(i)] - 1)], 0, i, 1));
        return concat(rows, 0);  // (B, hidden)
    }

    Tensor logits_from_features(const Tensor& feats) const { return fc_.forward(feats); }

    std::vector<int32_t> predict(const std::vector<const std::vector<float>*>& seqs) const {
        Tensor lg = logits_from_features(feature_batch(seqs));
        std::vector<int32_t> out(static_cast<size_t>(lg.dim(0)));
        for (int64_t i = 0; i < lg.dim(0); ++i) {
            const float* row = lg.data() + i * cfg_.classes;
            int32_t best = 0;
            for (int c = 1; c < cfg_.classes; ++c)
                if (row[c] > row[best]) best = c;
            out[size_t(i)] = best;
        }
        return out;
    }

    std::vector<NamedParam> params() {
        std::vector<NamedParam> out;
        wz_.collect("clf.wz", out);
        wr_.collect("clf.wr", out);
        wh_.collect("clf.wh", out);
        fc_.collect("clf.fc", out);
        return out;
    }

private:
    ClassifierConfig cfg_;
    std::string provenance_;
    Linear wz_, wr_, wh_, fc_;
};

struct ClassifierTrainResult {
    double best_val_acc = 0.0;
    int steps_run = 0;
    bool early_stopped = false;
};

// Adam + cross-entropy with early stopping on the validation accuracy
// plateau. Deterministic given the seed.
inline ClassifierTrainResult train_classifier(ActionClassifier& clf,
                                              const std::vector<std::vector<float>>& train_feats,
                                              const std::vector<int32_t>& train_labels,
                                              const std::vector<std::vector<float>>& val_feats,
                                              const std::vector<int32_t>& val_labels, uint64_t seed) {
    if (train_feats.empty()) throw ConfigError("train_classifier: empty training set");
    {
        bool multi = false;
        for (int32_t l : train_labels) multi |= l != train_labels[0];
        if (!multi) throw ConfigError("train_classifier: single-class data");
    }
    const auto& cfg = clf.config();
    Rng rng(seed);
    Adam opt(clf.params(), AdamConfig{cfg.lr, 0.9f, 0.999f, 1e-8f});

    auto eval_acc = [&]() {
        int hits = 0;
        const int64_t bsz = 16;
        for (size_t off = 0; off < val_feats.size(); off += size_t(bsz)) {
            std::vector<const std::vector<float>*> vb;
            std::vector<int32_t> lb;
            for (size_t i = off; i < std::min(val_feats.size(), off + size_t(bsz)); ++i) {
                vb.push_back(&val_feats[i]);
                lb.push_back(val_labels[i]);
            }
            auto pred = clf.predict(vb);
            for (size_t i = 0; i < pred.size(); ++i) hits += pred[i] == lb[i];
        }
        return val_feats.empty() ? 0.0 : double(hits) / double(val_feats.size());
    };

    ClassifierTrainResult res;
    double best = -1.0;
    int evals_since_best = 0;
    for (int step = 1; step <= cfg.max_steps; ++step) {
        std::vector<const std::vector<float>*> batch;
        std::vector<int32_t> labels;
        for (int i = 0; i < cfg.batch; ++i) {
            const size_t pick = size_t(rng.uniform_int(uint64_t(train_feats.size())));
            batch.push_back(&train_feats[pick]);
            labels.push_back(train_labels[pick]);
        }
        opt.zero_grad();
        {
            Tape tape;
            Tensor lg = clf.logits_from_features(clf.feature_batch(batch));
            Tensor loss = mean(cross_entropy_logits(lg, labels));
            if (!std::isfinite(loss.item()))
                throw NumericalError("train_classifier: loss diverged at step " + std::to_string(step));
            backward(loss);
        }
        opt.step();
        res.steps_run = step;
        if (step % cfg.eval_every == 0) {
            const double acc = eval_acc();
            if (acc > best + 1e-9) {
                best = acc;
                evals_since_best = 0;
            } else if (++evals_since_best >= cfg.patience) {
                res.early_stopped = true;
                break;
            }
        }
    }
    res.best_val_acc = std::max(best, eval_acc());
    return res;
}

}  // namespace pgen
