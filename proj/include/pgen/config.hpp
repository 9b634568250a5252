#pragma once

// Flat dotted-key experiment configuration. Every key has a default, unknown
// keys are rejected, and the canonical text (all keys, sorted) hashes into the
// compatibility fingerprints stored in checkpoints.

#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "pgen/error.hpp"
#include "pgen/serialize.hpp"

namespace pgen {

struct ConfigKey {
    const char* key;
    const char* def;
};

inline const std::vector<ConfigKey>& config_registry() {
    static const std::vector<ConfigKey> keys = {
        // Synthetic dataset generator.
        {"data.classes", "6"},
        {"data.train_count", "600"},
        {"data.val_count", "100"},
        {"data.test_count", "100"},
        {"data.t_min", "16"},
        {"data.t_max", "64"},
        {"data.fps", "30"},
        {"data.seed", "1"},
        // Quantization bottleneck.
        {"quant.k", "2"},
        {"quant.c", "256"},
        {"quant.beta", "0.25"},
        {"quant.dead_threshold", "1.0"},   // usage per 10k events below which a code is dead
        {"quant.dead_check_every", "2000"},
        // Sequence codec (encoder/decoder transformer).
        {"codec.r", "2"},
        {"codec.nz", "64"},
        {"codec.embed", "64"},
        {"codec.blocks", "2"},
        {"codec.layers_per_block", "1"},
        {"codec.heads", "4"},
        {"codec.ff", "128"},
        {"codec.dropout", "0.1"},
        {"codec.causal_encoder", "true"},
        {"codec.causal_decoder", "false"},
        {"codec.root_delta", "true"},      // supervise root translation as frame deltas
        {"codec.root_scale", "25.0"},      // root channel gain; deltas are ~30x smaller than angles
        {"codec.max_t", "256"},
        // Next-index density model.
        {"gpt.layers", "2"},
        {"gpt.heads", "4"},
        {"gpt.embed", "64"},
        {"gpt.ff", "128"},
        {"gpt.dropout", "0.2"},
        {"gpt.embedding", "concat"},       // concat | sum | extra_token_t0
        {"gpt.head", "ar"},                // linear | mlp | ar
        {"gpt.context", "64"},
        {"gpt.cond_drop", "0.1"},          // replace action with the null token at this rate
        {"gpt.temperature", "1.0"},
        // Training budgets.
        {"train.codec_steps", "12000"},
        {"train.gpt_steps", "12000"},
        {"train.batch", "8"},
        {"train.codec_lr", "3e-4"},
        {"train.gpt_lr", "3e-4"},
        {"train.seed", "1"},
        {"train.ckpt_every", "5000"},
        {"train.fk_frac", "0.15"},         // fraction of frames with joint-position loss
        {"train.fk_weight", "1.0"},
        {"train.log_every", "200"},
        // Action classifier (shared by the T and S evaluation classifiers).
        {"clf.hidden", "64"},
        {"clf.lr", "1e-3"},
        {"clf.batch", "8"},
        {"clf.max_steps", "4000"},
        {"clf.eval_every", "200"},
        {"clf.patience", "10"},
        // Evaluation protocol.
        {"eval.n_samples", "1000"},
        {"eval.n_pairs", "1000"},
        {"eval.fid_jitter", "1e-6"},
        {"eval.seed", "1"},
        // Derived facts recorded into checkpoints (not user-set).
        {"derived.pose_dim", "24"},
        {"derived.joints", "8"},
        {"derived.classes", "6"},
        {"derived.fps", "30"},
        {"derived.codec_hash", ""},
        {"derived.clf_tag", ""},
    };
    return keys;
}

class Config {
public:
    Config() {
        for (const auto& k : config_registry()) values_[k.key] = k.def;
    }

    static Config from_file(const std::string& path) {
        std::ifstream in(path);
        if (!in) throw ConfigError("cannot open config file: " + path);
        std::stringstream ss;
        ss << in.rdbuf();
        return from_text(ss.str());
    }

    static Config from_text(const std::string& text) {
        Config cfg;
        std::istringstream in(text);
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            const auto hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            const std::string trimmed = trim(line);
            if (trimmed.empty()) continue;
            const auto eq = trimmed.find('=');
            if (eq == std::string::npos)
                throw ConfigError("config line " + std::to_string(lineno) + ": expected key = value");
            cfg.set(trim(trimmed.substr(0, eq)), trim(trimmed.substr(eq + 1)));
        }
        return cfg;
    }

    void set(const std::string& key, const std::string& value) {
        if (values_.find(key) == values_.end()) throw ConfigError("unknown config key: " + key);
        values_[key] = value;
    }

    const std::string& get(const std::string& key) const {
        auto it = values_.find(key);
        if (it == values_.end()) throw ConfigError("unknown config key: " + key);
        return it->second;
    }

    int64_t get_int(const std::string& key) const {
        try {
            size_t pos = 0;
            const int64_t v = std::stoll(get(key), &pos);
            if (pos != get(key).size()) throw std::invalid_argument(key);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": not an integer: '" + get(key) + "'");
        }
    }

    double get_float(const std::string& key) const {
        try {
            size_t pos = 0;
            const double v = std::stod(get(key), &pos);
            if (pos != get(key).size()) throw std::invalid_argument(key);
            return v;
        } catch (const std::exception&) {
            throw ConfigError("config key " + key + ": not a number: '" + get(key) + "'");
        }
    }

    bool get_bool(const std::string& key) const {
        const std::string& v = get(key);
        if (v == "true" || v == "1") return true;
        if (v == "false" || v == "0") return false;
        throw ConfigError("config key " + key + ": not a boolean: '" + v + "'");
    }

    // Canonical text: every registered key in sorted order.
    std::string canonical_text() const {
        std::string out;
        for (const auto& [k, v] : values_) out += k + " = " + v + "\n";
        return out;
    }

    std::string subset_text(const std::vector<std::string>& prefixes) const {
        std::string out;
        for (const auto& [k, v] : values_) {
            for (const auto& p : prefixes) {
                if (k.rfind(p, 0) == 0) {
                    out += k + " = " + v + "\n";
                    break;
                }
            }
        }
        return out;
    }

    uint64_t hash() const { return fnv1a(canonical_text()); }

    // Fingerprint of everything that determines codec/index-grid compatibility:
    // quantizer geometry, codec architecture, and the derived data dims.
    uint64_t codec_compat_hash() const {
        return fnv1a(subset_text({"codec.", "quant.", "derived.pose_dim", "derived.joints",
                                  "derived.classes", "derived.fps"}));
    }

private:
    static std::string trim(const std::string& s) {
        const auto b = s.find_first_not_of(" \t\r\n");
        if (b == std::string::npos) return "";
        const auto e = s.find_last_not_of(" \t\r\n");
        return s.substr(b, e - b + 1);
    }

    std::map<std::string, std::string> values_;
};

}  // namespace pgen
