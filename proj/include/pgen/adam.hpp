#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pgen/error.hpp"
#include "pgen/tensor.hpp"

namespace pgen {

// A named trainable tensor; modules expose their parameters through this.
struct NamedParam {
    std::string name;
    Tensor tensor;
};

struct AdamConfig {
    float lr = 5e-5f;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
};

// Adam with bias correction. State (m, v, step) serializes into checkpoints
// so a resumed run continues bit-identically.
class Adam {
public:
    Adam() = default;
    Adam(std::vector<NamedParam> params, AdamConfig cfg) : cfg_(cfg), params_(std::move(params)) {
        m_.resize(params_.size());
        v_.resize(params_.size());
        for (size_t i = 0; i < params_.size(); ++i) {
            m_[i].assign(size_t(params_[i].tensor.numel()), 0.0f);
            v_[i].assign(size_t(params_[i].tensor.numel()), 0.0f);
        }
    }

    void step() {
        ++t_;
        const double bc1 = 1.0 - std::pow(double(cfg_.beta1), double(t_));
        const double bc2 = 1.0 - std::pow(double(cfg_.beta2), double(t_));
        for (size_t i = 0; i < params_.size(); ++i) {
            Tensor& p = params_[i].tensor;
            if (!p.has_grad()) continue;
            float* w = p.data();
            const float* g = p.grad_view().data();
            float* m = m_[i].data();
            float* v = v_[i].data();
            const int64_t n = p.numel();
            for (int64_t j = 0; j < n; ++j) {
                m[j] = cfg_.beta1 * m[j] + (1.0f - cfg_.beta1) * g[j];
                v[j] = cfg_.beta2 * v[j] + (1.0f - cfg_.beta2) * g[j] * g[j];
                const float mhat = float(double(m[j]) / bc1);
                const float vhat = float(double(v[j]) / bc2);
                w[j] += -cfg_.lr * mhat / (std::sqrt(vhat) + cfg_.eps);
            }
        }
    }

    void zero_grad() {
        for (auto& p : params_) p.tensor.zero_grad();
    }

    int64_t step_count() const { return t_; }
    void set_step_count(int64_t t) { t_ = t; }
    const AdamConfig& config() const { return cfg_; }
    void set_lr(float lr) { cfg_.lr = lr; }

    size_t param_count() const { return params_.size(); }
    const std::vector<NamedParam>& params() const { return params_; }
    std::vector<float>& moment1(size_t i) { return m_[i]; }
    std::vector<float>& moment2(size_t i) { return v_[i]; }

private:
    AdamConfig cfg_;
    std::vector<NamedParam> params_;
    std::vector<std::vector<float>> m_, v_;
    int64_t t_ = 0;
};

}  // namespace pgen
