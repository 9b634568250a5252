#pragma once

// Test-only central finite-difference oracle. Independent of the tape: it
// re-runs the forward function on perturbed inputs and never reads analytic
// gradients to produce its estimate.

#include <cmath>
#include <functional>
#include <vector>

#include "pgen/tensor.hpp"

namespace pgen_test {

struct GradCheckResult {
    double max_rel_err = 0.0;
    int64_t checked = 0;
    bool ok(double tol) const { return checked > 0 && max_rel_err < tol; }
};

// f evaluates a scalar loss from the current contents of `inputs`.
// Analytic gradients must already be populated on the inputs.
// The denominator floor turns the relative criterion into an absolute one of
// tol*floor for small gradients; float32 forward evals carry ~1e-7 rounding
// noise which the 2*eps divisor amplifies to ~5e-5 absolute, so a pure
// relative test is unattainable below ~0.05 gradient magnitude.
inline GradCheckResult finite_difference_check(const std::function<float()>& f,
                                               std::vector<pgen::Tensor> inputs,
                                               float eps = 1e-3f,
                                               double denom_floor = 0.5) {
    GradCheckResult res;
    for (auto& x : inputs) {
        const auto& grad = x.grad_view();
        float* data = x.data();
        for (int64_t i = 0; i < x.numel(); ++i) {
            const float keep = data[i];
            const double an = grad.empty() ? 0.0 : double(grad[size_t(i)]);
            // Adaptive step: float32 eval rounding dominates at small steps,
            // curvature (truncation) at large ones, and which regime a
            // coordinate sits in depends on its gradient scale. Both steps
            // estimate the same derivative; take the better-conditioned one.
            double rel = std::numeric_limits<double>::infinity();
            for (float mult : {1.0f, 4.0f}) {
                const float step = mult * eps * std::max(1.0f, std::abs(keep));
                data[i] = keep + step;
                const double fp = double(f());
                data[i] = keep - step;
                const double fm = double(f());
                data[i] = keep;
                const double fd = (fp - fm) / (2.0 * double(step));
                rel = std::min(rel,
                               std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), denom_floor}));
            }
            res.max_rel_err = std::max(res.max_rel_err, rel);
            res.checked++;
        }
    }
    return res;
}

}  // namespace pgen_test
