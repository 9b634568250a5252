#pragma once

// Evaluation metrics: per-joint reconstruction error, Frechet distance over
// classifier features, the two accuracy-ratio metrics, and the pairwise
// feature-distance diversity measures.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "pgen/error.hpp"
#include "pgen/motion.hpp"
#include "pgen/rng.hpp"
#include "pgen/skeleton.hpp"

namespace pgen {

// Mean Euclidean distance between corresponding FK joint positions, in mm.
inline double pve_mm(const Skeleton& skel, const MotionSequence& reference,
                     const MotionSequence& recon) {
    if (reference.length() != recon.length())
        throw ConfigError("pve: sequences differ in length (" + std::to_string(reference.length()) +
                          " vs " + std::to_string(recon.length()) + ")");
    const int64_t t = reference.length();
    const int j = skel.joints();
    auto pa = fk_positions(skel, reference.theta, reference.delta, t);
    auto pb = fk_positions(skel, recon.theta, recon.delta, t);
    double total = 0.0;
    for (int64_t i = 0; i < t * j; ++i) {
        const double dx = double(pa[size_t(i * 3)]) - double(pb[size_t(i * 3)]);
        const double dy = double(pa[size_t(i * 3 + 1)]) - double(pb[size_t(i * 3 + 1)]);
        const double dz = double(pa[size_t(i * 3 + 2)]) - double(pb[size_t(i * 3 + 2)]);
        total += std::sqrt(dx * dx + dy * dy + dz * dz);
    }
    return total / double(t * j) * 1000.0;
}

// ---------------------------------------------------------------------------
// Dense symmetric linear algebra (double) for the Frechet distance
// ---------------------------------------------------------------------------

namespace detail {

// Cyclic Jacobi eigendecomposition of a symmetric matrix. a is overwritten
// with rotations; returns eigenvalues, fills eigenvectors into v (columns).
inline std::vector<double> jacobi_eigen(std::vector<double>& a, std::vector<double>& v, int n) {
    v.assign(size_t(n) * size_t(n), 0.0);
    for (int i = 0; i < n; ++i) v[size_t(i * n + i)] = 1.0;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) off += a[size_t(p * n + q)] * a[size_t(p * n + q)];
        if (off < 1e-24) break;
        for (int p = 0; p < n; ++p)
            for (int q = p + 1; q < n; ++q) {
                const double apq = a[size_t(p * n + q)];
                if (std::abs(apq) < 1e-30) continue;
                const double app = a[size_t(p * n + p)], aqq = a[size_t(q * n + q)];
                const double theta = (aqq - app) / (2.0 * apq);
                const double sign = theta >= 0 ? 1.0 : -1.0;
                const double tt = sign / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(tt * tt + 1.0);
                const double s = tt * c;
                for (int i = 0; i < n; ++i) {
                    const double aip = a[size_t(i * n + p)], aiq = a[size_t(i * n + q)];
                    a[size_t(i * n + p)] = c * aip - s * aiq;
                    a[size_t(i * n + q)] = s * aip + c * aiq;
                }
                for (int i = 0; i < n; ++i) {
                    const double api = a[size_t(p * n + i)], aqi = a[size_t(q * n + i)];
                    a[size_t(p * n + i)] = c * api - s * aqi;
                    a[size_t(q * n + i)] = s * api + c * aqi;
                }
                for (int i = 0; i < n; ++i) {
                    const double vip = v[size_t(i * n + p)], viq = v[size_t(i * n + q)];
                    v[size_t(i * n + p)] = c * vip - s * viq;
                    v[size_t(i * n + q)] = s * vip + c * viq;
                }
            }
    }
    std::vector<double> eig(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) eig[size_t(i)] = a[size_t(i * n + i)];
    return eig;
}

inline std::vector<double> matmul_dd(const std::vector<double>& a, const std::vector<double>& b,
                                     int n) {
    std::vector<double> c(size_t(n) * size_t(n), 0.0);
    for (int i = 0; i < n; ++i)
        for (int k = 0; k < n; ++k) {
            const double av = a[size_t(i * n + k)];
            for (int j = 0; j < n; ++j) c[size_t(i * n + j)] += av * b[size_t(k * n + j)];
        }
    return c;
}

// Principal square root of a symmetric PSD matrix; tiny negative eigenvalues
// from rounding clamp to zero.
inline std::vector<double> sqrt_psd(const std::vector<double>& m, int n) {
    std::vector<double> a = m, v;
    auto eig = jacobi_eigen(a, v, n);
    std::vector<double> out(size_t(n) * size_t(n), 0.0);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int k = 0; k < n; ++k) {
                const double lam = eig[size_t(k)] > 0 ? std::sqrt(eig[size_t(k)]) : 0.0;
                acc += v[size_t(i * n + k)] * lam * v[size_t(j * n + k)];
            }
            out[size_t(i * n + j)] = acc;
        }
    return out;
}

}  // namespace detail

struct FeatureSet {
    std::vector<double> data;  // n x dim, row-major
    int64_t n = 0;
    int dim = 0;

    static FeatureSet from_rows(const std::vector<std::vector<float>>& rows) {
        FeatureSet fs;
        fs.n = int64_t(rows.size());
        fs.dim = fs.n ? int(rows[0].size()) : 0;
        fs.data.reserve(size_t(fs.n * fs.dim));
        for (const auto& r : rows)
            for (float v : r) fs.data.push_back(double(v));
        return fs;
    }
};

// Frechet distance between Gaussians fitted to two feature sets:
// |mu_a - mu_b|^2 + Tr(Sa + Sb - 2 (Sa^1/2 Sb Sa^1/2)^1/2).
inline double fid(const FeatureSet& a, const FeatureSet& b, double jitter = 1e-6) {
    if (a.dim != b.dim || a.dim == 0) throw ConfigError("fid: feature dims differ or empty");
    if (a.n < 2 || b.n < 2) throw ConfigError("fid: need at least two samples per side");
    const int d = a.dim;
    auto moments = [&](const FeatureSet& fs, std::vector<double>& mean, std::vector<double>& cov) {
        mean.assign(size_t(d), 0.0);
        for (int64_t i = 0; i < fs.n; ++i)
            for (int j = 0; j < d; ++j) mean[size_t(j)] += fs.data[size_t(i * d + j)];
        for (auto& m : mean) m /= double(fs.n);
        cov.assign(size_t(d) * size_t(d), 0.0);
        for (int64_t i = 0; i < fs.n; ++i)
            for (int p = 0; p < d; ++p) {
                const double cp = fs.data[size_t(i * d + p)] - mean[size_t(p)];
                for (int q = 0; q < d; ++q)
                    cov[size_t(p * d + q)] += cp * (fs.data[size_t(i * d + q)] - mean[size_t(q)]);
            }
        for (auto& c : cov) c /= double(fs.n - 1);
        for (int i = 0; i < d; ++i) cov[size_t(i * d + i)] += jitter;
        for (int i = 0; i < d; ++i) {
            if (!(cov[size_t(i * d + i)] > 0.0))
                throw NumericalError(
                    "fid: degenerate covariance; increase the jitter or the sample count");
        }
    };
    std::vector<double> mu_a, mu_b, sa, sb;
    moments(a, mu_a, sa);
    moments(b, mu_b, sb);

    double mean_term = 0.0;
    for (int i = 0; i < d; ++i) {
        const double diff = mu_a[size_t(i)] - mu_b[size_t(i)];
        mean_term += diff * diff;
    }
    double tr_a = 0.0, tr_b = 0.0;
    for (int i = 0; i < d; ++i) {
        tr_a += sa[size_t(i * d + i)];
        tr_b += sb[size_t(i * d + i)];
    }
    // Symmetrized product keeps the square root real for PSD inputs.
    auto sqrt_a = detail::sqrt_psd(sa, d);
    auto inner = detail::matmul_dd(detail::matmul_dd(sqrt_a, sb, d), sqrt_a, d);
    // Enforce exact symmetry before the eigensolve.
    for (int i = 0; i < d; ++i)
        for (int j = i + 1; j < d; ++j) {
            const double s = 0.5 * (inner[size_t(i * d + j)] + inner[size_t(j * d + i)]);
            inner[size_t(i * d + j)] = s;
            inner[size_t(j * d + i)] = s;
        }
    auto root = detail::sqrt_psd(inner, d);
    double tr_root = 0.0;
    for (int i = 0; i < d; ++i) tr_root += root[size_t(i * d + i)];
    return mean_term + tr_a + tr_b - 2.0 * tr_root;
}

// ---------------------------------------------------------------------------
// Accuracy-ratio metrics
// ---------------------------------------------------------------------------

// Ratio as printed in the evaluation protocol: mean accuracy of the
// train-data classifier on real test data over its mean accuracy on samples.
// The inverse ordering ships alongside it in reports for transparency.
inline std::optional<double> r_t_ratio(double mean_test_acc, double mean_sample_acc) {
    if (mean_sample_acc <= 0.0) return std::nullopt;  // zero correct samples
    return mean_test_acc / mean_sample_acc;
}

// Aggregate ratio of the sample-trained classifier's test accuracy over the
// train-data classifier's test accuracy.
inline std::optional<double> r_s_ratio(double acc_s_on_test, double acc_t_on_test) {
    if (acc_t_on_test <= 0.0) return std::nullopt;
    return acc_s_on_test / acc_t_on_test;
}

// ---------------------------------------------------------------------------
// Diversity / multimodality
// ---------------------------------------------------------------------------

struct DiversityResult {
    double diversity = 0.0;
    double multimodality = 0.0;
    std::vector<int32_t> skipped_classes;  // fewer than two samples
};

inline DiversityResult diversity_multimodality(const FeatureSet& feats,
                                               const std::vector<int32_t>& labels, int classes,
                                               int n_pairs, uint64_t seed) {
    if (feats.n != int64_t(labels.size())) throw ConfigError("diversity: label count mismatch");
    if (feats.n < 2) throw ConfigError("diversity: need at least two samples");
    Rng rng(seed);
    const int d = feats.dim;
    auto dist = [&](int64_t i, int64_t j) {
        double acc = 0.0;
        for (int p = 0; p < d; ++p) {
            const double diff = feats.data[size_t(i * d + p)] - feats.data[size_t(j * d + p)];
            acc += diff * diff;
        }
        return std::sqrt(acc);
    };

    DiversityResult res;
    double total = 0.0;
    for (int p = 0; p < n_pairs; ++p) {
        const int64_t i = int64_t(rng.uniform_int(uint64_t(feats.n)));
        int64_t j = int64_t(rng.uniform_int(uint64_t(feats.n)));
        while (j == i) j = int64_t(rng.uniform_int(uint64_t(feats.n)));
        total += dist(i, j);
    }
    res.diversity = total / double(n_pairs);

    std::vector<std::vector<int64_t>> by_class(static_cast<size_t>(classes));
    for (int64_t i = 0; i < feats.n; ++i) by_class[size_t(labels[size_t(i)])].push_back(i);
    double mm_total = 0.0;
    int mm_classes = 0;
    for (int c = 0; c < classes; ++c) {
        const auto& members = by_class[size_t(c)];
        if (members.size() < 2) {
            res.skipped_classes.push_back(c);
            continue;
        }
        double class_total = 0.0;
        const int per_class = std::max(1, n_pairs / classes);
        for (int p = 0; p < per_class; ++p) {
            const int64_t i = members[size_t(rng.uniform_int(uint64_t(members.size())))];
            int64_t j = members[size_t(rng.uniform_int(uint64_t(members.size())))];
            while (j == i) j = members[size_t(rng.uniform_int(uint64_t(members.size())))];
            class_total += dist(i, j);
        }
        mm_total += class_total / double(per_class);
        ++mm_classes;
    }
    res.multimodality = mm_classes ? mm_total / double(mm_classes) : 0.0;
    return res;
}

// ---------------------------------------------------------------------------
// EvalReport
// ---------------------------------------------------------------------------

struct EvalReport {
    // Fixed schema; every key appears in the serialized file in this order.
    // Optional ratios use -1 as the documented error sentinel.
    double pve_mm = 0.0;
    double fid = 0.0;
    double r_t = -1.0;
    double r_t_inverse = -1.0;
    double r_s = -1.0;
    double diversity = 0.0;
    double multimodality = 0.0;
    double gpt_bits_per_seq = 0.0;
    double gpt_bits_per_dim = 0.0;
    double gpt_acc = 0.0;
    double acc_t_test = 0.0;
    double acc_t_samples = 0.0;
    double acc_s_test = 0.0;
    int64_t sample_count = 0;
    std::string split = "test";
    uint64_t seed = 0;
    std::string config_hash;

    static const std::vector<std::string>& schema() {
        static const std::vector<std::string> keys = {
            "pve_mm",       "fid",          "r_t",         "r_t_inverse",  "r_s",
            "diversity",    "multimodality", "gpt_bits_per_seq", "gpt_bits_per_dim", "gpt_acc",
            "acc_t_test",   "acc_t_samples", "acc_s_test",  "sample_count", "split",
            "seed",         "config_hash"};
        return keys;
    }

    std::string to_text() const {
        auto num = [](double v) {
            char buf[64];
            std::snprintf(buf, sizeof(buf), "%.9g", v);
            return std::string(buf);
        };
        std::string out;
        out += "pve_mm = " + num(pve_mm) + "\n";
        out += "fid = " + num(fid) + "\n";
        out += "r_t = " + num(r_t) + "\n";
        out += "r_t_inverse = " + num(r_t_inverse) + "\n";
        out += "r_s = " + num(r_s) + "\n";
        out += "diversity = " + num(diversity) + "\n";
        out += "multimodality = " + num(multimodality) + "\n";
        out += "gpt_bits_per_seq = " + num(gpt_bits_per_seq) + "\n";
        out += "gpt_bits_per_dim = " + num(gpt_bits_per_dim) + "\n";
        out += "gpt_acc = " + num(gpt_acc) + "\n";
        out += "acc_t_test = " + num(acc_t_test) + "\n";
        out += "acc_t_samples = " + num(acc_t_samples) + "\n";
        out += "acc_s_test = " + num(acc_s_test) + "\n";
        out += "sample_count = " + std::to_string(sample_count) + "\n";
        out += "split = " + split + "\n";
        out += "seed = " + std::to_string(seed) + "\n";
        out += "config_hash = " + config_hash + "\n";
        return out;
    }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::trunc);
        if (!out) throw FormatError("cannot write report: " + path);
        out << to_text();
    }
};

}  // namespace pgen
