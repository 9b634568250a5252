#pragma once

// Toy kinematic skeleton: a parent-indexed tree with fixed bone offsets and
// per-joint Euler-angle rotations. Joint j's angles rotate the subtree below
// it; the root's angles are the global orientation and the root position is
// the per-frame translation.

#include <array>
#include <cstdint>
#include <vector>

#include "pgen/error.hpp"
#include "pgen/tensor.hpp"

namespace pgen {

struct Skeleton {
    std::vector<int> parent;                    // -1 for the root; parents precede children
    std::vector<std::array<float, 3>> bones;    // offset from parent, parent frame, meters

    int joints() const { return int(parent.size()); }
    int pose_dim() const { return 3 * joints(); }

    void validate() const {
        if (parent.empty() || parent[0] != -1) throw ConfigError("skeleton: joint 0 must be the root");
        for (size_t j = 1; j < parent.size(); ++j)
            if (parent[j] < 0 || parent[j] >= int(j))
                throw ConfigError("skeleton: parents must precede children (single-root tree)");
        if (bones.size() != parent.size()) throw ConfigError("skeleton: bone count mismatch");
    }

    // J=8: a 4-joint spine chain with two 2-joint arms off the top.
    static Skeleton default_skeleton() {
        Skeleton s;
        s.parent = {-1, 0, 1, 2, 3, 4, 3, 6};
        s.bones = {
            {{0.00f, 0.00f, 0.00f}},   // root
            {{0.00f, 0.00f, 0.25f}},   // spine 1
            {{0.00f, 0.00f, 0.25f}},   // spine 2
            {{0.00f, 0.00f, 0.20f}},   // spine top
            {{0.22f, 0.00f, 0.00f}},   // right upper arm
            {{0.25f, 0.00f, 0.00f}},   // right forearm
            {{-0.22f, 0.00f, 0.00f}},  // left upper arm
            {{-0.25f, 0.00f, 0.00f}},  // left forearm
        };
        return s;
    }
};

namespace detail {

// (N,3,3) rotation matrices R = Rz(c) * Ry(b) * Rx(a) from three angle columns.
inline Tensor euler_to_matrix(const Tensor& a, const Tensor& b, const Tensor& c) {
    const int64_t n = a.numel();
    Tensor sa = sin_op(a), ca = cos_op(a);
    Tensor sb = sin_op(b), cb = cos_op(b);
    Tensor sc = sin_op(c), cc = cos_op(c);
    Tensor zero = Tensor::zeros({n, 1});
    Tensor one = Tensor::full({n, 1}, 1.0f);
    auto col = [n](const Tensor& t) { return reshape(t, {n, 1}); };
    auto mat = [&](std::vector<Tensor> e) { return reshape(concat(e, 1), {n, 3, 3}); };
    Tensor rx = mat({one, zero, zero, zero, col(ca), scale(col(sa), -1.0f), zero, col(sa), col(ca)});
    Tensor ry = mat({col(cb), zero, col(sb), zero, one, zero, scale(col(sb), -1.0f), zero, col(cb)});
    Tensor rz = mat({col(cc), scale(col(sc), -1.0f), zero, col(sc), col(cc), zero, zero, zero, one});
    return matmul(rz, matmul(ry, rx));
}

}  // namespace detail

// Differentiable forward kinematics.
// theta: (N, P) joint angles, delta: (N, 3) root positions -> (N, J, 3).
inline Tensor fk_forward(const Skeleton& skel, const Tensor& theta, const Tensor& delta) {
    const int j_count = skel.joints();
    if (theta.ndim() != 2 || theta.dim(1) != skel.pose_dim())
        shape_fail("fk: pose dim " + std::to_string(theta.ndim() == 2 ? theta.dim(1) : -1) +
                   " does not match skeleton (expects " + std::to_string(skel.pose_dim()) + ")");
    if (delta.ndim() != 2 || delta.dim(1) != 3 || delta.dim(0) != theta.dim(0))
        shape_fail("fk: delta must be (N, 3) matching theta rows");
    const int64_t n = theta.dim(0);

    std::vector<Tensor> rot(static_cast<size_t>(j_count));   // global rotations (N,3,3)
    std::vector<Tensor> pos(static_cast<size_t>(j_count));   // global positions (N,3,1)
    for (int j = 0; j < j_count; ++j) {
        Tensor a = slice(theta, 1, 3 * j + 0, 1);
        Tensor b = slice(theta, 1, 3 * j + 1, 1);
        Tensor c = slice(theta, 1, 3 * j + 2, 1);
        Tensor local = detail::euler_to_matrix(a, b, c);
        if (j == 0) {
            rot[0] = local;
            pos[0] = reshape(delta, {n, 3, 1});
        } else {
            const int p = skel.parent[size_t(j)];
            rot[size_t(j)] = matmul(rot[size_t(p)], local);
            Tensor bone = Tensor::from({skel.bones[size_t(j)][0], skel.bones[size_t(j)][1],
                                        skel.bones[size_t(j)][2]},
                                       {3, 1});
            pos[size_t(j)] = add(pos[size_t(p)], matmul(rot[size_t(p)], bone));
        }
    }
    std::vector<Tensor> flat;
    flat.reserve(size_t(j_count));
    for (int j = 0; j < j_count; ++j) flat.push_back(reshape(pos[size_t(j)], {n, 1, 3}));
    return concat(flat, 1);  // (N, J, 3)
}

// Plain-array convenience: frames*(P) angles and frames*3 roots in, J*3 out.
inline std::vector<float> fk_positions(const Skeleton& skel, const std::vector<float>& theta,
                                       const std::vector<float>& delta, int64_t frames) {
    Tensor th = Tensor::from(theta, {frames, skel.pose_dim()});
    Tensor de = Tensor::from(delta, {frames, 3});
    return fk_forward(skel, th, de).values();
}

}  // namespace pgen
