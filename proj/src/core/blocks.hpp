#pragma once

#include <array>
#include <optional>
#include <utility>
#include <vector>

#include "core/exec.hpp"
#include "core/reparam.hpp"
#include "core/tensor.hpp"

namespace gcnet {

enum class FuseDir { semantic_to_detail, detail_to_semantic };

// Cross-branch projection. semantic_to_detail compresses channels with one
// 3x3 and upsamples to the detail resolution; detail_to_semantic expands
// channels with one stride-2 3x3 (x2) or two chained stride-2 3x3s with a
// ReLU between them (x4).
template <typename T>
struct FusionModule {
    FuseDir direction = FuseDir::semantic_to_detail;
    std::vector<ConvBN<T>> convs;
};

// DAPPM-style pyramid pooling: parallel average-pooled 1x1 reductions,
// hierarchical 3x3 refinement, concat + 1x1 compression, 1x1 shortcut.
template <typename T>
struct Dappm {
    ConvBN<T> scale0;
    std::array<ConvBN<T>, 3> scales;  // pool configs 5/2/2, 9/4/4, 17/8/8
    ConvBN<T> scale_global;
    std::array<ConvBN<T>, 4> process;
    ConvBN<T> compression;
    ConvBN<T> shortcut;
};

// Single-branch substitute: global context added onto a 1x1 projection.
template <typename T>
struct SimplePpm {
    ConvBN<T> base;
    ConvBN<T> global;
};

enum class PpmKind { dappm, global_pool };

template <typename T>
struct PyramidPooling {
    PpmKind kind = PpmKind::dappm;
    std::optional<Dappm<T>> dappm;
    std::optional<SimplePpm<T>> simple;
};

// 3x3 integration conv (to O_c channels, BN + ReLU) then a 1x1 classifier.
template <typename T>
struct SegHead {
    ConvBN<T> conv3;
    ConvKernel<T> classifier;
};

// --- wiring (shared by every executor) ---

template <typename T, class Ex>
typename Ex::Value conv_bn_run(Ex& ex, ConvBN<T>& u, typename Ex::Value x, bool relu_after) {
    auto y = ex.conv(x, u.conv);
    if (u.bn) y = ex.bn(y, *u.bn);
    if (relu_after) y = ex.relu(y);
    return y;
}

// Training form: per-path conv-BN chains with no inner activation, summed,
// one ReLU at the output. Inference form: ReLU(conv(x, fused)).
template <typename T, class Ex>
typename Ex::Value gcblock_run(Ex& ex, GCBlock<T>& b, typename Ex::Value x) {
    require(ex.dims(x).c == b.in_channels, "gcblock: input channel mismatch");
    if (b.form == Form::inference) {
        return ex.relu(ex.conv(x, *b.fused));
    }
    reparam::validate_gcblock(b);
    std::optional<typename Ex::Value> sum;
    for (auto& path : b.paths) {
        typename Ex::Value t = x;
        if (path.kind == PathKind::residual) {
            t = ex.bn(t, *path.residual_bn);
        } else {
            t = conv_bn_run(ex, path.stages[0], t, false);
            t = conv_bn_run(ex, path.stages[1], t, false);
        }
        sum = sum ? ex.add(*sum, t) : t;
    }
    return ex.relu(*sum);
}

// Both projections read the pre-fusion inputs; each output is
// ReLU(branch + projected-other-branch).
template <typename T, class Ex>
std::pair<typename Ex::Value, typename Ex::Value> bilateral_fuse_run(Ex& ex,
                                                                     FusionModule<T>& s2d,
                                                                     FusionModule<T>& d2s,
                                                                     typename Ex::Value sem,
                                                                     typename Ex::Value det) {
    require(s2d.direction == FuseDir::semantic_to_detail &&
                d2s.direction == FuseDir::detail_to_semantic,
            "bilateral_fuse: module directions are swapped");
    const Dims det_dims = ex.dims(det);
    const Dims sem_dims = ex.dims(sem);

    auto to_det = conv_bn_run(ex, s2d.convs.at(0), sem, false);
    to_det = ex.resize(to_det, det_dims.h, det_dims.w);
    require(ex.dims(to_det).c == det_dims.c,
            "bilateral_fuse: compression conv does not match detail channels");

    auto to_sem = det;
    for (std::size_t i = 0; i < d2s.convs.size(); ++i) {
        const bool inner = i + 1 < d2s.convs.size();
        to_sem = conv_bn_run(ex, d2s.convs[i], to_sem, inner);
    }
    require(ex.dims(to_sem) == sem_dims, "bilateral_fuse: expansion does not match semantic dims");

    auto det_out = ex.relu(ex.add(det, to_det));
    auto sem_out = ex.relu(ex.add(sem, to_sem));
    return {sem_out, det_out};
}

template <typename T, class Ex>
typename Ex::Value dappm_run(Ex& ex, Dappm<T>& p, typename Ex::Value x) {
    const Dims in = ex.dims(x);
    static constexpr int kPool[3][3] = {{5, 2, 2}, {9, 4, 4}, {17, 8, 8}};

    std::vector<typename Ex::Value> levels;
    levels.push_back(conv_bn_run(ex, p.scale0, x, true));
    for (int i = 0; i < 3; ++i) {
        auto pooled = ex.avg_pool(x, kPool[i][0], kPool[i][1], kPool[i][2]);
        auto reduced = conv_bn_run(ex, p.scales[i], pooled, true);
        auto up = ex.resize(reduced, in.h, in.w);
        levels.push_back(conv_bn_run(ex, p.process[i], ex.add(up, levels.back()), true));
    }
    auto g = ex.global_pool(x);
    g = conv_bn_run(ex, p.scale_global, g, true);
    g = ex.resize(g, in.h, in.w);
    levels.push_back(conv_bn_run(ex, p.process[3], ex.add(g, levels.back()), true));

    auto merged = conv_bn_run(ex, p.compression, ex.concat(levels), false);
    auto sc = conv_bn_run(ex, p.shortcut, x, false);
    return ex.relu(ex.add(merged, sc));
}

template <typename T, class Ex>
typename Ex::Value ppm_run(Ex& ex, PyramidPooling<T>& p, typename Ex::Value x) {
    if (p.kind == PpmKind::dappm) return dappm_run(ex, *p.dappm, x);
    const Dims in = ex.dims(x);
    auto base = conv_bn_run(ex, p.simple->base, x, false);
    auto g = ex.global_pool(x);
    g = conv_bn_run(ex, p.simple->global, g, false);
    g = ex.resize(g, in.h, in.w);
    return ex.relu(ex.add(base, g));
}

template <typename T, class Ex>
typename Ex::Value seghead_run(Ex& ex, SegHead<T>& h, typename Ex::Value x) {
    auto t = conv_bn_run(ex, h.conv3, x, true);
    return ex.conv(t, h.classifier);
}

// --- single-call eval/train wrappers for the composite operations ---

enum class Mode { eval, train };

template <typename T>
Tensor4<T> gcblock_forward(GCBlock<T>& b, const Tensor4<T>& x, Mode mode);

template <typename T>
std::pair<Tensor4<T>, Tensor4<T>> bilateral_fuse(FusionModule<T>& s2d, FusionModule<T>& d2s,
                                                 const Tensor4<T>& sem, const Tensor4<T>& det,
                                                 Mode mode = Mode::eval);

template <typename T>
Tensor4<T> pyramid_pool_forward(PyramidPooling<T>& p, const Tensor4<T>& x, Mode mode = Mode::eval);

template <typename T>
Tensor4<T> seghead_forward(SegHead<T>& h, const Tensor4<T>& x, Mode mode = Mode::eval);

}  // namespace gcnet
