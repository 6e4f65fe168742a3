#include "core/reparam.hpp"

#include <algorithm>
#include <cmath>

namespace gcnet {
namespace reparam {

template <typename T>
ConvKernel<T> fuse_conv_bn(const ConvKernel<T>& k, const BatchNormStats<T>& s) {
    s.validate();
    require(k.c_out == s.channels(), "fuse_conv_bn: kernel c_out does not match stats channels");
    ConvKernel<T> out(k.c_out, k.c_in, k.kh, k.stride, k.padding);
    const std::size_t per_out = static_cast<std::size_t>(k.c_in) * k.kh * k.kw;
    for (int o = 0; o < k.c_out; ++o) {
        const double scale =
            static_cast<double>(s.gamma[o]) /
            std::sqrt(static_cast<double>(s.var[o]) + static_cast<double>(s.eps));
        const T* src = k.weight.data() + static_cast<std::size_t>(o) * per_out;
        T* dst = out.weight.data() + static_cast<std::size_t>(o) * per_out;
        for (std::size_t j = 0; j < per_out; ++j)
            dst[j] = static_cast<T>(static_cast<double>(src[j]) * scale);
        out.bias[o] = static_cast<T>(
            (static_cast<double>(k.bias[o]) - static_cast<double>(s.mean[o])) * scale +
            static_cast<double>(s.beta[o]));
    }
    return out;
}

template <typename T>
ConvKernel<T> merge_sequential(const ConvKernel<T>& first, const ConvKernel<T>& second) {
    require(second.kh == 1 && second.kw == 1, "merge_sequential: second kernel must be 1x1");
    require(second.stride == 1 && second.padding == 0,
            "merge_sequential: second kernel must be stride 1, padding 0");
    require(first.c_out == second.c_in, "merge_sequential: channel mismatch between stages");

    ConvKernel<T> out(second.c_out, first.c_in, first.kh, first.stride, first.padding);
    const int spatial = first.kh * first.kw;
    const int cols = first.c_in * spatial;

    // W' = W_second (c_out2 x c_out1) * W_first (c_out1 x c_in*k*k), in f64
    std::vector<double> a(second.weight.begin(), second.weight.end());
    std::vector<double> b(first.weight.begin(), first.weight.end());
    std::vector<double> c(static_cast<std::size_t>(second.c_out) * cols);
    detail::gemm_nn(second.c_out, cols, first.c_out, a.data(), b.data(), c.data(), false);
    for (std::size_t j = 0; j < c.size(); ++j) out.weight[j] = static_cast<T>(c[j]);

    for (int o = 0; o < second.c_out; ++o) {
        double acc = static_cast<double>(second.bias[o]);
        for (int m = 0; m < first.c_out; ++m) {
            acc += static_cast<double>(second.weight[static_cast<std::size_t>(o) * second.c_in +
                                                     m]) *
                   static_cast<double>(first.bias[m]);
        }
        out.bias[o] = static_cast<T>(acc);
    }
    return out;
}

template <typename T>
ConvKernel<T> merge_stages(const ConvBN<T>& first, const ConvBN<T>& second) {
    require(!first.bn.has_value() && !second.bn.has_value(),
            "merge_stages: batch norm must be folded before merging");
    return merge_sequential(first.conv, second.conv);
}

template <typename T>
ConvKernel<T> embed_1x1_in_3x3(const ConvKernel<T>& k) {
    require(k.kh == 1 && k.kw == 1, "embed_1x1_in_3x3: kernel must be 1x1");
    require(k.padding == 0, "embed_1x1_in_3x3: 1x1 kernel must have padding 0");
    ConvKernel<T> out(k.c_out, k.c_in, 3, k.stride, 1);
    for (int o = 0; o < k.c_out; ++o)
        for (int i = 0; i < k.c_in; ++i)
            out.wat(o, i, 1, 1) = k.weight[static_cast<std::size_t>(o) * k.c_in + i];
    out.bias = k.bias;
    return out;
}

template <typename T>
ConvKernel<T> residual_to_conv3x3(int channels, const BatchNormStats<T>& s, int stride) {
    require(stride == 1, "residual_to_conv3x3: residual connections exist only at stride 1");
    require(channels == s.channels(), "residual_to_conv3x3: channel mismatch");
    ConvKernel<T> identity(channels, channels, 1, 1, 0);
    for (int c = 0; c < channels; ++c)
        identity.weight[static_cast<std::size_t>(c) * channels + c] = T(1);
    return fuse_conv_bn(embed_1x1_in_3x3(identity), s);
}

template <typename T>
ConvKernel<T> sum_parallel(const std::vector<ConvKernel<T>>& kernels) {
    require(!kernels.empty(), "sum_parallel: kernel list must not be empty");
    const ConvKernel<T>& k0 = kernels.front();
    for (const auto& k : kernels) {
        require(k.c_out == k0.c_out && k.c_in == k0.c_in && k.kh == k0.kh && k.kw == k0.kw &&
                    k.stride == k0.stride && k.padding == k0.padding,
                "sum_parallel: kernels must share shape, stride, and padding");
    }

    ConvKernel<T> out(k0.c_out, k0.c_in, k0.kh, k0.stride, k0.padding);
    std::vector<double> addends(kernels.size());
    auto reduce = [&addends]() {
        std::sort(addends.begin(), addends.end());
        double acc = 0.0;
        for (double v : addends) acc += v;
        return acc;
    };
    for (std::size_t j = 0; j < out.weight.size(); ++j) {
        for (std::size_t p = 0; p < kernels.size(); ++p)
            addends[p] = static_cast<double>(kernels[p].weight[j]);
        out.weight[j] = static_cast<T>(reduce());
    }
    for (std::size_t j = 0; j < out.bias.size(); ++j) {
        for (std::size_t p = 0; p < kernels.size(); ++p)
            addends[p] = static_cast<double>(kernels[p].bias[j]);
        out.bias[j] = static_cast<T>(reduce());
    }
    return out;
}

template <typename T>
void validate_gcblock(const GCBlock<T>& b) {
    require(b.stride == 1 || b.stride == 2, "gcblock: stride must be 1 or 2");
    if (b.form == Form::inference) {
        require(b.fused.has_value() && b.paths.empty(), "gcblock: inference form must hold "
                                                        "exactly the fused kernel");
        require(b.fused->c_out == b.out_channels && b.fused->c_in == b.in_channels &&
                    b.fused->kh == 3 && b.fused->stride == b.stride && b.fused->padding == 1,
                "gcblock: fused kernel geometry mismatch");
        return;
    }
    require(!b.fused.has_value(), "gcblock: training form must not carry a fused kernel");
    require(!b.paths.empty(), "gcblock: training form needs paths");

    int n3 = 0, n1 = 0, nres = 0;
    for (const auto& p : b.paths) {
        switch (p.kind) {
            case PathKind::conv3x3_1x1: {
                ++n3;
                require(p.stages.size() == 2, "gcblock: conv path must have two stages");
                const auto& a = p.stages[0].conv;
                const auto& c = p.stages[1].conv;
                require(a.kh == 3 && a.stride == b.stride && a.padding == 1 &&
                            a.c_in == b.in_channels && a.c_out == b.out_channels,
                        "gcblock: malformed 3x3 stage");
                require(c.kh == 1 && c.stride == 1 && c.padding == 0 &&
                            c.c_in == b.out_channels && c.c_out == b.out_channels,
                        "gcblock: malformed trailing 1x1 stage");
                break;
            }
            case PathKind::conv1x1_1x1: {
                ++n1;
                require(p.stages.size() == 2, "gcblock: conv path must have two stages");
                const auto& a = p.stages[0].conv;
                const auto& c = p.stages[1].conv;
                // the path stride sits on the FIRST 1x1
                require(a.kh == 1 && a.stride == b.stride && a.padding == 0 &&
                            a.c_in == b.in_channels && a.c_out == b.out_channels,
                        "gcblock: malformed leading 1x1 stage");
                require(c.kh == 1 && c.stride == 1 && c.padding == 0 &&
                            c.c_in == b.out_channels && c.c_out == b.out_channels,
                        "gcblock: malformed trailing 1x1 stage");
                break;
            }
            case PathKind::residual: {
                ++nres;
                require(b.stride == 1, "gcblock: residual path requires stride 1");
                require(b.in_channels == b.out_channels,
                        "gcblock: residual path requires matching channel counts");
                require(p.stages.empty() && p.residual_bn.has_value(),
                        "gcblock: residual path carries only a batch norm");
                require(p.residual_bn->channels() == b.out_channels,
                        "gcblock: residual batch norm channel mismatch");
                break;
            }
        }
    }
    require(n3 >= 1, "gcblock: need at least one 3x3 path");
    require(n1 == 1, "gcblock: need exactly one 1x1 path");
    // identity residual needs stride 1 and matching channel counts
    const int want_res = (b.stride == 1 && b.in_channels == b.out_channels) ? 1 : 0;
    require(nres == want_res, "gcblock: residual path present iff the identity fits");
}

template <typename T>
ConvKernel<T> fuse_path(const Path<T>& path, int in_channels, int out_channels, int stride) {
    if (path.kind == PathKind::residual) {
        require(in_channels == out_channels, "fuse_path: residual needs square channels");
        return residual_to_conv3x3(out_channels, *path.residual_bn, stride);
    }
    require(path.stages.size() == 2, "fuse_path: conv path must have two stages");
    ConvBN<T> first{path.stages[0].bn ? fuse_conv_bn(path.stages[0].conv, *path.stages[0].bn)
                                      : path.stages[0].conv,
                    std::nullopt};
    ConvBN<T> second{path.stages[1].bn ? fuse_conv_bn(path.stages[1].conv, *path.stages[1].bn)
                                       : path.stages[1].conv,
                     std::nullopt};
    if (first.conv.kh == 1) first.conv = embed_1x1_in_3x3(first.conv);
    return merge_stages(first, second);
}

template <typename T>
GCBlock<T> contract_gcblock(const GCBlock<T>& b) {
    require(b.form == Form::training, "contract_gcblock: block is already contracted");
    validate_gcblock(b);

    std::vector<ConvKernel<T>> fused_paths;
    fused_paths.reserve(b.paths.size());
    for (const auto& p : b.paths)
        fused_paths.push_back(fuse_path(p, b.in_channels, b.out_channels, b.stride));

    GCBlock<T> out;
    out.in_channels = b.in_channels;
    out.out_channels = b.out_channels;
    out.stride = b.stride;
    out.form = Form::inference;
    out.fused = sum_parallel(fused_paths);
    return out;
}

#define GCNET_INSTANTIATE(T)                                                                 \
    template ConvKernel<T> fuse_conv_bn<T>(const ConvKernel<T>&, const BatchNormStats<T>&); \
    template ConvKernel<T> merge_sequential<T>(const ConvKernel<T>&, const ConvKernel<T>&); \
    template ConvKernel<T> merge_stages<T>(const ConvBN<T>&, const ConvBN<T>&);             \
    template ConvKernel<T> embed_1x1_in_3x3<T>(const ConvKernel<T>&);                       \
    template ConvKernel<T> residual_to_conv3x3<T>(int, const BatchNormStats<T>&, int);      \
    template ConvKernel<T> sum_parallel<T>(const std::vector<ConvKernel<T>>&);              \
    template ConvKernel<T> fuse_path<T>(const Path<T>&, int, int, int);                     \
    template GCBlock<T> contract_gcblock<T>(const GCBlock<T>&);                             \
    template void validate_gcblock<T>(const GCBlock<T>&);

GCNET_INSTANTIATE(float)
GCNET_INSTANTIATE(double)

#undef GCNET_INSTANTIATE

}  // namespace reparam
}  // namespace gcnet
