#include "core/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace gcnet {

namespace detail {

template <typename T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
    if (!accumulate) std::fill(c, c + static_cast<std::size_t>(m) * n, T(0));
    for (int i = 0; i < m; ++i) {
        T* __restrict crow = c + static_cast<std::size_t>(i) * n;
        const T* arow = a + static_cast<std::size_t>(i) * k;
        int p = 0;
        for (; p + 4 <= k; p += 4) {
            const T a0 = arow[p], a1 = arow[p + 1], a2 = arow[p + 2], a3 = arow[p + 3];
            if (a0 == T(0) && a1 == T(0) && a2 == T(0) && a3 == T(0)) continue;
            const T* __restrict b0 = b + static_cast<std::size_t>(p) * n;
            const T* __restrict b1 = b0 + n;
            const T* __restrict b2 = b1 + n;
            const T* __restrict b3 = b2 + n;
            // separate statements keep the per-tap accumulation order of the
            // scalar tail, so sparse (embedded 1x1) kernels stay bit-exact
            for (int j = 0; j < n; ++j) {
                T acc = crow[j];
                acc += a0 * b0[j];
                acc += a1 * b1[j];
                acc += a2 * b2[j];
                acc += a3 * b3[j];
                crow[j] = acc;
            }
        }
        for (; p < k; ++p) {
            const T av = arow[p];
            if (av == T(0)) continue;
            const T* __restrict brow = b + static_cast<std::size_t>(p) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
    if (!accumulate) std::fill(c, c + static_cast<std::size_t>(m) * n, T(0));
    for (int p = 0; p < k; ++p) {
        const T* arow = a + static_cast<std::size_t>(p) * m;
        const T* brow = b + static_cast<std::size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            const T av = arow[i];
            if (av == T(0)) continue;
            T* crow = c + static_cast<std::size_t>(i) * n;
            for (int j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

template <typename T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const T* arow = a + static_cast<std::size_t>(i) * k;
        T* crow = c + static_cast<std::size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const T* brow = b + static_cast<std::size_t>(j) * k;
            T acc = T(0);
            for (int p = 0; p < k; ++p) acc += arow[p] * brow[p];
            if (accumulate)
                crow[j] += acc;
            else
                crow[j] = acc;
        }
    }
}

template <typename T>
void im2col(const T* img, int c_in, int h, int w, int kh, int kw, int stride, int padding,
            int out_h, int out_w, T* cols) {
    const std::size_t patch = static_cast<std::size_t>(out_h) * out_w;
    for (int ci = 0; ci < c_in; ++ci) {
        const T* chan = img + static_cast<std::size_t>(ci) * h * w;
        for (int u = 0; u < kh; ++u) {
            for (int v = 0; v < kw; ++v) {
                T* row = cols + ((static_cast<std::size_t>(ci) * kh + u) * kw + v) * patch;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride + u - padding;
                    T* dst = row + static_cast<std::size_t>(oy) * out_w;
                    if (iy < 0 || iy >= h) {
                        std::fill(dst, dst + out_w, T(0));
                        continue;
                    }
                    const T* src = chan + static_cast<std::size_t>(iy) * w;
                    if (stride == 1) {
                        // contiguous middle, explicit borders
                        int ox = 0;
                        for (; ox < out_w && ox + v - padding < 0; ++ox) dst[ox] = T(0);
                        int ox_end = out_w;
                        while (ox_end > ox && ox_end - 1 + v - padding >= w) --ox_end;
                        if (ox_end > ox)
                            std::copy(src + ox + v - padding, src + ox_end + v - padding,
                                      dst + ox);
                        for (ox = ox_end; ox < out_w; ++ox) dst[ox] = T(0);
                    } else {
                        for (int ox = 0; ox < out_w; ++ox) {
                            const int ix = ox * stride + v - padding;
                            dst[ox] = (ix >= 0 && ix < w) ? src[ix] : T(0);
                        }
                    }
                }
            }
        }
    }
}

template <typename T>
void col2im(const T* cols, int c_in, int h, int w, int kh, int kw, int stride, int padding,
            int out_h, int out_w, T* img) {
    const std::size_t patch = static_cast<std::size_t>(out_h) * out_w;
    for (int ci = 0; ci < c_in; ++ci) {
        T* chan = img + static_cast<std::size_t>(ci) * h * w;
        for (int u = 0; u < kh; ++u) {
            for (int v = 0; v < kw; ++v) {
                const T* row = cols + ((static_cast<std::size_t>(ci) * kh + u) * kw + v) * patch;
                for (int oy = 0; oy < out_h; ++oy) {
                    const int iy = oy * stride + u - padding;
                    if (iy < 0 || iy >= h) continue;
                    const T* src = row + static_cast<std::size_t>(oy) * out_w;
                    T* dst = chan + static_cast<std::size_t>(iy) * w;
                    for (int ox = 0; ox < out_w; ++ox) {
                        const int ix = ox * stride + v - padding;
                        if (ix >= 0 && ix < w) dst[ix] += src[ox];
                    }
                }
            }
        }
    }
}

}  // namespace detail

namespace {

template <typename T>
void check_conv_pre(const Tensor4<T>& x, const ConvKernel<T>& k, int& out_h, int& out_w) {
    require(x.c == k.c_in, "conv2d: input channels do not match kernel c_in");
    require(static_cast<int>(k.bias.size()) == k.c_out, "conv2d: bias length must equal c_out");
    out_h = conv_out_dim(x.h, k.kh, k.stride, k.padding);
    out_w = conv_out_dim(x.w, k.kw, k.stride, k.padding);
    require(out_h >= 1 && out_w >= 1, "conv2d: non-positive output size");
}

}  // namespace

template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const ConvKernel<T>& k) {
    int out_h = 0, out_w = 0;
    check_conv_pre(x, k, out_h, out_w);
    Tensor4<T> y(x.n, k.c_out, out_h, out_w);

    const int krows = k.c_in * k.kh * k.kw;
    const std::size_t patch = static_cast<std::size_t>(out_h) * out_w;
    std::vector<T> cols(static_cast<std::size_t>(krows) * patch);
    for (int in = 0; in < x.n; ++in) {
        detail::im2col(x.plane(in, 0), x.c, x.h, x.w, k.kh, k.kw, k.stride, k.padding, out_h,
                       out_w, cols.data());
        detail::gemm_nn(k.c_out, static_cast<int>(patch), krows, k.weight.data(), cols.data(),
                        y.plane(in, 0), false);
        for (int o = 0; o < k.c_out; ++o) {
            T* row = y.plane(in, o);
            const T b = k.bias[o];
            for (std::size_t j = 0; j < patch; ++j) row[j] += b;
        }
    }
    return y;
}

template <typename T>
Tensor4<T> conv2d_direct(const Tensor4<T>& x, const ConvKernel<T>& k) {
    int out_h = 0, out_w = 0;
    check_conv_pre(x, k, out_h, out_w);
    Tensor4<T> y(x.n, k.c_out, out_h, out_w);

    for (int in = 0; in < x.n; ++in) {
        for (int o = 0; o < k.c_out; ++o) {
            for (int oy = 0; oy < out_h; ++oy) {
                for (int ox = 0; ox < out_w; ++ox) {
                    double acc = static_cast<double>(k.bias[o]);
                    for (int ci = 0; ci < k.c_in; ++ci) {
                        for (int u = 0; u < k.kh; ++u) {
                            const int iy = oy * k.stride + u - k.padding;
                            if (iy < 0 || iy >= x.h) continue;
                            for (int v = 0; v < k.kw; ++v) {
                                const int ix = ox * k.stride + v - k.padding;
                                if (ix < 0 || ix >= x.w) continue;
                                acc += static_cast<double>(x.at(in, ci, iy, ix)) *
                                       static_cast<double>(k.wat(o, ci, u, v));
                            }
                        }
                    }
                    y.at(in, o, oy, ox) = static_cast<T>(acc);
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor4<T> batchnorm_eval(const Tensor4<T>& x, const BatchNormStats<T>& s) {
    s.validate();
    require(x.c == s.channels(), "batchnorm: channel mismatch");
    Tensor4<T> y(x.n, x.c, x.h, x.w);
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    for (int ci = 0; ci < x.c; ++ci) {
        const T scale = s.gamma[ci] / std::sqrt(s.var[ci] + s.eps);
        const T shift = s.beta[ci] - s.mean[ci] * scale;
        for (int in = 0; in < x.n; ++in) {
            const T* src = x.plane(in, ci);
            T* dst = y.plane(in, ci);
            for (std::size_t j = 0; j < plane; ++j) dst[j] = src[j] * scale + shift;
        }
    }
    return y;
}

template <typename T>
Tensor4<T> batchnorm_train(const Tensor4<T>& x, BatchNormStats<T>& s,
                           BatchNormBatchStats<T>* saved) {
    s.validate();
    require(x.c == s.channels(), "batchnorm: channel mismatch");
    Tensor4<T> y(x.n, x.c, x.h, x.w);
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    const double m = static_cast<double>(x.n) * plane;
    if (saved) {
        saved->mean.assign(x.c, T(0));
        saved->invstd.assign(x.c, T(0));
    }
    for (int ci = 0; ci < x.c; ++ci) {
        double sum = 0.0, sumsq = 0.0;
        for (int in = 0; in < x.n; ++in) {
            const T* src = x.plane(in, ci);
            for (std::size_t j = 0; j < plane; ++j) {
                const double v = static_cast<double>(src[j]);
                sum += v;
                sumsq += v * v;
            }
        }
        const double mean = sum / m;
        double var = sumsq / m - mean * mean;
        if (!std::isfinite(mean) || !std::isfinite(var))
            throw NumericError("batchnorm: non-finite batch statistics, activations diverged");
        if (var < 0.0) var = 0.0;  // guard against cancellation
        const double invstd = 1.0 / std::sqrt(var + static_cast<double>(s.eps));

        const double unbiased = m > 1.0 ? var * m / (m - 1.0) : var;
        s.mean[ci] = static_cast<T>((1.0 - s.momentum) * s.mean[ci] + s.momentum * mean);
        s.var[ci] = static_cast<T>((1.0 - s.momentum) * s.var[ci] + s.momentum * unbiased);

        const T scale = static_cast<T>(s.gamma[ci] * invstd);
        const T shift = static_cast<T>(s.beta[ci] - mean * s.gamma[ci] * invstd);
        for (int in = 0; in < x.n; ++in) {
            const T* src = x.plane(in, ci);
            T* dst = y.plane(in, ci);
            for (std::size_t j = 0; j < plane; ++j) dst[j] = src[j] * scale + shift;
        }
        if (saved) {
            saved->mean[ci] = static_cast<T>(mean);
            saved->invstd[ci] = static_cast<T>(invstd);
        }
    }
    return y;
}

template <typename T>
Tensor4<T> bilinear_resize(const Tensor4<T>& x, int out_h, int out_w) {
    require(out_h >= 1 && out_w >= 1, "bilinear_resize: output dims must be >= 1");
    if (out_h == x.h && out_w == x.w) return x;

    Tensor4<T> y(x.n, x.c, out_h, out_w);
    const double sy = static_cast<double>(x.h) / out_h;
    const double sx = static_cast<double>(x.w) / out_w;

    std::vector<int> x0(out_w), x1(out_w);
    std::vector<T> fx(out_w);
    for (int ox = 0; ox < out_w; ++ox) {
        double src = (ox + 0.5) * sx - 0.5;
        if (src < 0.0) src = 0.0;
        const int i0 = std::min(static_cast<int>(src), x.w - 1);
        x0[ox] = i0;
        x1[ox] = std::min(i0 + 1, x.w - 1);
        fx[ox] = static_cast<T>(src - i0);
    }

    for (int oy = 0; oy < out_h; ++oy) {
        double src = (oy + 0.5) * sy - 0.5;
        if (src < 0.0) src = 0.0;
        const int y0 = std::min(static_cast<int>(src), x.h - 1);
        const int y1 = std::min(y0 + 1, x.h - 1);
        const T fy = static_cast<T>(src - y0);
        for (int in = 0; in < x.n; ++in) {
            for (int ci = 0; ci < x.c; ++ci) {
                const T* r0 = x.plane(in, ci) + static_cast<std::size_t>(y0) * x.w;
                const T* r1 = x.plane(in, ci) + static_cast<std::size_t>(y1) * x.w;
                T* dst = y.plane(in, ci) + static_cast<std::size_t>(oy) * out_w;
                for (int ox = 0; ox < out_w; ++ox) {
                    // lerp form keeps constant inputs exactly constant
                    const T top = r0[x0[ox]] + fx[ox] * (r0[x1[ox]] - r0[x0[ox]]);
                    const T bot = r1[x0[ox]] + fx[ox] * (r1[x1[ox]] - r1[x0[ox]]);
                    dst[ox] = top + fy * (bot - top);
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor4<T> avg_pool(const Tensor4<T>& x, int kernel, int stride, int padding) {
    require(kernel >= 1 && stride >= 1 && padding >= 0, "avg_pool: bad window config");
    const int out_h = conv_out_dim(x.h, kernel, stride, padding);
    const int out_w = conv_out_dim(x.w, kernel, stride, padding);
    require(out_h >= 1 && out_w >= 1, "avg_pool: non-positive output size");
    Tensor4<T> y(x.n, x.c, out_h, out_w);
    const T inv_area = T(1) / static_cast<T>(kernel * kernel);
    for (int in = 0; in < x.n; ++in) {
        for (int ci = 0; ci < x.c; ++ci) {
            const T* src = x.plane(in, ci);
            T* dst = y.plane(in, ci);
            for (int oy = 0; oy < out_h; ++oy) {
                for (int ox = 0; ox < out_w; ++ox) {
                    double acc = 0.0;
                    for (int u = 0; u < kernel; ++u) {
                        const int iy = oy * stride + u - padding;
                        if (iy < 0 || iy >= x.h) continue;
                        for (int v = 0; v < kernel; ++v) {
                            const int ix = ox * stride + v - padding;
                            if (ix < 0 || ix >= x.w) continue;
                            acc += static_cast<double>(src[static_cast<std::size_t>(iy) * x.w + ix]);
                        }
                    }
                    dst[static_cast<std::size_t>(oy) * out_w + ox] =
                        static_cast<T>(acc) * inv_area;
                }
            }
        }
    }
    return y;
}

template <typename T>
Tensor4<T> global_avg_pool(const Tensor4<T>& x) {
    Tensor4<T> y(x.n, x.c, 1, 1);
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    for (int in = 0; in < x.n; ++in) {
        for (int ci = 0; ci < x.c; ++ci) {
            const T* src = x.plane(in, ci);
            double acc = 0.0;
            for (std::size_t j = 0; j < plane; ++j) acc += static_cast<double>(src[j]);
            y.at(in, ci, 0, 0) = static_cast<T>(acc / static_cast<double>(plane));
        }
    }
    return y;
}

template <typename T>
Tensor4<T> relu(const Tensor4<T>& x) {
    Tensor4<T> y(x.n, x.c, x.h, x.w);
    for (std::size_t i = 0; i < x.size(); ++i) y.data[i] = x.data[i] > T(0) ? x.data[i] : T(0);
    return y;
}

template <typename T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b) {
    require(a.same_dims(b), "add: tensor dims must match");
    Tensor4<T> y(a.n, a.c, a.h, a.w);
    for (std::size_t i = 0; i < a.size(); ++i) y.data[i] = a.data[i] + b.data[i];
    return y;
}

template <typename T>
LabelMap argmax_channel(const Tensor4<T>& x) {
    LabelMap out(x.n, x.h, x.w);
    const std::size_t plane = static_cast<std::size_t>(x.h) * x.w;
    for (int in = 0; in < x.n; ++in) {
        for (std::size_t j = 0; j < plane; ++j) {
            T best = x.plane(in, 0)[j];
            std::int32_t best_c = 0;
            for (int ci = 1; ci < x.c; ++ci) {
                const T v = x.plane(in, ci)[j];
                if (v > best) {
                    best = v;
                    best_c = ci;
                }
            }
            out.data[static_cast<std::size_t>(in) * plane + j] = best_c;
        }
    }
    return out;
}

template <typename T>
Tensor4<T> concat_channels(const std::vector<const Tensor4<T>*>& parts) {
    require(!parts.empty(), "concat_channels: empty input list");
    int total_c = 0;
    for (const auto* p : parts) {
        require(p->n == parts[0]->n && p->h == parts[0]->h && p->w == parts[0]->w,
                "concat_channels: spatial/batch dims must match");
        total_c += p->c;
    }
    Tensor4<T> y(parts[0]->n, total_c, parts[0]->h, parts[0]->w);
    const std::size_t plane = static_cast<std::size_t>(y.h) * y.w;
    for (int in = 0; in < y.n; ++in) {
        int co = 0;
        for (const auto* p : parts) {
            std::copy(p->plane(in, 0), p->plane(in, 0) + static_cast<std::size_t>(p->c) * plane,
                      y.plane(in, co));
            co += p->c;
        }
    }
    return y;
}

#define GCNET_INSTANTIATE(T)                                                                  \
    template Tensor4<T> conv2d<T>(const Tensor4<T>&, const ConvKernel<T>&);                  \
    template Tensor4<T> conv2d_direct<T>(const Tensor4<T>&, const ConvKernel<T>&);           \
    template Tensor4<T> batchnorm_eval<T>(const Tensor4<T>&, const BatchNormStats<T>&);      \
    template Tensor4<T> batchnorm_train<T>(const Tensor4<T>&, BatchNormStats<T>&,            \
                                           BatchNormBatchStats<T>*);                         \
    template Tensor4<T> bilinear_resize<T>(const Tensor4<T>&, int, int);                     \
    template Tensor4<T> avg_pool<T>(const Tensor4<T>&, int, int, int);                       \
    template Tensor4<T> global_avg_pool<T>(const Tensor4<T>&);                               \
    template Tensor4<T> relu<T>(const Tensor4<T>&);                                          \
    template Tensor4<T> add<T>(const Tensor4<T>&, const Tensor4<T>&);                        \
    template LabelMap argmax_channel<T>(const Tensor4<T>&);                                  \
    template Tensor4<T> concat_channels<T>(const std::vector<const Tensor4<T>*>&);           \
    namespace detail {                                                                        \
    template void gemm_nn<T>(int, int, int, const T*, const T*, T*, bool);                   \
    template void gemm_tn<T>(int, int, int, const T*, const T*, T*, bool);                   \
    template void gemm_nt<T>(int, int, int, const T*, const T*, T*, bool);                   \
    template void im2col<T>(const T*, int, int, int, int, int, int, int, int, int, T*);      \
    template void col2im<T>(const T*, int, int, int, int, int, int, int, int, int, T*);      \
    }

GCNET_INSTANTIATE(float)
GCNET_INSTANTIATE(double)

#undef GCNET_INSTANTIATE

}  // namespace gcnet
