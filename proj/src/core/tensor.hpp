#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "core/common.hpp"

namespace gcnet {

// Dense rank-4 tensor in row-major (n, c, h, w) order. Element type is
// float for benchmarking and double for correctness testing. Operations
// below are pure functions of their inputs; a constructed tensor is never
// mutated by them, so read-only sharing across threads is safe.
template <typename T>
struct Tensor4 {
    int n = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;

    Tensor4() = default;
    Tensor4(int n_, int c_, int h_, int w_) : n(n_), c(c_), h(h_), w(w_) {
        require(n >= 1 && c >= 1 && h >= 1 && w >= 1, "tensor dims must all be >= 1");
        data.assign(static_cast<std::size_t>(n) * c * h * w, T(0));
    }

    std::size_t size() const { return data.size(); }

    std::size_t index(int in, int ic, int iy, int ix) const {
        return ((static_cast<std::size_t>(in) * c + ic) * h + iy) * w + ix;
    }

    T& at(int in, int ic, int iy, int ix) { return data[index(in, ic, iy, ix)]; }
    T at(int in, int ic, int iy, int ix) const { return data[index(in, ic, iy, ix)]; }

    T* plane(int in, int ic) { return data.data() + index(in, ic, 0, 0); }
    const T* plane(int in, int ic) const { return data.data() + index(in, ic, 0, 0); }

    bool same_dims(const Tensor4& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }

    template <typename U>
    Tensor4<U> cast() const {
        Tensor4<U> out(n, c, h, w);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

// Per-pixel class indices. ignore_value pixels take no part in losses or
// metrics.
struct LabelMap {
    int n = 0, h = 0, w = 0;
    std::vector<std::int32_t> data;
    static constexpr std::int32_t kIgnore = 255;

    LabelMap() = default;
    LabelMap(int n_, int h_, int w_) : n(n_), h(h_), w(w_) {
        require(n >= 1 && h >= 1 && w >= 1, "label map dims must all be >= 1");
        data.assign(static_cast<std::size_t>(n) * h * w, 0);
    }

    std::size_t size() const { return data.size(); }
    std::int32_t& at(int in, int iy, int ix) {
        return data[(static_cast<std::size_t>(in) * h + iy) * w + ix];
    }
    std::int32_t at(int in, int iy, int ix) const {
        return data[(static_cast<std::size_t>(in) * h + iy) * w + ix];
    }
};

// 2-D convolution weights: weight is (c_out, c_in, k, k) row-major, bias is
// per output channel. Kernels are square and either 1x1 or 3x3.
template <typename T>
struct ConvKernel {
    int c_out = 0, c_in = 0, kh = 0, kw = 0;
    int stride = 1;
    int padding = 0;
    std::vector<T> weight;
    std::vector<T> bias;

    ConvKernel() = default;
    ConvKernel(int c_out_, int c_in_, int k, int stride_, int padding_)
        : c_out(c_out_), c_in(c_in_), kh(k), kw(k), stride(stride_), padding(padding_) {
        require(c_out >= 1 && c_in >= 1, "conv kernel channel counts must be >= 1");
        require(k == 1 || k == 3, "conv kernels are 1x1 or 3x3");
        require(stride >= 1, "conv stride must be positive");
        require(padding >= 0, "conv padding must be non-negative");
        weight.assign(static_cast<std::size_t>(c_out) * c_in * kh * kw, T(0));
        bias.assign(static_cast<std::size_t>(c_out), T(0));
    }

    std::size_t widx(int o, int i, int u, int v) const {
        return ((static_cast<std::size_t>(o) * c_in + i) * kh + u) * kw + v;
    }
    T& wat(int o, int i, int u, int v) { return weight[widx(o, i, u, v)]; }
    T wat(int o, int i, int u, int v) const { return weight[widx(o, i, u, v)]; }

    template <typename U>
    ConvKernel<U> cast() const {
        ConvKernel<U> out(c_out, c_in, kh, stride, padding);
        for (std::size_t i = 0; i < weight.size(); ++i) out.weight[i] = static_cast<U>(weight[i]);
        for (std::size_t i = 0; i < bias.size(); ++i) out.bias[i] = static_cast<U>(bias[i]);
        return out;
    }
};

// Batch-normalization state for one channel axis. var holds the variance
// (the paper's sigma). momentum weights the running-stat update in train
// mode: running = (1 - momentum) * running + momentum * batch.
template <typename T>
struct BatchNormStats {
    std::vector<T> mean, var, gamma, beta;
    T eps = static_cast<T>(1e-5);
    T momentum = static_cast<T>(0.1);

    BatchNormStats() = default;
    explicit BatchNormStats(int channels) {
        require(channels >= 1, "batchnorm channel count must be >= 1");
        mean.assign(channels, T(0));
        var.assign(channels, T(1));
        gamma.assign(channels, T(1));
        beta.assign(channels, T(0));
    }

    int channels() const { return static_cast<int>(mean.size()); }

    void validate() const {
        require(mean.size() == var.size() && mean.size() == gamma.size() &&
                    mean.size() == beta.size(),
                "batchnorm stat arrays must share one channel count");
        require(eps > T(0), "batchnorm eps must be positive");
        for (T v : var) require(v >= T(0), "batchnorm variance must be non-negative");
    }

    template <typename U>
    BatchNormStats<U> cast() const {
        BatchNormStats<U> out(channels());
        for (int i = 0; i < channels(); ++i) {
            out.mean[i] = static_cast<U>(mean[i]);
            out.var[i] = static_cast<U>(var[i]);
            out.gamma[i] = static_cast<U>(gamma[i]);
            out.beta[i] = static_cast<U>(beta[i]);
        }
        out.eps = static_cast<U>(eps);
        out.momentum = static_cast<U>(momentum);
        return out;
    }
};

inline int conv_out_dim(int in, int k, int stride, int padding) {
    return (in + 2 * padding - k) / stride + 1;
}

// --- convolution ---

// im2col + matrix-multiply path. The production path for forward passes.
template <typename T>
Tensor4<T> conv2d(const Tensor4<T>& x, const ConvKernel<T>& k);

// Direct nested-loop path, accumulating in double. This is the in-module
// brute-force oracle the im2col path is checked against.
template <typename T>
Tensor4<T> conv2d_direct(const Tensor4<T>& x, const ConvKernel<T>& k);

// --- batch normalization ---

template <typename T>
Tensor4<T> batchnorm_eval(const Tensor4<T>& x, const BatchNormStats<T>& s);

// Batch statistics actually used to normalize, kept for the backward pass.
template <typename T>
struct BatchNormBatchStats {
    std::vector<T> mean;     // per-channel batch mean
    std::vector<T> invstd;   // 1 / sqrt(batch_var + eps)
};

// Normalizes with per-channel batch statistics and updates s.mean / s.var
// by exponential moving average (running variance uses the unbiased
// estimator, matching the usual framework convention).
template <typename T>
Tensor4<T> batchnorm_train(const Tensor4<T>& x, BatchNormStats<T>& s,
                           BatchNormBatchStats<T>* saved = nullptr);

// --- resize / pooling / elementwise ---

// Bilinear with half-pixel centers (align-corners false). Source rows and
// columns are clamped at the borders; same-size calls copy exactly.
template <typename T>
Tensor4<T> bilinear_resize(const Tensor4<T>& x, int out_h, int out_w);

// Average pooling; zero padding counts toward the divisor (the divisor is
// always the full window area).
template <typename T>
Tensor4<T> avg_pool(const Tensor4<T>& x, int kernel, int stride, int padding);

// Mean over the full spatial extent, producing (n, c, 1, 1).
template <typename T>
Tensor4<T> global_avg_pool(const Tensor4<T>& x);

template <typename T>
Tensor4<T> relu(const Tensor4<T>& x);

template <typename T>
Tensor4<T> add(const Tensor4<T>& a, const Tensor4<T>& b);

// Per-pixel class of the maximal channel; ties break toward the lowest
// channel index.
template <typename T>
LabelMap argmax_channel(const Tensor4<T>& x);

template <typename T>
Tensor4<T> concat_channels(const std::vector<const Tensor4<T>*>& parts);

namespace detail {

// C[m x n] (+)= A[m x k] * B[k x n], all row-major. accumulate=false
// overwrites C.
template <typename T>
void gemm_nn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);

// C[m x n] (+)= A^T[k x m] * B[k x n]  (A stored k x m ... passed as m-major?):
// here A is stored (k x m) row-major and used transposed.
template <typename T>
void gemm_tn(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);

// C[m x n] (+)= A[m x k] * B^T[n x k], B stored (n x k) row-major.
template <typename T>
void gemm_nt(int m, int n, int k, const T* a, const T* b, T* c, bool accumulate);

// Unrolls conv patches of one batch image into a (c_in*kh*kw) x (out_h*out_w)
// column matrix.
template <typename T>
void im2col(const T* img, int c_in, int h, int w, int kh, int kw, int stride, int padding,
            int out_h, int out_w, T* cols);

// Adjoint of im2col: scatter-adds columns back into image layout.
template <typename T>
void col2im(const T* cols, int c_in, int h, int w, int kh, int kw, int stride, int padding,
            int out_h, int out_w, T* img);

}  // namespace detail

}  // namespace gcnet
