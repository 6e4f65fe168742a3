#include "core/autograd.hpp"

#include <algorithm>
#include <cmath>

namespace gcnet {

template <typename T>
typename TapeExec<T>::Value TapeExec<T>::input(Tensor4<T> x) {
    return push(std::move(x));
}

template <typename T>
typename TapeExec<T>::Value TapeExec<T>::conv(Value x, ConvKernel<T>& k) {
    Value y = push(conv2d(nodes_[x].value, k));
    if (!record_) return y;
    nodes_[y].back = [this, x, y, &k]() {
        const Tensor4<T>& gy = nodes_[y].grad;
        const Tensor4<T>& xv = nodes_[x].value;
        Tensor4<T>& gx = grad_buf(x);
        std::vector<T>& gw = param_buf(k.weight);
        std::vector<T>& gb = param_buf(k.bias);

        const int krows = k.c_in * k.kh * k.kw;
        const std::size_t patch = static_cast<std::size_t>(gy.h) * gy.w;
        std::vector<T> cols(static_cast<std::size_t>(krows) * patch);
        std::vector<T> gcols(cols.size());
        for (int in = 0; in < xv.n; ++in) {
            const T* gyp = gy.plane(in, 0);
            for (int o = 0; o < k.c_out; ++o) {
                const T* row = gy.plane(in, o);
                T acc = T(0);
                for (std::size_t j = 0; j < patch; ++j) acc += row[j];
                gb[o] += acc;
            }
            detail::im2col(xv.plane(in, 0), xv.c, xv.h, xv.w, k.kh, k.kw, k.stride, k.padding,
                           gy.h, gy.w, cols.data());
            // dW += dY * cols^T
            detail::gemm_nt(k.c_out, krows, static_cast<int>(patch), gyp, cols.data(), gw.data(),
                            true);
            // dcols = W^T * dY, then scatter back to the input
            detail::gemm_tn(krows, static_cast<int>(patch), k.c_out, k.weight.data(), gyp,
                            gcols.data(), false);
            detail::col2im(gcols.data(), xv.c, xv.h, xv.w, k.kh, k.kw, k.stride, k.padding, gy.h,
                           gy.w, gx.plane(in, 0));
        }
    };
    return y;
}

template <typename T>
typename TapeExec<T>::Value TapeExec<T>::bn(Value x, BatchNormStats<T>& s) {
    auto saved = std::make_shared<BatchNormBatchStats<T>>();
    Value y = push(batchnorm_train(nodes_[x].value, s, saved.get()));
    if (!record_) return y;
    nodes_[y].back = [this, x, y, &s, saved]() {
        const Tensor4<T>& gy = nodes_[y].grad;
        const Tensor4<T>& xv = nodes_[x].value;
        Tensor4<T>& gx = grad_buf(x);
        std::vector<T>& ggamma = param_buf(s.gamma);
        std::vector<T>& gbeta = param_buf(s.beta);

        const std::size_t plane = static_cast<std::size_t>(xv.h) * xv.w;
        const double m = static_cast<double>(xv.n) * plane;
        for (int ci = 0; ci < xv.c; ++ci) {
            const double mean = saved->mean[ci];
            const double invstd = saved->invstd[ci];
            double sum_gy = 0.0, sum_gy_xhat = 0.0;
            for (int in = 0; in < xv.n; ++in) {
                const T* gr = gy.plane(in, ci);
                const T* xr = xv.plane(in, ci);
                for (std::size_t j = 0; j < plane; ++j) {
                    const double g = gr[j];
                    sum_gy += g;
                    sum_gy_xhat += g * (static_cast<double>(xr[j]) - mean) * invstd;
                }
            }
            ggamma[ci] += static_cast<T>(sum_gy_xhat);
            gbeta[ci] += static_cast<T>(sum_gy);

            const double gscale = static_cast<double>(s.gamma[ci]) * invstd;
            const double mean_gy = sum_gy / m;
            const double mean_gy_xhat = sum_gy_xhat / m;
            for (int in = 0; in < xv.n; ++in) {
                const T* gr = gy.plane(in, ci);
                const T* xr = xv.plane(in, ci);
                T* dst = gx.plane(in, ci);
                for (std::size_t j = 0; j < plane; ++j) {
                    const double xhat = (static_cast<double>(xr[j]) - mean) * invstd;
                    dst[j] += static_cast<T>(gscale *
                                             (static_cast<double>(gr[j]) - mean_gy -
                                              xhat * mean_gy_xhat));
                }
            }
        }
    };
    return y;
}

template <typename T>
typename TapeExec<T>::Value TapeExec<T>::relu(Value x) {
    Value y = push(gcnet::relu(nodes_[x].value));
    if (!record_) return y;
    nodes_[y].back = [this, x, y]() {
        const Tensor4<T>& gy = nodes_[y].grad;
        const Tensor4<T>& yv = nodes_[y].value;
        Tensor4<T>& gx = grad_buf(x);
        for (std::size_t j = 0; j < yv.size(); ++j)
            if (yv.data[j] > T(0)) gx.data[j] += gy.data[j];
    };
    return y;
}

template <typename T>
typename TapeExec<T>::Value TapeExec<T>::add(Value a, Value b) {
    Value y = push(gcnet::add(nodes_[a].value, nodes_[b].value));
    if (!record_) return y;
    nodes_[y].back = [this, a, b, y]() {
        const Tensor4<T>& gy = nodes_[y].grad;
        Tensor4<T>& ga = grad_buf(a);
        Tensor4<T>& gb = grad_buf(b);
        for (std::size_t j = 0; j < gy.size(); ++j) {
            ga.data[j] += gy.data[j];
            gb.data[j] += gy.data[j];
        }
    };
    return y;
}

template <typename T>
typename TapeExec<T>::Value TapeExec<T>::resize(Value x, int h, int w) {
    Value y = push(bilinear_resize(nodes_[x].value, h, w));
    if (!record_) return y;
    nodes_[y].back = [this, x, y]() {
        const Tensor4<T>& gy = nodes_[y].grad;
        const Tensor4<T>& xv = nodes_[x].value;
        Tensor4<T>& gx = grad_buf(x);
        if (gy.h == xv.h && gy.w == xv.w) {
            for (std::size_t j = 0; j < gy.size(); ++j) gx.data[j] += gy.data[j];
            return;
        }
        const double sy = static_cast<double>(xv.h) / gy.h;
        const double sx = static_cast<double>(xv.w) / gy.w;
        for (int oy = 0; oy < gy.h; ++oy) {
            double syc = (oy + 0.5) * sy - 0.5;
            if (syc < 0.0) syc = 0.0;
            const int y0 = std::min(static_cast<int>(syc), xv.h - 1);
            const int y1 = std::min(y0 + 1, xv.h - 1);
            const double fy = syc - y0;
            for (int ox = 0; ox < gy.w; ++ox) {
                double sxc = (ox + 0.5) * sx - 0.5;
                if (sxc < 0.0) sxc = 0.0;
                const int x0 = std::min(static_cast<int>(sxc), xv.w - 1);
                const int x1 = std::min(x0 + 1, xv.w - 1);
                const double fx = sxc - x0;
                for (int in = 0; in < gy.n; ++in) {
                    for (int ci = 0; ci < gy.c; ++ci) {
                        const T g = gy.at(in, ci, oy, ox);
                        gx.at(in, ci, y0, x0) += static_cast<T>((1 - fy) * (1 - fx) * g);
                        gx.at(in, ci, y0, x1) += static_cast<T>((1 - fy) * fx * g);
                        gx.at(in, ci, y1, x0) += static_cast<T>(fy * (1 - fx) * g);
                        gx.at(in, ci, y1, x1) += static_cast<T>(fy * fx * g);
                    }
                }
            }
        }
    };
    return y;
}

template <typename T>
typename TapeExec<T>::Value TapeExec<T>::avg_pool(Value x, int kernel, int stride, int padding) {
    Value y = push(gcnet::avg_pool(nodes_[x].value, kernel, stride, padding));
    if (!record_) return y;
    nodes_[y].back = [this, x, y, kernel, stride, padding]() {
        const Tensor4<T>& gy = nodes_[y].grad;
        const Tensor4<T>& xv = nodes_[x].value;
        Tensor4<T>& gx = grad_buf(x);
        const T inv_area = T(1) / static_cast<T>(kernel * kernel);
        for (int in = 0; in < gy.n; ++in) {
            for (int ci = 0; ci < gy.c; ++ci) {
                const T* gr = gy.plane(in, ci);
                T* dst = gx.plane(in, ci);
                for (int oy = 0; oy < gy.h; ++oy) {
                    for (int ox = 0; ox < gy.w; ++ox) {
                        const T g = gr[static_cast<std::size_t>(oy) * gy.w + ox] * inv_area;
                        for (int u = 0; u < kernel; ++u) {
                            const int iy = oy * stride + u - padding;
                            if (iy < 0 || iy >= xv.h) continue;
                            for (int v = 0; v < kernel; ++v) {
                                const int ix = ox * stride + v - padding;
                                if (ix < 0 || ix >= xv.w) continue;
                                dst[static_cast<std::size_t>(iy) * xv.w + ix] += g;
                            }
                        }
                    }
                }
            }
        }
    };
    return y;
}

template <typename T>
typename TapeExec<T>::Value TapeExec<T>::global_pool(Value x) {
    Value y = push(global_avg_pool(nodes_[x].value));
    if (!record_) return y;
    nodes_[y].back = [this, x, y]() {
        const Tensor4<T>& gy = nodes_[y].grad;
        const Tensor4<T>& xv = nodes_[x].value;
        Tensor4<T>& gx = grad_buf(x);
        const std::size_t plane = static_cast<std::size_t>(xv.h) * xv.w;
        const T inv = T(1) / static_cast<T>(plane);
        for (int in = 0; in < xv.n; ++in) {
            for (int ci = 0; ci < xv.c; ++ci) {
                const T g = gy.at(in, ci, 0, 0) * inv;
                T* dst = gx.plane(in, ci);
                for (std::size_t j = 0; j < plane; ++j) dst[j] += g;
            }
        }
    };
    return y;
}

template <typename T>
typename TapeExec<T>::Value TapeExec<T>::concat(const std::vector<Value>& parts) {
    std::vector<const Tensor4<T>*> ptrs;
    ptrs.reserve(parts.size());
    for (Value v : parts) ptrs.push_back(&nodes_[v].value);
    Value y = push(concat_channels(ptrs));
    if (!record_) return y;
    nodes_[y].back = [this, parts, y]() {
        const Tensor4<T>& gy = nodes_[y].grad;
        const std::size_t plane = static_cast<std::size_t>(gy.h) * gy.w;
        for (int in = 0; in < gy.n; ++in) {
            int co = 0;
            for (Value v : parts) {
                Tensor4<T>& gpart = grad_buf(v);
                const std::size_t len = static_cast<std::size_t>(gpart.c) * plane;
                const T* src = gy.plane(in, co);
                T* dst = gpart.plane(in, 0);
                for (std::size_t j = 0; j < len; ++j) dst[j] += src[j];
                co += gpart.c;
            }
        }
    };
    return y;
}

template <typename T>
void TapeExec<T>::backward(std::vector<std::pair<Value, Tensor4<T>>> seeds) {
    require(record_, "tape backward requires a recording tape");
    for (auto& [v, g] : seeds) {
        require(nodes_[v].value.same_dims(g), "backward seed dims must match node dims");
        Tensor4<T>& buf = grad_buf(v);
        for (std::size_t j = 0; j < g.size(); ++j) buf.data[j] += g.data[j];
    }
    for (int i = static_cast<int>(nodes_.size()) - 1; i >= 0; --i) {
        if (nodes_[i].has_grad && nodes_[i].back) nodes_[i].back();
    }
}

template class TapeExec<float>;
template class TapeExec<double>;

}  // namespace gcnet
