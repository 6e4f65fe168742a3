#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "core/tensor.hpp"

namespace gcnet {

struct Dims {
    int n = 0, c = 0, h = 0, w = 0;
    bool operator==(const Dims&) const = default;
};

// Executors give the composite-module wiring (blocks.hpp, network.hpp) its
// semantics. The same wiring runs under:
//   EvalExec  - plain eval-mode tensors (running-stat batch norm),
//   TapeExec  - train-mode values with optional reverse-mode recording,
//   CountExec - shape propagation plus parameter-free FLOP accounting.

template <typename T>
class EvalExec {
public:
    using Value = std::shared_ptr<const Tensor4<T>>;

    Value input(Tensor4<T> x) { return wrap(std::move(x)); }
    Value conv(const Value& x, ConvKernel<T>& k) { return wrap(conv2d(*x, k)); }
    Value bn(const Value& x, BatchNormStats<T>& s) { return wrap(batchnorm_eval(*x, s)); }
    Value relu(const Value& x) { return wrap(gcnet::relu(*x)); }
    Value add(const Value& a, const Value& b) { return wrap(gcnet::add(*a, *b)); }
    Value resize(const Value& x, int h, int w) { return wrap(bilinear_resize(*x, h, w)); }
    Value avg_pool(const Value& x, int k, int s, int p) {
        return wrap(gcnet::avg_pool(*x, k, s, p));
    }
    Value global_pool(const Value& x) { return wrap(global_avg_pool(*x)); }
    Value concat(const std::vector<Value>& parts) {
        std::vector<const Tensor4<T>*> ptrs;
        ptrs.reserve(parts.size());
        for (const auto& p : parts) ptrs.push_back(p.get());
        return wrap(concat_channels(ptrs));
    }

    Dims dims(const Value& x) const { return Dims{x->n, x->c, x->h, x->w}; }
    const Tensor4<T>& value(const Value& x) const { return *x; }

private:
    static Value wrap(Tensor4<T> t) { return std::make_shared<const Tensor4<T>>(std::move(t)); }
};

// Counts convolution work (one fused multiply-add per tap, plus the bias
// add) separately from elementwise/pooling/interpolation work. Counting a
// multiply-add as a single operation matches the convention behind the
// reference complexity figures this project compares against.
//
// Convs fed by pyramid-pooled or globally pooled values do not scale
// linearly with input area (fixed windows, floor arithmetic); their cost is
// kept in context_conv_flops so conv_flops stays exactly resolution-linear.
template <typename T>
class CountExec {
public:
    struct Value {
        Dims d;
        bool fixed_scale = false;
    };

    std::uint64_t conv_flops = 0;          // resolution-linear convolutions
    std::uint64_t context_conv_flops = 0;  // convolutions on pooled context branches
    std::uint64_t other_flops = 0;         // batchnorm, activations, pooling, resize

    Value input(const Dims& d) { return {d, false}; }

    Value conv(const Value& x, const ConvKernel<T>& k) {
        require(x.d.c == k.c_in, "count: conv channel mismatch");
        const int oh = conv_out_dim(x.d.h, k.kh, k.stride, k.padding);
        const int ow = conv_out_dim(x.d.w, k.kw, k.stride, k.padding);
        require(oh >= 1 && ow >= 1, "count: conv output collapsed");
        const std::uint64_t out_px = static_cast<std::uint64_t>(x.d.n) * oh * ow;
        const std::uint64_t cost =
            out_px * k.c_out * (static_cast<std::uint64_t>(k.c_in) * k.kh * k.kw + 1);
        (x.fixed_scale ? context_conv_flops : conv_flops) += cost;
        return {Dims{x.d.n, k.c_out, oh, ow}, x.fixed_scale};
    }
    Value bn(const Value& x, const BatchNormStats<T>& s) {
        require(x.d.c == s.channels(), "count: batchnorm channel mismatch");
        other_flops += 2u * elems(x.d);
        return x;
    }
    Value relu(const Value& x) {
        other_flops += elems(x.d);
        return x;
    }
    Value add(const Value& a, const Value& b) {
        require(a.d == b.d, "count: add dims mismatch");
        other_flops += elems(a.d);
        return {a.d, a.fixed_scale || b.fixed_scale};
    }
    Value resize(const Value& x, int h, int w) {
        // targets come from a grid-aligned reference, so the result scales
        Value out{Dims{x.d.n, x.d.c, h, w}, false};
        other_flops += 8u * elems(out.d);
        return out;
    }
    Value avg_pool(const Value& x, int k, int s, int p) {
        Value out{Dims{x.d.n, x.d.c, conv_out_dim(x.d.h, k, s, p), conv_out_dim(x.d.w, k, s, p)},
                  true};
        other_flops += elems(out.d) * (static_cast<std::uint64_t>(k) * k + 1);
        return out;
    }
    Value global_pool(const Value& x) {
        other_flops += elems(x.d) + static_cast<std::uint64_t>(x.d.n) * x.d.c;
        return {Dims{x.d.n, x.d.c, 1, 1}, true};
    }
    Value concat(const std::vector<Value>& parts) {
        Value out = parts.front();
        out.d.c = 0;
        for (const auto& p : parts) {
            out.d.c += p.d.c;
            out.fixed_scale = out.fixed_scale || p.fixed_scale;
        }
        return out;
    }

    Dims dims(const Value& x) const { return x.d; }
    std::uint64_t total_flops() const { return conv_flops + context_conv_flops + other_flops; }

private:
    static std::uint64_t elems(const Dims& d) {
        return static_cast<std::uint64_t>(d.n) * d.c * d.h * d.w;
    }
};

}  // namespace gcnet
