#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "core/blocks.hpp"

namespace gcnet {

enum class Variant { S, M, L };

inline const char* variant_name(Variant v) {
    switch (v) {
        case Variant::S: return "S";
        case Variant::M: return "M";
        case Variant::L: return "L";
    }
    return "?";
}

// Stage plan for one model size. Width C, path count N, and head width O_c
// default per variant; C may be overridden to build narrow desk-scale
// models with the same topology.
struct NetworkConfig {
    Variant variant = Variant::S;
    int num_classes = 19;
    int base_channels = 32;  // C
    int n_paths = 4;         // N, conv3x3_1x1 paths per block
    int head_channels = 64;  // O_c
    int s2_blocks = 4, s3_blocks = 4;
    std::pair<int, int> s4_blocks{5, 4}, s5_blocks{5, 4}, s6_blocks{2, 2};  // (semantic, detail)
    PpmKind ppm = PpmKind::dappm;
    int input_h = 1024, input_w = 2048;

    static NetworkConfig make(Variant v, int num_classes, int base_c_override = 0,
                              PpmKind ppm = PpmKind::dappm, int input_h = 1024,
                              int input_w = 2048);

    // DAPPM branch width: 128 like the reference design, shrunk to 4C for
    // narrow overrides.
    int ppm_branch_channels() const { return std::min(128, 4 * base_channels); }

    void validate() const;
};

template <typename T>
struct Network {
    NetworkConfig cfg;
    Form form = Form::training;

    std::array<ConvBN<T>, 2> stem;        // 3->C s2, C->C s2, ReLU after each
    std::vector<GCBlock<T>> s2, s3;       // shared trunk
    std::vector<GCBlock<T>> sem4, sem5, sem6;
    std::vector<GCBlock<T>> det4, det5, det6;
    FusionModule<T> fuse4_s2d, fuse4_d2s, fuse5_s2d, fuse5_d2s;
    PyramidPooling<T> ppm;
    SegHead<T> head;
    std::optional<SegHead<T>> aux_head;  // training form only
};

// Deterministically initialized training-form network. Conv weights draw
// from a zero-mean gaussian with std sqrt(2/fan_in); each path's trailing
// 1x1 is scaled by 1/(2*sqrt(paths)) so the multipath sum stays
// variance-neutral at depth. BN starts at gamma=1, beta=0, mean=0, var=1;
// biases start at zero.
template <typename T>
Network<T> build_gcnet(const NetworkConfig& cfg, std::uint64_t seed);

// Optional observer for stage output shapes.
struct StageProbe {
    std::vector<std::pair<std::string, Dims>> stages;
    void record(const std::string& name, const Dims& d) { stages.emplace_back(name, d); }
};

// Shared wiring; runs under any executor. Returns {logits, aux}; aux is
// produced only when want_aux is set on a training-form network.
template <typename T, class Ex>
struct NetworkOut {
    typename Ex::Value logits;
    std::optional<typename Ex::Value> aux;
};

template <typename T, class Ex>
NetworkOut<T, Ex> network_run(Ex& ex, Network<T>& net, typename Ex::Value x, bool want_aux,
                              StageProbe* probe = nullptr) {
    const Dims in = ex.dims(x);
    require(in.c == 3, "network: input must have 3 channels");
    require(in.h % 64 == 0 && in.w % 64 == 0,
            "network: input height and width must be divisible by 64 (stage arithmetic needs "
            "H/64 and W/64 integral)");
    require(!want_aux || net.form == Form::training,
            "network: auxiliary head exists only in the training form");

    auto t = conv_bn_run(ex, net.stem[0], x, true);
    t = conv_bn_run(ex, net.stem[1], t, true);
    if (probe) probe->record("s1", ex.dims(t));

    for (auto& b : net.s2) t = gcblock_run(ex, b, t);
    if (probe) probe->record("s2", ex.dims(t));
    for (auto& b : net.s3) t = gcblock_run(ex, b, t);
    if (probe) probe->record("s3", ex.dims(t));

    auto sem = t;
    auto det = t;
    for (auto& b : net.sem4) sem = gcblock_run(ex, b, sem);
    for (auto& b : net.det4) det = gcblock_run(ex, b, det);
    if (probe) {
        probe->record("s4.semantic", ex.dims(sem));
        probe->record("s4.detail", ex.dims(det));
    }
    std::tie(sem, det) = bilateral_fuse_run(ex, net.fuse4_s2d, net.fuse4_d2s, sem, det);

    std::optional<typename Ex::Value> aux;
    if (want_aux && net.aux_head) {
        auto a = seghead_run(ex, *net.aux_head, det);
        aux = ex.resize(a, in.h, in.w);
    }

    for (auto& b : net.sem5) sem = gcblock_run(ex, b, sem);
    for (auto& b : net.det5) det = gcblock_run(ex, b, det);
    if (probe) {
        probe->record("s5.semantic", ex.dims(sem));
        probe->record("s5.detail", ex.dims(det));
    }
    std::tie(sem, det) = bilateral_fuse_run(ex, net.fuse5_s2d, net.fuse5_d2s, sem, det);

    for (auto& b : net.sem6) sem = gcblock_run(ex, b, sem);
    for (auto& b : net.det6) det = gcblock_run(ex, b, det);
    if (probe) {
        probe->record("s6.semantic", ex.dims(sem));
        probe->record("s6.detail", ex.dims(det));
    }

    auto context = ppm_run(ex, net.ppm, sem);
    if (probe) probe->record("ppm", ex.dims(context));
    const Dims det_dims = ex.dims(det);
    context = ex.resize(context, det_dims.h, det_dims.w);
    auto merged = ex.relu(ex.add(det, context));
    auto logits = seghead_run(ex, net.head, merged);
    logits = ex.resize(logits, in.h, in.w);
    if (probe) probe->record("logits", ex.dims(logits));

    return NetworkOut<T, Ex>{logits, aux};
}

// Eval-mode forward: primary logits at input resolution.
template <typename T>
Tensor4<T> network_forward_eval(Network<T>& net, const Tensor4<T>& x);

// Train-mode forward (batch statistics, running-stat updates); aux logits
// are returned for training-form networks.
template <typename T>
Tensor4<T> network_forward_train(Network<T>& net, const Tensor4<T>& x,
                                 Tensor4<T>* aux_out = nullptr);

// Contracts every GCBlock to its fused kernel, folds every remaining
// conv+BN pair, and drops the auxiliary head. Pure: returns a new network.
template <typename T>
Network<T> contract_network(const Network<T>& net);

struct CountReport {
    std::uint64_t params = 0;
    std::uint64_t flops = 0;       // multiply-add counted once
    std::uint64_t conv_flops = 0;  // convolution share of flops
};

// Parameter and FLOP accounting at the given input resolution. BN
// contributes its gamma/beta scalars in the training form and is absent
// after contraction.
template <typename T>
CountReport count_params_flops(Network<T>& net, int h, int w);

// Number of batch-norm stat blocks still present anywhere in the network.
template <typename T>
int batchnorm_count(const Network<T>& net);

// Flat view of every trainable parameter buffer.
enum class ParamKind { conv_weight, conv_bias, bn_gamma, bn_beta };

template <typename T>
struct ParamRef {
    std::string name;
    ParamKind kind;
    std::vector<T>* data;
};

template <typename T>
std::vector<ParamRef<T>> parameters(Network<T>& net);

// Full tensor traversal (running stats included) in the canonical naming
// order used by the model file format.
template <typename T>
void visit_network_tensors(
    Network<T>& net, const std::function<void(const std::string&, ConvKernel<T>&)>& on_conv,
    const std::function<void(const std::string&, BatchNormStats<T>&)>& on_bn);

}  // namespace gcnet
