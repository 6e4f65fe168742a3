#include "core/network.hpp"

#include <cmath>
#include <functional>

#include "core/autograd.hpp"

namespace gcnet {

NetworkConfig NetworkConfig::make(Variant v, int num_classes, int base_c_override, PpmKind ppm,
                                  int input_h, int input_w) {
    NetworkConfig cfg;
    cfg.variant = v;
    cfg.num_classes = num_classes;
    cfg.ppm = ppm;
    cfg.input_h = input_h;
    cfg.input_w = input_w;
    switch (v) {
        case Variant::S:
            cfg.base_channels = 32;
            cfg.n_paths = 4;
            cfg.head_channels = 64;
            cfg.s2_blocks = 4;
            cfg.s3_blocks = 4;
            cfg.s4_blocks = {5, 4};
            cfg.s5_blocks = {5, 4};
            cfg.s6_blocks = {2, 2};
            break;
        case Variant::M:
            cfg.base_channels = 64;
            cfg.n_paths = 2;
            cfg.head_channels = 128;
            cfg.s2_blocks = 4;
            cfg.s3_blocks = 4;
            cfg.s4_blocks = {5, 4};
            cfg.s5_blocks = {5, 4};
            cfg.s6_blocks = {2, 2};
            break;
        case Variant::L:
            cfg.base_channels = 64;
            cfg.n_paths = 2;
            cfg.head_channels = 256;
            cfg.s2_blocks = 5;
            cfg.s3_blocks = 5;
            cfg.s4_blocks = {5, 5};
            cfg.s5_blocks = {5, 5};
            cfg.s6_blocks = {3, 3};
            break;
    }
    if (base_c_override > 0) cfg.base_channels = base_c_override;
    cfg.validate();
    return cfg;
}

void NetworkConfig::validate() const {
    require(num_classes >= 2, "config: need at least two classes");
    require(base_channels >= 1, "config: base channel count must be >= 1");
    require(n_paths >= 1, "config: path count must be >= 1");
    require(input_h % 64 == 0 && input_w % 64 == 0,
            "config: input dims must be divisible by 64 (stage plan reaches H/64 x W/64)");
    require(s2_blocks >= 1 && s3_blocks >= 1 && s4_blocks.first >= 1 && s4_blocks.second >= 1 &&
                s5_blocks.first >= 1 && s5_blocks.second >= 1 && s6_blocks.first >= 1 &&
                s6_blocks.second >= 1,
            "config: every stage needs at least one block");
}

namespace {

template <typename T>
void init_conv(Rng& rng, ConvKernel<T>& k, double scale_mult = 1.0) {
    const double std = std::sqrt(2.0 / (static_cast<double>(k.c_in) * k.kh * k.kw)) * scale_mult;
    for (auto& w : k.weight) w = static_cast<T>(rng.gaussian() * std);
}

template <typename T>
ConvBN<T> make_conv_bn(Rng& rng, int c_out, int c_in, int k, int stride, int padding,
                       double scale_mult = 1.0) {
    ConvBN<T> u{ConvKernel<T>(c_out, c_in, k, stride, padding), BatchNormStats<T>(c_out)};
    init_conv(rng, u.conv, scale_mult);
    return u;
}

template <typename T>
GCBlock<T> make_gcblock(Rng& rng, int in_c, int out_c, int stride, int n_paths) {
    GCBlock<T> b;
    b.in_channels = in_c;
    b.out_channels = out_c;
    b.stride = stride;
    b.form = Form::training;

    const bool with_residual = stride == 1 && in_c == out_c;
    const int total_paths = n_paths + 1 + (with_residual ? 1 : 0);
    const double tail_scale = 1.0 / (2.0 * std::sqrt(static_cast<double>(total_paths)));

    for (int i = 0; i < n_paths; ++i) {
        Path<T> p;
        p.kind = PathKind::conv3x3_1x1;
        p.stages.push_back(make_conv_bn<T>(rng, out_c, in_c, 3, stride, 1));
        p.stages.push_back(make_conv_bn<T>(rng, out_c, out_c, 1, 1, 0, tail_scale));
        b.paths.push_back(std::move(p));
    }
    {
        Path<T> p;
        p.kind = PathKind::conv1x1_1x1;
        p.stages.push_back(make_conv_bn<T>(rng, out_c, in_c, 1, stride, 0));
        p.stages.push_back(make_conv_bn<T>(rng, out_c, out_c, 1, 1, 0, tail_scale));
        b.paths.push_back(std::move(p));
    }
    if (with_residual) {
        Path<T> p;
        p.kind = PathKind::residual;
        p.residual_bn = BatchNormStats<T>(out_c);
        b.paths.push_back(std::move(p));
    }
    return b;
}

template <typename T>
std::vector<GCBlock<T>> make_stage(Rng& rng, int count, int in_c, int out_c, int first_stride,
                                   int n_paths) {
    std::vector<GCBlock<T>> blocks;
    blocks.reserve(count);
    for (int i = 0; i < count; ++i) {
        const int bi = i == 0 ? in_c : out_c;
        const int bs = i == 0 ? first_stride : 1;
        blocks.push_back(make_gcblock<T>(rng, bi, out_c, bs, n_paths));
    }
    return blocks;
}

}  // namespace

template <typename T>
Network<T> build_gcnet(const NetworkConfig& cfg, std::uint64_t seed) {
    cfg.validate();
    Rng rng(seed);
    const int c = cfg.base_channels;
    const int n = cfg.n_paths;

    Network<T> net;
    net.cfg = cfg;
    net.form = Form::training;

    net.stem[0] = make_conv_bn<T>(rng, c, 3, 3, 2, 1);
    net.stem[1] = make_conv_bn<T>(rng, c, c, 3, 2, 1);

    net.s2 = make_stage<T>(rng, cfg.s2_blocks, c, c, 1, n);
    net.s3 = make_stage<T>(rng, cfg.s3_blocks, c, 2 * c, 2, n);
    net.sem4 = make_stage<T>(rng, cfg.s4_blocks.first, 2 * c, 4 * c, 2, n);
    net.det4 = make_stage<T>(rng, cfg.s4_blocks.second, 2 * c, 2 * c, 1, n);
    net.sem5 = make_stage<T>(rng, cfg.s5_blocks.first, 4 * c, 8 * c, 2, n);
    net.det5 = make_stage<T>(rng, cfg.s5_blocks.second, 2 * c, 2 * c, 1, n);
    net.sem6 = make_stage<T>(rng, cfg.s6_blocks.first, 8 * c, 16 * c, 2, n);
    net.det6 = make_stage<T>(rng, cfg.s6_blocks.second, 2 * c, 4 * c, 1, n);

    net.fuse4_s2d.direction = FuseDir::semantic_to_detail;
    net.fuse4_s2d.convs.push_back(make_conv_bn<T>(rng, 2 * c, 4 * c, 3, 1, 1));
    net.fuse4_d2s.direction = FuseDir::detail_to_semantic;
    net.fuse4_d2s.convs.push_back(make_conv_bn<T>(rng, 4 * c, 2 * c, 3, 2, 1));

    net.fuse5_s2d.direction = FuseDir::semantic_to_detail;
    net.fuse5_s2d.convs.push_back(make_conv_bn<T>(rng, 2 * c, 8 * c, 3, 1, 1));
    net.fuse5_d2s.direction = FuseDir::detail_to_semantic;
    net.fuse5_d2s.convs.push_back(make_conv_bn<T>(rng, 4 * c, 2 * c, 3, 2, 1));
    net.fuse5_d2s.convs.push_back(make_conv_bn<T>(rng, 8 * c, 4 * c, 3, 2, 1));

    const int ppm_in = 16 * c;
    const int ppm_out = 4 * c;
    net.ppm.kind = cfg.ppm;
    if (cfg.ppm == PpmKind::dappm) {
        const int b = cfg.ppm_branch_channels();
        Dappm<T> d;
        d.scale0 = make_conv_bn<T>(rng, b, ppm_in, 1, 1, 0);
        for (auto& s : d.scales) s = make_conv_bn<T>(rng, b, ppm_in, 1, 1, 0);
        d.scale_global = make_conv_bn<T>(rng, b, ppm_in, 1, 1, 0);
        for (auto& p : d.process) p = make_conv_bn<T>(rng, b, b, 3, 1, 1);
        d.compression = make_conv_bn<T>(rng, ppm_out, 5 * b, 1, 1, 0);
        d.shortcut = make_conv_bn<T>(rng, ppm_out, ppm_in, 1, 1, 0);
        net.ppm.dappm = std::move(d);
    } else {
        SimplePpm<T> s;
        s.base = make_conv_bn<T>(rng, ppm_out, ppm_in, 1, 1, 0);
        s.global = make_conv_bn<T>(rng, ppm_out, ppm_in, 1, 1, 0);
        net.ppm.simple = std::move(s);
    }

    net.head.conv3 = make_conv_bn<T>(rng, cfg.head_channels, 4 * c, 3, 1, 1);
    net.head.classifier = ConvKernel<T>(cfg.num_classes, cfg.head_channels, 1, 1, 0);
    init_conv(rng, net.head.classifier);

    SegHead<T> aux;
    aux.conv3 = make_conv_bn<T>(rng, cfg.head_channels, 2 * c, 3, 1, 1);
    aux.classifier = ConvKernel<T>(cfg.num_classes, cfg.head_channels, 1, 1, 0);
    init_conv(rng, aux.classifier);
    net.aux_head = std::move(aux);

    return net;
}

namespace {

// Single structural traversal used by parameter listing, serialization,
// counting, and contraction. Visits conv kernels and BN stats with stable
// hierarchical names.
template <typename T>
struct TensorVisitor {
    std::function<void(const std::string&, ConvKernel<T>&)> on_conv;
    std::function<void(const std::string&, BatchNormStats<T>&)> on_bn;

    void conv_bn(const std::string& name, ConvBN<T>& u) const {
        if (on_conv) on_conv(name, u.conv);
        if (u.bn && on_bn) on_bn(name + ".bn", *u.bn);
    }
};

template <typename T>
void visit_blocks(const std::string& prefix, std::vector<GCBlock<T>>& blocks,
                  const TensorVisitor<T>& v) {
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        GCBlock<T>& b = blocks[i];
        const std::string bp = prefix + ".b" + std::to_string(i);
        if (b.form == Form::inference) {
            if (v.on_conv) v.on_conv(bp + ".fused", *b.fused);
            continue;
        }
        for (std::size_t p = 0; p < b.paths.size(); ++p) {
            Path<T>& path = b.paths[p];
            if (path.kind == PathKind::residual) {
                if (v.on_bn) v.on_bn(bp + ".res.bn", *path.residual_bn);
                continue;
            }
            const std::string pp = bp + ".p" + std::to_string(p);
            for (std::size_t s = 0; s < path.stages.size(); ++s)
                v.conv_bn(pp + ".c" + std::to_string(s), path.stages[s]);
        }
    }
}

template <typename T>
void visit_network(Network<T>& net, const TensorVisitor<T>& v) {
    v.conv_bn("stem.0", net.stem[0]);
    v.conv_bn("stem.1", net.stem[1]);
    visit_blocks("s2", net.s2, v);
    visit_blocks("s3", net.s3, v);
    visit_blocks("sem4", net.sem4, v);
    visit_blocks("det4", net.det4, v);
    visit_blocks("sem5", net.sem5, v);
    visit_blocks("det5", net.det5, v);
    visit_blocks("sem6", net.sem6, v);
    visit_blocks("det6", net.det6, v);
    v.conv_bn("fuse4.s2d.0", net.fuse4_s2d.convs.at(0));
    v.conv_bn("fuse4.d2s.0", net.fuse4_d2s.convs.at(0));
    v.conv_bn("fuse5.s2d.0", net.fuse5_s2d.convs.at(0));
    v.conv_bn("fuse5.d2s.0", net.fuse5_d2s.convs.at(0));
    v.conv_bn("fuse5.d2s.1", net.fuse5_d2s.convs.at(1));
    if (net.ppm.kind == PpmKind::dappm) {
        Dappm<T>& d = *net.ppm.dappm;
        v.conv_bn("ppm.scale0", d.scale0);
        for (int i = 0; i < 3; ++i) v.conv_bn("ppm.scale" + std::to_string(i + 1), d.scales[i]);
        v.conv_bn("ppm.scaleg", d.scale_global);
        for (int i = 0; i < 4; ++i) v.conv_bn("ppm.process" + std::to_string(i), d.process[i]);
        v.conv_bn("ppm.compression", d.compression);
        v.conv_bn("ppm.shortcut", d.shortcut);
    } else {
        v.conv_bn("ppm.base", net.ppm.simple->base);
        v.conv_bn("ppm.global", net.ppm.simple->global);
    }
    v.conv_bn("head.conv3", net.head.conv3);
    if (v.on_conv) v.on_conv("head.cls", net.head.classifier);
    if (net.aux_head) {
        v.conv_bn("aux.conv3", net.aux_head->conv3);
        if (v.on_conv) v.on_conv("aux.cls", net.aux_head->classifier);
    }
}

}  // namespace

template <typename T>
Tensor4<T> network_forward_eval(Network<T>& net, const Tensor4<T>& x) {
    EvalExec<T> ex;
    auto out = network_run(ex, net, ex.input(x), false);
    return ex.value(out.logits);
}

template <typename T>
Tensor4<T> network_forward_train(Network<T>& net, const Tensor4<T>& x, Tensor4<T>* aux_out) {
    require(net.form == Form::training,
            "network: inference-form networks reject train-mode forward passes");
    TapeExec<T> ex(false);
    auto out = network_run(ex, net, ex.input(x), true);
    if (aux_out && out.aux) *aux_out = ex.value(*out.aux);
    return ex.value(out.logits);
}

template <typename T>
Network<T> contract_network(const Network<T>& net) {
    require(net.form == Form::training, "contract_network: network is already inference-form");

    Network<T> out = net;  // deep copy, then fold in place
    out.form = Form::inference;
    out.aux_head.reset();

    auto fold_stage = [](std::vector<GCBlock<T>>& blocks) {
        for (auto& b : blocks) b = reparam::contract_gcblock(b);
    };
    fold_stage(out.s2);
    fold_stage(out.s3);
    fold_stage(out.sem4);
    fold_stage(out.det4);
    fold_stage(out.sem5);
    fold_stage(out.det5);
    fold_stage(out.sem6);
    fold_stage(out.det6);

    // fold every remaining conv+BN unit (stem, fusions, ppm, heads)
    auto fold_unit = [](ConvBN<T>& u) {
        if (u.bn) {
            u.conv = reparam::fuse_conv_bn(u.conv, *u.bn);
            u.bn.reset();
        }
    };
    fold_unit(out.stem[0]);
    fold_unit(out.stem[1]);
    for (auto& u : out.fuse4_s2d.convs) fold_unit(u);
    for (auto& u : out.fuse4_d2s.convs) fold_unit(u);
    for (auto& u : out.fuse5_s2d.convs) fold_unit(u);
    for (auto& u : out.fuse5_d2s.convs) fold_unit(u);
    if (out.ppm.kind == PpmKind::dappm) {
        Dappm<T>& d = *out.ppm.dappm;
        fold_unit(d.scale0);
        for (auto& u : d.scales) fold_unit(u);
        fold_unit(d.scale_global);
        for (auto& u : d.process) fold_unit(u);
        fold_unit(d.compression);
        fold_unit(d.shortcut);
    } else {
        fold_unit(out.ppm.simple->base);
        fold_unit(out.ppm.simple->global);
    }
    fold_unit(out.head.conv3);

    Network<T>& mut = const_cast<Network<T>&>(net);
    const std::uint64_t before = count_params_flops(mut, 64, 64).params;
    const std::uint64_t after = count_params_flops(out, 64, 64).params;
    require(after < before, "contract_network: parameter count must strictly decrease");
    return out;
}

template <typename T>
CountReport count_params_flops(Network<T>& net, int h, int w) {
    CountReport report;
    for (const auto& p : parameters(net)) report.params += p.data->size();

    CountExec<T> ex;
    network_run(ex, net, ex.input(Dims{1, 3, h, w}), net.form == Form::training);
    report.flops = ex.total_flops();
    report.conv_flops = ex.conv_flops;
    return report;
}

template <typename T>
int batchnorm_count(const Network<T>& net) {
    int count = 0;
    TensorVisitor<T> v;
    v.on_bn = [&count](const std::string&, BatchNormStats<T>&) { ++count; };
    visit_network(const_cast<Network<T>&>(net), v);
    return count;
}

template <typename T>
std::vector<ParamRef<T>> parameters(Network<T>& net) {
    std::vector<ParamRef<T>> out;
    TensorVisitor<T> v;
    v.on_conv = [&out](const std::string& name, ConvKernel<T>& k) {
        out.push_back({name + ".weight", ParamKind::conv_weight, &k.weight});
        out.push_back({name + ".bias", ParamKind::conv_bias, &k.bias});
    };
    v.on_bn = [&out](const std::string& name, BatchNormStats<T>& s) {
        out.push_back({name + ".gamma", ParamKind::bn_gamma, &s.gamma});
        out.push_back({name + ".beta", ParamKind::bn_beta, &s.beta});
    };
    visit_network(net, v);
    return out;
}

// Serialization needs running stats too; expose the same traversal.
template <typename T>
void visit_network_tensors(Network<T>& net,
                           const std::function<void(const std::string&, ConvKernel<T>&)>& on_conv,
                           const std::function<void(const std::string&, BatchNormStats<T>&)>& on_bn) {
    TensorVisitor<T> v;
    v.on_conv = on_conv;
    v.on_bn = on_bn;
    visit_network(net, v);
}

#define GCNET_INSTANTIATE(T)                                                                 \
    template Network<T> build_gcnet<T>(const NetworkConfig&, std::uint64_t);                \
    template Tensor4<T> network_forward_eval<T>(Network<T>&, const Tensor4<T>&);            \
    template Tensor4<T> network_forward_train<T>(Network<T>&, const Tensor4<T>&,            \
                                                 Tensor4<T>*);                              \
    template Network<T> contract_network<T>(const Network<T>&);                             \
    template CountReport count_params_flops<T>(Network<T>&, int, int);                      \
    template int batchnorm_count<T>(const Network<T>&);                                     \
    template std::vector<ParamRef<T>> parameters<T>(Network<T>&);                           \
    template void visit_network_tensors<T>(                                                 \
        Network<T>&, const std::function<void(const std::string&, ConvKernel<T>&)>&,        \
        const std::function<void(const std::string&, BatchNormStats<T>&)>&);

GCNET_INSTANTIATE(float)
GCNET_INSTANTIATE(double)

#undef GCNET_INSTANTIATE

}  // namespace gcnet
