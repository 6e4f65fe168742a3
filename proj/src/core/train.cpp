#include "core/train.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "core/autograd.hpp"

namespace gcnet {
namespace train {

template <typename T>
double ohem_cross_entropy(const Tensor4<T>& logits, const LabelMap& labels, double thresh,
                          std::size_t min_kept, Tensor4<T>* grad) {
    require(labels.n == logits.n && labels.h == logits.h && labels.w == logits.w,
            "ohem: label map dims must match logit spatial dims");
    require(thresh >= 0.0 && thresh <= 1.0, "ohem: thresh is a probability");
    const int classes = logits.c;
    const std::size_t plane = static_cast<std::size_t>(logits.h) * logits.w;

    if (grad) *grad = Tensor4<T>(logits.n, logits.c, logits.h, logits.w);

    struct Pixel {
        double true_prob;
        double lse;  // log-sum-exp of the pixel's logits
        int n;
        std::size_t off;  // offset within the spatial plane
        std::int32_t label;
    };
    std::vector<Pixel> valid;
    valid.reserve(labels.size());

    for (int in = 0; in < logits.n; ++in) {
        const T* base = logits.plane(in, 0);
        for (std::size_t j = 0; j < plane; ++j) {
            const std::int32_t lbl = labels.data[static_cast<std::size_t>(in) * plane + j];
            if (lbl == LabelMap::kIgnore) continue;
            require(lbl >= 0 && lbl < classes, "ohem: label out of class range");
            double mx = base[j];
            for (int c = 1; c < classes; ++c)
                mx = std::max(mx, static_cast<double>(base[static_cast<std::size_t>(c) * plane + j]));
            double sum = 0.0;
            for (int c = 0; c < classes; ++c)
                sum += std::exp(static_cast<double>(base[static_cast<std::size_t>(c) * plane + j]) - mx);
            const double lse = mx + std::log(sum);
            const double lp =
                static_cast<double>(base[static_cast<std::size_t>(lbl) * plane + j]) - lse;
            valid.push_back(Pixel{std::exp(lp), lse, in, j, lbl});
        }
    }
    if (valid.empty()) return 0.0;

    // ascending true-class probability = descending hardness; ties break by
    // scan order so selection is deterministic
    std::stable_sort(valid.begin(), valid.end(),
                     [](const Pixel& a, const Pixel& b) { return a.true_prob < b.true_prob; });
    std::size_t below = 0;
    while (below < valid.size() && valid[below].true_prob < thresh) ++below;
    const std::size_t kept = std::min(valid.size(), std::max(below, min_kept));
    if (kept == 0) return 0.0;

    double loss = 0.0;
    for (std::size_t i = 0; i < kept; ++i) {
        const Pixel& px = valid[i];
        const T* base = logits.plane(px.n, 0);
        loss -= static_cast<double>(base[static_cast<std::size_t>(px.label) * plane + px.off]) -
                px.lse;
        if (grad) {
            T* gbase = grad->plane(px.n, 0);
            for (int c = 0; c < classes; ++c) {
                const double soft =
                    std::exp(static_cast<double>(base[static_cast<std::size_t>(c) * plane +
                                                      px.off]) -
                             px.lse);
                gbase[static_cast<std::size_t>(c) * plane + px.off] =
                    static_cast<T>((soft - (c == px.label ? 1.0 : 0.0)) /
                                   static_cast<double>(kept));
            }
        }
    }
    return loss / static_cast<double>(kept);
}

template <typename T>
LossBreakdown total_loss(const Tensor4<T>& sh_logits, const Tensor4<T>& ash_logits,
                         const LabelMap& labels, double alpha, const OhemConfig& ohem,
                         Tensor4<T>* sh_grad, Tensor4<T>* ash_grad) {
    const std::size_t pixels = labels.size();
    const std::size_t min_kept =
        static_cast<std::size_t>(ohem.min_kept_fraction * static_cast<double>(pixels));
    LossBreakdown out;
    out.alpha = alpha;
    out.l_sh = ohem_cross_entropy(sh_logits, labels, ohem.thresh, min_kept, sh_grad);
    out.l_ash = ohem_cross_entropy(ash_logits, labels, ohem.thresh, min_kept, ash_grad);
    out.total = out.l_sh + alpha * out.l_ash;
    return out;
}

template <typename T>
BackwardResult<T> backward(Network<T>& net, const Tensor4<T>& x, const LabelMap& labels,
                           double alpha, const OhemConfig& ohem) {
    require(net.form == Form::training, "backward: inference-form networks reject training");

    TapeExec<T> tape(true);
    auto out = network_run(tape, net, tape.input(x), true);
    require(out.aux.has_value(), "backward: training form must produce aux logits");

    Tensor4<T> sh_grad, ash_grad;
    BackwardResult<T> result;
    result.loss = total_loss(tape.value(out.logits), tape.value(*out.aux), labels, alpha, ohem,
                             &sh_grad, &ash_grad);

    for (auto& g : ash_grad.data) g = static_cast<T>(alpha * g);
    tape.backward({{out.logits, std::move(sh_grad)}, {*out.aux, std::move(ash_grad)}});

    auto params = parameters(net);
    result.grads.reserve(params.size());
    for (const auto& p : params) {
        const std::vector<T>* g = tape.param_grad(p.data->data());
        result.grads.push_back(g ? *g : std::vector<T>(p.data->size(), T(0)));
    }
    return result;
}

template <typename T>
SgdPoly<T>::SgdPoly(std::vector<ParamRef<T>> params, double base_lr, int max_iter,
                    double momentum, double weight_decay, double power)
    : params_(std::move(params)),
      base_lr_(base_lr),
      momentum_(momentum),
      weight_decay_(weight_decay),
      power_(power),
      max_iter_(max_iter) {
    require(max_iter_ >= 1, "sgd: max_iter must be >= 1");
    velocity_.reserve(params_.size());
    for (const auto& p : params_) velocity_.emplace_back(p.data->size(), T(0));
}

template <typename T>
double SgdPoly<T>::lr() const {
    const double frac = 1.0 - static_cast<double>(iter_) / max_iter_;
    return base_lr_ * std::pow(frac, power_);
}

template <typename T>
void SgdPoly<T>::step(const std::vector<std::vector<T>>& grads) {
    require(iter_ < max_iter_, "sgd: iteration budget exhausted");
    require(grads.size() == params_.size(), "sgd: gradient list misaligned with parameters");
    const double cur_lr = lr();
    for (std::size_t i = 0; i < params_.size(); ++i) {
        std::vector<T>& p = *params_[i].data;
        const std::vector<T>& g = grads[i];
        std::vector<T>& v = velocity_[i];
        require(g.size() == p.size(), "sgd: gradient size misaligned with parameter");
        // weight decay applies to convolution weights only, never biases or BN
        const double wd = params_[i].kind == ParamKind::conv_weight ? weight_decay_ : 0.0;
        for (std::size_t j = 0; j < p.size(); ++j) {
            const double upd = static_cast<double>(g[j]) + wd * static_cast<double>(p[j]);
            const double vel = momentum_ * static_cast<double>(v[j]) + upd;
            v[j] = static_cast<T>(vel);
            p[j] = static_cast<T>(static_cast<double>(p[j]) - cur_lr * vel);
        }
    }
    ++iter_;
}

double miou(const LabelMap& pred, const LabelMap& truth, int num_classes, std::int32_t ignore) {
    require(pred.n == truth.n && pred.h == truth.h && pred.w == truth.w,
            "miou: label map dims must match");
    std::vector<std::uint64_t> conf(static_cast<std::size_t>(num_classes) * num_classes, 0);
    for (std::size_t j = 0; j < truth.size(); ++j) {
        const std::int32_t t = truth.data[j];
        if (t == ignore) continue;
        const std::int32_t p = pred.data[j];
        require(t >= 0 && t < num_classes && p >= 0 && p < num_classes,
                "miou: label out of class range");
        ++conf[static_cast<std::size_t>(t) * num_classes + p];
    }
    double sum = 0.0;
    int counted = 0;
    for (int c = 0; c < num_classes; ++c) {
        const std::uint64_t tp = conf[static_cast<std::size_t>(c) * num_classes + c];
        std::uint64_t fp = 0, fn = 0;
        for (int o = 0; o < num_classes; ++o) {
            if (o == c) continue;
            fp += conf[static_cast<std::size_t>(o) * num_classes + c];
            fn += conf[static_cast<std::size_t>(c) * num_classes + o];
        }
        if (tp + fp + fn == 0) continue;  // class absent from both maps
        sum += static_cast<double>(tp) / static_cast<double>(tp + fp + fn);
        ++counted;
    }
    return counted == 0 ? 0.0 : sum / counted;
}

// --- dataset ---

ShapeDataset::ShapeDataset(std::uint64_t seed, int image_size) : seed_(seed), size_(image_size) {
    require(image_size >= 32, "dataset: image size too small for the shape scales");
}

namespace {

struct Shape {
    int cls = 0;  // 1 disk, 2 box, 3 triangle
    double cx = 0, cy = 0;
    double radius = 0;            // disk
    double hx = 0, hy = 0;        // box half extents
    double vx[3] = {0, 0, 0};     // triangle vertices
    double vy[3] = {0, 0, 0};
    double color[3] = {0, 0, 0};

    bool contains(double x, double y) const {
        switch (cls) {
            case 1: {
                const double dx = x - cx, dy = y - cy;
                return dx * dx + dy * dy <= radius * radius;
            }
            case 2:
                return std::abs(x - cx) <= hx && std::abs(y - cy) <= hy;
            default: {
                // consistent half-plane sign test
                double sign = 0.0;
                for (int i = 0; i < 3; ++i) {
                    const int j = (i + 1) % 3;
                    const double cross =
                        (vx[j] - vx[i]) * (y - vy[i]) - (vy[j] - vy[i]) * (x - vx[i]);
                    if (cross == 0.0) continue;
                    if (sign == 0.0)
                        sign = cross > 0 ? 1.0 : -1.0;
                    else if ((cross > 0 ? 1.0 : -1.0) != sign)
                        return false;
                }
                return true;
            }
        }
    }
};

}  // namespace

ShapeDataset::Sample ShapeDataset::sample(std::uint64_t index) const {
    Rng rng = Rng(seed_).fork(index);
    const int s = size_;
    const double unit = s / 128.0;

    Sample out;
    out.image = Tensor4<double>(1, 3, s, s);
    out.labels = LabelMap(1, s, s);

    // textured background: gray base plus two low-frequency waves
    double base[3];
    const double gray = rng.uniform(0.35, 0.60);
    for (double& b : base) b = gray + rng.uniform(-0.04, 0.04);
    struct Wave {
        double ax, ay, phase, amp;
    } waves[2];
    for (Wave& wv : waves) {
        const double wavelength = rng.uniform(20.0, 70.0) * unit;
        const double dir = rng.uniform(0.0, 6.2831853);
        wv.ax = std::cos(dir) * 6.2831853 / wavelength;
        wv.ay = std::sin(dir) * 6.2831853 / wavelength;
        wv.phase = rng.uniform(0.0, 6.2831853);
        wv.amp = rng.uniform(0.02, 0.05);
    }

    const int shape_count = 1 + static_cast<int>(rng.below(3));
    std::vector<Shape> shapes;
    for (int i = 0; i < shape_count; ++i) {
        Shape sh;
        sh.cls = 1 + static_cast<int>(rng.below(3));
        const double margin = 34.0 * unit;
        sh.cx = rng.uniform(margin, s - margin);
        sh.cy = rng.uniform(margin, s - margin);
        switch (sh.cls) {
            case 1:
                sh.radius = rng.uniform(16.0, 30.0) * unit;
                sh.color[0] = rng.uniform(0.65, 0.95);
                sh.color[1] = rng.uniform(0.05, 0.30);
                sh.color[2] = rng.uniform(0.05, 0.30);
                break;
            case 2:
                sh.hx = rng.uniform(13.0, 28.0) * unit;
                sh.hy = rng.uniform(13.0, 28.0) * unit;
                sh.color[0] = rng.uniform(0.05, 0.30);
                sh.color[1] = rng.uniform(0.60, 0.95);
                sh.color[2] = rng.uniform(0.05, 0.30);
                break;
            default: {
                const double r = rng.uniform(18.0, 34.0) * unit;
                for (int k = 0; k < 3; ++k) {
                    const double a =
                        k * 2.0943951 + rng.uniform(-0.5, 0.5);  // jittered 120 degrees
                    sh.vx[k] = sh.cx + r * std::cos(a);
                    sh.vy[k] = sh.cy + r * std::sin(a);
                }
                sh.color[0] = rng.uniform(0.05, 0.30);
                sh.color[1] = rng.uniform(0.05, 0.35);
                sh.color[2] = rng.uniform(0.60, 0.95);
                break;
            }
        }
        shapes.push_back(sh);
    }

    for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
            const double px = x + 0.5, py = y + 0.5;
            double col[3];
            double wave = 0.0;
            for (const Wave& wv : waves)
                wave += wv.amp * std::sin(wv.ax * px + wv.ay * py + wv.phase);
            for (int c = 0; c < 3; ++c) col[c] = base[c] + wave;
            std::int32_t label = 0;
            for (const Shape& sh : shapes) {  // later shapes draw on top
                if (sh.contains(px, py)) {
                    label = sh.cls;
                    for (int c = 0; c < 3; ++c) col[c] = sh.color[c];
                }
            }
            for (int c = 0; c < 3; ++c) {
                double v = col[c] + rng.uniform(-0.015, 0.015);
                v = std::min(1.0, std::max(0.0, v));
                // 8-bit grid so PPM round trips are exact
                out.image.at(0, c, y, x) = std::round(v * 255.0) / 255.0;
            }
            out.labels.at(0, y, x) = label;
        }
    }
    return out;
}

// --- toy training ---

namespace {

void flip_horizontal(Tensor4<double>& img, LabelMap& labels) {
    for (int c = 0; c < img.c; ++c)
        for (int y = 0; y < img.h; ++y) {
            double* row = img.plane(0, c) + static_cast<std::size_t>(y) * img.w;
            std::reverse(row, row + img.w);
        }
    for (int y = 0; y < labels.h; ++y) {
        std::int32_t* row = labels.data.data() + static_cast<std::size_t>(y) * labels.w;
        std::reverse(row, row + labels.w);
    }
}

double validation_miou(Network<double>& net, const ShapeDataset& data, std::uint64_t val_base,
                       int val_images) {
    double sum = 0.0;
    for (int i = 0; i < val_images; ++i) {
        auto s = data.sample(val_base + i);
        const Tensor4<double> logits = network_forward_eval(net, s.image);
        sum += miou(argmax_channel(logits), s.labels, ShapeDataset::kNumClasses);
    }
    return sum / val_images;
}

}  // namespace

ToyTrainResult toy_train_run(const ToyTrainConfig& cfg) {
    require(cfg.iters >= 1 && cfg.iters <= 2000, "toy train: iteration budget is 1..2000");
    require(cfg.batch >= 1, "toy train: batch must be >= 1");

    NetworkConfig net_cfg = NetworkConfig::make(Variant::S, ShapeDataset::kNumClasses,
                                                cfg.base_channels, cfg.ppm, cfg.image_size,
                                                cfg.image_size);
    ToyTrainResult result{build_gcnet<double>(net_cfg, cfg.seed), {}, 0.0};
    Network<double>& net = result.net;

    ShapeDataset data(cfg.seed + 1, cfg.image_size);
    const std::uint64_t val_base = 1ull << 40;
    Rng aug_rng(cfg.seed + 2);

    auto params = parameters(net);
    SgdPoly<double> opt(params, cfg.base_lr, cfg.iters);

    const int s = cfg.image_size;
    for (int it = 1; it <= cfg.iters; ++it) {
        Tensor4<double> batch(cfg.batch, 3, s, s);
        LabelMap labels(cfg.batch, s, s);
        for (int b = 0; b < cfg.batch; ++b) {
            auto smp = data.sample(static_cast<std::uint64_t>(it - 1) * cfg.batch + b);
            if (aug_rng.uniform() < 0.5) flip_horizontal(smp.image, smp.labels);
            std::copy(smp.image.data.begin(), smp.image.data.end(),
                      batch.data.begin() + static_cast<std::size_t>(b) * smp.image.size());
            std::copy(smp.labels.data.begin(), smp.labels.data.end(),
                      labels.data.begin() + static_cast<std::size_t>(b) * smp.labels.size());
        }

        auto bw = backward(net, batch, labels, cfg.alpha, cfg.ohem);
        if (!std::isfinite(bw.loss.total)) {
            throw NumericError("toy train diverged: loss is not finite at iteration " +
                               std::to_string(it) + " (lr " + std::to_string(opt.lr()) + ")");
        }

        TraceRow row;
        row.iter = it;
        row.lr = opt.lr();
        row.loss = bw.loss.total;
        row.l_sh = bw.loss.l_sh;
        row.l_ash = bw.loss.l_ash;

        opt.step(bw.grads);

        if (it == 1 || it % cfg.eval_every == 0 || it == cfg.iters) {
            row.val_miou = validation_miou(net, data, val_base, cfg.val_images);
            row.has_miou = true;
        }
        result.trace.push_back(row);
    }

    result.final_miou = validation_miou(net, data, val_base, cfg.val_images);
    return result;
}

void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot open trace file for writing: " + path);
    out << "iter,lr,loss,l_sh,l_ash,val_miou\n";
    out.precision(10);
    for (const auto& r : trace) {
        out << r.iter << ',' << r.lr << ',' << r.loss << ',' << r.l_sh << ',' << r.l_ash << ',';
        if (r.has_miou) out << r.val_miou;
        out << '\n';
    }
    if (!out) throw IoError("failed writing trace file: " + path);
}

#define GCNET_INSTANTIATE(T)                                                                   \
    template double ohem_cross_entropy<T>(const Tensor4<T>&, const LabelMap&, double,        \
                                          std::size_t, Tensor4<T>*);                         \
    template LossBreakdown total_loss<T>(const Tensor4<T>&, const Tensor4<T>&,               \
                                         const LabelMap&, double, const OhemConfig&,         \
                                         Tensor4<T>*, Tensor4<T>*);                          \
    template BackwardResult<T> backward<T>(Network<T>&, const Tensor4<T>&, const LabelMap&,  \
                                           double, const OhemConfig&);                       \
    template class SgdPoly<T>;

GCNET_INSTANTIATE(float)
GCNET_INSTANTIATE(double)

#undef GCNET_INSTANTIATE

}  // namespace train
}  // namespace gcnet
