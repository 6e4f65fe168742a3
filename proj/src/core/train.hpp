#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "core/network.hpp"

namespace gcnet {
namespace train {

// --- losses ---

// Online-hard-example-mined softmax cross entropy. Selects every
// non-ignored pixel whose true-class probability falls below thresh, padded
// with the hardest remaining pixels up to min_kept, and averages plain
// cross entropy over the selection. With everything ignored the loss is
// zero. When grad is given it receives dLoss/dlogits with the selection
// treated as a fixed mask.
template <typename T>
double ohem_cross_entropy(const Tensor4<T>& logits, const LabelMap& labels, double thresh,
                          std::size_t min_kept, Tensor4<T>* grad = nullptr);

struct LossBreakdown {
    double l_sh = 0.0;
    double l_ash = 0.0;
    double alpha = 0.4;
    double total = 0.0;
};

struct OhemConfig {
    double thresh = 0.7;
    double min_kept_fraction = 1.0 / 16.0;  // of the batch pixel count
};

// L = L_sh + alpha * L_ash, both terms OHEM cross entropy.
template <typename T>
LossBreakdown total_loss(const Tensor4<T>& sh_logits, const Tensor4<T>& ash_logits,
                         const LabelMap& labels, double alpha, const OhemConfig& ohem,
                         Tensor4<T>* sh_grad = nullptr, Tensor4<T>* ash_grad = nullptr);

// --- full-network backward ---

template <typename T>
struct BackwardResult {
    LossBreakdown loss;
    // Aligned with parameters(net); parameters outside the recorded graph
    // get zero-filled gradients.
    std::vector<std::vector<T>> grads;
};

// Reverse-mode gradients for every parameter of a training-form network
// under the deep-supervision loss.
template <typename T>
BackwardResult<T> backward(Network<T>& net, const Tensor4<T>& x, const LabelMap& labels,
                           double alpha = 0.4, const OhemConfig& ohem = {});

// --- optimizer ---

// SGD with momentum 0.9, weight decay 5e-4 (convolution weights only), and
// polynomial learning-rate decay lr = base * (1 - iter/max_iter)^0.9.
template <typename T>
class SgdPoly {
public:
    SgdPoly(std::vector<ParamRef<T>> params, double base_lr, int max_iter,
            double momentum = 0.9, double weight_decay = 5e-4, double power = 0.9);

    double lr() const;
    int iter() const { return iter_; }
    void step(const std::vector<std::vector<T>>& grads);

private:
    std::vector<ParamRef<T>> params_;
    std::vector<std::vector<T>> velocity_;
    double base_lr_, momentum_, weight_decay_, power_;
    int iter_ = 0, max_iter_;
};

// --- metrics ---

// Mean over classes of TP/(TP+FP+FN); classes absent from both maps are
// skipped.
double miou(const LabelMap& pred, const LabelMap& truth, int num_classes,
            std::int32_t ignore = LabelMap::kIgnore);

// --- synthetic shapes dataset ---

// Procedural segmentation set: colored disks, boxes and triangles on a
// textured gray background. Class 0 is background; shape classes carry
// distinct color families. Every sample is a pure function of (seed,
// index). Pixel values are quantized to the 8-bit grid so that images
// survive a PPM round trip bit-exactly.
class ShapeDataset {
public:
    static constexpr int kNumClasses = 4;

    ShapeDataset(std::uint64_t seed, int image_size);

    int image_size() const { return size_; }

    struct Sample {
        Tensor4<double> image;  // (1, 3, s, s) in [0, 1]
        LabelMap labels;        // (1, s, s)
    };
    Sample sample(std::uint64_t index) const;

private:
    std::uint64_t seed_;
    int size_;
};

// --- desk-scale training run ---

struct ToyTrainConfig {
    std::uint64_t seed = 42;
    int iters = 1000;
    int batch = 3;
    int image_size = 128;
    int base_channels = 8;  // GCNet-S-narrow
    double base_lr = 0.02;
    int eval_every = 50;
    int val_images = 8;
    PpmKind ppm = PpmKind::dappm;
    double alpha = 0.4;
    OhemConfig ohem;
};

struct TraceRow {
    int iter = 0;
    double lr = 0.0, loss = 0.0, l_sh = 0.0, l_ash = 0.0;
    double val_miou = 0.0;
    bool has_miou = false;
};

struct ToyTrainResult {
    Network<double> net;
    std::vector<TraceRow> trace;
    double final_miou = 0.0;
};

// Trains GCNet-S-narrow on the synthetic set. Aborts with NumericError if
// the loss turns non-finite. The returned network has its BN running stats
// finalized and is eval-ready.
ToyTrainResult toy_train_run(const ToyTrainConfig& cfg);

// iter, lr, loss, L_sh, L_ash, val_miou (blank when not evaluated).
void write_trace_csv(const std::vector<TraceRow>& trace, const std::string& path);

}  // namespace train
}  // namespace gcnet
