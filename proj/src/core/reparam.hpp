#pragma once

#include <optional>
#include <vector>

#include "core/tensor.hpp"

namespace gcnet {

enum class PathKind { conv3x3_1x1, conv1x1_1x1, residual };
enum class Form { training, inference };

// One convolution stage with its (not yet folded) batch norm.
template <typename T>
struct ConvBN {
    ConvKernel<T> conv;
    std::optional<BatchNormStats<T>> bn;
};

// One parallel path of a GCBlock. Conv paths hold exactly two stages;
// the residual path holds only a batch norm.
template <typename T>
struct Path {
    PathKind kind = PathKind::conv3x3_1x1;
    std::vector<ConvBN<T>> stages;
    std::optional<BatchNormStats<T>> residual_bn;
};

// Multi-path block weights. Training form holds N conv3x3_1x1 paths, one
// conv1x1_1x1 path, and (stride 1 only) a residual path, in that order.
// Inference form holds the single fused 3x3 kernel instead.
template <typename T>
struct GCBlock {
    int in_channels = 0, out_channels = 0, stride = 1;
    Form form = Form::training;
    std::vector<Path<T>> paths;
    std::optional<ConvKernel<T>> fused;

    int path_count() const { return static_cast<int>(paths.size()); }
};

namespace reparam {

// Folds batch norm into the preceding convolution:
//   W' = gamma / sqrt(var + eps) * W   (per output channel)
//   B' = (B - mean) * gamma / sqrt(var + eps) + beta.
// Arithmetic runs in double regardless of T.
template <typename T>
ConvKernel<T> fuse_conv_bn(const ConvKernel<T>& k, const BatchNormStats<T>& s);

// Merges conv(first) followed by a 1x1 stride-1 pad-0 conv(second) into one
// kernel with first's geometry:
//   W'[o,i,:,:] = sum_m second.W[o,m] * first.W[m,i,:,:]
//   B'          = second.W * first.B + second.B.
template <typename T>
ConvKernel<T> merge_sequential(const ConvKernel<T>& first, const ConvKernel<T>& second);

// Guarded form of merge_sequential for path stages: rejects stages whose
// batch norm has not been folded yet (BN must fold before merging).
template <typename T>
ConvKernel<T> merge_stages(const ConvBN<T>& first, const ConvBN<T>& second);

// Re-expresses a 1x1 conv as a 3x3 conv with the 1x1 values at the spatial
// center, zeros elsewhere, and padding 1; stride carries over. Outputs agree
// exactly with the original at stride 1 and stride 2.
template <typename T>
ConvKernel<T> embed_1x1_in_3x3(const ConvKernel<T>& k);

// Converts an identity (residual) connection with trailing batch norm into
// an equivalent 3x3 convolution. Residual paths exist only at stride 1.
template <typename T>
ConvKernel<T> residual_to_conv3x3(int channels, const BatchNormStats<T>& s, int stride = 1);

// Sums parallel kernels of identical geometry into one. The addends for
// each weight/bias element are sorted before reduction, so the result is
// bitwise independent of path order.
template <typename T>
ConvKernel<T> sum_parallel(const std::vector<ConvKernel<T>>& kernels);

// Collapses one training-form path to a single 3x3 kernel: fold BN into
// each stage, embed a leading 1x1 into 3x3, then merge the two stages.
template <typename T>
ConvKernel<T> fuse_path(const Path<T>& path, int in_channels, int out_channels, int stride);

// Full block contraction: fuse every path, then sum across paths. Returns
// a new inference-form block; the input block is untouched.
template <typename T>
GCBlock<T> contract_gcblock(const GCBlock<T>& b);

// Structural checks shared by forward and contraction; throws on a
// malformed path list.
template <typename T>
void validate_gcblock(const GCBlock<T>& b);

}  // namespace reparam
}  // namespace gcnet
