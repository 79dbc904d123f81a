#pragma once

#include <array>
#include <vector>

#include "msn/autodiff.hpp"
#include "msn/rng.hpp"
#include "msn/tensor.hpp"

namespace msn {

enum class RunMode { train, eval };

/// 3D convolution geometry: stride fixed at 1, explicit zero padding.
/// Kernel axes ordered (depth, height, width) to match the (B,C,D,H,W)
/// data layout; the spectral axis is depth.
struct Conv3dSpec {
    int in_channels = 0;
    int out_channels = 0;
    int kd = 1, kh = 1, kw = 1;
    int pad_d_lo = 0, pad_d_hi = 0;
    int pad_h_lo = 0, pad_h_hi = 0;
    int pad_w_lo = 0, pad_w_hi = 0;

    /// Size-preserving padding: floor((k-1)/2) low, ceil((k-1)/2) high.
    static Conv3dSpec same(int in_ch, int out_ch, int kd, int kh, int kw);
    /// No padding.
    static Conv3dSpec valid(int in_ch, int out_ch, int kd, int kh, int kw);

    Shape weight_shape() const;  // (out, in, kd, kh, kw)
    Shape bias_shape() const;    // (out)
};

struct Conv2dSpec {
    int in_channels = 0;
    int out_channels = 0;
    int kh = 1, kw = 1;
    int pad_h_lo = 0, pad_h_hi = 0;
    int pad_w_lo = 0, pad_w_hi = 0;

    static Conv2dSpec same(int in_ch, int out_ch, int kh, int kw);
    static Conv2dSpec valid(int in_ch, int out_ch, int kh, int kw);

    Shape weight_shape() const;  // (out, in, kh, kw)
    Shape bias_shape() const;
};

/// Max-pool window/stride, no padding. Output extent per axis is
/// floor((in - kernel)/stride) + 1 and must be >= 1.
struct Pool3dSpec {
    int kd = 2, kh = 2, kw = 2;
    int sd = 1, sh = 1, sw = 1;
};

struct Pool2dSpec {
    int kh = 2, kw = 2;
    int sh = 2, sw = 2;
};

// --- differentiable ops (eager forward; gradients exact) ---

/// Pre-activation 3D convolution of x (B,C,D,H,W).
template <typename T>
NodePtr<T> conv3d(const NodePtr<T>& x, const NodePtr<T>& weight, const NodePtr<T>& bias,
                  const Conv3dSpec& spec);

/// Pre-activation 2D convolution of x (B,C,H,W).
template <typename T>
NodePtr<T> conv2d(const NodePtr<T>& x, const NodePtr<T>& weight, const NodePtr<T>& bias,
                  const Conv2dSpec& spec);

/// max(0, v); subgradient at exactly 0 is 0.
template <typename T>
NodePtr<T> relu(const NodePtr<T>& x);

/// Window maxima; gradient routes to the first maximal element per window
/// (lowest linear index).
template <typename T>
NodePtr<T> maxpool3d(const NodePtr<T>& x, const Pool3dSpec& spec);

template <typename T>
NodePtr<T> maxpool2d(const NodePtr<T>& x, const Pool2dSpec& spec);

/// x (B,F) * W^T (F,O) + b -> (B,O).
template <typename T>
NodePtr<T> linear(const NodePtr<T>& x, const NodePtr<T>& weight, const NodePtr<T>& bias);

/// Inverted dropout: train mode zeroes each element with probability `rate`
/// and scales survivors by 1/(1-rate); eval mode is the identity.
template <typename T>
NodePtr<T> dropout(const NodePtr<T>& x, double rate, RunMode mode, Rng& rng);

/// y = x + sum(branches); all shapes must equal x's.
template <typename T>
NodePtr<T> residual_add(const NodePtr<T>& x, const std::vector<NodePtr<T>>& branches);

/// (B,C,D,H,W) -> (B,C*D,H,W), row-major merge of channel and depth.
template <typename T>
NodePtr<T> depth_fold(const NodePtr<T>& x);

/// Same data, new shape; backward is the inverse reshape.
template <typename T>
NodePtr<T> reshape_node(const NodePtr<T>& x, Shape new_shape);

template <typename T>
struct SoftmaxXentResult {
    NodePtr<T> loss;    // scalar, mean over the batch
    Tensor<T> probs;    // (B,L) softmax rows
};

/// Softmax cross-entropy against one-hot truth rows; max-subtracted for
/// stability. Gradient w.r.t. logits is (probs - truth)/batch.
template <typename T>
SoftmaxXentResult<T> softmax_xent(const NodePtr<T>& logits, const Tensor<T>& one_hot_truth);

/// Scalar node sum(x * weights) with constant weights; dx = g * weights.
template <typename T>
NodePtr<T> weighted_sum(const NodePtr<T>& x, const Tensor<T>& weights);

// --- naive reference kernels (oracles for the lowered implementations) ---

namespace reference {

/// Direct 7-loop 3D convolution, no lowering. Same contract as conv3d's
/// forward; used by tests and benchmarks.
template <typename T>
Tensor<T> conv3d_naive(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                       const Conv3dSpec& spec);

template <typename T>
Tensor<T> conv2d_naive(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                       const Conv2dSpec& spec);

}  // namespace reference

}  // namespace msn
