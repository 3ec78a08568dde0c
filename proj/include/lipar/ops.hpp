#pragma once

#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "lipar/tensor.hpp"

namespace lipar::nn {

// ---------------------------------------------------------------------------
// Convolution and friends. All activations are NCHW float32; accumulation
// runs in double.
// ---------------------------------------------------------------------------

/// Grouped 2-d cross-correlation.
/// x: (N, Ci, H, W), w: (Co, Ci/g, K, K), bias: (Co) or null.
/// Output channel group j reads only input channel group j.
Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor* bias,
              int stride, int pad, int groups);

/// Depthwise convolution: conv2d with groups = channels, one kernel per channel.
/// w: (C, 1, K, K).
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, const Tensor* bias,
                        int stride, int pad);

/// Batch normalization over (N, H, W) per channel.
/// Train mode normalizes with batch statistics and folds them into the running
/// stats with `momentum` (unbiased variance for the running update); eval mode
/// normalizes with the running stats.
Tensor batch_norm2d(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                    Tensor& running_mean, Tensor& running_var,
                    bool training, double momentum = 0.1, double eps = 1e-5);

Tensor relu(const Tensor& x);

/// Averages each of out_h x out_w index ranges; bucket i covers rows
/// [floor(i*H/out_h), floor((i+1)*H/out_h)), a non-overlapping partition.
Tensor adaptive_avg_pool2d(const Tensor& x, int out_h, int out_w);

/// Train mode zeroes each element with probability p and scales survivors by
/// 1/(1-p); eval mode is the identity. The mask is a pure function of
/// (seed, salt, element index), so a step is reproducible.
Tensor dropout(const Tensor& x, double p, bool training, uint64_t seed, uint64_t salt);

/// y = x W^T + b. x: (N, F), w: (O, F), b: (O) or null.
Tensor linear(const Tensor& x, const Tensor& w, const Tensor* b);

// ---------------------------------------------------------------------------
// Elementwise / structural operators.
// ---------------------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, float s);
/// Scalar sum of all elements (double accumulation).
Tensor sum(const Tensor& a);

/// Concatenates (N, C_i, H, W) tensors along the channel axis.
Tensor concat_channels(std::span<const Tensor> parts);

/// Selects step t of a (T, N, F) sequence tensor -> (N, F).
Tensor select_step(const Tensor& x, int64_t t);

/// Stacks k same-shape tensors into (k, ...).
Tensor stack_first(std::span<const Tensor> parts);

// ---------------------------------------------------------------------------
// Loss.
// ---------------------------------------------------------------------------

/// Mean over the batch of -log softmax(logits)[label], max-subtracted for
/// stability. Adjoint is (softmax - one_hot) / N.
Tensor softmax_cross_entropy(const Tensor& logits, std::span<const int> labels);

// ---------------------------------------------------------------------------
// Recurrent branch.
// ---------------------------------------------------------------------------

/// One LSTM layer's weights. Gate blocks are stacked in the row order
/// [forget; input; output; candidate], so each matrix is (4H, *).
struct LstmLayerParams {
    Tensor w_input;  // (4H, F)
    Tensor w_hidden; // (4H, H)
    Tensor bias;     // (4H)
};

struct LstmOut {
    Tensor outputs;     // (T, N, H) hidden states of the top layer
    Tensor last_hidden; // (L, N, H) final hidden state per layer
};

/// Multi-layer LSTM over x: (T, N, F) with zero initial state. Layer l > 0
/// consumes layer l-1 outputs. Registers adjoints for every weight via
/// backpropagation through time.
LstmOut lstm_forward(const Tensor& x, std::span<const LstmLayerParams> layers);

// ---------------------------------------------------------------------------
// Analytic network arithmetic.
// ---------------------------------------------------------------------------

/// Side length of the receptive field of a stack of (ksize, stride) layers,
/// folded from the deepest layer (field 1) outward.
int receptive_field(std::span<const std::pair<int, int>> schedule);

/// Weight count of a grouped conv layer: K*K*Ci*Co/g. Bias excluded.
int64_t conv_param_count(int ksize, int64_t ci, int64_t co, int64_t groups);

} // namespace lipar::nn
