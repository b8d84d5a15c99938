#pragma once

#include <span>
#include <vector>

#include "ddnn/tensor.hpp"

namespace ddnn {

enum class Mode { Train, Infer };

/// Running statistics owned by a batch-norm layer. Train mode reads batch
/// statistics and folds them into these; infer mode reads them back.
struct BnState {
    std::vector<float> run_mean;
    std::vector<float> run_var;
    float eps = 1e-5f;
    float momentum = 0.9f;

    static BnState make(int channels) {
        BnState s;
        s.run_mean.assign(static_cast<size_t>(channels), 0.0f);
        s.run_var.assign(static_cast<size_t>(channels), 1.0f);
        return s;
    }
};

// --- convolution / pooling -------------------------------------------------

/// 3x3 convolution, stride 1, zero padding 1. Input NxCxHxW, weights FxCx3x3,
/// output NxFxHxW (spatial size preserved).
Tensor conv2d_3x3(const Tensor& input, const Tensor& weights);

/// 1x1 channel-mixing convolution with bias. Input NxCxHxW, weights FxC,
/// bias F, output NxFxHxW.
Tensor conv1x1(const Tensor& input, const Tensor& weights, const Tensor& bias);

/// 3x3 max pooling, stride 2, padding 1. Padded cells behave as -inf: only
/// in-bounds cells are scanned. 32x32 -> 16x16.
Tensor maxpool_3x3_s2(const Tensor& input);

// --- normalization / activation --------------------------------------------

/// Per-channel batch normalization over dim 1. Train mode normalizes by batch
/// statistics and updates `state`; infer mode uses the stored running stats.
Tensor batch_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                  BnState& state, Mode mode);

/// Sign activation: +1 for x >= 0, -1 otherwise. Straight-through gradient:
/// upstream passes where |x| <= 1, zero elsewhere.
Tensor binarize(const Tensor& input);

/// clamp(x, -1, 1) with the same |x| <= 1 gradient mask as binarize. This is
/// the surrogate the straight-through estimator differentiates.
Tensor hardtanh(const Tensor& input);

// --- linear algebra ---------------------------------------------------------

/// Matrix product: NxD @ DxK -> NxK.
Tensor matmul(const Tensor& input, const Tensor& weights);

/// Adds a length-K row vector to every row of an NxK tensor.
Tensor add_rowvec(const Tensor& input, const Tensor& bias);

/// Reshape to Nx(numel/N), copying data.
Tensor flatten2(const Tensor& input);

/// Concatenation along dim 1. All inputs must agree on every other extent.
Tensor concat_dim1(const std::vector<Tensor>& inputs);

Tensor scale(const Tensor& input, float s);
Tensor add(const Tensor& a, const Tensor& b);

// --- aggregation ------------------------------------------------------------
// Fuse equally-shaped per-device tensors into one. MP routes gradients to the
// componentwise argmax contributor (ties to the lowest device index), AP
// spreads them uniformly, CC concatenates and projects back to the input
// width through a float linear layer.

Tensor aggregate_mp(const std::vector<Tensor>& inputs);
Tensor aggregate_ap(const std::vector<Tensor>& inputs);
Tensor aggregate_cc(const std::vector<Tensor>& inputs, const Tensor& proj_w,
                    const Tensor& proj_b);

// --- loss -------------------------------------------------------------------

/// One-hot encode integer labels into an NxC tensor (no gradient).
Tensor one_hot(const std::vector<int>& labels, int num_classes);

/// Softmax cross entropy, averaged over the batch:
///   L = (1/N) sum_n [ -(1/C) sum_c y_c log softmax(z)_c ].
/// Returns a scalar; gradients flow to the logits.
Tensor softmax_cross_entropy(const Tensor& logits, const Tensor& onehot_labels);

/// Forward-only softmax over each row of an NxC tensor.
std::vector<float> softmax_probs(const Tensor& logits);

/// Forward-only softmax of one row.
std::vector<float> softmax_row(std::span<const float> logits);

} // namespace ddnn
