#pragma once

#include <cstdint>
#include <vector>

#include "evo/tensor.hpp"

namespace evo {

/// K x K x D_in x D_out stack of spatially shared filters. K must be odd so
/// that l = K/2 centers the window.
struct ConvWeights {
  Tensor w;

  std::int64_t window() const { return w.extent(0); }
  std::int64_t depth_in() const { return w.extent(2); }
  std::int64_t depth_out() const { return w.extent(3); }
};

enum class PosKind { none, absolute, relative };

/// Positional payload for attention scores.
///
/// absolute: P (H x W x D_in), added to the query/key source only, never to
/// the values. relative: shift table r (K x K x D_p) indexed by the window
/// position (so r[u][v] belongs to shift (u-l, v-l)), key weights wk_hat
/// (D_p x D_k) and learned vectors u, v (length D_k each).
struct PosEncoding {
  PosKind kind = PosKind::none;
  Tensor absolute;
  Tensor rel_table;
  Tensor rel_wk;
  Tensor rel_u;
  Tensor rel_v;
};

/// Projection weights of one attention head.
struct SaHead {
  Tensor wq;  // D_in x D_k
  Tensor wk;  // D_in x D_k
  Tensor wv;  // D_in x D_h
};

/// Weights of one local self-attention operator. `wo` ((M * D_h) x D_out) is
/// consulted only when more than one head is present; with a single head the
/// head output is the operator output.
struct SaWeights {
  std::vector<SaHead> heads;
  Tensor wo;
  PosEncoding pos;

  std::int64_t head_depth() const { return heads.front().wv.extent(1); }
};

/// Bottleneck kernel-generation weights: w0 ((D/r) x D), w1 (K^2 x (D/r)),
/// per-channel affine gamma/beta (length D/r), reduction ratio and group
/// count. The affine-plus-ReLU stage is the inference form of the original
/// normalization-plus-activation.
struct InvolutionWeights {
  Tensor w0;
  Tensor w1;
  Tensor gamma;
  Tensor beta;
  std::int64_t reduction = 1;
  std::int64_t groups = 1;

  std::int64_t window() const;
};

/// Same-size convolution: stride 1, zero padding l = K/2, single group, no
/// bias. Output is H x W x D_out.
Tensor conv2d(const Tensor& x, const ConvWeights& w);

/// Pre-softmax K x K score patch of one head at every pixel (H x W x K x K).
/// Score index (u, v) pairs with neighbour (i-l+u, j-l+v). Neighbours outside
/// the image contribute zero key vectors; relative shift terms still apply to
/// them.
Tensor attention_scores(const Tensor& x, const SaWeights& w, std::int64_t window,
                        std::int64_t head);

/// Local K x K self-attention with `heads` heads. Head outputs are
/// concatenated along channels and projected by wo when heads > 1.
Tensor local_self_attention(const Tensor& x, const SaWeights& w, std::int64_t window,
                            std::int64_t heads);

/// Per-pixel aggregation kernels from the bottleneck generator
/// (H x W x K x K x G). The K^2 bottleneck output is reshaped row-major to
/// K x K and shared across the G group slices.
Tensor involution_kernel(const Tensor& x, const InvolutionWeights& w);

/// Applies a per-pixel kernel stack (H x W x K x K x G) to x: output channel
/// m aggregates input channel m through group slice floor(m*G/D). Zero
/// padding at the borders.
Tensor involution_apply(const Tensor& x, const Tensor& kernels);

}  // namespace evo
