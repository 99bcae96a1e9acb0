#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <variant>
#include <vector>

#include "evo/classic_ops.hpp"
#include "evo/tensor.hpp"

namespace evo {

/// Which generation function produced a kernel.
enum class Family { conv, sa, msa, involution, conv_as_msa, relpos_const, channelwise };

std::string_view family_name(Family family);
std::optional<Family> family_from_name(std::string_view name);

/// The unified aggregation weights: H x W x K x K x N x D_out with group
/// count G, where N = D_in / G is the channel window each output channel
/// aggregates over. Spatially specific in general; convolution-like
/// generation functions produce the same K x K x N x D_out block at every
/// pixel.
struct EvolutionKernel {
  Tensor w;
  std::int64_t groups = 1;
  Family family = Family::conv;

  std::int64_t height() const { return w.extent(0); }
  std::int64_t width() const { return w.extent(1); }
  std::int64_t window() const { return w.extent(2); }
  std::int64_t channel_window() const { return w.extent(4); }
  std::int64_t depth_out() const { return w.extent(5); }
  std::int64_t depth_in() const { return channel_window() * groups; }
};

/// One-hot multi-head payload: K^2 value matrices (D_in x D_h) and the output
/// projection wo ((K^2 * D_h) x D_out). Head m attends exclusively to the
/// window position (m / K, m % K) at every pixel.
struct OneHotMsaWeights {
  std::vector<Tensor> wv_heads;
  Tensor wo;
};

/// Spatially constant relative-attention payload: score vector v (D_k), key
/// weights wk_hat (D_p x D_k), shift table r (K x K x D_p) and the value
/// matrix wv (D_in x D_out). Queries and keys are implicitly zero.
struct RelposConstWeights {
  Tensor v;
  Tensor wk_hat;
  Tensor r_table;
  Tensor wv;
};

/// One query/key pair per input channel plus a shared value matrix, giving a
/// score map that is specific to both position and channel.
struct ChannelwiseSaWeights {
  struct QkPair {
    Tensor wq;  // D_in x D_k
    Tensor wk;  // D_in x D_k
  };
  std::vector<QkPair> qk;
  Tensor wv;  // D_in x D_out
};

/// Applies an evolution kernel: per pixel (i, j) and output channel m,
/// aggregate the K x K window over input channels [g*N, (g+1)*N) with
/// g = floor(m*G/D_out), weighting X[i-l+u][j-l+v][g*N+n] by
/// w[i][j][u][v][n][m]. Zero padding at the borders.
Tensor ev_apply(const Tensor& x, const EvolutionKernel& kern);

/// Spatially shared kernel: the conv weight block duplicated at every pixel.
EvolutionKernel ev_fn_conv(const ConvWeights& w, std::int64_t height, std::int64_t width);

/// Attention-generated kernel. Single head: entry (i,j,u,v,c,m) is the
/// attention probability at (u,v) times wv[c][m]. Multi-head unfused: output
/// depth M*D_h, head floor(m/D_h) supplies the probability patch and value
/// column; the caller applies wo afterwards. Multi-head fused: wo is absorbed
/// head by head, so one application reproduces the full multi-head output.
EvolutionKernel ev_fn_sa(const Tensor& x, const SaWeights& w, std::int64_t window,
                         std::int64_t heads, bool fuse_output_projection);

/// Depthwise kernel (G = D, N = 1) carrying the per-pixel involution patches;
/// output channel m reads group slice floor(m*G_inv/D) of the generated
/// kernel stack.
EvolutionKernel ev_fn_involution(const Tensor& x, const InvolutionWeights& w,
                                 std::int64_t window);

/// Fused kernel built from the K^2 one-hot probability patches; spatially
/// constant and input independent. The block at window position (u,v) equals
/// wv[u*K+v] * wo[u*K+v].
EvolutionKernel ev_fn_conv_as_msa(const OneHotMsaWeights& w, std::int64_t height,
                                  std::int64_t width);

/// Kernel from relative-position-only scores s[u][v] = v . (r[u][v] wk_hat):
/// one softmax patch shared by every pixel, times the value matrix.
EvolutionKernel ev_fn_relpos_constant(const RelposConstWeights& w, std::int64_t height,
                                      std::int64_t width);

/// Kernel with one attention score map per input channel: entry
/// (i,j,u,v,c,m) is channel c's softmax patch at (u,v) times wv[c][m].
EvolutionKernel ev_fn_channelwise_sa(const Tensor& x, const ChannelwiseSaWeights& w,
                                     std::int64_t window);

using EvolutionPayload = std::variant<ConvWeights, SaWeights, InvolutionWeights,
                                      OneHotMsaWeights, RelposConstWeights, ChannelwiseSaWeights>;

/// A generation function: the family tag plus its weight payload and the
/// parameters needed to materialize a kernel for a given feature map.
struct EvolutionFunctionSpec {
  Family family = Family::conv;
  std::int64_t window = 1;
  std::int64_t heads = 1;
  bool fuse_output_projection = true;
  EvolutionPayload payload;
};

/// Materializes the kernel for `fn` on input `x`.
EvolutionKernel make_kernel(const Tensor& x, const EvolutionFunctionSpec& fn);

}  // namespace evo
