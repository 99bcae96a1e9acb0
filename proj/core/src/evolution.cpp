#include "evo/evolution.hpp"

#include <cstring>
#include <string>

#include "evo/errors.hpp"

namespace evo {

namespace {

void require_feature_map(const Tensor& x) {
  if (x.rank() != 3) {
    throw ShapeError("expected an H x W x D feature map, got rank " + std::to_string(x.rank()));
  }
}

void require_odd_window(std::int64_t window) {
  if (window < 1 || window % 2 == 0) {
    throw ShapeError("window size must be odd and positive, got " + std::to_string(window));
  }
}

// Per-head H x W x K x K attention probability maps, softmax applied per
// window. Shared by the single-head, multi-head and fused kernel builders so
// all of them reproduce the classic scores bit for bit.
std::vector<Tensor> attention_probability_maps(const Tensor& x, const SaWeights& w,
                                               std::int64_t window, std::int64_t heads) {
  const std::int64_t h = x.extent(0), wd = x.extent(1);
  const std::size_t patch = static_cast<std::size_t>(window * window);
  std::vector<Tensor> maps;
  maps.reserve(static_cast<std::size_t>(heads));
  for (std::int64_t p = 0; p < heads; ++p) {
    Tensor probs({h, wd, window, window});
    const Tensor scores = attention_scores(x, w, window, p);
    for (std::int64_t pix = 0; pix < h * wd; ++pix) {
      softmax_span({scores.data() + pix * static_cast<std::int64_t>(patch), patch},
                   {probs.data() + pix * static_cast<std::int64_t>(patch), patch});
    }
    maps.push_back(std::move(probs));
  }
  return maps;
}

// Rows [first, first + count) of a rank-2 tensor.
Tensor row_slice(const Tensor& m, std::int64_t first, std::int64_t count) {
  const std::int64_t cols = m.extent(1);
  Tensor out({count, cols});
  std::memcpy(out.data(), m.data() + first * cols,
              static_cast<std::size_t>(count * cols) * sizeof(double));
  return out;
}

// kern[i,j,u,v,c,m] = sum_p probs[p][i,j,u,v] * mats[p][c,m]; the head-sum
// that absorbs the output projection into a single kernel.
EvolutionKernel fused_kernel_from_heads(const std::vector<Tensor>& probs,
                                        const std::vector<Tensor>& mats, std::int64_t height,
                                        std::int64_t width, std::int64_t window, Family family) {
  const std::int64_t heads = static_cast<std::int64_t>(mats.size());
  const std::int64_t din = mats.front().extent(0);
  const std::int64_t dout = mats.front().extent(1);
  EvolutionKernel kern{Tensor({height, width, window, window, din, dout}), 1, family};
  double* kd = kern.w.data();
  const std::int64_t patch = window * window;
  for (std::int64_t pix = 0; pix < height * width; ++pix) {
    double* block = kd + pix * patch * din * dout;
    for (std::int64_t uv = 0; uv < patch; ++uv) {
      for (std::int64_t c = 0; c < din; ++c) {
        double* cell = block + (uv * din + c) * dout;
        for (std::int64_t m = 0; m < dout; ++m) {
          double acc = 0.0;
          for (std::int64_t p = 0; p < heads; ++p) {
            acc += probs[static_cast<std::size_t>(p)][pix * patch + uv] *
                   mats[static_cast<std::size_t>(p)][c * dout + m];
          }
          cell[m] = acc;
        }
      }
    }
  }
  return kern;
}

}  // namespace

std::string_view family_name(Family family) {
  switch (family) {
    case Family::conv: return "conv";
    case Family::sa: return "sa";
    case Family::msa: return "msa";
    case Family::involution: return "involution";
    case Family::conv_as_msa: return "conv_as_msa";
    case Family::relpos_const: return "relpos_const";
    case Family::channelwise: return "channelwise";
  }
  return "unknown";
}

std::optional<Family> family_from_name(std::string_view name) {
  for (Family f : {Family::conv, Family::sa, Family::msa, Family::involution, Family::conv_as_msa,
                   Family::relpos_const, Family::channelwise}) {
    if (family_name(f) == name) {
      return f;
    }
  }
  return std::nullopt;
}

Tensor ev_apply(const Tensor& x, const EvolutionKernel& kern) {
  require_feature_map(x);
  if (kern.w.rank() != 6) {
    throw ShapeError("evolution kernel must be H x W x K x K x N x D_out");
  }
  const std::int64_t h = x.extent(0), wd = x.extent(1), din = x.extent(2);
  if (kern.height() != h || kern.width() != wd) {
    throw ShapeError("kernel spatial extents must match the feature map");
  }
  const std::int64_t k = kern.window();
  require_odd_window(k);
  if (kern.w.extent(3) != k) {
    throw ShapeError("evolution kernel window must be square");
  }
  const std::int64_t groups = kern.groups;
  const std::int64_t n = kern.channel_window();
  const std::int64_t dout = kern.depth_out();
  if (groups < 1 || n * groups != din) {
    throw ShapeError("kernel channel window times group count must equal the input depth");
  }
  if (dout % groups != 0) {
    throw ShapeError("output depth must be divisible by the group count");
  }
  const std::int64_t l = k / 2;
  Tensor y({h, wd, dout});
  const double* xd = x.data();
  const double* kd = kern.w.data();
  double* yd = y.data();
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < wd; ++j) {
      const double* block = kd + (i * wd + j) * k * k * n * dout;
      double* out = yd + (i * wd + j) * dout;
      for (std::int64_t m = 0; m < dout; ++m) {
        const std::int64_t g = m * groups / dout;
        const std::int64_t c0 = g * n;
        double acc = 0.0;
        for (std::int64_t u = 0; u < k; ++u) {
          const std::int64_t ii = i - l + u;
          if (ii < 0 || ii >= h) continue;
          for (std::int64_t v = 0; v < k; ++v) {
            const std::int64_t jj = j - l + v;
            if (jj < 0 || jj >= wd) continue;
            const double* xv = xd + (ii * wd + jj) * din + c0;
            const double* wv = block + (u * k + v) * n * dout + m;
            for (std::int64_t c = 0; c < n; ++c) {
              acc += xv[c] * wv[c * dout];
            }
          }
        }
        out[m] = acc;
      }
    }
  }
  return y;
}

EvolutionKernel ev_fn_conv(const ConvWeights& w, std::int64_t height, std::int64_t width) {
  if (w.w.rank() != 4) {
    throw ShapeError("convolution weights must be K x K x D_in x D_out");
  }
  const std::int64_t k = w.window();
  require_odd_window(k);
  if (height < 1 || width < 1) {
    throw ShapeError("kernel spatial extents must be positive");
  }
  const std::int64_t block = w.w.size();
  EvolutionKernel kern{Tensor({height, width, k, k, w.depth_in(), w.depth_out()}), 1,
                       Family::conv};
  for (std::int64_t pix = 0; pix < height * width; ++pix) {
    std::memcpy(kern.w.data() + pix * block, w.w.data(),
                static_cast<std::size_t>(block) * sizeof(double));
  }
  return kern;
}

EvolutionKernel ev_fn_sa(const Tensor& x, const SaWeights& w, std::int64_t window,
                         std::int64_t heads, bool fuse_output_projection) {
  require_feature_map(x);
  require_odd_window(window);
  if (heads < 1 || heads != static_cast<std::int64_t>(w.heads.size())) {
    throw ConfigError("head count does not match the supplied weights");
  }
  if (fuse_output_projection && heads == 1) {
    throw ConfigError("single-head attention has no output projection to fuse");
  }
  const std::int64_t h = x.extent(0), wd = x.extent(1), din = x.extent(2);
  const std::int64_t dh = w.head_depth();
  const std::vector<Tensor> probs = attention_probability_maps(x, w, window, heads);

  if (heads == 1) {
    const Tensor& wv = w.heads.front().wv;
    EvolutionKernel kern{Tensor({h, wd, window, window, din, dh}), 1, Family::sa};
    const std::int64_t patch = window * window;
    for (std::int64_t pix = 0; pix < h * wd; ++pix) {
      double* block = kern.w.data() + pix * patch * din * dh;
      for (std::int64_t uv = 0; uv < patch; ++uv) {
        const double prob = probs.front()[pix * patch + uv];
        double* cell = block + uv * din * dh;
        for (std::int64_t e = 0; e < din * dh; ++e) {
          cell[e] = prob * wv[e];
        }
      }
    }
    return kern;
  }

  if (w.wo.empty() || w.wo.rank() != 2 || w.wo.extent(0) != heads * dh) {
    throw ConfigError("multi-head attention requires wo with M*D_h rows");
  }

  if (fuse_output_projection) {
    std::vector<Tensor> mats;
    mats.reserve(static_cast<std::size_t>(heads));
    for (std::int64_t p = 0; p < heads; ++p) {
      mats.push_back(matmul(w.heads[static_cast<std::size_t>(p)].wv,
                            row_slice(w.wo, p * dh, dh)));
    }
    return fused_kernel_from_heads(probs, mats, h, wd, window, Family::msa);
  }

  // Unfused: output channel m belongs to head m / D_h, column m % D_h of its
  // value matrix; wo stays outside.
  const std::int64_t dout = heads * dh;
  EvolutionKernel kern{Tensor({h, wd, window, window, din, dout}), 1, Family::msa};
  const std::int64_t patch = window * window;
  for (std::int64_t pix = 0; pix < h * wd; ++pix) {
    double* block = kern.w.data() + pix * patch * din * dout;
    for (std::int64_t uv = 0; uv < patch; ++uv) {
      for (std::int64_t p = 0; p < heads; ++p) {
        const double prob = probs[static_cast<std::size_t>(p)][pix * patch + uv];
        const Tensor& wv = w.heads[static_cast<std::size_t>(p)].wv;
        for (std::int64_t c = 0; c < din; ++c) {
          double* cell = block + (uv * din + c) * dout + p * dh;
          for (std::int64_t m = 0; m < dh; ++m) {
            cell[m] = prob * wv[c * dh + m];
          }
        }
      }
    }
  }
  return kern;
}

EvolutionKernel ev_fn_involution(const Tensor& x, const InvolutionWeights& w,
                                 std::int64_t window) {
  require_feature_map(x);
  if (window != w.window()) {
    throw ConfigError("requested window does not match the generator weights");
  }
  const std::int64_t h = x.extent(0), wd = x.extent(1), d = x.extent(2);
  const Tensor kernels = involution_kernel(x, w);
  const std::int64_t groups = kernels.extent(4);
  if (d % groups != 0) {
    throw ConfigError("input depth must be divisible by the involution group count");
  }
  // Depthwise form of the unified kernel: G = D, N = 1, output depth D.
  EvolutionKernel kern{Tensor({h, wd, window, window, 1, d}), d, Family::involution};
  const std::int64_t patch = window * window;
  for (std::int64_t pix = 0; pix < h * wd; ++pix) {
    const double* src = kernels.data() + pix * patch * groups;
    double* block = kern.w.data() + pix * patch * d;
    for (std::int64_t uv = 0; uv < patch; ++uv) {
      for (std::int64_t m = 0; m < d; ++m) {
        block[uv * d + m] = src[uv * groups + m * groups / d];
      }
    }
  }
  return kern;
}

EvolutionKernel ev_fn_conv_as_msa(const OneHotMsaWeights& w, std::int64_t height,
                                  std::int64_t width) {
  const std::int64_t heads = static_cast<std::int64_t>(w.wv_heads.size());
  std::int64_t window = 1;
  while (window * window < heads) window += 2;
  if (window * window != heads) {
    throw ConfigError("one-hot construction needs K^2 heads for an odd window K");
  }
  if (w.wv_heads.front().rank() != 2) {
    throw ConfigError("per-head value weights must be D_in x D_h");
  }
  const std::int64_t din = w.wv_heads.front().extent(0);
  const std::int64_t dh = w.wv_heads.front().extent(1);
  if (w.wo.empty() || w.wo.rank() != 2 || w.wo.extent(0) != heads * dh) {
    throw ConfigError("output projection must have K^2 * D_h rows");
  }
  if (height < 1 || width < 1) {
    throw ShapeError("kernel spatial extents must be positive");
  }

  // Head m attends only to window position (m / K, m % K); its probability
  // patch is input independent, so the fused head-sum collapses to one block
  // shared by every pixel.
  std::vector<Tensor> probs;
  probs.reserve(static_cast<std::size_t>(heads));
  for (std::int64_t p = 0; p < heads; ++p) {
    Tensor patch({1, 1, window, window});
    patch[p] = 1.0;
    probs.push_back(std::move(patch));
  }
  std::vector<Tensor> mats;
  mats.reserve(static_cast<std::size_t>(heads));
  for (std::int64_t p = 0; p < heads; ++p) {
    mats.push_back(matmul(w.wv_heads[static_cast<std::size_t>(p)], row_slice(w.wo, p * dh, dh)));
  }
  const EvolutionKernel block = fused_kernel_from_heads(probs, mats, 1, 1, window,
                                                        Family::conv_as_msa);
  EvolutionKernel kern{Tensor({height, width, window, window, din, block.depth_out()}), 1,
                       Family::conv_as_msa};
  for (std::int64_t pix = 0; pix < height * width; ++pix) {
    std::memcpy(kern.w.data() + pix * block.w.size(), block.w.data(),
                static_cast<std::size_t>(block.w.size()) * sizeof(double));
  }
  return kern;
}

EvolutionKernel ev_fn_relpos_constant(const RelposConstWeights& w, std::int64_t height,
                                      std::int64_t width) {
  if (w.r_table.rank() != 3 || w.r_table.extent(0) != w.r_table.extent(1)) {
    throw ShapeError("shift table must be K x K x D_p");
  }
  const std::int64_t window = w.r_table.extent(0);
  require_odd_window(window);
  const std::int64_t dp = w.r_table.extent(2);
  if (w.wk_hat.rank() != 2 || w.wk_hat.extent(0) != dp) {
    throw ShapeError("wk_hat must be D_p x D_k");
  }
  const std::int64_t dk = w.wk_hat.extent(1);
  if (w.v.rank() != 1 || w.v.extent(0) != dk) {
    throw ShapeError("v must have length D_k");
  }
  if (w.wv.rank() != 2) {
    throw ShapeError("value weights must be D_in x D_out");
  }
  if (height < 1 || width < 1) {
    throw ShapeError("kernel spatial extents must be positive");
  }
  const std::int64_t din = w.wv.extent(0), dout = w.wv.extent(1);

  // One score per shift: s[u][v] = v . (r[u][v] wk_hat); the same patch at
  // every pixel.
  const std::int64_t patch = window * window;
  std::vector<double> scores(static_cast<std::size_t>(patch), 0.0);
  for (std::int64_t uv = 0; uv < patch; ++uv) {
    const double* r = w.r_table.data() + uv * dp;
    double s = 0.0;
    for (std::int64_t c = 0; c < dk; ++c) {
      double rho = 0.0;
      for (std::int64_t p = 0; p < dp; ++p) {
        rho += r[p] * w.wk_hat[p * dk + c];
      }
      s += w.v[c] * rho;
    }
    scores[static_cast<std::size_t>(uv)] = s;
  }
  std::vector<double> probs(static_cast<std::size_t>(patch));
  softmax_span(scores, probs);

  Tensor block({patch * din * dout});
  for (std::int64_t uv = 0; uv < patch; ++uv) {
    const double prob = probs[static_cast<std::size_t>(uv)];
    double* cell = block.data() + uv * din * dout;
    for (std::int64_t e = 0; e < din * dout; ++e) {
      cell[e] = prob * w.wv[e];
    }
  }
  EvolutionKernel kern{Tensor({height, width, window, window, din, dout}), 1,
                       Family::relpos_const};
  for (std::int64_t pix = 0; pix < height * width; ++pix) {
    std::memcpy(kern.w.data() + pix * block.size(), block.data(),
                static_cast<std::size_t>(block.size()) * sizeof(double));
  }
  return kern;
}

EvolutionKernel ev_fn_channelwise_sa(const Tensor& x, const ChannelwiseSaWeights& w,
                                     std::int64_t window) {
  require_feature_map(x);
  require_odd_window(window);
  const std::int64_t h = x.extent(0), wd = x.extent(1), din = x.extent(2);
  if (static_cast<std::int64_t>(w.qk.size()) != din) {
    throw ConfigError("need exactly one query/key pair per input channel");
  }
  if (w.wv.rank() != 2 || w.wv.extent(0) != din) {
    throw ShapeError("value weights must be D_in x D_out");
  }
  const std::int64_t dout = w.wv.extent(1);
  const std::int64_t l = window / 2;
  const std::int64_t patch = window * window;

  EvolutionKernel kern{Tensor({h, wd, window, window, din, dout}), 1, Family::channelwise};
  std::vector<double> scores(static_cast<std::size_t>(patch));
  std::vector<double> probs(static_cast<std::size_t>(patch));
  for (std::int64_t ch = 0; ch < din; ++ch) {
    const auto& pair = w.qk[static_cast<std::size_t>(ch)];
    if (pair.wq.rank() != 2 || pair.wk.rank() != 2 || pair.wq.extent(0) != din ||
        pair.wk.extent(0) != din || pair.wq.extent(1) != pair.wk.extent(1)) {
      throw ShapeError("per-channel query/key weights must be D_in x D_k");
    }
    const std::int64_t dk = pair.wq.extent(1);
    const Tensor queries = project_channels(x, pair.wq);
    const Tensor keys = project_channels(x, pair.wk);
    for (std::int64_t i = 0; i < h; ++i) {
      for (std::int64_t j = 0; j < wd; ++j) {
        const double* q = queries.data() + (i * wd + j) * dk;
        for (std::int64_t u = 0; u < window; ++u) {
          const std::int64_t ii = i - l + u;
          for (std::int64_t v = 0; v < window; ++v) {
            const std::int64_t jj = j - l + v;
            double s = 0.0;
            if (ii >= 0 && ii < h && jj >= 0 && jj < wd) {
              const double* key = keys.data() + (ii * wd + jj) * dk;
              for (std::int64_t c = 0; c < dk; ++c) {
                s += q[c] * key[c];
              }
            }
            scores[static_cast<std::size_t>(u * window + v)] = s;
          }
        }
        softmax_span(scores, probs);
        double* block = kern.w.data() + (i * wd + j) * patch * din * dout;
        for (std::int64_t uv = 0; uv < patch; ++uv) {
          const double prob = probs[static_cast<std::size_t>(uv)];
          double* cell = block + (uv * din + ch) * dout;
          for (std::int64_t m = 0; m < dout; ++m) {
            cell[m] = prob * w.wv[ch * dout + m];
          }
        }
      }
    }
  }
  return kern;
}

EvolutionKernel make_kernel(const Tensor& x, const EvolutionFunctionSpec& fn) {
  require_feature_map(x);
  const std::int64_t h = x.extent(0), wd = x.extent(1);
  switch (fn.family) {
    case Family::conv:
      return ev_fn_conv(std::get<ConvWeights>(fn.payload), h, wd);
    case Family::sa:
    case Family::msa:
      return ev_fn_sa(x, std::get<SaWeights>(fn.payload), fn.window, fn.heads,
                      fn.heads > 1 && fn.fuse_output_projection);
    case Family::involution:
      return ev_fn_involution(x, std::get<InvolutionWeights>(fn.payload), fn.window);
    case Family::conv_as_msa:
      return ev_fn_conv_as_msa(std::get<OneHotMsaWeights>(fn.payload), h, wd);
    case Family::relpos_const:
      return ev_fn_relpos_constant(std::get<RelposConstWeights>(fn.payload), h, wd);
    case Family::channelwise:
      return ev_fn_channelwise_sa(x, std::get<ChannelwiseSaWeights>(fn.payload), fn.window);
  }
  throw ConfigError("unknown evolution family");
}

}  // namespace evo
