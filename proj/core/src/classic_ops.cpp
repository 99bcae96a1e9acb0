#include "evo/classic_ops.hpp"

#include <cmath>
#include <sstream>
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

// Query/key source per positional kind: x itself, or x with the absolute
// encoding added. Values always come from the raw x.
Tensor query_key_source(const Tensor& x, const PosEncoding& pos) {
  if (pos.kind != PosKind::absolute) {
    return x;
  }
  if (pos.absolute.empty() || !pos.absolute.same_shape(x)) {
    throw ConfigError("absolute positional encoding requires P with the input shape");
  }
  Tensor out = x;
  for (std::int64_t i = 0; i < out.size(); ++i) {
    out[i] += pos.absolute[i];
  }
  return out;
}

void check_relative_payload(const PosEncoding& pos, std::int64_t window, std::int64_t depth_k) {
  if (pos.rel_table.empty() || pos.rel_wk.empty() || pos.rel_u.empty() || pos.rel_v.empty()) {
    throw ConfigError("relative positional encoding requires r table, wk_hat, u and v");
  }
  if (pos.rel_table.rank() != 3 || pos.rel_table.extent(0) != window ||
      pos.rel_table.extent(1) != window) {
    throw ConfigError("relative shift table must be K x K x D_p");
  }
  const std::int64_t depth_p = pos.rel_table.extent(2);
  if (pos.rel_wk.rank() != 2 || pos.rel_wk.extent(0) != depth_p ||
      pos.rel_wk.extent(1) != depth_k) {
    throw ConfigError("relative key weights must be D_p x D_k");
  }
  if (pos.rel_u.rank() != 1 || pos.rel_u.extent(0) != depth_k || pos.rel_v.rank() != 1 ||
      pos.rel_v.extent(0) != depth_k) {
    throw ConfigError("relative vectors u and v must have length D_k");
  }
}

}  // namespace

std::int64_t InvolutionWeights::window() const {
  const auto k2 = w1.extent(0);
  const auto k = static_cast<std::int64_t>(std::llround(std::sqrt(static_cast<double>(k2))));
  if (k * k != k2) {
    throw ConfigError("w1 row count must be a perfect square K^2, got " + std::to_string(k2));
  }
  return k;
}

Tensor conv2d(const Tensor& x, const ConvWeights& w) {
  require_feature_map(x);
  if (w.w.rank() != 4) {
    throw ShapeError("convolution weights must be K x K x D_in x D_out");
  }
  const std::int64_t k = w.window();
  require_odd_window(k);
  if (w.w.extent(1) != k) {
    throw ShapeError("convolution window must be square");
  }
  const std::int64_t h = x.extent(0), wd = x.extent(1), din = x.extent(2);
  if (w.depth_in() != din) {
    std::ostringstream msg;
    msg << "convolution input depth mismatch: weights expect " << w.depth_in() << ", map has "
        << din;
    throw ShapeError(msg.str());
  }
  const std::int64_t dout = w.depth_out();
  const std::int64_t l = k / 2;
  Tensor y({h, wd, dout});
  const double* xd = x.data();
  const double* wdat = w.w.data();
  double* yd = y.data();
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < wd; ++j) {
      double* yrow = yd + (i * wd + j) * dout;
      for (std::int64_t u = 0; u < k; ++u) {
        const std::int64_t ii = i - l + u;
        if (ii < 0 || ii >= h) continue;
        for (std::int64_t v = 0; v < k; ++v) {
          const std::int64_t jj = j - l + v;
          if (jj < 0 || jj >= wd) continue;
          const double* xv = xd + (ii * wd + jj) * din;
          const double* wv = wdat + (u * k + v) * din * dout;
          for (std::int64_t c = 0; c < din; ++c) {
            const double xc = xv[c];
            for (std::int64_t m = 0; m < dout; ++m) {
              yrow[m] += wv[c * dout + m] * xc;
            }
          }
        }
      }
    }
  }
  return y;
}

Tensor attention_scores(const Tensor& x, const SaWeights& w, std::int64_t window,
                        std::int64_t head) {
  require_feature_map(x);
  require_odd_window(window);
  if (head < 0 || head >= static_cast<std::int64_t>(w.heads.size())) {
    throw ConfigError("attention head index out of range");
  }
  const SaHead& hd = w.heads[static_cast<std::size_t>(head)];
  const std::int64_t h = x.extent(0), wd = x.extent(1), din = x.extent(2);
  if (hd.wq.rank() != 2 || hd.wk.rank() != 2 || hd.wq.extent(0) != din ||
      hd.wk.extent(0) != din || hd.wq.extent(1) != hd.wk.extent(1)) {
    throw ShapeError("query/key weights must be D_in x D_k");
  }
  const std::int64_t dk = hd.wq.extent(1);
  const std::int64_t l = window / 2;

  const bool relative = w.pos.kind == PosKind::relative;
  if (relative) {
    check_relative_payload(w.pos, window, dk);
  }
  const Tensor source = query_key_source(x, w.pos);
  const Tensor queries = project_channels(source, hd.wq);
  const Tensor keys = project_channels(source, hd.wk);

  // rho[u][v] = r[u][v] * wk_hat, the shift embedding in key space.
  Tensor rho;
  if (relative) {
    rho = Tensor({window, window, dk});
    const std::int64_t dp = w.pos.rel_table.extent(2);
    for (std::int64_t u = 0; u < window; ++u) {
      for (std::int64_t v = 0; v < window; ++v) {
        const double* r = w.pos.rel_table.data() + (u * window + v) * dp;
        double* out = rho.data() + (u * window + v) * dk;
        for (std::int64_t p = 0; p < dp; ++p) {
          const double rv = r[p];
          for (std::int64_t c = 0; c < dk; ++c) {
            out[c] += rv * w.pos.rel_wk[p * dk + c];
          }
        }
      }
    }
  }

  Tensor scores({h, wd, window, window});
  const double* qd = queries.data();
  const double* kd = keys.data();
  double* sd = scores.data();
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < wd; ++j) {
      const double* q = qd + (i * wd + j) * dk;
      double* patch = sd + (i * wd + j) * window * window;
      for (std::int64_t u = 0; u < window; ++u) {
        const std::int64_t ii = i - l + u;
        for (std::int64_t v = 0; v < window; ++v) {
          const std::int64_t jj = j - l + v;
          const bool inside = ii >= 0 && ii < h && jj >= 0 && jj < wd;
          double s = 0.0;
          if (inside) {
            const double* key = kd + (ii * wd + jj) * dk;
            for (std::int64_t c = 0; c < dk; ++c) {
              s += q[c] * key[c];
            }
          }
          if (relative) {
            const double* shift = rho.data() + (u * window + v) * dk;
            for (std::int64_t c = 0; c < dk; ++c) {
              s += q[c] * shift[c];
            }
            if (inside) {
              const double* key = kd + (ii * wd + jj) * dk;
              for (std::int64_t c = 0; c < dk; ++c) {
                s += w.pos.rel_u[c] * key[c];
              }
            }
            for (std::int64_t c = 0; c < dk; ++c) {
              s += w.pos.rel_v[c] * shift[c];
            }
          }
          patch[u * window + v] = s;
        }
      }
    }
  }
  return scores;
}

Tensor local_self_attention(const Tensor& x, const SaWeights& w, std::int64_t window,
                            std::int64_t heads) {
  require_feature_map(x);
  require_odd_window(window);
  if (heads < 1 || heads != static_cast<std::int64_t>(w.heads.size())) {
    throw ConfigError("head count does not match the supplied weights");
  }
  const std::int64_t h = x.extent(0), wd = x.extent(1), din = x.extent(2);
  const std::int64_t dh = w.head_depth();
  const std::int64_t l = window / 2;
  if (heads > 1) {
    if (w.wo.empty() || w.wo.rank() != 2 || w.wo.extent(0) != heads * dh) {
      throw ConfigError("multi-head attention requires wo with M*D_h rows");
    }
  }

  Tensor concat({h, wd, heads * dh});
  std::vector<double> probs(static_cast<std::size_t>(window * window));
  for (std::int64_t p = 0; p < heads; ++p) {
    const SaHead& hd = w.heads[static_cast<std::size_t>(p)];
    if (hd.wv.rank() != 2 || hd.wv.extent(0) != din || hd.wv.extent(1) != dh) {
      throw ShapeError("value weights must be D_in x D_h");
    }
    const Tensor scores = attention_scores(x, w, window, p);
    for (std::int64_t i = 0; i < h; ++i) {
      for (std::int64_t j = 0; j < wd; ++j) {
        const double* patch = scores.data() + (i * wd + j) * window * window;
        softmax_span({patch, probs.size()}, probs);
        double* out = concat.data() + (i * wd + j) * heads * dh + p * dh;
        for (std::int64_t u = 0; u < window; ++u) {
          const std::int64_t ii = i - l + u;
          if (ii < 0 || ii >= h) continue;
          for (std::int64_t v = 0; v < window; ++v) {
            const std::int64_t jj = j - l + v;
            if (jj < 0 || jj >= wd) continue;
            const double prob = probs[static_cast<std::size_t>(u * window + v)];
            const double* xv = x.data() + (ii * wd + jj) * din;
            for (std::int64_t m = 0; m < dh; ++m) {
              double value = 0.0;
              for (std::int64_t c = 0; c < din; ++c) {
                value += xv[c] * hd.wv[c * dh + m];
              }
              out[m] += prob * value;
            }
          }
        }
      }
    }
  }
  if (heads == 1) {
    return concat;
  }
  const Tensor flat = concat.reshaped({h * wd, heads * dh});
  return matmul(flat, w.wo).reshaped({h, wd, w.wo.extent(1)});
}

Tensor involution_kernel(const Tensor& x, const InvolutionWeights& w) {
  require_feature_map(x);
  const std::int64_t h = x.extent(0), wd = x.extent(1), d = x.extent(2);
  if (w.reduction < 1 || d % w.reduction != 0) {
    throw ConfigError("input depth must be divisible by the reduction ratio");
  }
  const std::int64_t dr = d / w.reduction;
  if (w.w0.rank() != 2 || w.w0.extent(0) != dr || w.w0.extent(1) != d) {
    throw ConfigError("w0 must be (D/r) x D");
  }
  if (w.w1.rank() != 2 || w.w1.extent(1) != dr) {
    throw ConfigError("w1 must be K^2 x (D/r)");
  }
  if (w.gamma.size() != dr || w.beta.size() != dr) {
    throw ConfigError("gamma and beta must have length D/r");
  }
  if (w.groups < 1) {
    throw ConfigError("group count must be positive");
  }
  const std::int64_t k = w.window();
  require_odd_window(k);

  Tensor kernels({h, wd, k, k, w.groups});
  std::vector<double> hidden(static_cast<std::size_t>(dr));
  std::vector<double> patch(static_cast<std::size_t>(k * k));
  for (std::int64_t p = 0; p < h * wd; ++p) {
    const double* xv = x.data() + p * d;
    for (std::int64_t o = 0; o < dr; ++o) {
      double acc = 0.0;
      for (std::int64_t c = 0; c < d; ++c) {
        acc += w.w0[o * d + c] * xv[c];
      }
      acc = w.gamma[o] * acc + w.beta[o];
      hidden[static_cast<std::size_t>(o)] = acc > 0.0 ? acc : 0.0;
    }
    for (std::int64_t o = 0; o < k * k; ++o) {
      double acc = 0.0;
      for (std::int64_t c = 0; c < dr; ++c) {
        acc += w.w1[o * dr + c] * hidden[static_cast<std::size_t>(c)];
      }
      patch[static_cast<std::size_t>(o)] = acc;
    }
    double* out = kernels.data() + p * k * k * w.groups;
    for (std::int64_t o = 0; o < k * k; ++o) {
      for (std::int64_t g = 0; g < w.groups; ++g) {
        out[o * w.groups + g] = patch[static_cast<std::size_t>(o)];
      }
    }
  }
  return kernels;
}

Tensor involution_apply(const Tensor& x, const Tensor& kernels) {
  require_feature_map(x);
  if (kernels.rank() != 5) {
    throw ShapeError("involution kernels must be H x W x K x K x G");
  }
  const std::int64_t h = x.extent(0), wd = x.extent(1), d = x.extent(2);
  if (kernels.extent(0) != h || kernels.extent(1) != wd) {
    throw ShapeError("kernel spatial extents must match the feature map");
  }
  const std::int64_t k = kernels.extent(2);
  require_odd_window(k);
  if (kernels.extent(3) != k) {
    throw ShapeError("involution window must be square");
  }
  const std::int64_t groups = kernels.extent(4);
  if (d % groups != 0) {
    throw ShapeError("input depth must be divisible by the kernel group count");
  }
  const std::int64_t l = k / 2;
  Tensor y({h, wd, d});
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < wd; ++j) {
      const double* kern = kernels.data() + (i * wd + j) * k * k * groups;
      double* out = y.data() + (i * wd + j) * d;
      for (std::int64_t m = 0; m < d; ++m) {
        const std::int64_t g = m * groups / d;
        double acc = 0.0;
        for (std::int64_t u = 0; u < k; ++u) {
          const std::int64_t ii = i - l + u;
          if (ii < 0 || ii >= h) continue;
          for (std::int64_t v = 0; v < k; ++v) {
            const std::int64_t jj = j - l + v;
            if (jj < 0 || jj >= wd) continue;
            acc += kern[(u * k + v) * groups + g] * x[(ii * wd + jj) * d + m];
          }
        }
        out[m] = acc;
      }
    }
  }
  return y;
}

}  // namespace evo
