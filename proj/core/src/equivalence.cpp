#include "evo/equivalence.hpp"

#include <chrono>
#include <cmath>
#include <cstring>
#include <utility>
#include <vector>

#include "evo/classic_ops.hpp"
#include "evo/errors.hpp"

namespace evo {

namespace {

// Sub-seed schedule. Every family draws its tensors from consecutive offsets
// of spec.seed in the fixed order below; fixtures depend on this order never
// changing.
//
//   all families    x                     seed
//   conv            w                     seed+1
//   sa / msa        head p: wq, wk, wv    seed+1+3p, seed+2+3p, seed+3+3p
//                   wo (M > 1)            seed+3M+1
//                   absolute P            seed+3M+2
//                   relative r, wk_hat,   seed+3M+2, seed+3M+3,
//                            u, v         seed+3M+4, seed+3M+5
//   involution      w0, w1, gamma, beta   seed+1 .. seed+4
//   conv_as_msa     wv head p (K^2 heads) seed+1+p
//                   wo                    seed+1+K^2
//   relpos_const    v, wk_hat, r, wv      seed+1 .. seed+4
//   channelwise     channel c: wq, wk     seed+1+2c, seed+2+2c
//                   wv                    seed+1+2*D_in

SaWeights derive_sa_weights(const OperatorSpec& spec) {
  SaWeights w;
  const std::int64_t m = spec.heads;
  for (std::int64_t p = 0; p < m; ++p) {
    SaHead head;
    head.wq = prng_fill({spec.depth_in, spec.depth_k}, spec.seed + 1 + 3 * p);
    head.wk = prng_fill({spec.depth_in, spec.depth_k}, spec.seed + 2 + 3 * p);
    head.wv = prng_fill({spec.depth_in, spec.depth_out}, spec.seed + 3 + 3 * p);
    w.heads.push_back(std::move(head));
  }
  if (m > 1) {
    w.wo = prng_fill({m * spec.depth_out, spec.depth_out}, spec.seed + 3 * m + 1);
  }
  w.pos.kind = spec.pos_kind;
  if (spec.pos_kind == PosKind::absolute) {
    w.pos.absolute = prng_fill({spec.height, spec.width, spec.depth_in}, spec.seed + 3 * m + 2);
  } else if (spec.pos_kind == PosKind::relative) {
    w.pos.rel_table = prng_fill({spec.window, spec.window, spec.depth_p}, spec.seed + 3 * m + 2);
    w.pos.rel_wk = prng_fill({spec.depth_p, spec.depth_k}, spec.seed + 3 * m + 3);
    w.pos.rel_u = prng_fill({spec.depth_k}, spec.seed + 3 * m + 4);
    w.pos.rel_v = prng_fill({spec.depth_k}, spec.seed + 3 * m + 5);
  }
  return w;
}

// Eq-27 style derived filters: block (u, v) is wv[u*K+v] * wo[u*K+v].
ConvWeights conv_weights_from_onehot(const OneHotMsaWeights& w, std::int64_t window) {
  const std::int64_t din = w.wv_heads.front().extent(0);
  const std::int64_t dh = w.wv_heads.front().extent(1);
  const std::int64_t dout = w.wo.extent(1);
  ConvWeights conv{Tensor({window, window, din, dout})};
  for (std::int64_t uv = 0; uv < window * window; ++uv) {
    Tensor rows({dh, dout});
    std::memcpy(rows.data(), w.wo.data() + uv * dh * dout,
                static_cast<std::size_t>(dh * dout) * sizeof(double));
    const Tensor prod = matmul(w.wv_heads[static_cast<std::size_t>(uv)], rows);
    std::memcpy(conv.w.data() + uv * din * dout, prod.data(),
                static_cast<std::size_t>(din * dout) * sizeof(double));
  }
  return conv;
}

// Eq-28 style derived filters: block (u, v) is softmax(s)[u,v] * wv.
ConvWeights conv_weights_from_relpos(const RelposConstWeights& w) {
  const std::int64_t window = w.r_table.extent(0);
  const std::int64_t dp = w.r_table.extent(2);
  const std::int64_t dk = w.wk_hat.extent(1);
  const std::int64_t din = w.wv.extent(0), dout = w.wv.extent(1);
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
  ConvWeights conv{Tensor({window, window, din, dout})};
  for (std::int64_t uv = 0; uv < patch; ++uv) {
    const double prob = probs[static_cast<std::size_t>(uv)];
    double* cell = conv.w.data() + uv * din * dout;
    for (std::int64_t e = 0; e < din * dout; ++e) {
      cell[e] = prob * w.wv[e];
    }
  }
  return conv;
}

// Direct route for per-channel attention: aggregate each channel under its
// own probability patch, then project by wv. Never touches the kernel path.
Tensor channelwise_direct(const Tensor& x, const ChannelwiseSaWeights& w, std::int64_t window) {
  const std::int64_t h = x.extent(0), wd = x.extent(1), din = x.extent(2);
  const std::int64_t dout = w.wv.extent(1);
  const std::int64_t l = window / 2;
  const std::int64_t patch = window * window;
  Tensor aggregated({h, wd, din});
  std::vector<double> scores(static_cast<std::size_t>(patch));
  std::vector<double> probs(static_cast<std::size_t>(patch));
  for (std::int64_t ch = 0; ch < din; ++ch) {
    const auto& pair = w.qk[static_cast<std::size_t>(ch)];
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
        double acc = 0.0;
        for (std::int64_t u = 0; u < window; ++u) {
          const std::int64_t ii = i - l + u;
          if (ii < 0 || ii >= h) continue;
          for (std::int64_t v = 0; v < window; ++v) {
            const std::int64_t jj = j - l + v;
            if (jj < 0 || jj >= wd) continue;
            acc += probs[static_cast<std::size_t>(u * window + v)] * x[(ii * wd + jj) * din + ch];
          }
        }
        aggregated[(i * wd + j) * din + ch] = acc;
      }
    }
  }
  return project_channels(aggregated, w.wv);
}

std::int64_t checked_positive(std::int64_t value, const char* name) {
  if (value < 1) {
    throw ConfigError(std::string(name) + " must be positive");
  }
  return value;
}

}  // namespace

CompareResult compare_tensors(const Tensor& a, const Tensor& b, double tol) {
  if (!a.same_shape(b)) {
    throw ShapeError("compare_tensors: shapes differ");
  }
  double worst = 0.0;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    const double d = std::fabs(a[i] - b[i]);
    if (d > worst) {
      worst = d;
    }
  }
  return {worst, worst <= tol};
}

std::int64_t matrix_rank(const Tensor& m, double tol) {
  if (m.rank() != 2) {
    throw ShapeError("matrix_rank expects a rank-2 tensor");
  }
  const std::int64_t rows = m.extent(0), cols = m.extent(1);
  std::vector<double> a(m.data(), m.data() + m.size());
  double largest = 0.0;
  for (double v : a) {
    largest = std::max(largest, std::fabs(v));
  }
  if (largest == 0.0) {
    return 0;
  }
  const double threshold = tol * largest;
  std::int64_t rank = 0;
  for (std::int64_t col = 0; col < cols && rank < rows; ++col) {
    std::int64_t pivot = rank;
    for (std::int64_t r = rank + 1; r < rows; ++r) {
      if (std::fabs(a[static_cast<std::size_t>(r * cols + col)]) >
          std::fabs(a[static_cast<std::size_t>(pivot * cols + col)])) {
        pivot = r;
      }
    }
    const double head = a[static_cast<std::size_t>(pivot * cols + col)];
    if (std::fabs(head) <= threshold) {
      continue;
    }
    if (pivot != rank) {
      for (std::int64_t c = col; c < cols; ++c) {
        std::swap(a[static_cast<std::size_t>(rank * cols + c)],
                  a[static_cast<std::size_t>(pivot * cols + c)]);
      }
    }
    for (std::int64_t r = rank + 1; r < rows; ++r) {
      const double factor = a[static_cast<std::size_t>(r * cols + col)] / head;
      for (std::int64_t c = col; c < cols; ++c) {
        a[static_cast<std::size_t>(r * cols + c)] -=
            factor * a[static_cast<std::size_t>(rank * cols + c)];
      }
    }
    ++rank;
  }
  return rank;
}

bool spatially_constant(const EvolutionKernel& kern) {
  const std::int64_t pixels = kern.height() * kern.width();
  const std::int64_t block = kern.w.size() / pixels;
  const double* base = kern.w.data();
  for (std::int64_t pix = 1; pix < pixels; ++pix) {
    if (std::memcmp(base, base + pix * block, static_cast<std::size_t>(block) * sizeof(double)) !=
        0) {
      return false;
    }
  }
  return true;
}

void validate_spec(const OperatorSpec& spec) {
  checked_positive(spec.height, "height");
  checked_positive(spec.width, "width");
  checked_positive(spec.depth_in, "d_in");
  checked_positive(spec.depth_out, "d_out");
  if (spec.window < 1 || spec.window % 2 == 0) {
    throw ConfigError("window size must be odd and positive");
  }
  if (!(spec.tolerance >= 0.0)) {
    throw ConfigError("tolerance must be non-negative");
  }
  switch (spec.family) {
    case Family::conv:
      break;
    case Family::msa:
      if (spec.heads < 2) {
        throw ConfigError("msa requires at least two heads");
      }
      [[fallthrough]];
    case Family::sa:
      checked_positive(spec.heads, "heads");
      checked_positive(spec.depth_k, "d_k");
      if (spec.pos_kind == PosKind::relative) {
        checked_positive(spec.depth_p, "d_p");
      }
      break;
    case Family::involution:
      if (spec.depth_out != spec.depth_in) {
        throw ConfigError("involution preserves the channel count (d_out must equal d_in)");
      }
      checked_positive(spec.reduction, "reduction");
      checked_positive(spec.groups, "groups");
      if (spec.depth_in % spec.reduction != 0) {
        throw ConfigError("d_in must be divisible by the reduction ratio");
      }
      if (spec.depth_in % spec.groups != 0) {
        throw ConfigError("d_in must be divisible by the group count");
      }
      break;
    case Family::conv_as_msa:
      checked_positive(spec.depth_k, "d_k (per-head value depth)");
      break;
    case Family::relpos_const:
      checked_positive(spec.depth_k, "d_k");
      checked_positive(spec.depth_p, "d_p");
      break;
    case Family::channelwise:
      checked_positive(spec.depth_k, "d_k");
      break;
  }
}

ScenarioInputs derive_inputs(const OperatorSpec& spec) {
  validate_spec(spec);
  ScenarioInputs in;
  in.x = prng_fill({spec.height, spec.width, spec.depth_in}, spec.seed);
  in.fn.window = spec.window;
  in.fn.heads = 1;
  in.fn.fuse_output_projection = true;
  switch (spec.family) {
    case Family::conv: {
      in.fn.family = Family::conv;
      in.fn.payload =
          ConvWeights{prng_fill({spec.window, spec.window, spec.depth_in, spec.depth_out},
                                spec.seed + 1)};
      break;
    }
    case Family::sa:
    case Family::msa: {
      in.fn.family = spec.heads > 1 ? Family::msa : Family::sa;
      in.fn.heads = spec.heads;
      in.fn.payload = derive_sa_weights(spec);
      break;
    }
    case Family::involution: {
      in.fn.family = Family::involution;
      const std::int64_t dr = spec.depth_in / spec.reduction;
      InvolutionWeights w;
      w.w0 = prng_fill({dr, spec.depth_in}, spec.seed + 1);
      w.w1 = prng_fill({spec.window * spec.window, dr}, spec.seed + 2);
      w.gamma = prng_fill({dr}, spec.seed + 3);
      w.beta = prng_fill({dr}, spec.seed + 4);
      w.reduction = spec.reduction;
      w.groups = spec.groups;
      in.fn.payload = std::move(w);
      break;
    }
    case Family::conv_as_msa: {
      in.fn.family = Family::conv_as_msa;
      const std::int64_t m = spec.window * spec.window;
      in.fn.heads = m;
      OneHotMsaWeights w;
      for (std::int64_t p = 0; p < m; ++p) {
        w.wv_heads.push_back(prng_fill({spec.depth_in, spec.depth_k}, spec.seed + 1 + p));
      }
      w.wo = prng_fill({m * spec.depth_k, spec.depth_out}, spec.seed + 1 + m);
      in.fn.payload = std::move(w);
      break;
    }
    case Family::relpos_const: {
      in.fn.family = Family::relpos_const;
      RelposConstWeights w;
      w.v = prng_fill({spec.depth_k}, spec.seed + 1);
      w.wk_hat = prng_fill({spec.depth_p, spec.depth_k}, spec.seed + 2);
      w.r_table = prng_fill({spec.window, spec.window, spec.depth_p}, spec.seed + 3);
      w.wv = prng_fill({spec.depth_in, spec.depth_out}, spec.seed + 4);
      in.fn.payload = std::move(w);
      break;
    }
    case Family::channelwise: {
      in.fn.family = Family::channelwise;
      ChannelwiseSaWeights w;
      for (std::int64_t c = 0; c < spec.depth_in; ++c) {
        ChannelwiseSaWeights::QkPair pair;
        pair.wq = prng_fill({spec.depth_in, spec.depth_k}, spec.seed + 1 + 2 * c);
        pair.wk = prng_fill({spec.depth_in, spec.depth_k}, spec.seed + 2 + 2 * c);
        w.qk.push_back(std::move(pair));
      }
      w.wv = prng_fill({spec.depth_in, spec.depth_out}, spec.seed + 1 + 2 * spec.depth_in);
      in.fn.payload = std::move(w);
      break;
    }
  }
  return in;
}

Tensor classic_output(const Tensor& x, const EvolutionFunctionSpec& fn) {
  switch (fn.family) {
    case Family::conv:
      return conv2d(x, std::get<ConvWeights>(fn.payload));
    case Family::sa:
    case Family::msa:
      return local_self_attention(x, std::get<SaWeights>(fn.payload), fn.window, fn.heads);
    case Family::involution: {
      const auto& w = std::get<InvolutionWeights>(fn.payload);
      return involution_apply(x, involution_kernel(x, w));
    }
    case Family::conv_as_msa:
      return conv2d(x, conv_weights_from_onehot(std::get<OneHotMsaWeights>(fn.payload),
                                                fn.window));
    case Family::relpos_const:
      return conv2d(x, conv_weights_from_relpos(std::get<RelposConstWeights>(fn.payload)));
    case Family::channelwise:
      return channelwise_direct(x, std::get<ChannelwiseSaWeights>(fn.payload), fn.window);
  }
  throw ConfigError("unknown evolution family");
}

ScenarioOutcome run_scenario(const OperatorSpec& spec) {
  using clock = std::chrono::steady_clock;
  ScenarioOutcome outcome;
  try {
    const ScenarioInputs in = derive_inputs(spec);

    Tensor classic;
    std::int64_t classic_nanos = 0;
    if (in.fn.family == Family::involution) {
      // Time the aggregation alone; generating the per-pixel kernels is the
      // analogue of materializing the evolution kernel.
      const auto& w = std::get<InvolutionWeights>(in.fn.payload);
      const Tensor kernels = involution_kernel(in.x, w);
      const auto t0 = clock::now();
      classic = involution_apply(in.x, kernels);
      classic_nanos = std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - t0)
                          .count();
    } else {
      const auto t0 = clock::now();
      classic = classic_output(in.x, in.fn);
      classic_nanos = std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - t0)
                          .count();
    }

    const EvolutionKernel kern = make_kernel(in.x, in.fn);
    const auto t1 = clock::now();
    const Tensor evolved = ev_apply(in.x, kern);
    const std::int64_t evolution_nanos =
        std::chrono::duration_cast<std::chrono::nanoseconds>(clock::now() - t1).count();

    const CompareResult cmp = compare_tensors(classic, evolved, spec.tolerance);
    EquivalenceReport report;
    report.spec = spec;
    report.max_abs_diff = cmp.max_abs_diff;
    report.tolerance = spec.tolerance;
    report.pass = cmp.pass;
    report.classic_nanos = classic_nanos;
    report.evolution_nanos = evolution_nanos;
    report.kernel_stats.spatially_constant = spatially_constant(kern);
    if (in.fn.family == Family::conv_as_msa) {
      const std::int64_t k = kern.window();
      const std::int64_t n = kern.channel_window();
      const std::int64_t dout = kern.depth_out();
      std::int64_t worst = 0;
      for (std::int64_t uv = 0; uv < k * k; ++uv) {
        Tensor slice({n, dout});
        std::memcpy(slice.data(), kern.w.data() + uv * n * dout,
                    static_cast<std::size_t>(n * dout) * sizeof(double));
        worst = std::max(worst, matrix_rank(slice, 1e-9));
      }
      report.kernel_stats.max_slice_rank = worst;
    }
    outcome.report = std::move(report);
  } catch (const std::exception& err) {
    outcome.error = err.what();
  }
  return outcome;
}

}  // namespace evo
