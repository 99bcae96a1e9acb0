#include "evo/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "evo/errors.hpp"
#include "evo/splitmix64.hpp"

namespace evo {

namespace {

std::int64_t checked_volume(const std::vector<std::int64_t>& shape) {
  if (shape.empty() || shape.size() > 6) {
    throw ShapeError("tensor rank must be between 1 and 6, got " + std::to_string(shape.size()));
  }
  std::int64_t volume = 1;
  for (std::int64_t extent : shape) {
    if (extent < 1) {
      throw ShapeError("tensor extents must be positive, got " + std::to_string(extent));
    }
    volume *= extent;
  }
  return volume;
}

}  // namespace

Tensor::Tensor(std::vector<std::int64_t> shape)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(checked_volume(shape_)), 0.0) {}

Tensor::Tensor(std::vector<std::int64_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  if (checked_volume(shape_) != static_cast<std::int64_t>(data_.size())) {
    throw ShapeError("tensor data length does not match the shape volume");
  }
}

std::int64_t Tensor::offset(std::initializer_list<std::int64_t> idx) const {
  std::int64_t flat = 0;
  std::size_t axis = 0;
  for (std::int64_t i : idx) {
    flat = flat * shape_[axis] + i;
    ++axis;
  }
  return flat;
}

Tensor Tensor::reshaped(std::vector<std::int64_t> shape) const {
  if (checked_volume(shape) != size()) {
    throw ShapeError("reshape volume mismatch");
  }
  return Tensor(std::move(shape), data_);
}

Tensor prng_fill(const std::vector<std::int64_t>& shape, std::uint64_t seed) {
  Tensor out(shape);
  SplitMix64 rng(seed);
  double* d = out.data();
  for (std::int64_t i = 0; i < out.size(); ++i) {
    d[i] = rng.next_signed_unit();
  }
  return out;
}

void softmax_span(std::span<const double> in, std::span<double> out) {
  const double peak = *std::max_element(in.begin(), in.end());
  double sum = 0.0;
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] = std::exp(in[i] - peak);
    sum += out[i];
  }
  for (std::size_t i = 0; i < in.size(); ++i) {
    out[i] /= sum;
  }
}

Tensor softmax(const Tensor& scores) {
  if (scores.rank() != 1) {
    throw ShapeError("softmax expects a rank-1 tensor");
  }
  Tensor out(scores.shape());
  softmax_span({scores.data(), static_cast<std::size_t>(scores.size())},
               {out.data(), static_cast<std::size_t>(out.size())});
  return out;
}

Tensor pad_spatial(const Tensor& x, std::int64_t border) {
  if (x.rank() != 3) {
    throw ShapeError("pad_spatial expects an H x W x D tensor");
  }
  if (border < 0) {
    throw ShapeError("padding width must be non-negative");
  }
  if (border == 0) {
    return x;
  }
  const std::int64_t h = x.extent(0), w = x.extent(1), d = x.extent(2);
  Tensor out({h + 2 * border, w + 2 * border, d});
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < w; ++j) {
      std::memcpy(out.data() + out.offset({i + border, j + border, 0}),
                  x.data() + x.offset({i, j, 0}), static_cast<std::size_t>(d) * sizeof(double));
    }
  }
  return out;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2) {
    throw ShapeError("matmul expects rank-2 tensors");
  }
  if (a.extent(1) != b.extent(0)) {
    std::ostringstream msg;
    msg << "matmul inner extents disagree: " << a.extent(1) << " vs " << b.extent(0);
    throw ShapeError(msg.str());
  }
  const std::int64_t p = a.extent(0), q = a.extent(1), r = b.extent(1);
  Tensor out({p, r});
  for (std::int64_t i = 0; i < p; ++i) {
    for (std::int64_t k = 0; k < q; ++k) {
      const double av = a[i * q + k];
      for (std::int64_t j = 0; j < r; ++j) {
        out[i * r + j] += av * b[k * r + j];
      }
    }
  }
  return out;
}

Tensor project_channels(const Tensor& x, const Tensor& m) {
  if (x.rank() != 3 || m.rank() != 2) {
    throw ShapeError("project_channels expects an H x W x D map and a rank-2 matrix");
  }
  if (x.extent(2) != m.extent(0)) {
    throw ShapeError("projection matrix rows must match the map depth");
  }
  const std::int64_t h = x.extent(0), w = x.extent(1), din = x.extent(2);
  const std::int64_t dc = m.extent(1);
  Tensor out({h, w, dc});
  const double* xd = x.data();
  const double* md = m.data();
  double* od = out.data();
  for (std::int64_t p = 0; p < h * w; ++p) {
    const double* xv = xd + p * din;
    double* ov = od + p * dc;
    for (std::int64_t c = 0; c < din; ++c) {
      const double xc = xv[c];
      for (std::int64_t k = 0; k < dc; ++k) {
        ov[k] += xc * md[c * dc + k];
      }
    }
  }
  return out;
}

}  // namespace evo
