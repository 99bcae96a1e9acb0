#pragma once

#include <cstdint>
#include <initializer_list>
#include <span>
#include <vector>

namespace evo {

/// Dense row-major tensor of 64-bit reals, rank 1 to 6. The last index moves
/// fastest. Every operator in this project exchanges data through this type;
/// values are immutable by convention once an operator has returned them.
class Tensor {
 public:
  Tensor() = default;

  /// Zero-filled tensor. Throws ShapeError on empty shape or non-positive
  /// extents.
  explicit Tensor(std::vector<std::int64_t> shape);

  /// Takes ownership of `data`, which must match product(shape).
  Tensor(std::vector<std::int64_t> shape, std::vector<double> data);

  const std::vector<std::int64_t>& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t extent(std::int64_t axis) const { return shape_[static_cast<std::size_t>(axis)]; }
  std::int64_t size() const { return static_cast<std::int64_t>(data_.size()); }
  bool empty() const { return data_.empty(); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  const std::vector<double>& values() const { return data_; }

  double& operator[](std::int64_t flat) { return data_[static_cast<std::size_t>(flat)]; }
  double operator[](std::int64_t flat) const { return data_[static_cast<std::size_t>(flat)]; }

  template <class... Is>
  double& operator()(Is... is) {
    return data_[static_cast<std::size_t>(offset({static_cast<std::int64_t>(is)...}))];
  }
  template <class... Is>
  double operator()(Is... is) const {
    return data_[static_cast<std::size_t>(offset({static_cast<std::int64_t>(is)...}))];
  }

  /// Row-major flat offset of a full index tuple.
  std::int64_t offset(std::initializer_list<std::int64_t> idx) const;

  bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

  /// Same data viewed under a different shape; sizes must agree.
  Tensor reshaped(std::vector<std::int64_t> shape) const;

 private:
  std::vector<std::int64_t> shape_;
  std::vector<double> data_;
};

/// Tensor whose elements are drawn in row-major order from SplitMix64 seeded
/// with `seed`, each raw output mapped to [-1, 1). Pure in (shape, seed).
Tensor prng_fill(const std::vector<std::int64_t>& shape, std::uint64_t seed);

/// Numerically stable softmax over `in`, written to `out` (same length).
/// Subtracts the maximum before exponentiating, so arbitrarily large finite
/// scores stay in range.
void softmax_span(std::span<const double> in, std::span<double> out);

/// Softmax of a rank-1 tensor.
Tensor softmax(const Tensor& scores);

/// Zero-pads the two leading (spatial) axes of an H x W x D map by `border`
/// on every side. border == 0 returns the input unchanged.
Tensor pad_spatial(const Tensor& x, std::int64_t border);

/// Standard product of two rank-2 tensors, accumulated in 64-bit reals.
Tensor matmul(const Tensor& a, const Tensor& b);

/// Per-pixel channel projection: every feature vector of the H x W x D_in map
/// is right-multiplied by the D_in x D_c matrix, giving H x W x D_c.
Tensor project_channels(const Tensor& x, const Tensor& m);

}  // namespace evo
