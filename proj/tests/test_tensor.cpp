#include <doctest.h>

#include <cmath>
#include <cstdint>
#include <vector>

#include "evo/errors.hpp"
#include "evo/tensor.hpp"

using evo::Tensor;

namespace {

// Reference SplitMix64, written against the published constants and kept
// separate from the library engine on purpose: the fixture below was frozen
// from this oracle before prng_fill existed.
std::uint64_t oracle_next(std::uint64_t& state) {
  state += 0x9E3779B97F4A7C15ull;
  std::uint64_t z = state;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

double oracle_signed_unit(std::uint64_t& state) {
  const double u = static_cast<double>(oracle_next(state) >> 11) * std::pow(2.0, -53);
  return 2.0 * u - 1.0;
}

Tensor center_crop(const Tensor& x, std::int64_t border) {
  const std::int64_t h = x.extent(0) - 2 * border;
  const std::int64_t w = x.extent(1) - 2 * border;
  const std::int64_t d = x.extent(2);
  Tensor out({h, w, d});
  for (std::int64_t i = 0; i < h; ++i) {
    for (std::int64_t j = 0; j < w; ++j) {
      for (std::int64_t c = 0; c < d; ++c) {
        out(i, j, c) = x(i + border, j + border, c);
      }
    }
  }
  return out;
}

}  // namespace

TEST_CASE("prng_fill reproduces the frozen SplitMix64 fixture") {
  // Frozen from the oracle above for seed 42, length 4.
  const double expected[4] = {0.4831297575436466, -0.6801792142461598, -0.4427977394897227,
                              -0.31161856695272494};
  const Tensor t = evo::prng_fill({4}, 42);
  for (int i = 0; i < 4; ++i) {
    CHECK(t[i] == expected[i]);
  }
}

TEST_CASE("prng_fill matches the reference generator on many seeds") {
  for (std::uint64_t seed : {0ull, 1ull, 7ull, 123456789ull, ~0ull}) {
    const Tensor t = evo::prng_fill({3, 5, 2}, seed);
    std::uint64_t state = seed;
    for (std::int64_t i = 0; i < t.size(); ++i) {
      CHECK(t[i] == oracle_signed_unit(state));
    }
  }
}

TEST_CASE("prng_fill is a pure function of shape and seed") {
  const Tensor a = evo::prng_fill({2, 3, 4}, 42);
  const Tensor b = evo::prng_fill({2, 3, 4}, 42);
  REQUIRE(a.same_shape(b));
  for (std::int64_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] == b[i]);
  }
}

TEST_CASE("prng_fill output stays in [-1, 1) and differs across seeds") {
  const Tensor a = evo::prng_fill({4}, 1);
  const Tensor b = evo::prng_fill({4}, 2);
  bool any_diff = false;
  for (std::int64_t i = 0; i < a.size(); ++i) {
    CHECK(a[i] >= -1.0);
    CHECK(a[i] < 1.0);
    CHECK(std::isfinite(a[i]));
    any_diff = any_diff || a[i] != b[i];
  }
  CHECK(any_diff);
}

TEST_CASE("prng_fill rejects bad shapes") {
  CHECK_THROWS_AS(evo::prng_fill({0}, 1), evo::ShapeError);
  CHECK_THROWS_AS(evo::prng_fill({3, -1}, 1), evo::ShapeError);
  CHECK_THROWS_AS(evo::prng_fill({}, 1), evo::ShapeError);
}

TEST_CASE("softmax of equal scores is uniform") {
  const Tensor out = evo::softmax(Tensor({4}, {0.0, 0.0, 0.0, 0.0}));
  for (int i = 0; i < 4; ++i) {
    CHECK(out[i] == doctest::Approx(0.25).epsilon(1e-15));
  }
}

TEST_CASE("softmax matches the analytic two-element case") {
  const Tensor out = evo::softmax(Tensor({2}, {std::log(2.0), 0.0}));
  CHECK(out[0] == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
  CHECK(out[1] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("softmax survives huge scores via max subtraction") {
  const Tensor out = evo::softmax(Tensor({2}, {1000.0, 1000.0}));
  CHECK(out[0] == 0.5);
  CHECK(out[1] == 0.5);
}

TEST_CASE("softmax sums to one for long random vectors") {
  for (std::int64_t n : {1ll, 7ll, 100ll, 10000ll}) {
    Tensor scores = evo::prng_fill({n}, 99 + static_cast<std::uint64_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
      scores[i] *= 50.0;  // widen the range a bit
    }
    const Tensor out = evo::softmax(scores);
    double sum = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
      CHECK(out[i] > 0.0);
      CHECK(out[i] <= 1.0);
      sum += out[i];
    }
    CHECK(std::fabs(sum - 1.0) <= 1e-12);
  }
}

TEST_CASE("softmax is shift invariant") {
  const Tensor scores = evo::prng_fill({16}, 5);
  const Tensor base = evo::softmax(scores);
  for (double shift : {-250.0, 1e-3, 3.0, 700.0}) {
    Tensor shifted = scores;
    for (std::int64_t i = 0; i < shifted.size(); ++i) {
      shifted[i] += shift;
    }
    const Tensor out = evo::softmax(shifted);
    for (std::int64_t i = 0; i < out.size(); ++i) {
      CHECK(std::fabs(out[i] - base[i]) <= 1e-12);
    }
  }
}

TEST_CASE("softmax rejects non-vectors") {
  CHECK_THROWS_AS(evo::softmax(Tensor({2, 2})), evo::ShapeError);
}

TEST_CASE("pad_spatial surrounds a single value with zeros") {
  const Tensor padded = evo::pad_spatial(Tensor({1, 1, 1}, {3.5}), 1);
  REQUIRE(padded.shape() == std::vector<std::int64_t>{3, 3, 1});
  for (std::int64_t i = 0; i < 3; ++i) {
    for (std::int64_t j = 0; j < 3; ++j) {
      CHECK(padded(i, j, 0) == (i == 1 && j == 1 ? 3.5 : 0.0));
    }
  }
}

TEST_CASE("pad_spatial with zero border is the identity") {
  const Tensor x = evo::prng_fill({2, 3, 2}, 8);
  const Tensor padded = evo::pad_spatial(x, 0);
  REQUIRE(padded.same_shape(x));
  for (std::int64_t i = 0; i < x.size(); ++i) {
    CHECK(padded[i] == x[i]);
  }
}

TEST_CASE("pad_spatial shape arithmetic") {
  const Tensor padded = evo::pad_spatial(Tensor({2, 3, 2}), 2);
  CHECK(padded.shape() == std::vector<std::int64_t>{6, 7, 2});
}

TEST_CASE("pad then center-crop is the identity") {
  const Tensor x = evo::prng_fill({4, 5, 3}, 17);
  for (std::int64_t border : {1ll, 2ll, 3ll}) {
    const Tensor roundtrip = center_crop(evo::pad_spatial(x, border), border);
    REQUIRE(roundtrip.same_shape(x));
    for (std::int64_t i = 0; i < x.size(); ++i) {
      CHECK(roundtrip[i] == x[i]);
    }
  }
}

TEST_CASE("matmul against hand arithmetic") {
  const Tensor a({2, 2}, {1, 2, 3, 4});
  const Tensor b({2, 2}, {5, 6, 7, 8});
  const Tensor c = evo::matmul(a, b);
  CHECK(c[0] == 19.0);
  CHECK(c[1] == 22.0);
  CHECK(c[2] == 43.0);
  CHECK(c[3] == 50.0);
}

TEST_CASE("matmul identity and zeros") {
  const Tensor a = evo::prng_fill({3, 3}, 4);
  Tensor eye({3, 3});
  for (int i = 0; i < 3; ++i) eye(i, i) = 1.0;
  const Tensor left = evo::matmul(eye, a);
  for (std::int64_t i = 0; i < a.size(); ++i) {
    CHECK(left[i] == a[i]);
  }
  const Tensor z = evo::matmul(Tensor({2, 2}), evo::prng_fill({2, 5}, 6));
  for (std::int64_t i = 0; i < z.size(); ++i) {
    CHECK(z[i] == 0.0);
  }
}

TEST_CASE("matmul rejects mismatched inner extents") {
  CHECK_THROWS_AS(evo::matmul(Tensor({2, 3}), Tensor({2, 2})), evo::ShapeError);
}

TEST_CASE("tensor construction validates shape and data length") {
  CHECK_THROWS_AS(Tensor({2, 2}, {1.0}), evo::ShapeError);
  CHECK_THROWS_AS(Tensor({1, 2, 3, 4, 5, 6, 7}), evo::ShapeError);
  CHECK_THROWS_AS(Tensor({-2}), evo::ShapeError);
}

TEST_CASE("project_channels matches per-pixel matmul") {
  const Tensor x = evo::prng_fill({3, 2, 4}, 11);
  const Tensor m = evo::prng_fill({4, 5}, 12);
  const Tensor out = evo::project_channels(x, m);
  REQUIRE(out.shape() == std::vector<std::int64_t>{3, 2, 5});
  for (std::int64_t i = 0; i < 3; ++i) {
    for (std::int64_t j = 0; j < 2; ++j) {
      for (std::int64_t k = 0; k < 5; ++k) {
        double acc = 0.0;
        for (std::int64_t c = 0; c < 4; ++c) {
          acc += x(i, j, c) * m(c, k);
        }
        CHECK(out(i, j, k) == doctest::Approx(acc).epsilon(1e-15));
      }
    }
  }
}
