#pragma once

#include <cstdint>

namespace evo {

// SplitMix64 engine, http://prng.di.unimi.it/splitmix64.c.
// This is the project-wide seed-to-value mapping: fixtures generated from it
// are reproducible bit for bit on every platform.
class SplitMix64 {
 public:
  using result_type = std::uint64_t;

  explicit constexpr SplitMix64(std::uint64_t seed) noexcept : state_(seed) {}

  constexpr std::uint64_t operator()() noexcept {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  // 53-bit uniform real in [0, 1).
  constexpr double next_unit() noexcept {
    return static_cast<double>(operator()() >> 11) * 0x1.0p-53;
  }

  // Uniform real in [-1, 1).
  constexpr double next_signed_unit() noexcept { return 2.0 * next_unit() - 1.0; }

  static constexpr std::uint64_t min() noexcept { return 0; }
  static constexpr std::uint64_t max() noexcept { return ~0ull; }

 private:
  std::uint64_t state_;
};

}  // namespace evo
