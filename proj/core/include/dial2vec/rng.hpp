#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace dial2vec {

// Deterministic 64-bit generator (splitmix64). The standard <random>
// distributions are implementation-defined, so sampling helpers are written
// out explicitly; identical seeds give identical streams on any platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // uniform integer in [0, bound), bound >= 1
  std::uint64_t next_below(std::uint64_t bound) {
    // rejection sampling to avoid modulo bias
    const std::uint64_t limit = bound * (UINT64_MAX / bound);
    std::uint64_t v = next_u64();
    while (v >= limit) v = next_u64();
    return v % bound;
  }

  // uniform double in [0, 1)
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // standard normal via Box-Muller
  double next_normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = next_double();
    double u2 = next_double();
    while (u1 <= 0.0) u1 = next_double();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 6.283185307179586476925286766559 * u2;
    cached_ = radius * std::sin(angle);
    have_cached_ = true;
    return radius * std::cos(angle);
  }

  // in-place Fisher-Yates shuffle
  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(next_below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

  // k distinct indices from [0, pool_size), order random
  std::vector<std::size_t> sample_without_replacement(std::size_t pool_size,
                                                      std::size_t k);

 private:
  std::uint64_t state_;
  double cached_ = 0.0;
  bool have_cached_ = false;
};

// Derives an independent stream seed from a base seed and a stream tag
// (FNV-1a over the tag, mixed with the base). Components must not share
// streams, so every consumer names its own tag.
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream);
std::uint64_t derive_seed(std::uint64_t base, std::string_view stream,
                          std::uint64_t index);

}  // namespace dial2vec
