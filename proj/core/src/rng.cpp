#include "dial2vec/rng.hpp"

#include <numeric>

namespace dial2vec {

std::vector<std::size_t> Rng::sample_without_replacement(std::size_t pool_size,
                                                         std::size_t k) {
  std::vector<std::size_t> indices(pool_size);
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  // partial Fisher-Yates: the first k slots end up uniformly sampled
  for (std::size_t i = 0; i < k && i + 1 < pool_size; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(next_below(pool_size - i));
    std::swap(indices[i], indices[j]);
  }
  indices.resize(k);
  return indices;
}

namespace {
std::uint64_t fnv1a(std::string_view text) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const char c : text) {
    h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint64_t mix(std::uint64_t z) {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace

std::uint64_t derive_seed(std::uint64_t base, std::string_view stream) {
  return mix(base ^ fnv1a(stream));
}

std::uint64_t derive_seed(std::uint64_t base, std::string_view stream,
                          std::uint64_t index) {
  return mix(derive_seed(base, stream) + 0x9e3779b97f4a7c15ULL * (index + 1));
}

}  // namespace dial2vec
