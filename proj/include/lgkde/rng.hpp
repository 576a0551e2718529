#pragma once

#include <cstdint>
#include <random>

namespace lgkde {

using Rng = std::mt19937_64;

/// splitmix64 finalizer over (seed xor stream). Used to give every graph,
/// epoch and sample its own independent stream.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream) noexcept {
  std::uint64_t z = (seed ^ stream) + 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline Rng make_rng(std::uint64_t seed, std::uint64_t stream) {
  return Rng(derive_seed(seed, stream));
}

}  // namespace lgkde
