#pragma once

#include <cstdint>
#include <random>

namespace panning {

// All randomness in a run funnels through one root seed; independent
// streams are derived by hashing (seed, stream id) so changing how one
// module consumes randomness does not reshuffle the others.
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t stream) {
  return splitmix64(splitmix64(root) ^ splitmix64(stream * 0x2545f4914f6cdd1dULL));
}

inline std::mt19937_64 make_rng(std::uint64_t root, std::uint64_t stream) {
  return std::mt19937_64(derive_seed(root, stream));
}

}  // namespace panning
