#ifndef MSMLE_RNG_HPP
#define MSMLE_RNG_HPP

#include <cstdint>
#include <random>

namespace msmle {

// splitmix64 finalizer; used to key independent substreams.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based substream: stream (seed, replicate, subject) is independent of
// the order in which streams are instantiated, so parallel simulation is
// reproducible regardless of worker count.
inline std::mt19937_64 substream(std::uint64_t seed, std::uint64_t replicate,
                                 std::uint64_t unit) {
  std::uint64_t k = mix64(seed);
  k = mix64(k ^ (0x6a09e667f3bcc909ULL + replicate));
  k = mix64(k ^ (0xbb67ae8584caa73bULL + unit));
  return std::mt19937_64(k);
}

}  // namespace msmle

#endif  // MSMLE_RNG_HPP
