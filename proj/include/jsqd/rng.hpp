#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace jsqd {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t splitmix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Independent stream for replica `replica` of an experiment seeded with
/// `seed`. Depends only on the pair, never on thread or execution order.
inline Rng make_stream(std::uint64_t seed, std::uint64_t replica) {
  return Rng(splitmix64(splitmix64(seed) ^ splitmix64(replica + 0x632be59bd9b4e019ULL)));
}

/// Uniform on [0, 1) with 53 random bits.
inline double uniform01(Rng& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Exponential with the given rate.
inline double exponential(Rng& rng, double rate) { return -std::log1p(-uniform01(rng)) / rate; }

/// Uniform integer in [0, bound), bound > 0.
inline std::uint64_t uniform_below(Rng& rng, std::uint64_t bound) {
  return static_cast<std::uint64_t>((static_cast<unsigned __int128>(rng()) * bound) >> 64);
}

}  // namespace jsqd
