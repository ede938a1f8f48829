#pragma once

#include <cstdint>
#include <random>

namespace cba {

using Rng = std::mt19937_64;

// splitmix64 step; the standard seed-expansion mixer.
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9E3779B97F4A7C15ull);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

// Counter-derived sub-seed: mixing (master, a, b) through splitmix64 keeps
// independently-toggled consumers (init, stream, buffer, blurry) decoupled.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
  std::uint64_t s = master;
  std::uint64_t z = splitmix64(s);
  s = z ^ (a * 0xD1342543DE82EF95ull + 1);
  z = splitmix64(s);
  s = z ^ (b * 0x2545F4914F6CDD1Dull + 1);
  return splitmix64(s);
}

inline Rng make_rng(std::uint64_t master, std::uint64_t a, std::uint64_t b = 0) {
  return Rng(derive_seed(master, a, b));
}

}  // namespace cba
