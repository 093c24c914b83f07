#pragma once

#include <cstdint>
#include <random>

namespace dagagg {

using Rng = std::mt19937_64;

// Independent substreams drawn from one base seed. Varying the split stream
// while freezing the assignment stream (or the reverse) is how experiments
// isolate one source of randomness.
enum class Stream : std::uint64_t {
  topology = 0x746f706fULL,
  assignment = 0x61737367ULL,
  split = 0x73706c74ULL,
  sample = 0x73616d70ULL,
  test_sample = 0x74657374ULL,
};

/// SplitMix64 finalizer.
constexpr std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t base, Stream stream) {
  return mix64(mix64(base) ^ static_cast<std::uint64_t>(stream));
}

inline Rng make_rng(std::uint64_t base, Stream stream) { return Rng(derive_seed(base, stream)); }

}  // namespace dagagg
