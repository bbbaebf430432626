#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace llb {

using Rng = std::mt19937_64;

/// SplitMix64 finalizer; used to decorrelate derived seeds.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9E3779B97F4A7C15ULL;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : s) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Seed of the named sub-stream of a master seed. Distinct names give
/// independent generators, so e.g. the shuffle order is identical across
/// learners that consume the ref-batch stream differently.
constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view stream) {
  return mix64(mix64(master) ^ fnv1a(stream));
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::string_view stream,
                                    std::uint64_t index) {
  return mix64(derive_seed(master, stream) + mix64(index));
}

inline Rng make_rng(std::uint64_t master, std::string_view stream) {
  return Rng(derive_seed(master, stream));
}

inline Rng make_rng(std::uint64_t master, std::string_view stream, std::uint64_t index) {
  return Rng(derive_seed(master, stream, index));
}

}  // namespace llb
