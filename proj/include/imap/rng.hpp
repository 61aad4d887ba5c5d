#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>

namespace imap {

// SplitMix64 finalizer; a bijective 64-bit mixer.
constexpr std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ull;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// FNV-1a over a path string, combined with a seed. Streams keyed this way
// are independent of each other, so adding a tensor never shifts another
// tensor's values.
constexpr std::uint64_t stream_key(std::uint64_t seed, std::string_view path) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (char c : path) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  return mix64(h ^ mix64(seed));
}

// Counter-based generator: draw i of a stream is a pure function of
// (key, i).
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0)
      : key_(key), counter_(counter) {}

  static constexpr std::uint64_t at(std::uint64_t key, std::uint64_t counter) {
    return mix64(key ^ mix64(counter));
  }

  std::uint64_t next_u64() { return at(key_, counter_++); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

  // Standard normal via Box-Muller; consumes exactly two draws.
  double normal() {
    const double u1 = 1.0 - uniform();  // (0, 1]
    const double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
  }

  std::uint64_t counter() const { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_;
};

}  // namespace imap
