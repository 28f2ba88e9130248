#pragma once

#include <cstdint>
#include <random>

namespace helioflux {

/// General-purpose seeded engine for data generation, augmentation and training.
using Rng = std::mt19937_64;

constexpr std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Derives an independent child seed from a parent seed and a key.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t key) {
  return splitmix64(splitmix64(seed) ^ splitmix64(key + 0x632BE59BD9B4E019ULL));
}

/// Counter-based stream keyed on (seed, index). Two streams with the same
/// key yield the same values no matter which thread or order produces them.
class CounterRng {
 public:
  constexpr CounterRng(std::uint64_t seed, std::uint64_t index) : key_(derive_seed(seed, index)) {}

  constexpr std::uint64_t next_u64() { return splitmix64(key_ + 0xD1B54A32D192ED03ULL * ++counter_); }

  /// Uniform on [0, 1) with 53 random bits.
  constexpr double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

inline double uniform01(Rng& rng) { return std::uniform_real_distribution<double>(0.0, 1.0)(rng); }

}  // namespace helioflux
