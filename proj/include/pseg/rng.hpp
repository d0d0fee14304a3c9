#pragma once

#include <cstdint>
#include <span>
#include <string_view>

namespace pseg {

// SplitMix64 finalizer. Used both as a hash mixer and, fed with a counter,
// as a platform-stable counter-based generator.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// FNV-1a over raw bytes, finalized with splitmix64.
std::uint64_t hash_bytes(std::span<const std::byte> bytes, std::uint64_t seed = 0) noexcept;

// Key derivation: one root seed fans out to independent streams by tag
// ("init", "sampler", "augment", ...) and up to two integer coordinates.
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t a = 0,
                          std::uint64_t b = 0) noexcept;

// Counter-based stream: value i is splitmix64(key + i * golden). Every draw is
// a pure function of (key, counter), so streams are reproducible everywhere.
class Rng {
 public:
  explicit Rng(std::uint64_t key) noexcept : key_(key) {}

  std::uint64_t next_u64() noexcept { return splitmix64(key_ + 0x9E3779B97F4A7C15ULL * counter_++); }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }
  bool bernoulli(double p) noexcept { return p > 0.0 && uniform() < p; }
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) noexcept;
  // Box-Muller standard normal.
  double normal() noexcept;

  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace pseg
