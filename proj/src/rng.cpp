#include "pseg/rng.hpp"

#include <cmath>
#include <numbers>

namespace pseg {

std::uint64_t hash_bytes(std::span<const std::byte> bytes, std::uint64_t seed) noexcept {
  std::uint64_t h = 0xCBF29CE484222325ULL ^ splitmix64(seed);
  for (std::byte b : bytes) {
    h ^= static_cast<std::uint64_t>(b);
    h *= 0x100000001B3ULL;
  }
  return splitmix64(h);
}

std::uint64_t derive_seed(std::uint64_t root, std::string_view tag, std::uint64_t a,
                          std::uint64_t b) noexcept {
  std::uint64_t h = hash_bytes(std::as_bytes(std::span(tag.data(), tag.size())), root);
  h = splitmix64(h ^ splitmix64(a + 1));
  return splitmix64(h ^ splitmix64(b + 0x51ED2701ULL));
}

std::uint64_t Rng::below(std::uint64_t n) noexcept {
  if (n <= 1) return 0;
  // Rejection sampling keeps the draw unbiased.
  const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
  std::uint64_t x;
  do {
    x = next_u64();
  } while (x >= limit);
  return x % n;
}

double Rng::normal() noexcept {
  double u1 = uniform();
  while (u1 <= 0.0) u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

}  // namespace pseg
