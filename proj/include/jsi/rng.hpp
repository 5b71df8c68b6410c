#pragma once

#include <cstddef>
#include <cstdint>
#include <random>

namespace jsi {

// Seeded 64-bit Mersenne Twister. Every derived variate is computed here from
// raw engine output, never through std:: distributions, so streams are
// identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  static constexpr const char* algorithm() { return "mt19937_64"; }

  std::uint64_t next_u64() { return engine_(); }

  // Uniform on the open interval (0, 1).
  double uniform_open() {
    return (static_cast<double>(engine_() >> 11) + 0.5) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform_open(); }

  // Uniform integer in [0, n) by rejection (no modulo bias).
  std::size_t uniform_index(std::size_t n);

  // Standard Gumbel(0, 1).
  double gumbel();

  double normal();

  // Independent child stream; used to hand each sub-run its own generator.
  Rng split() { return Rng(engine_() ^ 0x9e3779b97f4a7c15ULL); }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

template <typename T>
void shuffle(T& items, Rng& rng) {
  for (std::size_t i = items.size(); i > 1; --i) {
    const std::size_t j = rng.uniform_index(i);
    using std::swap;
    swap(items[i - 1], items[j]);
  }
}

}  // namespace jsi
