#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <vector>

#include "stochhom/errors.hpp"

namespace stochhom {

// Purpose tag baked into every derived stream key so that coefficient draws,
// boundary-data draws and reference-solution draws can never collide, even
// for equal object ids and sample indices.
enum class StreamPurpose : std::uint64_t {
  kBasisSampling = 1,
  kBoundaryData = 2,
  kReference = 3,
};

// SplitMix64 finalizer. Bijective 64-bit mixer; the basis of the stateless,
// counter-based generator below.
inline std::uint64_t mix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

// Derives independent stream keys from a single global seed. The derivation
// chain mixes (seed, purpose, object id, sample index) in a fixed order, so a
// stream is a pure function of these four values: no draw order or thread
// schedule can change it.
struct SeedScheme {
  std::uint64_t global_seed = 1;

  std::uint64_t stream_key(StreamPurpose purpose, std::uint64_t object_id,
                           std::uint64_t sample_index) const {
    std::uint64_t k = mix64(global_seed ^ 0x243f6a8885a308d3ull);
    k = mix64(k ^ static_cast<std::uint64_t>(purpose));
    k = mix64(k ^ object_id);
    k = mix64(k ^ sample_index);
    return k;
  }
};

// Counter-based generator: value i of a stream is mix64(key + i*odd-constant).
// Stateless up to the local counter, hence trivially reproducible.
class CounterRng {
 public:
  explicit CounterRng(std::uint64_t key) : key_(key) {}

  std::uint64_t next_u64() { return mix64(key_ + 0x9e3779b97f4a7c15ull * (++counter_)); }

  // Uniform on [0, 1) with 53 random bits.
  double next_uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double next_uniform(double lo, double hi) { return lo + (hi - lo) * next_uniform(); }

  // Standard normal via Box-Muller; the radial draw is taken from (0, 1] so
  // the logarithm is always finite.
  double next_normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = (static_cast<double>(next_u64() >> 11) + 1.0) * 0x1.0p-53;
    const double u2 = static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
  }

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// First `count` primes (trial division; dimensions stay in the thousands).
inline std::vector<std::uint32_t> first_primes(int count) {
  if (count < 1) throw ConfigError("first_primes: count must be positive");
  std::vector<std::uint32_t> primes;
  primes.reserve(static_cast<std::size_t>(count));
  for (std::uint32_t candidate = 2; static_cast<int>(primes.size()) < count; ++candidate) {
    bool is_prime = true;
    for (std::uint32_t p : primes) {
      if (p * p > candidate) break;
      if (candidate % p == 0) {
        is_prime = false;
        break;
      }
    }
    if (is_prime) primes.push_back(candidate);
  }
  return primes;
}

// Van der Corput radical inverse of `index` in the given base.
inline double radical_inverse(std::uint64_t index, std::uint32_t base) {
  double inv_base = 1.0 / static_cast<double>(base);
  double factor = inv_base;
  double value = 0.0;
  while (index > 0) {
    value += static_cast<double>(index % base) * factor;
    index /= base;
    factor *= inv_base;
  }
  return value;
}

// k-th Halton point in [0,1)^dim. Index 0 of the raw sequence (the origin) is
// skipped: point k uses radical inverses of k+1 in the first `dim` prime
// bases, so halton_point(0, 4) = (1/2, 1/3, 1/5, 1/7).
inline std::vector<double> halton_point(std::uint64_t k, int dim) {
  if (dim < 1) throw ConfigError("halton_point: dimension must be positive");
  static thread_local std::vector<std::uint32_t> primes;
  if (static_cast<int>(primes.size()) < dim) primes = first_primes(dim);
  std::vector<double> point(static_cast<std::size_t>(dim));
  for (int j = 0; j < dim; ++j) point[static_cast<std::size_t>(j)] = radical_inverse(k + 1, primes[static_cast<std::size_t>(j)]);
  return point;
}

}  // namespace stochhom
