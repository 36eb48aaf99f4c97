#pragma once

// Deterministic randomness: named sub-streams derived from one seed, and
// randomly shifted Halton points for quasi-uniform designs.

#include <cmath>
#include <cstdint>
#include <iterator>
#include <random>
#include <stdexcept>
#include <string_view>
#include <vector>

namespace cyclegen {

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

/// Seed for the sub-stream `name` of a run seeded with `seed`.
inline std::uint64_t substream_seed(std::uint64_t seed, std::string_view name) {
  std::uint64_t h = 1469598103934665603ull;  // FNV-1a
  for (char c : name) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return splitmix64(seed ^ splitmix64(h));
}

using Rng = std::mt19937_64;

inline Rng make_rng(std::uint64_t seed, std::string_view stream) {
  return Rng(substream_seed(seed, stream));
}

inline double radical_inverse(std::uint64_t index, unsigned base) {
  double inv = 1.0 / base, f = inv, r = 0.0;
  while (index > 0) {
    r += f * static_cast<double>(index % base);
    index /= base;
    f *= inv;
  }
  return r;
}

/// Halton sequence with a Cranley-Patterson rotation drawn from `seed`.
/// Points lie in [0,1)^dim; index 0 is skipped so no point sits on the origin
/// before rotation. Seed 0 gives the plain, unrotated sequence.
class HaltonSequence {
 public:
  HaltonSequence(int dim, std::uint64_t seed) : dim_(dim) {
    static constexpr unsigned kPrimes[] = {2,  3,  5,  7,  11, 13, 17, 19, 23, 29, 31,
                                           37, 41, 43, 47, 53, 59, 61, 67, 71, 73, 79,
                                           83, 89, 97, 101, 103, 107, 109, 113, 127, 131};
    if (dim < 1 || dim > static_cast<int>(std::size(kPrimes)))
      throw std::invalid_argument("HaltonSequence: unsupported dimension");
    Rng rng(splitmix64(seed));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int d = 0; d < dim; ++d) {
      bases_.push_back(kPrimes[d]);
      shift_.push_back(seed == 0 ? 0.0 : u(rng));
    }
  }

  int dim() const { return dim_; }

  std::vector<double> point(std::uint64_t i) const {
    std::vector<double> x(static_cast<std::size_t>(dim_));
    for (int d = 0; d < dim_; ++d) {
      double v = radical_inverse(i + 1, bases_[d]) + shift_[d];
      x[d] = v - std::floor(v);
    }
    return x;
  }

 private:
  int dim_;
  std::vector<unsigned> bases_;
  std::vector<double> shift_;
};

}  // namespace cyclegen
