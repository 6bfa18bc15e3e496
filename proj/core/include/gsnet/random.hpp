#pragma once

#include <array>
#include <cstdint>

namespace gsnet {

// splitmix64 step; also used to derive independent stream seeds.
std::uint64_t splitmix64(std::uint64_t& state);

// Combines values into one seed, order-sensitive.
std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b);

// xoshiro256** seeded through splitmix64. Distribution code is ours rather
// than <random>'s so sequences are identical across standard libraries.
class Rng {
 public:
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  // [0, 1) with 53 bits of mantissa.
  double uniform();
  double uniform(double lo, double hi);
  // Standard normal via Box-Muller (one value per call, second cached).
  double normal();
  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n);

 private:
  std::array<std::uint64_t, 4> s_{};
  bool has_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace gsnet
