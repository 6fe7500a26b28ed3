#pragma once

#include <array>
#include <cstdint>

#include "rscl/tensor.hpp"

namespace rscl {

// xoshiro256++ with splitmix64 seeding. The standard library distributions
// are implementation-defined, so every draw here is spelled out explicitly;
// a serialized state resumes the stream bit-exactly.
class Rng {
 public:
  Rng() : Rng(0) {}
  explicit Rng(std::uint64_t seed);

  std::uint64_t next_u64();
  double uniform();                       // [0, 1)
  double uniform(double lo, double hi);   // [lo, hi)
  // Uniform integer in [0, n); n > 0.
  std::uint64_t uniform_int(std::uint64_t n);
  bool bernoulli(double p);
  // Box-Muller without spare caching, so state stays four words.
  double gaussian();
  double gaussian(double mean, double stddev);
  Tensor gaussian_tensor(const Shape& shape);

  std::array<std::uint64_t, 4> state() const { return s_; }
  void set_state(const std::array<std::uint64_t, 4>& s) { s_ = s; }

  // Independent child stream; used to key per-trajectory / per-episode rngs.
  static std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t index);

 private:
  std::array<std::uint64_t, 4> s_{};
};

}  // namespace rscl
