#pragma once

#include <cstdint>
#include <random>

namespace dfrot {

std::uint64_t splitmix64(std::uint64_t x);

// Seeded generator whose output is identical on every platform. The standard
// distributions are implementation-defined, so draws are built from raw bits.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Independent stream for element `counter` of a seeded computation.
  static Rng stream(std::uint64_t seed, std::uint64_t counter);

  std::uint64_t next_u64() { return engine_(); }
  double uniform();  // [0, 1) with 53 random bits
  double normal();   // standard Gaussian, Box-Muller
  int sign() { return (next_u64() >> 63) ? -1 : 1; }
  std::uint64_t below(std::uint64_t n);  // uniform in [0, n)

 private:
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace dfrot
