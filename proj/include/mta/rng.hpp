#pragma once

#include <cstdint>
#include <random>

namespace mta {

// Seeded mt19937_64 with a hand-rolled uniform mapping. The standard
// distributions are implementation-defined, so they are not used anywhere an
// output has to be reproducible across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // Uniform in [0, 1) with 53 random bits.
  double uniform01();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  std::uint64_t next_u64() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

}  // namespace mta
