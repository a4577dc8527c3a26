#pragma once

#include <cstddef>
#include <cstdint>

#include "encommons/bytes.hpp"

namespace en {

// SplitMix64 stream. Deterministic across platforms and compilers, which is
// what the simulator and the seeded CLI modes rely on. For non-reproducible
// key generation construct it with from_system_entropy().
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  std::uint32_t next_u32() { return static_cast<std::uint32_t>(next_u64() >> 32); }

  /// Uniform in [0, 1), 53 bits of precision.
  double next_unit() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) { return next_unit() < p; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * next_unit(); }

  /// Uniform in [0, bound); bound > 0.
  std::uint64_t next_below(std::uint64_t bound);

  void fill(std::uint8_t* out, std::size_t n);
  Bytes16 next_bytes16();

  /// Independent derived stream; does not advance this stream.
  Rng fork(std::uint64_t stream) const;

  static Rng from_system_entropy();

 private:
  std::uint64_t state_;
};

}  // namespace en
