#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <limits>
#include <random>

namespace repalign {

/// Worker count from REPALIGN_WORKERS, falling back to the hardware
/// concurrency. Always at least 1.
int default_workers();

/// Runs fn(i) for i in [0, count) on up to `workers` threads. Indices are
/// handed out dynamically, so fn must only touch state owned by index i.
/// The first exception thrown by any task is rethrown after all threads join.
void parallel_for(std::size_t count, int workers, const std::function<void(std::size_t)>& fn);

/// Deterministic 64-bit stream derived from a list of integers (run seed,
/// target index, permutation index, ...). Streams with different keys are
/// independent, so work partitioning never changes the numbers drawn.
class Rng {
 public:
  explicit Rng(std::initializer_list<std::uint64_t> key);

  std::uint64_t next() { return engine_(); }

  /// Uniform integer on [0, bound) by rejection; bit-exact across platforms,
  /// unlike std::uniform_int_distribution.
  std::uint64_t below(std::uint64_t bound);

  /// Uniform integer on [lo, hi].
  std::int64_t between(std::int64_t lo, std::int64_t hi);

  /// Uniform double on [0, 1) from the top 53 bits.
  double unit() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

  /// Standard normal via Box-Muller (second value discarded).
  double normal();

 private:
  std::mt19937_64 engine_;
};

}  // namespace repalign
