#pragma once

#include <array>
#include <cstdint>
#include <string_view>

namespace echelon {

// Counter-based generator (Philox4x32-10). A stream is identified by a 64-bit
// key; the 64-bit counter is the position within the stream. Streams are
// derived from a master seed by name, so adding a consumer never shifts the
// draws of another.
//
// All distribution samplers below are implemented here rather than taken from
// <random>, whose distributions are implementation-defined and would break
// cross-platform reproducibility of releases.
class Rng {
 public:
  Rng() = default;
  explicit Rng(std::uint64_t key, std::uint64_t counter = 0) : key_(key), counter_(counter) {}

  std::uint64_t key() const { return key_; }
  std::uint64_t position() const { return counter_; }

  std::uint64_t next_u64();

  // Uniform on [0, 1) with 53 bits of precision.
  double uniform();
  // Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Discrete uniform on {lo, ..., hi}; lo <= hi.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);
  double normal();
  double normal(double mean, double sd) { return mean + sd * normal(); }
  bool bernoulli(double p) { return uniform() < p; }
  std::int64_t poisson(double lambda);

 private:
  std::uint64_t key_ = 0;
  std::uint64_t counter_ = 0;
  std::array<std::uint32_t, 4> block_{};
  int block_used_ = 4;
};

// Philox4x32-10 block function, exposed for known-answer tests.
std::array<std::uint32_t, 4> philox4x32(std::array<std::uint32_t, 4> counter,
                                        std::array<std::uint32_t, 2> key);

std::uint64_t splitmix64(std::uint64_t x);

// Stream key for `name` under `parent`. Deterministic and platform-independent.
std::uint64_t derive_key(std::uint64_t parent, std::string_view name);
std::uint64_t derive_key(std::uint64_t parent, std::uint64_t index);

}  // namespace echelon
