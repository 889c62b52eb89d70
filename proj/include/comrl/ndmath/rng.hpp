#pragma once

#include <cstddef>
#include <cstdint>
#include <string_view>

namespace comrl::nd {

/// Counter-based generator: output i is a keyed 64-bit mix of the counter,
/// so streams are reproducible, cheap to fork and independent of call
/// history in other streams. The key is (seed, stream).
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  /// Stream derived from a human-readable name, e.g. Rng::named(7, "collect").
  static Rng named(std::uint64_t seed, std::string_view name);

  /// Independent child stream; does not advance this generator.
  Rng fork(std::uint64_t stream) const;
  Rng fork(std::string_view name) const;

  std::uint64_t next_u64();
  /// Uniform on [0, 1).
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Standard normal via Box-Muller.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Uniform integer in [0, n).
  std::size_t index(std::size_t n);

  std::uint64_t key() const { return key_; }
  std::uint64_t counter() const { return counter_; }

  bool operator==(const Rng&) const = default;

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

std::uint64_t hash_name(std::string_view name);

}  // namespace comrl::nd
