#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>

namespace trustkit {

/// Counter-based Philox4x32-10 generator.
///
/// The 64-bit seed forms the Philox key; a 64-bit stream id and a 64-bit
/// block counter form the 128-bit counter. Every draw is a pure function of
/// (seed, stream, counter), so sequences are bit-identical across platforms.
/// `split(id)` derives an independent child generator by hashing the parent
/// key and stream with `id`; children never share counter space with the
/// parent.
///
/// Derived quantities use only integer arithmetic plus `std::log`, `std::sqrt`
/// and `std::cos` (standard Box-Muller), so float draws are reproducible on
/// any IEEE-754 platform with a correctly-rounded libm.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0);

  [[nodiscard]] Rng split(std::uint64_t id) const;

  std::uint32_t next_u32();
  std::uint64_t next_u64();

  /// Uniform on [0, 1) with 53 random bits.
  double uniform();
  double uniform(double lo, double hi);
  /// Standard normal via Box-Muller; caches the second variate.
  double normal();
  double normal(double mean, double stddev) { return mean + stddev * normal(); }
  /// Uniform integer on [0, n). n must be positive.
  std::size_t below(std::size_t n);
  bool bernoulli(double p) { return uniform() < p; }

  /// Fisher-Yates with this generator (std::shuffle is not portable).
  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = below(i);
      std::swap(items[i - 1], items[j]);
    }
  }

  std::uint64_t seed() const { return key_; }
  std::uint64_t stream() const { return stream_; }

  /// Raw Philox4x32-10 block function.
  static std::array<std::uint32_t, 4> philox(std::array<std::uint32_t, 4> counter,
                                             std::array<std::uint32_t, 2> key);

 private:
  void refill();

  std::uint64_t key_;
  std::uint64_t stream_;
  std::uint64_t block_ = 0;
  std::array<std::uint32_t, 4> buffer_{};
  int buffered_ = 0;
  double spare_normal_ = 0.0;
  bool has_spare_ = false;
};

/// SplitMix64 finalizer, used to derive per-member seeds from a base seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t salt);

}  // namespace trustkit
