#pragma once

#include <cstdint>
#include <random>
#include <span>
#include <utility>

namespace fkg {

/// splitmix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t mix64(std::uint64_t x) noexcept {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

/// Seed for the stream identified by (seed, tag, a, b). Distinct tuples give
/// unrelated streams, so per-client/per-round work never shares RNG state.
constexpr std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t tag,
                                    std::uint64_t a = 0, std::uint64_t b = 0) noexcept {
  return mix64(mix64(mix64(mix64(seed) ^ tag) ^ a) ^ b);
}

// Stream tags.
namespace stream {
inline constexpr std::uint64_t split = 0x11;
inline constexpr std::uint64_t init_local_entity = 0x21;
inline constexpr std::uint64_t init_relation = 0x22;
inline constexpr std::uint64_t init_global_entity = 0x23;
inline constexpr std::uint64_t init_central = 0x24;
inline constexpr std::uint64_t client_round = 0x31;
inline constexpr std::uint64_t sampling = 0x32;
inline constexpr std::uint64_t central_round = 0x33;
inline constexpr std::uint64_t forget = 0x41;
inline constexpr std::uint64_t unlearn_round = 0x42;
inline constexpr std::uint64_t partition = 0x51;
}  // namespace stream

/// mt19937_64 with distribution code written out, so draws are identical on
/// every standard library (std::uniform_*_distribution is not).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }

  /// Uniform integer in [0, n). n must be > 0.
  std::uint64_t below(std::uint64_t n) {
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x;
    do {
      x = engine_();
    } while (x >= limit);
    return x % n;
  }

  /// Uniform double in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  template <typename T>
  void shuffle(std::span<T> items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::swap(items[i - 1], items[below(i)]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

}  // namespace fkg
