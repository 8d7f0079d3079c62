#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <random>
#include <string_view>

namespace olv {

// 64-bit FNV-1a; used for namespacing seeds and hashing configs.
constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t h = 0xcbf29ce484222325ULL) noexcept {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Counter-based generator: the i-th output is a bijective mix of key + i*gamma.
// Streams for different modules/workers are obtained by deriving new keys, so
// no two consumers ever share mutable generator state.
class CounterRng {
 public:
  using result_type = std::uint64_t;

  constexpr CounterRng() = default;
  constexpr explicit CounterRng(std::uint64_t key, std::uint64_t counter = 0) noexcept
      : key_(mix64(key)), counter_(counter) {}

  static constexpr result_type min() noexcept { return 0; }
  static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

  constexpr result_type operator()() noexcept {
    return mix64(key_ + (++counter_) * 0x9e3779b97f4a7c15ULL);
  }

  constexpr std::uint64_t key() const noexcept { return key_; }
  constexpr std::uint64_t counter() const noexcept { return counter_; }

  // Independent child stream, e.g. derive("gcmc").derive(chain_index).
  CounterRng derive(std::string_view name) const noexcept {
    return CounterRng(fnv1a64(name, key_ ^ 0x5851f42d4c957f2dULL));
  }
  CounterRng derive(std::uint64_t index) const noexcept {
    return CounterRng(mix64(key_ ^ mix64(index + 0x632be59bd9b4e019ULL)));
  }

 private:
  std::uint64_t key_ = mix64(0);
  std::uint64_t counter_ = 0;
};

// Convenience sampler over a CounterRng.
class Random {
 public:
  explicit Random(CounterRng engine) : engine_(engine) {}
  explicit Random(std::uint64_t seed) : engine_(seed) {}

  // Uniform on [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  // Uniform on (0, 1].
  double uniform_open_left() { return 1.0 - uniform(); }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  double normal() { return normal_(engine_); }
  double exponential(double rate) { return -std::log(uniform_open_left()) / rate; }
  std::uint64_t below(std::uint64_t n) { return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_); }

  CounterRng& engine() { return engine_; }

 private:
  CounterRng engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
};

}  // namespace olv
