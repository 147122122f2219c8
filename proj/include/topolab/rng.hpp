#pragma once

#include <cstdint>
#include <initializer_list>
#include <string_view>
#include <vector>

namespace topolab {

// SplitMix64 finalizer; a bijection on 64-bit words.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr std::uint64_t fnv1a64(std::string_view s) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Derives an independent 64-bit seed from a root seed and a key path, e.g.
// derive_seed(seed, {agent, round}). Distinct key paths give unrelated streams.
constexpr std::uint64_t derive_seed(std::uint64_t root, std::initializer_list<std::uint64_t> keys) noexcept {
  std::uint64_t h = mix64(root ^ 0x9e3779b97f4a7c15ULL);
  std::uint64_t salt = 0x632be59bd9b4e019ULL;
  for (std::uint64_t k : keys) {
    h = mix64(h ^ mix64(k + salt));
    salt += 0x9e3779b97f4a7c15ULL;
  }
  return h;
}

// Small seeded stream with platform-independent outputs. Standard library
// distributions are implementation-defined, so all sampling used by the
// library goes through these members.
class Stream {
 public:
  explicit Stream(std::uint64_t seed) noexcept : state_(seed) {}
  Stream(std::uint64_t root, std::initializer_list<std::uint64_t> keys) noexcept
      : state_(derive_seed(root, keys)) {}

  std::uint64_t next_u64() noexcept {
    state_ += 0x9e3779b97f4a7c15ULL;
    return mix64(state_);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform() noexcept { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  bool bernoulli(double p) noexcept { return uniform() < p; }

  // Uniform integer in [0, bound); bound must be positive.
  std::uint64_t below(std::uint64_t bound) noexcept {
    const std::uint64_t limit = (~std::uint64_t{0} / bound) * bound;
    std::uint64_t x;
    do {
      x = next_u64();
    } while (x >= limit);
    return x % bound;
  }

  // Uniform in [lo, hi).
  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  template <typename T>
  void shuffle(std::vector<T>& v) noexcept {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(below(i));
      using std::swap;
      swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace topolab
