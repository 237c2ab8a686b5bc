#pragma once

#include <cstdint>
#include <string_view>

namespace contextgen {

/// 64-bit FNV-1a, used for stream labels and artifact content hashes.
constexpr std::uint64_t fnv1a64(std::string_view bytes) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  return h;
}

namespace detail {

constexpr std::uint64_t splitmix64_finalize(std::uint64_t z) noexcept {
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

}  // namespace detail

/// Counter-based splittable generator (splitmix64 core). Every consumer
/// derives its own stream from the run seed and a label, so no two modules
/// ever share generator state. Draw i of a stream is a pure function of
/// (key, i); forking with stream() does not consume from the parent.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) noexcept : key_(seed) {}

  Rng stream(std::string_view label) const noexcept {
    return Rng(detail::splitmix64_finalize(key_ ^ fnv1a64(label)));
  }
  Rng stream(std::uint64_t index) const noexcept {
    return Rng(detail::splitmix64_finalize(key_ + 0x9e3779b97f4a7c15ull * (index + 1)));
  }

  std::uint64_t next_u64() noexcept {
    counter_ += 0x9e3779b97f4a7c15ull;
    return detail::splitmix64_finalize(key_ ^ counter_);
  }

  /// Uniform in [0, 1), 53-bit resolution.
  double uniform() noexcept {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive. Modulo bias is negligible for
  /// the desk-scale ranges used here.
  int uniform_int(int lo, int hi) noexcept {
    const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(next_u64() % span);
  }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace contextgen
